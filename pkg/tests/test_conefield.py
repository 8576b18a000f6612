"""Cone-field hyperbolicity certificates."""

import math

import numpy as np
import pytest

from annulus import Params, PreconditionError
from annulus.conefield import (
    ConeBounds,
    a21_bound_check,
    cone_preservation_check,
    expansion_floor,
    slope_bounds,
    zeta_interval,
    zeta_bounds_check,
)


def test_zeta_interval_values():
    zmin, zmax = zeta_interval(0.8)
    assert zmin == pytest.approx(0.5410, abs=5e-5)
    assert zmax == pytest.approx(0.894427, abs=1e-6)
    assert zmin > 0.5 and zmax < 1.0


def test_zeta_bounds_monte_carlo():
    rep = zeta_bounds_check(Params(0.8, 0.02), samples=10**5, seed=1)
    assert rep.passed
    assert rep.margins["lower_margin"] > 0 and rep.margins["upper_margin"] > 0


def test_zeta_bounds_other_parameters():
    assert zeta_bounds_check(Params(0.75, 0.04), samples=2 * 10**4, seed=2).passed


def test_zeta_bounds_gate():
    with pytest.raises(PreconditionError):
        zeta_bounds_check(Params(0.6, 0.01))   # delta^2 < 1/2


def test_a21_closed_form_at_fixed_point():
    p = Params(0.8, 0.005)
    value = 2 * p.delta * (1 + p.delta) / p.r
    assert value == pytest.approx(576.0)
    assert value >= expansion_floor(p)


def test_a21_lower_bound_sampled():
    rep = a21_bound_check(Params(0.8, 0.005), samples=2000, seed=3)
    assert rep.passed
    assert rep.margins["ratio"] >= 1.0


def test_cone_preservation():
    rep = cone_preservation_check(Params(0.8, 1e-3), samples=3000, seed=4)
    assert rep.passed
    assert rep.margins["violations"] == 0
    assert rep.margins["rho_observed"] >= 1.5 * rep.margins["a21_floor"]


def test_cone_preservation_gate():
    with pytest.raises(PreconditionError):
        cone_preservation_check(Params(0.6, 0.01))


def test_expansion_grows_as_radius_shrinks():
    rhos = []
    for r in (1e-2, 1e-3, 1e-4):
        rep = cone_preservation_check(Params(0.8, r), samples=800, seed=5)
        assert rep.passed
        rhos.append(rep.margins["rho_observed"])
    assert rhos[0] < rhos[1] < rhos[2]


def test_slope_bounds_bracket_one():
    c1, c2 = slope_bounds(Params(0.8, 1e-3), samples=2000, seed=6)
    assert 0.9 < c1 <= 1.0 + 1e-9
    assert 1.0 - 1e-9 <= c2 < 1.1
    # a slope -1 curve is admissible as a stable curve
    assert -c2 <= -1.0 <= -c1


def test_slope_bounds_tighten_with_radius():
    gaps = []
    for r in (1e-2, 1e-3, 1e-4):
        c1, c2 = slope_bounds(Params(0.8, r), samples=800, seed=7)
        gaps.append(max(abs(c1 - 1.0), abs(c2 - 1.0)))
    assert gaps[0] > gaps[1] > gaps[2]


def test_image_ray_slopes_inside_slope_bounds():
    # cone-field invariance restated: images of both boundary rays have
    # slopes within [c1, c2]
    from annulus.conefield import sample_launch_zone_returns

    p = Params(0.8, 1e-3)
    c1, c2 = slope_bounds(p, samples=2000, seed=8)
    for _, t in sample_launch_zone_returns(p, 500, seed=9):
        s1 = t.a21 / t.a11
        s2 = t.a22 / t.a12
        assert c1 - 1e-12 <= s1 <= c2 + 1e-12
        assert c1 - 1e-12 <= s2 <= c2 + 1e-12


def test_cone_bounds_dataclass():
    cb = ConeBounds.from_params(Params(0.8, 1e-3))
    assert cb.zeta_min == pytest.approx(zeta_interval(0.8)[0])
    assert cb.a21_floor == pytest.approx(expansion_floor(Params(0.8, 1e-3)))
    assert all(v > 0 for v in cb.ratio_scales)


def test_report_serializes():
    import json

    rep = zeta_bounds_check(Params(0.8, 0.02), samples=1000, seed=10)
    payload = json.dumps(rep.to_dict(), sort_keys=True)
    assert "zeta_bounds" in payload and "seed" in payload
