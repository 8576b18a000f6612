"""Local invariant manifolds and the tangency parameter curve."""

import math
from fractions import Fraction

import numpy as np
import pytest

from annulus import InnerState, Params, PreconditionError, return_map, wrap
from annulus.errors import DegenerateTangencyError
from annulus.conefield import slope_bounds
from annulus.tangency import (
    fixed_point_periodic,
    gamma_curve,
    local_manifold,
    tangency_offset_coefficient,
    _vertical_family_point,
)

P = Params(0.8, 1e-3)


@pytest.fixture(scope="module")
def far_stable():
    return local_manifold(fixed_point_periodic("far", P), "stable", P)


def test_manifold_connects_the_grazing_circles(far_stable):
    poly = far_stable.polyline
    assert poly[:, 1].min() < -math.pi / 2 + 1e-3
    assert poly[:, 1].max() > math.pi / 2 - 1e-3
    assert not far_stable.truncated


def test_manifold_slopes_are_stable(far_stable):
    c1, c2 = slope_bounds(P, 1500, seed=0)
    lo, hi = far_stable.slope_band
    assert -c2 - 0.01 <= lo and hi <= -c1 + 0.01


def test_manifold_is_forward_invariant(far_stable):
    # G maps stable-manifold points to stable-manifold points (contracting
    # toward the base), so images must stay close to the polyline
    poly = far_stable.polyline
    sel = np.abs(poly[:, 1]) < 1.2
    worst = 0.0
    for w, b in poly[sel][::25]:
        rec = return_map(InnerState(wrap(w), b), P)
        d = np.min(np.hypot(wrap_all(poly[:, 0] - rec.end.omega), poly[:, 1] - rec.end.beta))
        worst = max(worst, d)
    assert worst < 1e-6


def wrap_all(x):
    return math.pi - (math.pi - np.asarray(x)) % (2 * math.pi)


def test_reflected_manifold_is_the_unstable_one(far_stable):
    wu = local_manifold(fixed_point_periodic("far", P), "unstable", P)
    mirrored = far_stable.polyline[::-1].copy()
    mirrored[:, 1] = -mirrored[:, 1]
    # same curve up to parametrization: compare a few points by nearest distance
    for w, b in mirrored[::40]:
        d = np.min(np.hypot(wrap_all(wu.polyline[:, 0] - w), wu.polyline[:, 1] - b))
        assert d < 1e-9


def test_manifold_approaches_the_limit_line():
    dists = []
    for r in (1e-3, 1e-4, 1e-5):
        p = Params(0.8, r)
        ws = local_manifold(fixed_point_periodic("far", p), "stable", p)
        resid = np.abs(wrap_all(ws.polyline[:, 0] + ws.polyline[:, 1] - math.pi))
        dists.append(float(resid.max()))
    assert dists[0] > dists[1] > dists[2]


def test_offset_coefficient_example():
    d0 = tangency_offset_coefficient(Fraction(1, 3), 2, 0.0)
    assert d0 == pytest.approx(math.sin(math.pi / 4), abs=1e-15)


def test_gamma_curve_structure():
    curve = gamma_curve(Fraction(1, 3), 2, 0.0, np.linspace(-0.2, 0.2, 41))
    delta0 = math.sin(math.pi / 3)
    assert curve.d0 == pytest.approx(math.sin(math.pi / 4))
    assert curve.samples
    for t, delta, r in curve.samples:
        assert delta > delta0
        assert r > 0 and r + delta < 1
        # positive radius comes from the t < 0 branch here (D0 > 0)
        assert t < 0
        assert delta == pytest.approx(delta0 + 1.5 * delta0 * t * t, rel=1e-12)


def test_gamma_curve_gates():
    with pytest.raises(PreconditionError):
        gamma_curve(Fraction(1, 3), 1, 0.0, [0.1])
    with pytest.raises(DegenerateTangencyError):
        gamma_curve(Fraction(1, 3), 2, -math.pi / 2, [0.1])  # D0 = sin(0) = 0


def test_vertical_family_point_tracks_the_unfolding():
    delta0 = math.sin(math.pi / 3)
    q = _vertical_family_point(delta0 + 0.01)
    assert q.m == 5
    assert q.kind == "transverse"
    # middle root of the unfolding: omega = -pi/2 + (m+1)/cos(p pi/q) d_delta
    # to first order, with sizable higher-order corrections at this offset
    assert 0.0 < q.omega + math.pi / 2 < 0.13
    exact = _vertical_family_point(delta0)
    assert exact.kind == "tangent"
    assert abs(wrap(exact.omega + math.pi / 2)) < 1e-9
