"""Analytic tangent map against closed forms and finite differences."""

import math

import numpy as np
import pytest

from annulus import (
    ComponentChangeError,
    DegenerateJacobianError,
    InnerState,
    Params,
    involution,
    return_map,
)
from annulus.dynamics import ReturnRecord
from annulus.horseshoe import flight_offset
from annulus.tangent_map import (
    fixed_point_stability,
    period_two_trace,
    return_map_jacobian,
    return_map_jacobian_fd,
)


def sample_moderate_returns(p, rng, n, a21_cap=1e3):
    """Returning orbits away from grazing and from the singular accumulation."""
    out = []
    while len(out) < n:
        x = InnerState(rng.uniform(-math.pi, math.pi), rng.uniform(-1.45, 1.45))
        try:
            rec = return_map(x, p)
            if abs(math.cos(rec.end.beta)) < 0.2 or abs(math.cos(rec.theta)) < 0.2:
                continue
            terms = return_map_jacobian(rec, p)
            if abs(terms.a21) > a21_cap:
                continue
            out.append((x, rec, terms))
        except Exception:
            continue
    return out


def test_fixed_point_closed_forms():
    p = Params(0.5, 0.2)
    rec = return_map(InnerState(0.0, 0.0), p)
    t = return_map_jacobian(rec, p)
    d, r = p.delta, p.r
    assert t.a21 == pytest.approx(-2 * d * (1 + d) / r, rel=1e-12)
    assert t.atilde11 == pytest.approx(1 + 2 * d, rel=1e-12)
    assert t.atilde22 == pytest.approx(1 + 2 * d, rel=1e-12)
    assert t.atilde12 == pytest.approx(2 * (1 + 2 * d) - 2 * r, rel=1e-12)
    assert t.trace == pytest.approx(2 + 4 * d - 4 * d * (1 + d) / r, rel=1e-12)
    assert t.trace == pytest.approx(period_two_trace("center", p), rel=1e-14)


def test_decomposition_identities():
    p = Params(0.8, 0.01)
    rng = np.random.default_rng(0)
    for _, _, t in sample_moderate_returns(p, rng, 100):
        assert t.a11 == t.a21 + t.atilde11
        assert t.a12 == t.a21 + t.atilde12
        assert t.a22 == t.a21 + t.atilde22


@pytest.mark.parametrize("delta,r", [(0.5, 0.2), (0.8, 0.01)])
def test_determinant_identity(delta, r):
    p = Params(delta, r)
    rng = np.random.default_rng(1)
    for _, _, t in sample_moderate_returns(p, rng, 300):
        assert abs(t.det - t.det_expected) < 1e-8


@pytest.mark.parametrize("delta,r", [(0.5, 0.2), (0.8, 0.01)])
def test_finite_difference_agreement(delta, r):
    p = Params(delta, r)
    rng = np.random.default_rng(2)
    for x, _, t in sample_moderate_returns(p, rng, 200):
        fd = return_map_jacobian_fd(x, p, 1e-6)
        rel = np.max(np.abs(fd - t.matrix) / np.maximum(np.abs(t.matrix), 1.0))
        assert rel <= 1e-5


def test_grazing_record_is_degenerate():
    p = Params(0.5, 0.2)
    rec = ReturnRecord(start=InnerState(0.0, 0.0), end=InnerState(0.5, math.pi / 2),
                       s_start=0.0, theta=0.1, m=0)
    with pytest.raises(DegenerateJacobianError):
        return_map_jacobian(rec, p)


def test_stencil_across_singularity_is_detected():
    # place the stencil center on a strip edge: the frozen-flight miss of the
    # m=0 component through (0,0) equals r exactly there
    p = Params(0.8, 1e-4)
    f = lambda w: flight_offset(w, 0.0, 0, p) - p.r
    lo, hi = 0.0, 0.01
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (f(mid) < 0) == (flo < 0):
            lo = mid
        else:
            hi = mid
    edge = 0.5 * (lo + hi)
    with pytest.raises(ComponentChangeError):
        return_map_jacobian_fd(InnerState(edge, 0.0), p, 1e-6)


def test_trace_transition_at_equal_radii():
    # closed form: trace(0,0) = 2 + 4d - 4d(1+d)/r equals -2 exactly at r = d;
    # the formula is checked as such because for d >= 1/2 the transition point
    # r = d violates r + d < 1 and is not a realizable table
    for d in (0.3, 0.5, 0.7):
        assert 2 + 4 * d - 4 * d * (1 + d) / d == pytest.approx(-2.0, abs=1e-12)
    assert period_two_trace("center", Params(0.3, 0.3)) == pytest.approx(-2.0, abs=1e-12)


def test_trace_transition_located_numerically():
    # bisect |trace| - 2 via central differences in r around the transition
    d = 0.3
    def numeric_trace(r):
        fd = return_map_jacobian_fd(InnerState(0.0, 0.0), Params(d, r), 1e-6)
        return fd[0, 0] + fd[1, 1]
    lo, hi = d - 0.01, d + 0.01
    flo = numeric_trace(lo) + 2.0
    assert flo * (numeric_trace(hi) + 2.0) < 0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ((numeric_trace(mid) + 2.0) < 0) == (flo < 0):
            lo = mid
        else:
            hi = mid
    assert abs(0.5 * (lo + hi) - d) < 1e-6


def test_fixed_point_stability_classification():
    assert fixed_point_stability("center", Params(0.5, 0.3))[0] == "hyperbolic"
    assert fixed_point_stability("center", Params(0.3, 0.45))[0] == "elliptic"
    assert fixed_point_stability("far", Params(0.5, 0.3))[0] == "hyperbolic"
    assert fixed_point_stability("center", Params(0.5, 0.5 - 1e-12))[0] == "parabolic"


def test_far_point_always_hyperbolic():
    rng = np.random.default_rng(3)
    for _ in range(50):
        d = rng.uniform(0.05, 0.9)
        r = rng.uniform(0.02, 1 - d - 0.02)
        kind, tr = fixed_point_stability("far", Params(d, r))
        assert kind == "hyperbolic" and tr > 2


def test_linearization_reversibility():
    # [DG(x)]^-1 = R DG(R(G(x))) R
    p = Params(0.8, 0.01)
    rng = np.random.default_rng(4)
    rmat = np.diag([1.0, -1.0])
    for x, rec, t in sample_moderate_returns(p, rng, 100):
        m1 = np.linalg.inv(t.matrix)
        rec2 = return_map(involution(rec.end), p)
        m2 = rmat @ return_map_jacobian(rec2, p).matrix @ rmat
        assert np.max(np.abs(m1 - m2)) / np.max(np.abs(m1)) < 1e-6


def test_sign_structure_in_launch_zone():
    # all four entries share a sign on launch-zone returns in the certified regime
    from annulus.conefield import sample_launch_zone_returns

    p = Params(0.8, 1e-4)
    for _, t in sample_launch_zone_returns(p, 300, seed=5):
        signs = {math.copysign(1.0, v) for v in (t.a11, t.a12, t.a21, t.a22)}
        assert len(signs) == 1
