"""Normal (orthogonal-return) orbits, their families, and the cubic unfolding."""

import math
from fractions import Fraction

import numpy as np
import pytest

from annulus import InnerState, Params, PreconditionError, return_map, wrap
from annulus.errors import SpacingUnattainableError
from annulus.normal_orbits import (
    build_family,
    closure_residual,
    cubic_unfolding_roots,
    find_normals,
    normal_from_rational,
    system_residuals,
    unfolding_equation,
)

DELTA_THIRD = math.sin(math.pi / 3)


def test_rational_candidate_quarter():
    # p/q = 1/4 with m = 3 closes: (m+1) p/q = 1 and the flight parity matches
    q = normal_from_rational(Fraction(1, 4), 3, math.sin(math.pi / 4))
    assert q is not None
    assert q.kind == "tangent"
    assert abs(wrap(q.omega + math.pi / 2)) < 1e-12
    assert q.theta == pytest.approx(-math.pi / 4, abs=1e-12)
    assert max(abs(v) for v in system_residuals(q)) < 1e-10


def test_rational_candidate_third_needs_six_flights():
    # naive (m+1) p/q = 1 suggests m = 2, but the closure has the wrong parity
    # there; the true first member of the family has m = 5
    assert normal_from_rational(Fraction(1, 3), 2, DELTA_THIRD) is None
    q = normal_from_rational(Fraction(1, 3), 5, DELTA_THIRD)
    assert q is not None and q.kind == "tangent"
    assert abs(wrap(q.omega + math.pi / 2)) < 1e-12


def test_find_normals_contains_period_two():
    pts = find_normals(0.8, 6)
    axis = [q for q in pts if q.m == 0]
    assert any(abs(q.omega) < 1e-12 for q in axis)
    assert any(abs(wrap(q.omega - math.pi)) < 1e-12 for q in axis)


def test_find_normals_set_is_reflection_symmetric():
    pts = find_normals(0.8, 6)
    omegas = sorted(q.omega for q in pts)
    for q in pts:
        assert any(abs(wrap(q.omega + w)) < 1e-8 for w in omegas)


def test_find_normals_residuals_and_dynamics():
    pts = find_normals(0.8, 6)
    p = Params(0.8, 1e-4)
    for q in pts:
        assert max(abs(v) for v in system_residuals(q)) < 1e-10
        rec = return_map(InnerState(q.omega, 0.0), p)
        assert rec.m == q.m
        assert abs(rec.end.beta) < 1e-7
        assert abs(wrap(rec.end.omega - q.omega_image)) < 1e-7


def test_find_normals_radius_free():
    # the same omegas are recovered dynamically at two radii
    pts = [q for q in find_normals(0.8, 4)]
    for r in (1e-3, 1e-5):
        p = Params(0.8, r)
        for q in pts:
            rec = return_map(InnerState(q.omega, 0.0), p)
            assert abs(rec.end.beta) < 1e-6


def test_tangent_family_at_sin_third():
    pts = find_normals(DELTA_THIRD, 6)
    tangent = [q for q in pts if q.kind == "tangent"]
    assert {(round(q.omega, 6), q.m) for q in tangent} == {
        (round(-math.pi / 2, 6), 5), (round(math.pi / 2, 6), 5)}
    # and in particular there is no vertical tangent point with m <= 3
    assert not [q for q in find_normals(DELTA_THIRD, 3)
                if q.kind == "tangent" and abs(abs(q.omega) - math.pi / 2) < 1e-6]


def test_family_spacing_and_closure():
    fam = build_family(0.8, 12, n_min=5)
    assert fam.n >= 5
    assert fam.d < fam.gap_bound
    omegas = [q.omega for q in fam.points]
    for q in fam.points:
        assert q.kind == "transverse"
        assert abs(math.sin(q.omega)) < fam.delta
        assert any(abs(wrap(q.omega_image - w)) < 1e-8 for w in omegas)


def test_family_growth_with_eccentricity():
    fam1 = build_family(0.8, 12, exhaust=True)
    fam2 = build_family(0.95, 24, exhaust=True)
    assert fam2.n > fam1.n
    assert fam2.d < fam1.d


def test_family_unattainable_at_tiny_depth():
    with pytest.raises(SpacingUnattainableError):
        build_family(0.8, 0)


def test_cubic_root_counts():
    assert len(cubic_unfolding_roots(Fraction(1, 3), 2, -0.01)) == 1
    assert len(cubic_unfolding_roots(Fraction(1, 3), 2, 0.0)) == 1
    roots = cubic_unfolding_roots(Fraction(1, 3), 2, +0.01)
    assert len(roots) == 3


def test_cubic_outer_pair_location():
    d_delta = 0.01
    roots = cubic_unfolding_roots(Fraction(1, 3), 2, d_delta)
    offsets = sorted(phi - math.pi / 2 for phi, _ in roots)
    expected = math.sqrt(2 * d_delta / DELTA_THIRD)
    assert abs(-offsets[0] / expected - 1.0) < 0.15
    assert abs(offsets[2] / expected - 1.0) < 0.15


def test_cubic_degeneracy_at_the_bifurcation_point():
    # first and second phi-derivatives vanish at the tangency configuration
    f = lambda phi: unfolding_equation(phi, 2, DELTA_THIRD)
    h = 1e-4
    d1 = (f(math.pi / 2 + h) - f(math.pi / 2 - h)) / (2 * h)
    d2 = (f(math.pi / 2 + h) - 2 * f(math.pi / 2) + f(math.pi / 2 - h)) / h**2
    d3 = (f(math.pi / 2 + 2 * h) - 2 * f(math.pi / 2 + h)
          + 2 * f(math.pi / 2 - h) - f(math.pi / 2 - 2 * h)) / (2 * h**3)
    assert abs(d1) < 1e-7
    assert abs(d2) < 1e-4
    assert abs(d3) > 1.0


def test_cubic_gates():
    with pytest.raises(PreconditionError):
        cubic_unfolding_roots(Fraction(1, 3), 1, 0.01)   # (m+1)/3 not integer
    with pytest.raises(PreconditionError):
        cubic_unfolding_roots(Fraction(1, 3), 2, 0.2)


def test_first_closure_filter():
    # omega = 0 solves the closure equation for every m but is only the m = 0 orbit
    for m in range(1, 4):
        assert abs(closure_residual(0.0, m, 0.8)) < 1e-14
    pts = find_normals(0.8, 4)
    zeros = [q for q in pts if abs(q.omega) < 1e-9]
    assert len(zeros) == 1 and zeros[0].m == 0
