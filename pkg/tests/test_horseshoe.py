"""Strips, crossing graph, symbolic periodic points, widths, density."""

import math

import numpy as np
import pytest

from annulus import InnerState, Params, PreconditionError, return_map, wrap
from annulus.conefield import cone_preservation_check, slope_bounds
from annulus.errors import AnchorNotEnclosedError, BilliardError
from annulus.horseshoe import (
    build_strip,
    build_strips,
    crossing_matrix,
    density_estimate,
    flight_offset,
    lattice_nodes,
    nested_strip_widths,
    symmetric_periodic_from_word,
    trace_singularity,
)
from annulus.normal_orbits import build_family

P = Params(0.8, 1e-4)


@pytest.fixture(scope="module")
def system():
    fam = build_family(0.8, 12, n_min=5)
    return build_strips(fam, P)


@pytest.fixture(scope="module")
def matrix(system):
    return crossing_matrix(system)


def test_strip_edges_span_the_grazing_circles(system):
    for s in system.stable:
        assert s.edge_low[0, 1] == -math.pi / 2
        assert s.edge_low[-1, 1] == math.pi / 2
        # edges satisfy the defining level set |h| = r
        for row in (3, 50, 101, 150, 197):
            for edge, sign in ((s.edge_low, None), (s.edge_high, None)):
                w, b = edge[row]
                assert abs(abs(flight_offset(w, b, s.m, P)) - P.r) < 1e-9


def _certified_rho(report) -> float:
    """A defensible expansion lower bound: the a21 floor times (2 - K sqrt r)."""
    m = report.margins
    return m["a21_floor"] * (2.0 - m["K_measured"] * math.sqrt(P.r))


def test_strip_width_bounded_by_expansion(system):
    rho = _certified_rho(cone_preservation_check(P, 1500, seed=0))
    for s in system.stable:
        assert s.max_width() <= math.sqrt(2) / rho
        assert s.max_width() < 1e-3


def test_stable_edges_have_stable_slopes(system):
    c1, c2 = slope_bounds(P, 1500, seed=1)
    tol = 0.05
    for s in system.stable:
        mid = 0.5 * (s.edge_low + s.edge_high)
        d = np.diff(mid, axis=0)
        slopes = d[:, 1] / d[:, 0]
        assert np.all(slopes >= -c2 - tol)
        assert np.all(slopes <= -c1 + tol)


def test_unstable_strips_are_reflections(system):
    # unstable edges satisfy the reflected implicit level set
    for u in system.unstable:
        for row in (10, 80, 140):
            w, b = u.edge_low[row]
            assert abs(abs(flight_offset(w, -b, u.m, P)) - P.r) < 1e-9


def test_anchor_not_enclosed_at_large_radius():
    fam = build_family(0.8, 12, n_min=5)
    anchor = next(q for q in fam.points if q.m == 2)
    with pytest.raises(AnchorNotEnclosedError):
        build_strip(anchor, Params(0.8, 0.15))


def test_crossing_matrix_false_exactly_on_opposite_pairs(system, matrix):
    fam = system.family
    for i, qi in enumerate(fam.points):
        for j, qj in enumerate(fam.points):
            opposite = abs(wrap(qi.omega_image - qj.omega - math.pi)) < 1e-6
            assert matrix.cross[i, j] == (not opposite)
            if matrix.ambiguous[i, j]:
                assert opposite


def test_crossing_digraph_is_strongly_connected(matrix):
    assert matrix.transitive()


def test_word_fixed_point(system, matrix):
    i0 = system.index_of(0.0)
    pt = symmetric_periodic_from_word([i0], system, matrix)
    assert abs(pt.state.omega) < 1e-10 and pt.state.beta == 0.0
    assert pt.closure_beta < 1e-8
    assert abs(pt.trace) > 2


def test_word_two_symbols(system, matrix):
    idx = [system.index_of(-0.6134940897), system.index_of(0.6134940897)]
    pt = symmetric_periodic_from_word(idx, system, matrix)
    assert pt.period == 4
    assert pt.closure_beta < 1e-8
    assert abs(pt.trace) > 2


def test_word_three_symbols_itinerary(system, matrix):
    words = [[2, 1, 3], [1, 2, 3], [0, 1, 2]]
    for word in words:
        if not all(matrix.cross[a, b] for a, b in zip(word[:-1], word[1:])):
            continue
        pt = symmetric_periodic_from_word(word, system, matrix)
        assert pt.closure_beta < 1e-8
        assert abs(pt.trace) > 2
        assert pt.period == 6
        # forward cells: the orbit revisits each strip of its word
        x = pt.state
        for a in word:
            s = system.stable[a]
            assert s.contains(x.omega, x.beta)
            x = return_map(x, P).end


def test_inadmissible_word_rejected(system, matrix):
    blocked = [(i, j) for i in range(matrix.n) for j in range(matrix.n)
               if not matrix.cross[i, j]]
    i, j = blocked[0]
    with pytest.raises(PreconditionError):
        symmetric_periodic_from_word([i, j], system, matrix)


def test_nested_widths_contract(system):
    rho = _certified_rho(cone_preservation_check(P, 1500, seed=2))
    widths = nested_strip_widths([2, 1, 3, 2], system, rows=5)
    assert all(w > 0 for w in widths)
    for n in range(1, 4):
        assert widths[n] <= math.sqrt(2) / rho**n
        assert widths[n] < widths[n - 1]


def test_density_of_lattice(system):
    fam_full = build_family(0.8, 12, exhaust=True)
    nodes = lattice_nodes(fam_full)
    d = density_estimate(nodes, grid=(200, 100))
    # holes are dominated by the excluded vertical bands, whose diagonal is
    # bounded by the family gap structure
    assert d < 1.2
    # a single node leaves a hole about half the cylinder diameter
    single = density_estimate(np.array([[0.0, 0.0]]), grid=(200, 100))
    assert single == pytest.approx(math.hypot(math.pi, math.pi / 2), rel=0.05)


def test_density_trend_with_eccentricity():
    ds = []
    for delta, m_max in ((0.8, 12), (0.9, 16), (0.95, 24)):
        fam = build_family(delta, m_max, exhaust=True)
        ds.append(density_estimate(lattice_nodes(fam), grid=(200, 100)))
    assert ds[0] > ds[1] > ds[2]


def test_trace_singularity_structure():
    p = Params(0.5, 0.2)
    curves = trace_singularity(p, "preimage", seeds=400, max_refine=800)
    assert len(curves) >= 2
    for c in curves:
        assert c.polyline.shape[0] >= 2
        assert c.side == "preimage"
        # endpoints appended on the grazing circles
        assert abs(abs(c.polyline[0, 1]) - math.pi / 2) < 1e-10 or c.truncated
        assert abs(abs(c.polyline[-1, 1]) - math.pi / 2) < 1e-10 or c.truncated


def test_trace_singularity_refinement_consistency():
    p = Params(0.5, 0.2)
    a = trace_singularity(p, "image", seeds=300, max_refine=600)
    b = trace_singularity(p, "image", seeds=600, max_refine=1200)
    pts_a = np.vstack([c.polyline for c in a])
    pts_b = np.vstack([c.polyline for c in b])
    from scipy.spatial import cKDTree
    d, _ = cKDTree(pts_b).query(pts_a)
    assert float(np.percentile(d, 95)) < 1e-4
