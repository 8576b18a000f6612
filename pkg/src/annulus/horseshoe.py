"""Singularity strips of the return map, their crossing graph, and symbolic orbits.

A transverse normal point (omega_i, 0) with flight count m sits in a component
of the return map's continuity domain bounded by two curves along which the
final obstacle collision of the excursion grazes.  Writing the excursion with
the flight count frozen, the signed miss distance of the final chord

    h(omega, beta) = sin(theta) + delta sin(theta - s_m),
    (s_0, theta) = wall image of (omega, beta),  s_m = s_0 + m (pi - 2 theta)

is an analytic function whose band |h| <= r is exactly the strip: h = +-r are
the two bounding singular curves (final collision tangent from either side),
and h = 0 is the branch of the preimage of the symmetry line through the
anchor.  All strip geometry here is built from this implicit function; the
unstable strips are time-reversal images of the stable strips of the partner
anchors.

Symbolic periodic orbits are constructed by the pullback of the symmetry
segment through an admissible word of strips, implemented as nested bisection
on the strips' implicit functions along a single curve parameter, then
polished and verified with the arbitrary-precision branch maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import mpmath as mp
import numpy as np

from . import precision
from .dynamics import first_return, map_inner_to_outer, return_map
from .errors import AnchorNotEnclosedError, BilliardError, PreconditionError
from .geometry import InnerState, Params, involution, wrap
from .normal_orbits import NormalFamily, NormalPoint
from .tangent_map import return_map_jacobian

#: Refinement targets for traced polylines.
MAX_TURN = 0.05
MAX_SEG = 0.02


def flight_offset(omega: float, beta: float, m: int, p: Params) -> float:
    """Signed miss distance of the final chord of the frozen-m excursion."""
    out = map_inner_to_outer(InnerState(omega, beta), p)
    s_m = out.s + m * (math.pi - 2.0 * out.theta)
    return math.sin(out.theta) + p.delta * math.sin(out.theta - s_m)


@dataclass(frozen=True)
class Strip:
    """A stable or unstable strip around one anchor of a normal family.

    For ``kind == "stable"`` the implicit band is |h(omega, beta)| <= r with h
    the frozen-m flight offset; unstable strips evaluate the partner stable
    strip at the time-reversed point.  ``edge_low``/``edge_high`` are
    polylines (columns omega, beta; omega continued without wrapping) of the
    h = +r and h = -r singular boundary curves, ordered by beta.
    """

    kind: str
    anchor: NormalPoint
    m: int
    line_omega: float
    edge_low: np.ndarray
    edge_high: np.ndarray
    corridor: float
    params: Params

    def offset(self, omega: float, beta: float) -> float:
        if self.kind == "stable":
            return flight_offset(omega, beta, self.m, self.params)
        return flight_offset(omega, -beta, self.m, self.params)

    def line_residual(self, omega: float, beta: float) -> float:
        if self.kind == "stable":
            return wrap(omega + beta - self.line_omega)
        return wrap(omega - beta - self.line_omega)

    def contains(self, omega: float, beta: float) -> bool:
        if abs(self.line_residual(omega, beta)) > self.corridor:
            return False
        return abs(self.offset(omega, beta)) <= self.params.r

    def width_profile(self) -> np.ndarray:
        """Horizontal chord |omega_high - omega_low| per beta row."""
        return np.abs(self.edge_high[:, 0] - self.edge_low[:, 0])

    def max_width(self) -> float:
        return float(self.width_profile().max())


def _expand_bracket(f: Callable[[float], float], x0: float, step: float,
                    direction: float, max_expand: int = 60) -> tuple[float, float]:
    """Walk from x0 until f changes sign; returns the bracketing pair."""
    a, fa = x0, f(x0)
    h = step * direction
    for _ in range(max_expand):
        b = a + h
        fb = f(b)
        if fa * fb <= 0.0:
            return (a, b) if a < b else (b, a)
        a, fa = b, fb
        h *= 1.6
    raise AnchorNotEnclosedError("no sign change while bracketing a strip edge")


def _bisect_f(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-13) -> float:
    flo = f(lo)
    if flo == 0.0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (flo < 0.0) == (fm < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_strip(anchor: NormalPoint, p: Params, rows: int = 201,
                validate: bool = True) -> Strip:
    """The stable strip of one anchor, by row-wise root finding on the flight offset.

    Follows the h = 0 center branch from the anchor to both tangency
    boundaries and brackets the h = +-r edges around it.  Raises
    :class:`AnchorNotEnclosedError` when the excursion's flight count is not
    constant across the strip (obstacle radius too large for this anchor).
    """
    m = anchor.m
    betas = np.linspace(-0.5 * math.pi, 0.5 * math.pi, rows)
    i0 = rows // 2
    centers = np.empty(rows)
    lows = np.empty(rows)
    highs = np.empty(rows)

    def solve_row(idx: int, w_guess: float) -> float:
        b = betas[idx]
        f = lambda w: flight_offset(w, b, m, p)
        w_c = w_guess
        slope = 0.0
        for _ in range(80):
            fc = f(w_c)
            slope = (f(w_c + 1e-7) - f(w_c - 1e-7)) / 2e-7
            if slope == 0.0:
                raise AnchorNotEnclosedError("flat offset at strip center")
            dw = fc / slope
            w_c -= max(-0.05, min(0.05, dw))
            if abs(dw) < 1e-14:
                break
        else:
            raise AnchorNotEnclosedError("center continuation lost")
        step = 1.2 * p.r / abs(slope)
        lo_edge = _bisect_f(lambda w: f(w) - math.copysign(p.r, slope),
                            *_expand_bracket(lambda w: f(w) - math.copysign(p.r, slope),
                                             w_c, step, +1.0))
        hi_edge = _bisect_f(lambda w: f(w) + math.copysign(p.r, slope),
                            *_expand_bracket(lambda w: f(w) + math.copysign(p.r, slope),
                                             w_c, step, -1.0))
        centers[idx] = w_c
        lows[idx] = min(lo_edge, hi_edge)
        highs[idx] = max(lo_edge, hi_edge)
        return w_c

    db = betas[1] - betas[0]
    w_prev = solve_row(i0, anchor.omega)
    for idx in range(i0 + 1, rows):
        w_prev = solve_row(idx, w_prev - db)  # stable slope is close to -1
    w_prev = centers[i0]
    for idx in range(i0 - 1, -1, -1):
        w_prev = solve_row(idx, w_prev + db)
    edge_low = np.column_stack([lows, betas])
    edge_high = np.column_stack([highs, betas])
    corridor = 1.5 * float(
        np.max(np.abs(centers + betas - anchor.omega)) + np.max(highs - lows)
    ) + 1e-6
    strip = Strip(
        kind="stable",
        anchor=anchor,
        m=m,
        line_omega=anchor.omega,
        edge_low=edge_low,
        edge_high=edge_high,
        corridor=corridor,
        params=p,
    )
    if validate:
        _validate_strip(strip, p)
    return strip


def _validate_strip(strip: Strip, p: Params, probe_rows: int = 7):
    """Check the frozen flight count against live returns on a few interior rows."""
    rows = strip.edge_low.shape[0]
    for idx in np.linspace(1, rows - 2, probe_rows).astype(int):
        b = strip.edge_low[idx, 1]
        w = 0.5 * (strip.edge_low[idx, 0] + strip.edge_high[idx, 0])
        orbit = first_return(InnerState(w, b), p)
        if not orbit.returned or orbit.record.m != strip.m:
            got = orbit.record.m if orbit.returned else orbit.tag
            raise AnchorNotEnclosedError(
                f"anchor omega={strip.anchor.omega:.6f}: flight count {strip.m} "
                f"not constant across strip (got {got}); r too large"
            )


def reflect_strip(stable: Strip, image_anchor: NormalPoint) -> Strip:
    """The unstable strip as the time-reversal image of a stable strip."""
    flip_low = np.column_stack([stable.edge_high[::-1, 0], -stable.edge_high[::-1, 1]])
    flip_high = np.column_stack([stable.edge_low[::-1, 0], -stable.edge_low[::-1, 1]])
    return Strip(
        kind="unstable",
        anchor=image_anchor,
        m=stable.m,
        line_omega=stable.line_omega,
        edge_low=flip_low,
        edge_high=flip_high,
        corridor=stable.corridor,
        params=stable.params,
    )


@dataclass
class StripSystem:
    """Aligned stable and unstable strips over one normal family."""

    family: NormalFamily
    params: Params
    stable: list[Strip]
    unstable: list[Strip]

    def index_of(self, omega: float) -> int:
        for i, q in enumerate(self.family.points):
            if abs(wrap(q.omega - omega)) < 1e-8:
                return i
        raise PreconditionError(f"no family anchor at omega={omega}")


def build_strips(family: NormalFamily, p: Params, rows: int = 201) -> StripSystem:
    """Stable and unstable strips for every anchor of the family.

    The unstable strip of anchor i is the time-reversal image of the stable
    strip of the anchor at the return image omega_hat_i, so only stable strips
    are traced.
    """
    stable = [build_strip(q, p, rows=rows) for q in family.points]
    unstable = []
    for q in family.points:
        j = _partner_index(family, q)
        unstable.append(reflect_strip(stable[j], family.points[j]))
    return StripSystem(family=family, params=p, stable=stable, unstable=unstable)


def _partner_index(family: NormalFamily, q: NormalPoint) -> int:
    target = q.omega_image
    for i, t in enumerate(family.points):
        if abs(wrap(t.omega - target)) < 1e-8:
            return i
    raise PreconditionError(f"family not closed under the return image at omega={q.omega}")


@dataclass(frozen=True)
class CrossingMatrix:
    """Which unstable strips cross which stable strips, with ambiguity flags."""

    n: int
    cross: np.ndarray
    ambiguous: np.ndarray
    intersections: np.ndarray

    def transitive(self) -> bool:
        """Strong connectivity of the crossing digraph (nonempty transitive subshift)."""
        def reach(adj):
            seen = {0}
            stack = [0]
            while stack:
                i = stack.pop()
                for j in range(self.n):
                    if adj[i, j] and j not in seen:
                        seen.add(j)
                        stack.append(j)
            return len(seen) == self.n
        return bool(reach(self.cross) and reach(self.cross.T))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cross": self.cross.astype(int).tolist(),
            "ambiguous": self.ambiguous.astype(int).tolist(),
        }


def _segment_intersections(a: np.ndarray, b: np.ndarray) -> int:
    """Count transverse intersections of two polylines, allowing 2 pi shifts in omega."""
    total = 0
    for shift in (-2.0 * math.pi, 0.0, 2.0 * math.pi):
        p = a.copy()
        p[:, 0] += shift
        d1 = np.diff(p, axis=0)
        d2 = np.diff(b, axis=0)
        o1, o2 = p[:-1], b[:-1]
        rx, ry = d1[:, 0][:, None], d1[:, 1][:, None]
        sx, sy = d2[:, 0][None, :], d2[:, 1][None, :]
        qpx = o2[None, :, 0] - o1[:, None, 0]
        qpy = o2[None, :, 1] - o1[:, None, 1]
        denom = rx * sy - ry * sx
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qpx * sy - qpy * sx) / denom
            u = (qpx * ry - qpy * rx) / denom
        hits = (np.abs(denom) > 1e-15) & (t >= 0.0) & (t < 1.0) & (u >= 0.0) & (u < 1.0)
        total += int(hits.sum())
    return total


def crossing_matrix(system: StripSystem) -> CrossingMatrix:
    """Crossing test: each unstable boundary must cut each stable boundary exactly once.

    Pairs whose boundary polylines intersect unevenly (tangency-grade
    geometry) are flagged ambiguous rather than decided.
    """
    n = len(system.stable)
    cross = np.zeros((n, n), dtype=bool)
    ambiguous = np.zeros((n, n), dtype=bool)
    counts = np.zeros((n, n), dtype=int)
    for i in range(n):
        u_edges = (system.unstable[i].edge_low, system.unstable[i].edge_high)
        for j in range(n):
            s_edges = (system.stable[j].edge_low, system.stable[j].edge_high)
            per_pair = [
                _segment_intersections(ue, se) for ue in u_edges for se in s_edges
            ]
            counts[i, j] = sum(per_pair)
            if all(c == 1 for c in per_pair):
                cross[i, j] = True
            elif all(c == 0 for c in per_pair):
                cross[i, j] = False
            else:
                ambiguous[i, j] = True
    return CrossingMatrix(n=n, cross=cross, ambiguous=ambiguous, intersections=counts)


@dataclass(frozen=True)
class SymmetricPeriodicPoint:
    """A symmetric periodic orbit realizing a symbolic word across the strips."""

    word: tuple[int, ...]
    state: InnerState
    period: int
    params: Params
    closure_beta: float
    trace: float

    def to_dict(self) -> dict:
        return {
            "word": list(self.word),
            "omega": self.state.omega,
            "beta": self.state.beta,
            "period": self.period,
            "closure_beta": self.closure_beta,
            "trace": self.trace,
        }


def _word_admissible(word: Sequence[int], matrix: Optional[CrossingMatrix]) -> bool:
    if matrix is None:
        return True
    return all(matrix.cross[a, b] for a, b in zip(word[:-1], word[1:]))


def _u_slice_on_axis(system: StripSystem, idx: int) -> tuple[float, float]:
    """The omega interval cut by unstable strip idx on the symmetry line."""
    strip = system.unstable[idx]
    p = system.params
    center = strip.line_omega
    f = lambda w: strip.offset(w, 0.0)
    f0 = f(center)
    slope = (f(center + 1e-7) - f(center - 1e-7)) / 2e-7
    w_c = center - f0 / max(abs(slope), 1e-12) * math.copysign(1.0, slope)
    for _ in range(50):
        fc = f(w_c)
        if abs(fc) < 1e-14:
            break
        slope = (f(w_c + 1e-7) - f(w_c - 1e-7)) / 2e-7
        w_c -= fc / slope
    step = 1.2 * p.r / abs(slope)
    a = _bisect_f(lambda w: f(w) - math.copysign(p.r, slope),
                  *_expand_bracket(lambda w: f(w) - math.copysign(p.r, slope), w_c, step, +1.0))
    b = _bisect_f(lambda w: f(w) + math.copysign(p.r, slope),
                  *_expand_bracket(lambda w: f(w) + math.copysign(p.r, slope), w_c, step, -1.0))
    return (min(a, b), max(a, b))


def symmetric_periodic_from_word(
    word: Sequence[int],
    system: StripSystem,
    matrix: Optional[CrossingMatrix] = None,
    polish_dps: int = 60,
) -> SymmetricPeriodicPoint:
    """Symmetric periodic point whose forward itinerary realizes the word.

    Pulls the symmetry segment of the last strip backward through the word
    cells; every trim and the final symmetry intersection are bisections on
    the strips' implicit functions along the segment parameter.  The result
    is polished with the arbitrary-precision branch maps (the float pass
    fixes the flight-count itinerary) and its closure and hyperbolicity are
    verified on the polished orbit.
    """
    word = tuple(int(a) for a in word)
    if not word:
        raise PreconditionError("empty word")
    if not _word_admissible(word, matrix):
        raise PreconditionError(f"word {word} not admissible under the crossing matrix")
    p = system.params
    fam = system.family
    k = len(word) - 1
    m_pullback = [system.stable[a].m for a in word[::-1]]

    lo, hi = _u_slice_on_axis(system, word[k])

    def pulled(tau: float, depth: int) -> tuple[InnerState, tuple[int, ...]]:
        """Apply depth inverse branches to the segment point at parameter tau."""
        x = InnerState(lo + tau * (hi - lo), 0.0)
        ms = []
        for j in range(depth):
            rec = return_map(involution(x), p)
            ms.append(rec.m)
            x = involution(rec.end)
        return x, tuple(ms)

    t_lo, t_hi = 0.0, 1.0
    for j in range(k):
        depth = j + 1
        target = system.unstable[word[k - 1 - j]]
        home = system.stable[word[k - j]]
        expected_ms = tuple(m_pullback[:depth])
        # the crossing should land near the intersection of the two limit lines
        beta_cell = _cell_beta(home.line_omega, target.line_omega)

        def g(tau):
            x, _ = pulled(tau, depth)
            return target.offset(x.omega, x.beta)

        def qualifies(tau):
            x, ms = pulled(tau, depth)
            return ms == expected_ms and \
                abs(target.line_residual(x.omega, x.beta)) <= target.corridor

        # The pulled-back curve crosses the target strip's center transversally;
        # the |g| <= r band is far narrower than any uniform sampling, so locate
        # the qualifying zero of g first and bracket the edges around it.
        hits = _qualifying_zeros(g, qualifies, t_lo, t_hi,
                                 branch_key=lambda t: pulled(t, depth)[1])
        if not hits:
            raise BilliardError(f"pullback left the word cells at step {j} of {word}")
        tau_c = min(hits, key=lambda t: abs(pulled(t, depth)[0].beta - beta_cell))
        if len(hits) > 1:
            others = [t for t in hits if t != tau_c]
            closest = min(abs(pulled(t, depth)[0].beta - beta_cell) for t in others)
            if closest < 2.0 * abs(pulled(tau_c, depth)[0].beta - beta_cell) + 0.05:
                raise BilliardError(
                    f"ambiguous cell crossing at step {j} of {word}: {len(hits)} candidates"
                )
        slope = _param_slope(g, tau_c, t_hi - t_lo)
        step = 1.2 * p.r / abs(slope)
        e1 = _bisect_f(lambda t: g(t) - math.copysign(p.r, slope),
                       *_expand_bracket(lambda t: g(t) - math.copysign(p.r, slope),
                                        tau_c, step, +1.0))
        e2 = _bisect_f(lambda t: g(t) + math.copysign(p.r, slope),
                       *_expand_bracket(lambda t: g(t) + math.copysign(p.r, slope),
                                        tau_c, step, -1.0))
        t_lo, t_hi = min(e1, e2), max(e1, e2)

    depth = k + 1
    expected_ms = tuple(m_pullback)

    def beta_end(tau):
        return pulled(tau, depth)[0].beta

    hits = _qualifying_zeros(
        beta_end, lambda t: pulled(t, depth)[1] == expected_ms, t_lo, t_hi,
        branch_key=lambda t: pulled(t, depth)[1],
    )
    if not hits:
        raise BilliardError(f"pullback curve does not cross the symmetry line for {word}")
    # the symmetric point sits near the word's first anchor on the symmetry line
    tau_star = min(
        hits, key=lambda t: abs(wrap(pulled(t, depth)[0].omega - system.stable[word[0]].line_omega))
    )

    state, closure, recs = _polish_word_point(lo, hi, tau_star, m_pullback, p, polish_dps)
    period = 2 * (k + 1)
    ms_forward = [rec.m for rec in recs]
    expected = [system.stable[a].m for a in word]
    if ms_forward != expected:
        raise BilliardError(
            f"itinerary mismatch for {word}: flight counts {ms_forward} != {expected}"
        )
    prod = np.eye(2)
    for rec in recs:
        prod = return_map_jacobian(rec, p).matrix @ prod
    # Full-period derivative through reversibility: the mirrored half-orbit
    # contributes R prod^{-1} R, so trace = 2 (ad + bc)/det.  The determinant
    # telescopes exactly to cos(beta_start)/cos(beta_end); forming ad - bc
    # instead would cancel catastrophically.
    a, b = prod[0, 0], prod[0, 1]
    c, d = prod[1, 0], prod[1, 1]
    det = math.cos(state.beta) / math.cos(recs[-1].end.beta)
    trace = float(2.0 * (a * d + b * c) / det)
    return SymmetricPeriodicPoint(
        word=word,
        state=state,
        period=period,
        params=p,
        closure_beta=closure,
        trace=trace,
    )


def _cell_beta(stable_line: float, unstable_line: float) -> float:
    """beta of the limit-line intersection of a stable and an unstable strip."""
    beta = 0.5 * (stable_line - unstable_line)
    for cand in (wrap(beta), wrap(beta + math.pi)):
        if abs(cand) <= 0.5 * math.pi:
            return cand
    return wrap(beta)


def _qualifying_zeros(g: Callable[[float], float], qualifies: Callable[[float], bool],
                      t_lo: float, t_hi: float, samples: int = 129,
                      branch_key: Optional[Callable[[float], object]] = None) -> list[float]:
    """All zeros of g in [t_lo, t_hi] passing the qualifier (corridor/branch) test.

    Sign changes across branch discontinuities of the underlying map are
    rejected by demanding the branch key (the flight-count itinerary) be equal
    at both ends of the bracketing segment; a transversal zero of a smooth
    branch keeps it constant, a jump does not.
    """
    taus = np.linspace(t_lo, t_hi, samples)
    vals = np.array([g(t) for t in taus])
    hits = []
    for i in np.flatnonzero(vals[:-1] * vals[1:] <= 0.0):
        if vals[i] == 0.0 and vals[i + 1] == 0.0:
            continue
        if branch_key is not None and branch_key(taus[i]) != branch_key(taus[i + 1]):
            continue
        t = _bisect_f(g, taus[i], taus[i + 1], tol=1e-13 * max(t_hi - t_lo, 1e-30))
        if qualifies(t):
            hits.append(t)
    deduped: list[float] = []
    for t in sorted(hits):
        if not deduped or t - deduped[-1] > 1e-6 * (t_hi - t_lo):
            deduped.append(t)
    return deduped


def _qualifying_zero(g: Callable[[float], float], qualifies: Callable[[float], bool],
                     t_lo: float, t_hi: float, samples: int = 129,
                     branch_key: Optional[Callable[[float], object]] = None) -> Optional[float]:
    """Like :func:`_qualifying_zeros` but demands a unique answer."""
    hits = _qualifying_zeros(g, qualifies, t_lo, t_hi, samples, branch_key)
    if not hits:
        return None
    if len(hits) > 1:
        raise BilliardError(f"ambiguous cell crossing: {len(hits)} qualifying zeros")
    return hits[0]


def _param_slope(g: Callable[[float], float], t: float, span: float) -> float:
    h = max(1e-9, 1e-7 * span)
    return (g(t + h) - g(t - h)) / (2.0 * h)


def _trim_edge(g: Callable[[float], float], t_out: float, t_in: float, r: float) -> float:
    """Parameter where |g| = r between an outside and an inside sample."""
    target = r if g(t_out) > 0.0 else -r
    return _bisect_f(lambda t: g(t) - target, min(t_out, t_in), max(t_out, t_in), tol=1e-15)


def _polish_word_point(lo: float, hi: float, tau: float, m_pullback: list[int],
                       p: Params, dps: int) -> tuple[InnerState, float, list]:
    """Re-run the pullback at high precision around the float solution.

    The polished forward orbit is validated stepwise for the first-hit
    structure of its frozen branches (a float forward iteration would leave
    the true orbit after ~2 steps at small r), and is returned as a list of
    float :class:`~annulus.dynamics.ReturnRecord` for tangent-map use.
    """
    from .dynamics import ReturnRecord

    with mp.workdps(dps):
        d, r = mp.mpf(p.delta), mp.mpf(p.r)
        mlo, mhi = mp.mpf(lo), mp.mpf(hi)

        def beta_end(tau_mp):
            w = mlo + tau_mp * (mhi - mlo)
            b = mp.mpf(0)
            for m in m_pullback:
                w, b = precision.return_step_inverse(w, b, m, d, r)
            return b, (w, b)

        f = lambda t: beta_end(t)[0]
        t0 = mp.mpf(tau)
        h = mp.mpf("1e-9")
        a, b = t0 - h, t0 + h
        fa, fb = f(a), f(b)
        grow = 0
        while fa * fb > 0 and grow < 40:
            h *= 4
            a, b = t0 - h, t0 + h
            fa, fb = f(a), f(b)
            grow += 1
        if fa * fb > 0:
            raise BilliardError("high-precision polish lost the symmetry crossing")
        t_star = precision.bisect(f, a, b, mp.mpf(10) ** (-(dps - 10)))
        _, (w_star, b_star) = beta_end(t_star)
        m_forward = m_pullback[::-1]
        try:
            steps = precision.word_orbit(w_star, mp.mpf(0), m_forward, d, r)
        except ValueError as exc:
            raise BilliardError(f"polished orbit fails branch validation: {exc}") from exc
        closure = abs(steps[-1][6])
        recs = [
            ReturnRecord(
                start=InnerState(float(w0), float(b0)),
                end=InnerState(float(w1), float(b1)),
                s_start=float(s0),
                theta=float(th),
                m=int(m),
            )
            for (w0, b0, s0, th, m, w1, b1) in steps
        ]
        return InnerState(float(w_star), 0.0), float(closure), recs


def nested_strip_widths(
    word: Sequence[int], system: StripSystem, rows: int = 9, dps: int = 50
) -> list[float]:
    """Max horizontal chord of the nested word strips S^0 => S^1 => ... .

    Level n restricts the level n-1 row interval to the points whose n-th
    return still lies in the word's n-th strip.  One return step expands by
    ~||DG||, so level-3 chords sit around ||DG||^-3 ~ 1e-13 and float
    composition noise would swamp them; the level functions are therefore
    frozen-branch chains evaluated with mpmath (the branch structure inside
    the base strip is already validated by the strip construction).
    """
    word = tuple(word)
    p = system.params
    base = system.stable[word[0]]
    m_word = [system.stable[a].m for a in word]
    idxs = np.linspace(1, base.edge_low.shape[0] - 2, rows).astype(int)
    widths = [0.0] * len(word)
    with mp.workdps(dps):
        d, r = mp.mpf(p.delta), mp.mpf(p.r)

        def level_offset(w, beta, n):
            """Frozen-branch miss distance of strip word[n] after n chained steps."""
            wn, bn = mp.mpf(w), beta
            for mj in m_word[:n]:
                wn, bn = precision.return_step(wn, bn, mj, d, r)
            s, theta = precision.obstacle_to_wall(wn, bn, d, r)
            s_m = s + m_word[n] * (mp.pi - 2 * theta)
            return mp.sin(theta) + d * mp.sin(theta - s_m)

        for row in idxs:
            beta_f = base.edge_low[row, 1]
            beta = mp.mpf(beta_f)
            lo = mp.mpf(min(base.edge_low[row, 0], base.edge_high[row, 0]))
            hi = mp.mpf(max(base.edge_low[row, 0], base.edge_high[row, 0]))
            widths[0] = max(widths[0], float(hi - lo))
            ok_row = True
            for n in range(1, len(word)):
                f = lambda w: level_offset(w, beta, n)
                grid = [lo + (hi - lo) * i / 32 for i in range(33)]
                vals = [f(w) for w in grid]
                crossings = [i for i in range(32) if vals[i] * vals[i + 1] <= 0]
                if not crossings:
                    ok_row = False
                    break
                tol = (hi - lo) * mp.mpf(10) ** (-(dps - 8))
                centers = [precision.bisect(f, grid[i], grid[i + 1], tol) for i in crossings]
                # keep the crossing whose image sits in the right corridor
                target = system.stable[word[n]]
                def in_corridor(w):
                    wn, bn = mp.mpf(w), beta
                    for mj in m_word[:n]:
                        wn, bn = precision.return_step(wn, bn, mj, d, r)
                    return abs(target.line_residual(float(wn), float(bn))) <= target.corridor
                centers = [c for c in centers if in_corridor(c)]
                if len(centers) != 1:
                    ok_row = False
                    break
                center = centers[0]
                h = (hi - lo) * mp.mpf("1e-6")
                slope = (f(center + h) - f(center - h)) / (2 * h)
                e1 = precision.bisect(lambda w: f(w) - mp.sign(slope) * r,
                                      *_mp_bracket(lambda w: f(w) - mp.sign(slope) * r,
                                                   center, r / abs(slope), +1), tol)
                e2 = precision.bisect(lambda w: f(w) + mp.sign(slope) * r,
                                      *_mp_bracket(lambda w: f(w) + mp.sign(slope) * r,
                                                   center, r / abs(slope), -1), tol)
                lo, hi = min(e1, e2), max(e1, e2)
                widths[n] = max(widths[n], float(hi - lo))
            if not ok_row:
                continue
    return widths


def _mp_bracket(f, x0, step, direction, max_expand=80):
    """mpmath analogue of :func:`_expand_bracket`."""
    a, fa = x0, f(x0)
    h = step * direction
    for _ in range(max_expand):
        b = a + h
        fb = f(b)
        if fa * fb <= 0:
            return (a, b) if a < b else (b, a)
        a, fa = b, fb
        h *= mp.mpf("1.6")
    raise AnchorNotEnclosedError("no sign change while bracketing a nested edge")


def lattice_nodes(family: NormalFamily) -> np.ndarray:
    """Intersections of the limit-line lattice spanned by the family anchors."""
    nodes = []
    for q in family.points:
        for t in family.points:
            wi, wk = q.omega, t.omega_image
            for ptick in (0.0, math.pi):
                w = wrap(0.5 * (wi + wk) + ptick)
                b = wrap(0.5 * (wi - wk) + ptick)
                if abs(b) <= 0.5 * math.pi:
                    nodes.append((w, b))
    return np.array(nodes)


def density_estimate(points: np.ndarray, grid: tuple[int, int] = (400, 200)) -> float:
    """Max over a phase-space grid of the cylinder distance to the point set.

    omega wraps, beta does not; the wrap is handled by tiling the point set
    one period to each side before the nearest-neighbor query.
    """
    from scipy.spatial import cKDTree

    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise PreconditionError("need a nonempty (n, 2) point set")
    tiled = np.vstack([
        pts,
        pts + np.array([2.0 * math.pi, 0.0]),
        pts - np.array([2.0 * math.pi, 0.0]),
    ])
    tree = cKDTree(tiled)
    gw = np.linspace(-math.pi, math.pi, grid[0], endpoint=False)
    gb = np.linspace(-0.5 * math.pi, 0.5 * math.pi, grid[1])
    mesh = np.column_stack([g.ravel() for g in np.meshgrid(gw, gb)])
    dist, _ = tree.query(mesh, k=1)
    return float(dist.max())


@dataclass(frozen=True)
class SingularCurve:
    """A traced piece of the singular set of the return map or its inverse."""

    polyline: np.ndarray
    side: str
    component_id: int
    nu: int
    truncated: bool

    def slopes(self) -> np.ndarray:
        d = np.diff(self.polyline, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[:, 1] / d[:, 0]


def trace_singularity(p: Params, side: str, seeds: int = 800,
                      max_refine: int = 4000) -> list[SingularCurve]:
    """Trace the non-horizontal part of the singular set by mapping the grazing circles.

    Seeds both boundary circles |beta| = pi/2, maps them one return step
    (``side == "image"``) or one inverse step (``"preimage"``), splits where
    the return time jumps, and refines in the seed angle until segment turning
    and length targets are met.
    """
    if side not in ("image", "preimage"):
        raise PreconditionError("side must be 'image' or 'preimage'")
    curves: list[SingularCurve] = []
    comp = 0
    for b0 in (0.5 * math.pi, -0.5 * math.pi):

        def evaluate(w: float):
            x = InnerState(w, b0)
            src = x if side == "image" else involution(x)
            orbit = first_return(src, p, max_outer_steps=10**5)
            if not orbit.returned:
                return None
            end = orbit.record.end if side == "image" else involution(orbit.record.end)
            return (end.omega, end.beta, orbit.record.nu)

        ws = np.linspace(-math.pi, math.pi, seeds, endpoint=False)
        samples = [(w, evaluate(w)) for w in ws]
        # rotate so the circular seed array starts at a branch change
        split = next(
            (k for k in range(len(samples))
             if (samples[k - 1][1] is None) != (samples[k][1] is None)
             or (samples[k - 1][1] is not None and samples[k][1] is not None
                 and samples[k - 1][1][2] != samples[k][1][2])),
            0,
        )
        samples = samples[split:] + [(w + 2.0 * math.pi, r) for w, r in samples[:split]]
        budget = max_refine
        i = 0
        while i < len(samples) - 1 and budget > 0:
            (w1, r1), (w2, r2) = samples[i], samples[i + 1]
            if r1 is None or r2 is None or r1[2] != r2[2]:
                if w2 - w1 > 1e-12:
                    wm = 0.5 * (w1 + w2)
                    samples.insert(i + 1, (wm, evaluate(wm)))
                    budget -= 1
                    continue
                i += 1
                continue
            gap = math.hypot(wrap(r2[0] - r1[0]), r2[1] - r1[1])
            if gap > MAX_SEG and w2 - w1 > 1e-12:
                wm = 0.5 * (w1 + w2)
                samples.insert(i + 1, (wm, evaluate(wm)))
                budget -= 1
                continue
            i += 1

        run: list[tuple[float, float]] = []
        run_nu = None

        def endpoint_of(run_pts):
            """Exact grazing endpoint when the arc approaches a boundary circle."""
            (w1, b1), (w2, b2) = run_pts
            if abs(b2) > 0.5 * math.pi - 0.05:
                db = b2 - b1
                target = math.copysign(0.5 * math.pi, b2)
                scale = (target - b2) / db if db != 0.0 else 0.0
                return (w2 + scale * (w2 - w1), target)
            return None

        def flush():
            nonlocal run, comp, run_nu
            if len(run) >= 2:
                poly_pts = list(run)
                truncated = False
                head = endpoint_of([poly_pts[1], poly_pts[0]])
                tail = endpoint_of([poly_pts[-2], poly_pts[-1]])
                if head is not None:
                    poly_pts.insert(0, head)
                else:
                    truncated = True
                if tail is not None:
                    poly_pts.append(tail)
                else:
                    truncated = True
                poly = np.array(poly_pts)
                poly[:, 0] = _unwrap_curve(poly[:, 0])
                curves.append(SingularCurve(
                    polyline=poly, side=side, component_id=comp,
                    nu=run_nu, truncated=truncated))
                comp += 1
            run, run_nu = [], None

        for w, res in samples:
            if res is None:
                flush()
                continue
            if run_nu is not None and res[2] != run_nu:
                flush()
            run.append((res[0], res[1]))
            run_nu = res[2]
        flush()
    return curves


def _unwrap_curve(ws: np.ndarray) -> np.ndarray:
    out = ws.copy()
    for i in range(1, len(out)):
        d = out[i] - out[i - 1]
        if d > math.pi:
            out[i:] -= 2.0 * math.pi
        elif d < -math.pi:
            out[i:] += 2.0 * math.pi
    return out
