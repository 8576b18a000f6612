"""Local invariant manifolds and homoclinic-tangency continuation.

The working picture: near a vertical-bounce bifurcation configuration
(delta0 = sin(p pi / q), obstacle angle -pi/2) the preimage of the symmetry
line folds cubically.  For delta slightly above delta0, the stable manifold
of a symmetric periodic point enters the image strip around (+pi/2, 0), its
pullback into the preimage strip around (-pi/2, 0) is a curve whose wiggle
touches the symmetry line quadratically at an isolated obstacle radius, and
the touch unfolds into a pair of transverse homoclinic points as r varies.

The radius of the touch is located by bisecting the signed extremum of beta
along the pulled-back arc; leading-order predictions for the parameter curve
of touches come from the cubic's closed-form coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .dynamics import ReturnRecord, return_map
from .errors import BilliardError, DegenerateTangencyError, PreconditionError
from .geometry import InnerState, Params, involution, wrap
from .horseshoe import StripSystem, SymmetricPeriodicPoint, flight_offset
from .normal_orbits import NormalPoint, find_normals
from .tangent_map import return_map_jacobian


@dataclass(frozen=True)
class ManifoldCurve:
    """Polyline of a local invariant manifold of a symmetric periodic point."""

    base: SymmetricPeriodicPoint
    side: str
    polyline: np.ndarray
    slope_band: tuple[float, float]
    truncated: bool

    def reflected(self) -> np.ndarray:
        """The time-reversal image (the partner manifold of the same point)."""
        out = self.polyline.copy()
        out[:, 1] = -out[:, 1]
        return out[::-1]


def _period_matrix(z: SymmetricPeriodicPoint, p: Params) -> np.ndarray:
    prod = np.eye(2)
    x = z.state
    for _ in range(z.period):
        rec = return_map(x, p)
        prod = return_map_jacobian(rec, p).matrix @ prod
        x = rec.end
    return prod


def fixed_point_periodic(which: str, p: Params) -> SymmetricPeriodicPoint:
    """The two radial-bounce fixed points wrapped as symmetric periodic points."""
    omega = 0.0 if which == "center" else math.pi
    rec = return_map(InnerState(omega, 0.0), p)
    tr = return_map_jacobian(rec, p).trace
    return SymmetricPeriodicPoint(
        word=(), state=InnerState(omega, 0.0), period=1, params=p,
        closure_beta=abs(rec.end.beta), trace=tr,
    )


def local_manifold(z: SymmetricPeriodicPoint, side: str, p: Params,
                   n_points: int = 400, seed_scale: float = 1e-8,
                   max_depth: int = 60) -> ManifoldCurve:
    """Grow the local stable or unstable manifold of a hyperbolic symmetric point.

    For the radial fixed points the curve is the deep pullback of the image
    strip's symmetry slice (continuous in its parameter and convergent at the
    stable-multiplier rate, so it tolerates the singular-curve tears that
    break naive backward orbits).  For word points the curve is grown from
    the eigenvector of the period product by backward/forward iteration of a
    seed segment; a branch that loses its itinerary before the grazing
    boundary is flagged truncated.
    """
    if side not in ("stable", "unstable"):
        raise PreconditionError("side must be 'stable' or 'unstable'")
    if z.period == 1:
        return _fixed_point_manifold(z, side, p, n_points)
    mat = _period_matrix(z, p)
    if abs(np.trace(mat)) <= 2.0:
        raise PreconditionError(f"base point not hyperbolic: trace {np.trace(mat)}")
    evals, evecs = np.linalg.eig(mat)
    idx = int(np.argmin(np.abs(evals))) if side == "stable" else int(np.argmax(np.abs(evals)))
    lam = float(np.abs(evals[idx]))
    lam = lam if side == "stable" else 1.0 / lam
    v = np.real(evecs[:, idx])
    v = v / np.hypot(v[0], v[1])

    steps = z.period

    def advance(x: InnerState) -> InnerState:
        for _ in range(steps):
            if side == "stable":
                x = involution(return_map(involution(x), p).end)
            else:
                x = return_map(x, p).end
        return x

    def point(u: float) -> Optional[InnerState]:
        """Manifold point at signed parameter u (seed-segment units)."""
        au = abs(u)
        if au == 0.0:
            return z.state
        depth = max(0, int(math.ceil(math.log(au) / math.log(1.0 / lam))))
        depth = min(depth, max_depth)
        t = u * lam ** depth
        x = InnerState(z.state.omega + t * seed_scale * v[0],
                       z.state.beta + t * seed_scale * v[1])
        try:
            for _ in range(depth):
                x = advance(x)
            if abs(x.beta) >= 0.5 * math.pi:
                return None
            return x
        except Exception:
            return None

    # geometric parameter ladder out to the boundary: advance by a factor,
    # shrinking it whenever the polyline hop is too large, so a genuine
    # discontinuity (branch escape) collapses the factor and stops the walk
    out: list[tuple[float, InnerState]] = [(0.0, z.state)]
    truncated = False
    max_hop = 0.25
    for sign in (+1.0, -1.0):
        ladder: list[tuple[float, InnerState]] = []
        base_growth = min(1.0 / lam ** (1.0 / 8.0), 4.0)
        growth = base_growth
        u = 1.0
        prev: Optional[InnerState] = None
        guard = max_depth * 64
        while guard > 0:
            guard -= 1
            if u > 1e24:
                truncated = True
                break
            x = point(sign * u)
            bad = x is None or abs(x.beta) > 0.5 * math.pi - 1e-12
            hop = _gap(prev, x) if (x is not None and prev is not None) else 0.0
            if not bad and hop <= max_hop:
                ladder.append((sign * u, x))
                prev = x
                u *= growth
                growth = min(growth * 1.3, base_growth)
                continue
            if prev is None:
                truncated = True
                break
            # retreat: try a smaller advance from the last good rung
            growth = math.sqrt(growth)
            if growth < 1.0 + 1e-13:
                break
            u = abs(ladder[-1][0]) * growth
        out.extend(ladder)
    out.sort(key=lambda t: t[0])
    pts = _refine_polyline(point, out)
    poly = np.array([[x.omega, x.beta] for _, x in pts])
    poly[:, 0] = _unwrap(poly[:, 0])
    d = np.diff(poly, axis=0)
    keep = np.hypot(d[:, 0], d[:, 1]) > 1e-14
    slopes = d[keep, 1] / d[keep, 0]
    return ManifoldCurve(
        base=z,
        side=side,
        polyline=poly,
        slope_band=(float(slopes.min()), float(slopes.max())) if slopes.size else (0.0, 0.0),
        truncated=truncated,
    )


def _fixed_point_manifold(z: SymmetricPeriodicPoint, side: str, p: Params,
                          n_points: int) -> ManifoldCurve:
    which = "center" if abs(wrap(z.state.omega)) < 0.5 * math.pi else "far"
    curve = _StableCurve(which, p)
    taus = np.linspace(curve.t_lo, curve.t_hi, max(n_points, 64))
    pts = [curve.point(t) for t in taus]
    # subdivide long hops (the parameter is strongly nonuniform in arclength)
    out = [(taus[0], pts[0])]
    budget = 20 * n_points
    for t1, x1 in zip(taus[1:], pts[1:]):
        while budget > 0:
            t0, x0 = out[-1]
            if math.hypot(wrap(x1[0] - x0[0]), x1[1] - x0[1]) <= MAX_SEG_MANIFOLD:
                break
            tm = 0.5 * (t0 + t1)
            if tm == t0 or tm == t1:
                break
            out.append((tm, curve.point(tm)))
            budget -= 1
        out.append((t1, x1))
    poly = np.array([[w, b] for _, (w, b) in out])
    poly[:, 0] = _unwrap(poly[:, 0])
    if side == "unstable":
        poly = poly[::-1].copy()
        poly[:, 1] = -poly[:, 1]
    d = np.diff(poly, axis=0)
    keep = np.hypot(d[:, 0], d[:, 1]) > 1e-14
    slopes = d[keep, 1] / d[keep, 0]
    return ManifoldCurve(
        base=z, side=side, polyline=poly,
        slope_band=(float(slopes.min()), float(slopes.max())) if slopes.size else (0.0, 0.0),
        truncated=False,
    )


#: Target polyline segment length for manifold output.
MAX_SEG_MANIFOLD = 0.02


def _gap(a: InnerState, b: InnerState) -> float:
    return math.hypot(wrap(b.omega - a.omega), b.beta - a.beta)


def _refine_polyline(point, pts, max_turn: float = 0.05, max_seg: float = 0.02,
                     budget: int = 4000):
    pts = list(pts)
    i = 0
    while i < len(pts) - 1 and budget > 0:
        (u1, x1), (u2, x2) = pts[i], pts[i + 1]
        gap = math.hypot(wrap(x2.omega - x1.omega), x2.beta - x1.beta)
        need = gap > max_seg
        if not need and i + 2 < len(pts):
            x3 = pts[i + 2][1]
            a = np.array([wrap(x2.omega - x1.omega), x2.beta - x1.beta])
            b = np.array([wrap(x3.omega - x2.omega), x3.beta - x2.beta])
            na, nb = np.hypot(*a), np.hypot(*b)
            if na > 1e-14 and nb > 1e-14:
                cosang = float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
                need = math.acos(cosang) > max_turn
        if need and abs(u2 - u1) > 1e-13 * max(abs(u1), abs(u2), 1e-6):
            um = 0.5 * (u1 + u2) if u1 * u2 <= 0 else math.copysign(
                math.sqrt(abs(u1) * abs(u2)), u1)
            xm = point(um)
            budget -= 1
            if xm is not None:
                pts.insert(i + 1, (um, xm))
                continue
        i += 1
    return pts


def _unwrap(ws: np.ndarray) -> np.ndarray:
    out = ws.copy()
    for i in range(1, len(out)):
        d = out[i] - out[i - 1]
        if d > math.pi:
            out[i:] -= 2.0 * math.pi
        elif d < -math.pi:
            out[i:] += 2.0 * math.pi
    return out


@dataclass(frozen=True)
class TangencyCurve:
    """Leading-order parameter curve (delta(t), r(t)) of manifold-symmetry touches."""

    p_over_q: Fraction
    m: int
    anchor_omega: float
    d0: float
    samples: tuple[tuple[float, float, float], ...]  # (t, delta, r)

    def to_dict(self) -> dict:
        return {
            "p_over_q": [self.p_over_q.numerator, self.p_over_q.denominator],
            "m": self.m,
            "anchor_omega": self.anchor_omega,
            "D0": self.d0,
            "samples": [list(s) for s in self.samples],
        }


def tangency_offset_coefficient(p_over_q: Fraction, m: int, anchor_omega: float) -> float:
    """The leading offset coefficient D0 of the pulled-back manifold equation."""
    pq = float(Fraction(p_over_q))
    return math.sin(0.5 * (anchor_omega + 0.5 * math.pi) - (m + 1) * pq * math.pi
                    + 0.5 * m * math.pi)


def gamma_curve(p_over_q: Fraction, m: int, anchor_omega: float,
                t_grid: Sequence[float]) -> TangencyCurve:
    """Sample the leading-order tangency curve near delta0 = sin(p pi / q).

    delta(t) = delta0 + (3/2) delta0 t^2 and
    r(t) = 2 (m+1) tan(p pi / q) / (-D0) t^3; samples with r outside the
    parameter domain are dropped.  Refuses configurations with |D0| < 1e-6.
    """
    p_over_q = Fraction(p_over_q)
    if (m + 1) * p_over_q.numerator % p_over_q.denominator != 0:
        raise PreconditionError(f"(m+1) p/q must be an integer, got m={m}, p/q={p_over_q}")
    d0 = tangency_offset_coefficient(p_over_q, m, anchor_omega)
    if abs(d0) < 1e-6:
        raise DegenerateTangencyError(f"|D0| = {abs(d0):.2e} too small")
    pq = float(p_over_q)
    delta0 = math.sin(pq * math.pi)
    coeff = 2.0 * (m + 1) * math.tan(pq * math.pi) / (-d0)
    samples = []
    for t in t_grid:
        delta = delta0 + 1.5 * delta0 * t * t
        r = coeff * t ** 3
        if r > 0.0 and delta < 1.0 and r + delta < 1.0:
            samples.append((float(t), delta, r))
    return TangencyCurve(
        p_over_q=p_over_q, m=m, anchor_omega=anchor_omega, d0=d0,
        samples=tuple(samples),
    )


@dataclass
class TangencySearch:
    """Result of the radius continuation of a manifold-symmetry touch."""

    r_star: float
    delta: float
    word: tuple
    strip_m: int
    touch_omega: float
    g_lo: float
    g_hi: float
    crossings_below: int
    crossings_above: int
    quadratic_coefficient: float
    manifold_mirror_distance: float
    gate_min_abs_beta: float
    prediction_r: Optional[float] = None
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "r_star": self.r_star,
            "delta": self.delta,
            "word": list(self.word),
            "strip_m": self.strip_m,
            "touch_omega": self.touch_omega,
            "crossings_below": self.crossings_below,
            "crossings_above": self.crossings_above,
            "quadratic_coefficient": self.quadratic_coefficient,
            "manifold_mirror_distance": self.manifold_mirror_distance,
            "gate_min_abs_beta": self.gate_min_abs_beta,
            "prediction_r": self.prediction_r,
        }


def _vertical_family_point(delta: float, m_max: int = 10) -> NormalPoint:
    """The normal point continuing the vertical-bounce family at this delta."""
    pts = find_normals(delta, m_max)
    best = min(pts, key=lambda q: abs(wrap(q.omega + 0.5 * math.pi)))
    if abs(wrap(best.omega + 0.5 * math.pi)) > 0.4:
        raise PreconditionError(
            f"no normal point near omega = -pi/2 at delta={delta} (closest {best.omega})"
        )
    return best


class _StableCurve:
    """The local stable curve of a radial fixed point as a deep pullback.

    The depth-n pullback of the horizontal slice of the fixed point's image
    strip converges to the local stable manifold at the rate of the stable
    multiplier, so three pullbacks already sit ~1e-12 from it.  Unlike an
    eigenvector-seeded backward orbit, the parametrization is continuous on
    its interval (the branch flight count is pinned), so the curve can be
    sampled and bisected like any smooth function.
    """

    def __init__(self, which: str, p: Params, depth: int = 3):
        from .horseshoe import _qualifying_zeros

        self.p = p
        self.depth = depth
        self.omega0 = 0.0 if which == "center" else math.pi
        rec0 = return_map(InnerState(self.omega0, 0.0), p)
        self.m0 = rec0.m
        # horizontal slice of the image strip through the fixed point
        f = lambda w: flight_offset(w, 0.0, self.m0, p)
        slope = (f(self.omega0 + 1e-7) - f(self.omega0 - 1e-7)) / 2e-7
        step = 1.2 * p.r / abs(slope)
        from .horseshoe import _bisect_f, _expand_bracket
        e1 = _bisect_f(lambda w: f(w) - math.copysign(p.r, slope),
                       *_expand_bracket(lambda w: f(w) - math.copysign(p.r, slope),
                                        self.omega0, step, +1.0))
        e2 = _bisect_f(lambda w: f(w) + math.copysign(p.r, slope),
                       *_expand_bracket(lambda w: f(w) + math.copysign(p.r, slope),
                                        self.omega0, step, -1.0))
        self.lo, self.hi = min(e1, e2), max(e1, e2)
        # trim so that every pullback level stays inside the image strip
        # (time-reversed membership, confined to the fixed point's own line)
        t_lo, t_hi = 0.0, 1.0
        for d in range(1, depth):
            def g(t, d=d):
                w, b = self._pull(t, d)
                return flight_offset(w, -b, self.m0, self.p)

            def on_line(t, d=d):
                w, b = self._pull(t, d)
                return abs(wrap((w - b) - self.omega0)) <= 0.1

            tau_c = _qualifying_zeros(
                g, on_line, t_lo, t_hi,
                branch_key=lambda t: self._branch(t, d))
            if len(tau_c) != 1:
                raise BilliardError(f"stable-curve trim at depth {d} found {len(tau_c)} centers")
            sl = (g(tau_c[0] + 1e-9) - g(tau_c[0] - 1e-9)) / 2e-9
            st = 1.2 * p.r / abs(sl)
            a = _bisect_f(lambda t: g(t) - math.copysign(p.r, sl),
                          *_expand_bracket(lambda t: g(t) - math.copysign(p.r, sl),
                                           tau_c[0], st, +1.0))
            b = _bisect_f(lambda t: g(t) + math.copysign(p.r, sl),
                          *_expand_bracket(lambda t: g(t) + math.copysign(p.r, sl),
                                           tau_c[0], st, -1.0))
            t_lo, t_hi = min(a, b), max(a, b)
        self.t_lo, self.t_hi = t_lo, t_hi

    def _pull(self, tau: float, depth: int) -> tuple[float, float]:
        w = self.lo + tau * (self.hi - self.lo)
        x = InnerState(w, 0.0)
        for _ in range(depth):
            rec = return_map(involution(x), self.p)
            x = involution(rec.end)
        return x.omega, x.beta

    def _branch(self, tau: float, depth: int) -> tuple:
        w = self.lo + tau * (self.hi - self.lo)
        x = InnerState(w, 0.0)
        ms = []
        for _ in range(depth):
            rec = return_map(involution(x), self.p)
            ms.append(rec.m)
            x = involution(rec.end)
        return tuple(ms)

    def point(self, tau: float) -> tuple[float, float]:
        """Curve point at parameter tau in [t_lo, t_hi] (omega wrapped, beta)."""
        return self._pull(tau, self.depth)


@dataclass
class FoldProfile:
    """One radius' view of the manifold near the vertical family's strip.

    ``q_critical`` is the extremal center-curve offset along the stable
    manifold (the forward functional; it vanishes exactly at the touch);
    ``crossings`` counts the transversal center-curve crossings in the
    corridor, which equals the symmetry-line crossing count of the pulled
    branch by conjugacy.  The pulled-branch fields (``extremum`` etc.) are the
    certificates on the preimage side.
    """

    r: float
    gate: float
    q_critical: float
    crossings: int
    extremum: Optional[float]
    touch_omega: Optional[float]
    quadratic: Optional[float]
    arc: np.ndarray


def _fold_profile(word_point: SymmetricPeriodicPoint, p: Params,
                  family_point: NormalPoint, corridor: float,
                  window_beta: float = 0.35, want_arc: bool = True) -> FoldProfile:
    """Analyze the pullback of the manifold arc through the vertical family's strip.

    By conjugacy, the pulled arc touches the symmetry line exactly when the
    stable curve touches the image strip's center curve, so the analysis
    pivots on the critical point of the center offset along the stable curve
    (which exists on both sides of the touch; a transversal crossing does
    not).  The arc between the strip's +-r edges around that critical point
    is then pulled back one branch for the symmetry-line certificates.
    """
    from .horseshoe import _bisect_f, _expand_bracket

    post_anchor = _partner_point(family_point)
    m = family_point.m
    if word_point.period != 1:
        raise PreconditionError("pullback arcs are implemented for the radial fixed points")
    which = "center" if abs(wrap(word_point.state.omega)) < 0.5 * math.pi else "far"
    curve = _StableCurve(which, p)

    def strip_offset(tau: float) -> float:
        w, b = curve.point(tau)
        return flight_offset(w, -b, m, p)

    def line_residual(tau: float) -> float:
        w, b = curve.point(tau)
        return abs(wrap((w - b) - post_anchor.omega))

    # coarse scan: find the corridor visit of the stable curve
    taus = np.linspace(curve.t_lo, curve.t_hi, 513)
    lines = np.array([line_residual(t) for t in taus])
    i_near = int(np.argmin(lines))
    if lines[i_near] > corridor:
        raise BilliardError("manifold does not reach the image strip corridor")
    # slope-adaptive window around the corridor visit
    h0 = max((curve.t_hi - curve.t_lo) * 1e-9, 1e-18)
    t_near = taus[i_near]
    dline = abs(line_residual(t_near + h0) - line_residual(t_near - h0)) / (2.0 * h0)
    tau_win = 1.4 * corridor / max(dline, 1e-300)
    w_lo = max(curve.t_lo, t_near - tau_win)
    w_hi = min(curve.t_hi, t_near + tau_win)

    # critical points of the center offset inside the corridor window; the
    # touch annihilates the pair with the smallest |q|
    n = 2401
    ts = np.linspace(w_lo, w_hi, n)
    offs = np.array([strip_offset(t) for t in ts])
    lres = np.array([line_residual(t) for t in ts])
    interior = np.arange(1, n - 1)
    is_ext = ((offs[interior] - offs[interior - 1]) *
              (offs[interior + 1] - offs[interior]) < 0.0)
    cands = interior[is_ext & (lres[interior] <= corridor)]
    if cands.size == 0:
        raise BilliardError("no critical point of the strip offset in the corridor")
    i = int(cands[np.argmin(np.abs(offs[cands]))])
    t2, q2 = _parabolic_extremum(strip_offset, ts[i - 1], ts[i], ts[i + 1])

    # transversal center-curve crossings in the corridor (conjugate to the
    # symmetry-line crossings of the pulled branch)
    zero_seg = np.flatnonzero((offs[:-1] * offs[1:] < 0.0) &
                              (np.minimum(lres[:-1], lres[1:]) <= corridor))
    crossings = int(len(zero_seg))

    # fold functional: the critical's parabola crosses the center curve
    # exactly when q and the curvature have opposite signs, so -q sign(C)
    # is positive before the touch, zero at it, negative after
    hq = 0.02 * (ts[min(i + 1, n - 1)] - ts[max(i - 1, 0)])
    curv = strip_offset(t2 - hq) - 2.0 * q2 + strip_offset(t2 + hq)
    fold = -q2 * math.copysign(1.0, curv if curv != 0.0 else 1.0)
    if not want_arc or abs(q2) > p.r:
        return FoldProfile(r=p.r, gate=math.nan, q_critical=fold, crossings=crossings,
                           extremum=None, touch_omega=None, quadratic=None,
                           arc=np.empty((0, 2)))
    edge_val = math.copysign(p.r, curv if curv != 0.0 else 1.0)

    def edge_fn(t):
        return strip_offset(t) - edge_val

    span = w_hi - w_lo
    a = _bisect_f(edge_fn, *_expand_bracket(edge_fn, t2, 0.002 * span, +1.0))
    b = _bisect_f(edge_fn, *_expand_bracket(edge_fn, t2, 0.002 * span, -1.0))
    a, b = min(a, b), max(a, b)

    # disjointness gate: the arc inside the image strip stays off the symmetry line
    gate = min(abs(curve.point(t)[1]) for t in np.linspace(a, b, 65))

    def pulled(tau: float) -> Optional[tuple[float, float]]:
        w, bb = curve.point(tau)
        rec = return_map(InnerState(wrap(w), -bb), p)
        if rec.m != m:
            return None
        return rec.end.omega, -rec.end.beta

    shrink = 1e-6 * (b - a)
    n2 = 601
    ts2 = np.linspace(a + shrink, b - shrink, n2)
    raw = [(t, pulled(t)) for t in ts2]
    kept = [(t, v) for t, v in raw if v is not None]
    if len(kept) < 16:
        return FoldProfile(r=p.r, gate=float(gate), q_critical=fold, crossings=crossings,
                           extremum=None, touch_omega=None, quadratic=None,
                           arc=np.empty((0, 2)))
    ts2 = np.array([t for t, _ in kept])
    pts = np.array([v for _, v in kept])
    omegas, betas = pts[:, 0], pts[:, 1]

    def beta_pulled(t):
        v = pulled(t)
        return betas[np.searchsorted(ts2, t) % len(betas)] if v is None else v[1]

    interior = np.arange(1, len(kept) - 1)
    is_ext = ((betas[interior] - betas[interior - 1]) *
              (betas[interior + 1] - betas[interior]) < 0.0)
    cands = interior[is_ext & (np.abs(betas[interior]) <= window_beta)]
    extremum = touch_w = quad = None
    if cands.size:
        i = int(cands[np.argmin(np.abs(betas[cands]))])
        t_ext, extremum = _parabolic_extremum(beta_pulled, ts2[i - 1], ts2[i], ts2[i + 1])
        v = pulled(t_ext)
        if v is not None:
            touch_w = v[0]
            ds = 0.01 * (ts2[i + 1] - ts2[i - 1])
            vl, vc, vr = pulled(t_ext - ds), v, pulled(t_ext + ds)
            if vl is not None and vr is not None:
                s_avg = 0.5 * (math.hypot(vc[0] - vl[0], vc[1] - vl[1])
                               + math.hypot(vr[0] - vc[0], vr[1] - vc[1]))
                if s_avg > 0.0:
                    quad = (vl[1] - 2.0 * vc[1] + vr[1]) / (s_avg * s_avg)
    arc = np.column_stack([_unwrap(omegas), betas])
    return FoldProfile(r=p.r, gate=float(gate), q_critical=fold, crossings=crossings,
                       extremum=extremum, touch_omega=touch_w, quadratic=quad,
                       arc=arc)


def _parabolic_extremum(f, t1: float, t2: float, t3: float,
                        iters: int = 80) -> tuple[float, float]:
    """Refine an interior extremum of f bracketed by three points (t2 extremal)."""
    f1, f2, f3 = f(t1), f(t2), f(t3)
    maximizing = f2 >= max(f1, f3)
    for _ in range(iters):
        num = (t2 - t1) ** 2 * (f2 - f3) - (t2 - t3) ** 2 * (f2 - f1)
        den = (t2 - t1) * (f2 - f3) - (t2 - t3) * (f2 - f1)
        if den == 0.0 or not math.isfinite(den):
            break
        tv = t2 - 0.5 * num / den
        if not (t1 < tv < t3) or tv == t2:
            break
        fv = f(tv)
        better = fv > f2 if maximizing else fv < f2
        if tv < t2:
            if better:
                t3, f3 = t2, f2
                t2, f2 = tv, fv
            else:
                t1, f1 = tv, fv
        else:
            if better:
                t1, f1 = t2, f2
                t2, f2 = tv, fv
            else:
                t3, f3 = tv, fv
        if t3 - t1 < 1e-15 * max(abs(t2), 1e-12):
            break
    return t2, f2


def _family_corridor(family_point: NormalPoint, delta: float, r: float,
                     m_max: int = 10) -> float:
    """Half-corridor around the vertical family's limit lines.

    The nearest same-m root is the fold partner of the unfolding and must stay
    inside the corridor; the second-nearest (the mirror branch of the family)
    must stay out.
    """
    pts = [q for q in find_normals(delta, m_max) if q.m == family_point.m]
    gaps = sorted(abs(wrap(q.omega - family_point.omega)) for q in pts
                  if abs(wrap(q.omega - family_point.omega)) > 1e-6)
    if len(gaps) >= 2:
        return 0.8 * gaps[1]
    if gaps:
        return 0.8 * gaps[0]
    return 0.2


def find_tangency_r(delta: float, word, r_bracket: tuple[float, float],
                    m_max: int = 10, tol: float = 1e-10,
                    p_over_q: Optional[Fraction] = None) -> TangencySearch:
    """Locate the radius where the pulled-back stable manifold touches the symmetry line.

    ``word`` selects the symmetric periodic point (an anchor angle picking one
    of the radial fixed points).  The search is two-phase: the symmetry
    crossing count of the pulled arc drops by two across the touch, so a
    coarse geometric scan brackets the count change; inside that bracket the
    touch's critical point exists on both sides and the signed extremum of
    beta is bisected to ``tol``.  The certificate carries the crossing counts
    at r_star (1 -+ 0.2), the quadratic coefficient of the touch, the
    disjointness gate, and the distance between the manifold and its
    time-reversal image near the touch.
    """
    r_lo, r_hi = r_bracket
    if not 0.0 < r_lo < r_hi:
        raise PreconditionError("need 0 < r_lo < r_hi")
    family_point = _vertical_family_point(delta, m_max)

    def word_point(p: Params) -> SymmetricPeriodicPoint:
        which = "center" if abs(wrap(float(word))) < 0.5 * math.pi else "far"
        return fixed_point_periodic(which, p)

    cache: dict[tuple[float, bool], FoldProfile] = {}

    def profile(r: float, want_arc: bool = False) -> FoldProfile:
        key = (r, want_arc)
        if key not in cache:
            p = Params(delta, r)
            corridor = _family_corridor(family_point, delta, r, m_max)
            cache[key] = _fold_profile(word_point(p), p, family_point, corridor,
                                       want_arc=want_arc)
        return cache[key]

    # phase 1: bracket the sign change of the forward touch functional
    grid = list(np.geomspace(r_lo, r_hi, 25))
    qs: list[Optional[float]] = []
    for r in grid:
        try:
            qs.append(profile(r).q_critical)
        except BilliardError:
            qs.append(None)
    counts = [profile(r).crossings if q is not None else None
              for r, q in zip(grid, qs)]
    pairs = [(grid[i], grid[i + 1]) for i in range(len(grid) - 1)
             if qs[i] is not None and qs[i + 1] is not None
             and qs[i] * qs[i + 1] < 0.0
             and counts[i] is not None and counts[i + 1] is not None
             and abs(counts[i] - counts[i + 1]) == 2]
    if not pairs:
        raise BilliardError(
            f"no fold of the touch functional on [{r_lo}, {r_hi}]: "
            f"g {qs}, crossings {counts}"
        )
    lo, hi = pairs[0]

    # phase 2: bisect the forward functional to tol
    def g(r: float) -> float:
        return profile(r).q_critical

    g_lo, g_hi = g(lo), g(hi)
    history = [(lo, g_lo), (hi, g_hi)]
    flo = g_lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = g(mid)
        history.append((mid, fm))
        if (flo < 0.0) == (fm < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    r_star = 0.5 * (lo + hi)
    star = profile(r_star, want_arc=True)

    below = profile(r_star * 0.8)
    above = profile(r_star * 1.2)

    # mirror distance: the touch point and its reflection both lie on the two
    # manifolds (the reflected branch is the partner manifold), so twice the
    # polished extremum bounds their separation at the touch
    arc_star = star.arc
    touch_w = star.touch_omega if star.touch_omega is not None else family_point.omega
    if star.extremum is not None:
        mirror_distance = 2.0 * abs(star.extremum)
    elif arc_star.size:
        mirror = arc_star.copy()
        mirror[:, 1] = -mirror[:, 1]
        pa = arc_star[np.abs(arc_star[:, 0] - touch_w) <= 0.1]
        pb = mirror[np.abs(mirror[:, 0] - touch_w) <= 0.1]
        dmat = np.hypot(pa[:, None, 0] - pb[None, :, 0], pa[:, None, 1] - pb[None, :, 1])
        mirror_distance = float(dmat.min()) if dmat.size else math.nan
    else:
        mirror_distance = math.nan

    prediction = None
    if p_over_q is not None:
        pq = Fraction(p_over_q)
        delta0 = math.sin(float(pq) * math.pi)
        if delta > delta0:
            t = math.sqrt((delta - delta0) / (1.5 * delta0))
            anchor = wrap(float(word))
            d0 = tangency_offset_coefficient(pq, family_point.m, anchor)
            prediction = abs(2.0 * (family_point.m + 1) * math.tan(float(pq) * math.pi) / d0) * t ** 3
    return TangencySearch(
        r_star=r_star,
        delta=delta,
        word=(word,) if isinstance(word, (int, float)) else tuple(word),
        strip_m=family_point.m,
        touch_omega=touch_w,
        g_lo=g_lo,
        g_hi=g_hi,
        crossings_below=below.crossings,
        crossings_above=above.crossings,
        quadratic_coefficient=star.quadratic if star.quadratic is not None else math.nan,
        manifold_mirror_distance=mirror_distance,
        gate_min_abs_beta=star.gate,
        prediction_r=prediction,
        history=history,
    )


def _partner_point(q: NormalPoint) -> NormalPoint:
    """The return image of a normal point, as a normal point of the same family."""
    from .normal_orbits import NormalPoint as NP
    return NP(
        omega=q.omega_image,
        theta=q.theta,
        m=q.m,
        kind=q.kind,
        delta=q.delta,
        tangency_margin=q.tangency_margin,
    )