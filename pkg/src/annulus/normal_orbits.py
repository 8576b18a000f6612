"""Normal periodic orbits: orthogonal double collisions with the obstacle.

A normal orbit leaves the obstacle along the normal (beta = 0), reflects
m + 1 times off the outer wall at a constant angle theta, and comes back to
the obstacle along the normal, so it is 2-periodic for the return map.  Its
data solve the radius-free system

    sin(theta) - delta sin(omega) = 0
    sin(theta) - delta sin(omega - (m + 1)(pi - 2 theta)) = 0

with theta eliminated through theta = arcsin(delta sin omega).  Tangency of
the underlying curve intersection (the bifurcation configurations) happens
exactly at cos(omega) = 0 or delta cos(omega)/cos(theta) = -1/(m+1).

Everything in this module depends on delta only; the obstacle radius enters
nowhere (it only decides whether intermediate flights clear the obstacle,
which holds for every sufficiently small r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import PreconditionError, SpacingUnattainableError
from .geometry import wrap

#: Residual tolerance for an accepted root of the normal-point system.
ROOT_TOL = 1e-13

#: Tangency criterion values below this classify the point as tangent.
TANGENT_TOL = 1e-9

#: Panels per unit interval in the bracketing scan.
_PANELS = 2 * 10**4


@dataclass(frozen=True)
class NormalPoint:
    """One normal orbit: launch angle omega on the symmetry line, flight data.

    ``kind`` is ``transverse`` or ``tangent``; ``tangency_margin`` is the
    distance of the tangency criterion from zero, so values in an uncertain
    band just above :data:`TANGENT_TOL` can be flagged by the caller instead
    of trusted.
    """

    omega: float
    theta: float
    m: int
    kind: str
    delta: float
    tangency_margin: float

    @property
    def omega_image(self) -> float:
        """Launch angle of the partner collision (the return image on the symmetry line)."""
        return wrap(self.omega + 2.0 * (self.m + 1) * self.theta - self.m * math.pi)

    def to_dict(self) -> dict:
        return {"omega": self.omega, "theta": self.theta, "m": self.m, "kind": self.kind}


def closure_residual(omega: float, m: int, delta: float) -> float:
    """Second equation of the normal-point system with theta eliminated."""
    theta = math.asin(delta * math.sin(omega))
    return math.sin(theta) - delta * math.sin(omega - (m + 1) * (math.pi - 2.0 * theta))


def system_residuals(point: NormalPoint) -> tuple[float, float]:
    """Residuals of both equations of the normal-point system at a candidate."""
    first = math.sin(point.theta) - point.delta * math.sin(point.omega)
    second = math.sin(point.theta) - point.delta * math.sin(
        point.omega - (point.m + 1) * (math.pi - 2.0 * point.theta)
    )
    return first, second


def _tangency_margin(omega: float, theta: float, m: int, delta: float) -> float:
    first = abs(math.cos(omega))
    second = abs(delta * math.cos(omega) / math.cos(theta) + 1.0 / (m + 1))
    return min(first, second)


def _classify(omega: float, theta: float, m: int, delta: float) -> tuple[str, float]:
    margin = _tangency_margin(omega, theta, m, delta)
    return ("tangent" if margin <= TANGENT_TOL else "transverse"), margin


def _make_point(omega: float, m: int, delta: float) -> NormalPoint:
    theta = math.asin(delta * math.sin(omega))
    kind, margin = _classify(omega, theta, m, delta)
    return NormalPoint(omega=wrap(omega), theta=theta, m=m, kind=kind,
                       delta=delta, tangency_margin=margin)


def _bisect(f, lo: float, hi: float, flo: float, tol: float = ROOT_TOL) -> float:
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


def _is_first_closure(omega: float, m: int, delta: float, tol: float = 1e-8) -> bool:
    """Reject roots whose trajectory already closed at an earlier flight count."""
    return all(abs(closure_residual(omega, k, delta)) > tol for k in range(m))


def find_normals(delta: float, m_max: int, panels: int = _PANELS) -> list[NormalPoint]:
    """All normal points with at most m_max intermediate flights at this delta.

    Dense bracketing plus bisection on the closure residual for each m; roots
    are kept only at their first closure (the smallest m that closes the
    trajectory) and deduplicated to 1e-9 in omega.  Output is sorted by
    (m, omega).
    """
    if not 0.0 < delta < 1.0:
        raise PreconditionError(f"delta must be in (0, 1), got {delta}")
    points: list[NormalPoint] = []
    grid = np.linspace(-math.pi, math.pi, panels + 1)
    for m in range(m_max + 1):
        vals = np.array([closure_residual(w, m, delta) for w in grid])
        roots = []
        on_grid = np.flatnonzero(np.abs(vals) < 1e-15)
        roots.extend(grid[i] for i in on_grid)
        sign_change = np.flatnonzero((vals[:-1] * vals[1:] < 0.0))
        for i in sign_change:
            roots.append(
                _bisect(lambda w: closure_residual(w, m, delta), grid[i], grid[i + 1], vals[i])
            )
        kept = []
        for w in sorted(wrap(w) for w in roots):
            if kept and abs(w - kept[-1]) < 1e-9:
                continue
            if any(abs(wrap(w - q.omega)) < 1e-9 for q in points):
                continue
            if not _is_first_closure(w, m, delta):
                continue
            kept.append(w)
        points.extend(_make_point(w, m, delta) for w in kept)
    points.sort(key=lambda q: (q.m, q.omega))
    return points


def normal_from_rational(p_over_q: Fraction, m: int, delta: float) -> Optional[NormalPoint]:
    """Normal point whose wall reflection angle is theta = -(p/q) pi, if it exists.

    The candidate launch angles are the solutions of sin(omega) =
    -sin(p pi / q)/delta; the one satisfying the closure equation at this m is
    returned, None when neither does (including the family candidates at
    omega = -pi/2 whose flight parity does not close).
    """
    p_over_q = Fraction(p_over_q)
    if not 0 < p_over_q < 1:
        raise PreconditionError(f"p/q must be in (0, 1), got {p_over_q}")
    theta = -float(p_over_q) * math.pi
    if abs(theta) >= 0.5 * math.pi:
        return None
    s = math.sin(theta) / delta
    if abs(s) > 1.0:
        return None
    w0 = math.asin(s)
    for omega in (w0, wrap(math.pi - w0)):
        cand = _make_point(omega, m, delta)
        res = system_residuals(cand)
        if max(abs(res[0]), abs(res[1])) <= 1e-10 and _is_first_closure(omega, m, delta):
            # pin theta to the requested rational angle (asin round-trip noise)
            if abs(wrap(cand.theta - theta)) < 1e-9:
                return cand
    return None


@dataclass(frozen=True)
class NormalFamily:
    """A return-invariant set of transverse normal points used as strip anchors.

    ``d`` is the largest circular gap between neighbors within the two arcs
    |sin omega| < delta where the family lives; the two gaps that jump the
    excluded arcs around omega = +-pi/2 are reported in ``band_gaps`` (each
    exceeds pi - 2 arcsin delta by construction, which is why they are kept
    out of the spacing audit).
    """

    delta: float
    points: tuple[NormalPoint, ...]
    d: float
    band_gaps: tuple[float, float]

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def gap_bound(self) -> float:
        return math.pi - 2.0 * math.asin(self.delta)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "n": self.n,
            "d": self.d,
            "band_gaps": list(self.band_gaps),
            "points": [q.to_dict() for q in self.points],
        }


def build_family(
    delta: float,
    m_max: int,
    d_target: Optional[float] = None,
    n_min: int = 4,
    exhaust: bool = False,
) -> NormalFamily:
    """Assemble a return-invariant anchor family with audited spacing.

    Transverse normal points inside |sin omega| < delta are collected by
    increasing m (greedy: small m keeps return times short), closed under the
    return image, and the within-arc gaps are audited against
    d < pi - 2 arcsin(delta) (or the tighter ``d_target``).  With ``exhaust``
    every admissible point up to m_max is taken.  Raises
    :class:`SpacingUnattainableError` when the depth m_max cannot meet the
    audit.
    """
    bound = math.pi - 2.0 * math.asin(delta)
    target = bound if d_target is None else d_target

    def admissible(q: NormalPoint) -> bool:
        return q.kind == "transverse" and abs(math.sin(q.omega)) < delta

    def audit(pts: list[NormalPoint]) -> Optional[NormalFamily]:
        if len(pts) < max(4, n_min):
            return None
        d, band = _gap_audit([t.omega for t in pts])
        # real coverage: inner gaps exist, meet the target, and the family
        # hugs the excluded arcs to within the target on both sides
        if d == 0.0 or d >= target:
            return None
        if any(g >= bound + 2.0 * target for g in band):
            return None
        return NormalFamily(delta=delta, points=tuple(pts), d=d, band_gaps=band)

    all_points = find_normals(delta, m_max)
    by_omega: dict[float, NormalPoint] = {}
    chosen: list[NormalPoint] = []
    for q in sorted(all_points, key=lambda q: q.m):
        if not admissible(q):
            continue
        image = q.omega_image
        partner = next((t for t in all_points if abs(wrap(t.omega - image)) < 1e-8), None)
        if partner is None or not admissible(partner):
            continue
        for t in (q, partner):
            if not any(abs(wrap(t.omega - w)) < 1e-9 for w in by_omega):
                by_omega[t.omega] = t
        chosen = sorted(by_omega.values(), key=lambda t: t.omega)
        if not exhaust:
            family = audit(chosen)
            if family is not None:
                return family
    family = audit(chosen)
    if family is not None:
        return family
    raise SpacingUnattainableError(
        f"no family with gap < {target:.4f} at delta={delta}, m_max={m_max}"
    )


def _gap_audit(omegas: list[float]) -> tuple[float, tuple[float, float]]:
    """Largest within-arc gap and the two band-jumping gaps of a circular set.

    A gap "jumps the band" when the arc between its two endpoints contains
    +pi/2 or -pi/2 (the centers of the two excluded arcs).
    """
    ws = np.sort(wrap_all(np.asarray(omegas, dtype=float)))
    gaps = np.diff(np.concatenate([ws, [ws[0] + 2.0 * math.pi]]))
    tau = 2.0 * math.pi
    contains_plus = (0.5 * math.pi - ws) % tau < gaps
    contains_minus = (-0.5 * math.pi - ws) % tau < gaps
    jumps = contains_plus | contains_minus
    inner = gaps[~jumps]
    band = gaps[jumps]
    d = float(inner.max()) if inner.size else 0.0
    band_sorted = sorted(float(g) for g in band)
    while len(band_sorted) < 2:
        band_sorted.append(0.0)
    return d, (band_sorted[0], band_sorted[1])


def wrap_all(ws: np.ndarray) -> np.ndarray:
    return math.pi - (math.pi - ws) % (2.0 * math.pi)


def unfolding_equation(phi: float, m: int, delta: float) -> float:
    """The eliminated intersection equation near a bifurcating vertical configuration.

    This is the odd-parity form sin(phi) - sin(phi + 2(m+1) arcsin(delta sin phi)),
    used for every m; for even m it is the analytic continuation of the odd
    family rather than the first-closure system (whose even-m form flips the
    middle sign).
    """
    return math.sin(phi) - math.sin(phi + 2.0 * (m + 1) * math.asin(delta * math.sin(phi)))


def cubic_unfolding_roots(
    p_over_q: Fraction,
    m: int,
    d_delta: float,
    window: float = 0.3,
    panels: int = 4 * 10**4,
) -> list[tuple[float, float]]:
    """Roots (phi, theta) of the unfolding equation near phi = pi/2 at delta0 + d_delta.

    The configuration delta0 = sin(p pi / q) with (m+1) p/q an integer is a
    cubic tangency of the two defining curves: one root persists for
    d_delta <= 0 and three appear for small d_delta > 0, the outer pair at
    phi = pi/2 +- sqrt(2 d_delta / delta0) to first order.
    """
    p_over_q = Fraction(p_over_q)
    if (m + 1) * p_over_q.numerator % p_over_q.denominator != 0:
        raise PreconditionError(f"(m+1) p/q must be an integer, got m={m}, p/q={p_over_q}")
    if abs(d_delta) > 0.05:
        raise PreconditionError(f"|d_delta| must be <= 0.05, got {d_delta}")
    delta0 = math.sin(float(p_over_q) * math.pi)
    delta = delta0 + d_delta
    if not 0.0 < delta < 1.0:
        raise PreconditionError(f"delta0 + d_delta = {delta} outside (0, 1)")
    lo, hi = 0.5 * math.pi - window, 0.5 * math.pi + window
    grid = np.linspace(lo, hi, panels + 1)
    vals = np.array([unfolding_equation(phi, m, delta) for phi in grid])
    roots: list[float] = []
    for i in np.flatnonzero(vals[:-1] * vals[1:] < 0.0):
        roots.append(
            _bisect(lambda f: unfolding_equation(f, m, delta), grid[i], grid[i + 1], vals[i])
        )
    for i in np.flatnonzero(np.abs(vals) < 1e-15):
        w = grid[i]
        if not any(abs(w - q) < 1e-9 for q in roots):
            roots.append(w)
    roots = sorted(roots)
    deduped: list[float] = []
    for w in roots:
        if not deduped or abs(w - deduped[-1]) > 1e-9:
            deduped.append(w)
    return [(phi, -math.asin(delta * math.sin(phi))) for phi in deduped]
