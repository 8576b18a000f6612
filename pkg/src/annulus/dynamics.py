"""Collision maps of the annular billiard and the first-return-to-obstacle map.

Forward maps are computed geometrically (ray-circle intersection in the stable
quadratic form); the trigonometric implicit systems that characterize them are
kept as independent residual oracles in the test suite.  Free flights along
the outer wall are a rigid rotation in ``s`` by ``pi - 2 theta``, so a whole
flight sequence is evaluated in closed form and the first obstacle hit is
located by a vectorized scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonReturningError, PreconditionError
from .geometry import InnerState, OuterState, Params, involution, wrap

#: Obstacle intersections with discriminant below this are treated as misses
#: (tangent lines do not deflect the trajectory).
GRAZE_EPS = 1e-14

#: Default cap on free flights per return; near-tangent orbits circulate long.
MAX_OUTER_STEPS = 10**6

_CHUNK0 = 64
_CHUNK_MAX = 1 << 16


@dataclass(frozen=True)
class ReturnRecord:
    """One application of the first-return map with its flight bookkeeping.

    ``m`` counts intermediate free flights, so the orbit visits ``m + 1`` outer
    wall points and the return time is ``nu = m + 2``.  Outer arc positions are
    kept unwrapped (``s_j = s_start + j * step``) so that winding counts survive.
    """

    start: Optional[InnerState]
    end: InnerState
    s_start: float
    theta: float
    m: int

    @property
    def nu(self) -> int:
        return self.m + 2

    @property
    def step(self) -> float:
        """Arc advance per free flight."""
        return math.pi - 2.0 * self.theta

    @property
    def s_unwrapped(self) -> np.ndarray:
        """Unwrapped outer arc positions s_0 .. s_m."""
        return self.s_start + self.step * np.arange(self.m + 1)

    @property
    def s_final(self) -> float:
        return self.s_start + self.step * self.m

    @property
    def winding(self) -> float:
        """Net signed turns around the table during the excursion."""
        return (self.s_final - self.s_start) / (2.0 * math.pi)

    @property
    def outer_hits(self) -> list[OuterState]:
        return [OuterState(wrap(s), self.theta) for s in self.s_unwrapped]


@dataclass(frozen=True)
class OrbitClass:
    """Classification of a launched orbit.

    ``tag`` is one of ``returns``, ``whispering``, ``periodic_non_colliding``,
    ``max_iter_exceeded``.  Non-returning tangent launches are reported as
    ``max_iter_exceeded``; no attempt is made to detect their periodicity.
    """

    tag: str
    record: Optional[ReturnRecord] = None
    outer: Optional[OuterState] = None

    @property
    def returned(self) -> bool:
        return self.tag == "returns"


def map_inner_to_outer(x: InnerState, p: Params) -> OuterState:
    """Map an obstacle collision to the next outer-wall collision.

    The outgoing ray always reaches the wall; the returned state satisfies the
    implicit system sin(theta) + delta sin(theta+s) = -r sin(beta),
    omega + beta = -s - theta (mod 2 pi) to rounding accuracy.
    """
    d, r = p.delta, p.r
    a = x.omega + x.beta
    wx, wy = math.cos(a), -math.sin(a)
    px = -d + r * math.cos(x.omega)
    py = -r * math.sin(x.omega)
    b = px * wx + py * wy
    c0 = px * px + py * py - 1.0
    t = math.sqrt(b * b - c0) - b
    s = math.atan2(py + t * wy, px + t * wx)
    theta = wrap(math.atan2(wy, wx) - s)
    return OuterState(s, theta)


def _wall_chord_miss(s: float, theta: float, p: Params) -> float:
    """Signed distance of the obstacle center from the flight line leaving (s, theta)."""
    return math.sin(theta) + p.delta * math.sin(theta - s)


def _obstacle_collision(s: float, theta: float, p: Params) -> InnerState:
    """Obstacle collision of the chord leaving (s, theta); caller guarantees a hit.

    The discriminant is formed from the line-center distance (well-conditioned
    trig) rather than b^2 - c, which cancels catastrophically for small
    obstacles when the chord passes near the obstacle center.
    """
    a = s - theta
    vx, vy = -math.cos(a), -math.sin(a)
    dx, dy = math.cos(s) + p.delta, math.sin(s)
    b = dx * vx + dy * vy
    c0 = dx * dx + dy * dy - p.r * p.r
    dist = _wall_chord_miss(s, theta, p)
    disc = max((p.r - dist) * (p.r + dist), 0.0)
    t = c0 / (math.sqrt(disc) - b)
    yx, yy = dx + t * vx, dy + t * vy
    omega = math.atan2(-yy / p.r, yx / p.r)
    beta = wrap(omega - theta + s)
    return InnerState(omega, beta)


def circle_flight(x: OuterState, p: Params) -> OuterState:
    """One free flight along the outer wall; preserves theta exactly."""
    return OuterState(x.s + math.pi - 2.0 * x.theta, x.theta)


def map_outer(x: OuterState, p: Params):
    """The billiard map on an outer-wall state.

    Returns the obstacle collision when the outgoing chord meets the obstacle
    (grazing within :data:`GRAZE_EPS` of tangency counts as a miss), otherwise
    the next wall collision.  Tangential obstacle hits come back with
    ``|beta| = pi/2`` as valid boundary states.
    """
    miss = _wall_chord_miss(x.s, x.theta, p)
    if miss * miss <= p.r * p.r - GRAZE_EPS:
        return _obstacle_collision(x.s, x.theta, p)
    return circle_flight(x, p)


def _first_hit_flight(s0: float, theta: float, p: Params, max_steps: int) -> Optional[int]:
    """Index of the first chord (0-based) whose flight line crosses the obstacle."""
    thr2 = p.r * p.r - GRAZE_EPS
    if thr2 <= 0.0:
        return None
    st = math.sin(theta)
    step = math.pi - 2.0 * theta
    base = theta - s0
    k0, chunk = 0, _CHUNK0
    while k0 < max_steps:
        n = min(chunk, max_steps - k0)
        miss = st + p.delta * np.sin(base - step * np.arange(k0, k0 + n))
        hit = miss * miss <= thr2
        i = int(np.argmax(hit))
        if hit[i]:
            return k0 + i
        k0 += n
        chunk = min(chunk * 2, _CHUNK_MAX)
    return None


def _rational_rotation_order(theta: float, max_q: int = 4096) -> Optional[int]:
    """Order q of the wall rotation when pi - 2 theta is exactly commensurate with 2 pi."""
    frac = (math.pi - 2.0 * theta) / (2.0 * math.pi)
    for q in range(1, max_q + 1):
        m = frac * q
        if abs(m - round(m)) < 1e-12 * q:
            return q
    return None


def first_return_from_outer(x: OuterState, p: Params,
                            max_outer_steps: int = MAX_OUTER_STEPS) -> OrbitClass:
    """Classify the orbit launched from an outer-wall state.

    Iterates free flights until the obstacle is met; whispering-gallery
    launches are recognized immediately.  Exactly periodic non-colliding
    launches (rational caustic missing the obstacle) get their own tag.  The
    record of a returning outer launch has no obstacle start, so ``start`` is
    ``None`` there.
    """
    if max_outer_steps < 1:
        raise PreconditionError("max_outer_steps must be >= 1")
    if abs(math.sin(x.theta)) > p.delta + p.r:
        return OrbitClass("whispering", outer=x)
    q = _rational_rotation_order(x.theta)
    if q is not None and _first_hit_flight(x.s, x.theta, p, q) is None:
        return OrbitClass("periodic_non_colliding", outer=x)
    m = _first_hit_flight(x.s, x.theta, p, max_outer_steps)
    if m is None:
        return OrbitClass("max_iter_exceeded", outer=x)
    step = math.pi - 2.0 * x.theta
    end = _obstacle_collision(wrap(x.s + m * step), x.theta, p)
    return OrbitClass(
        "returns",
        record=ReturnRecord(start=None, end=end, s_start=x.s, theta=x.theta, m=m),
    )


def first_return(x: InnerState, p: Params,
                 max_outer_steps: int = MAX_OUTER_STEPS) -> OrbitClass:
    """Classify the orbit launched from an obstacle collision.

    A launch from the obstacle can never enter the whispering gallery, so the
    outcome is ``returns`` or, for the measure-zero near-tangent cases,
    ``max_iter_exceeded``.
    """
    if max_outer_steps < 1:
        raise PreconditionError("max_outer_steps must be >= 1")
    first = map_inner_to_outer(x, p)
    if abs(math.sin(first.theta)) > p.delta + p.r:
        return OrbitClass("whispering", outer=first)
    m = _first_hit_flight(first.s, first.theta, p, max_outer_steps)
    if m is None:
        return OrbitClass("max_iter_exceeded", outer=first)
    step = math.pi - 2.0 * first.theta
    end = _obstacle_collision(wrap(first.s + m * step), first.theta, p)
    return OrbitClass(
        "returns",
        record=ReturnRecord(start=x, end=end, s_start=first.s, theta=first.theta, m=m),
    )


def return_map(x: InnerState, p: Params,
               max_outer_steps: int = MAX_OUTER_STEPS) -> ReturnRecord:
    """The first-return-to-obstacle map; raises on non-returning input."""
    orbit = first_return(x, p, max_outer_steps)
    if not orbit.returned:
        raise NonReturningError(orbit)
    return orbit.record


def return_map_inverse(x: InnerState, p: Params,
                       max_outer_steps: int = MAX_OUTER_STEPS) -> ReturnRecord:
    """The inverse return map, evaluated through the time-reversal conjugacy.

    The returned record describes the backward excursion: ``start`` is ``x``
    and ``end`` its preimage under the return map.
    """
    rec = return_map(involution(x), p, max_outer_steps)
    return ReturnRecord(
        start=x,
        end=involution(rec.end),
        s_start=rec.s_start,
        theta=rec.theta,
        m=rec.m,
    )


def iterate_return_map(x: InnerState, p: Params, n: int,
                       max_outer_steps: int = MAX_OUTER_STEPS) -> list[ReturnRecord]:
    """Records of n consecutive returns starting at x."""
    out = []
    for _ in range(n):
        rec = return_map(x, p, max_outer_steps)
        out.append(rec)
        x = rec.end
    return out
