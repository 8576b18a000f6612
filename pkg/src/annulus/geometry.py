"""Parameters, phase-space coordinates, and named regions of the annular billiard.

The table is the closed region between the unit circle and a circular obstacle
of radius ``r`` whose center sits at distance ``delta`` from the origin.  A
collision with the outer wall is a pair ``(s, theta)``: arc angle ``s``
measured counterclockwise, reflection angle ``theta`` in ``(-pi/2, pi/2)``
measured from the inward normal.  A collision with the obstacle is a pair
``(omega, beta)``: central angle ``omega`` measured clockwise, reflection
angle ``beta`` in ``[-pi/2, pi/2]``; ``|beta| = pi/2`` marks tangential
(grazing) collisions.  All angles are stored in ``(-pi, pi]``.

Cartesian conventions (fixed once, so that every implicit collision equation
below holds with zero residual on traced trajectories):

* outer wall point ``P(s) = (cos s, sin s)``, outgoing velocity
  ``-(cos(s - theta), sin(s - theta))``;
* obstacle center ``(-delta, 0)``, obstacle point
  ``C + r (cos omega, -sin omega)``, outgoing velocity
  ``(cos(omega + beta), -sin(omega + beta))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

TAU = 2.0 * math.pi

#: Absolute tolerance for membership and on-curve predicates.
RESIDUAL_TOL = 1e-10

#: Slack accepted when validating coordinates that sit on a closed boundary.
_BOUNDARY_SLACK = 1e-9


def wrap(angle: float) -> float:
    """Reduce an angle to the interval (-pi, pi]."""
    y = math.remainder(angle, TAU)
    if y <= -math.pi:
        y += TAU
    return y


def wrap_array(angles: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap`."""
    return math.pi - (math.pi - np.asarray(angles)) % TAU


def in_parameter_domain(delta: float, r: float) -> bool:
    """True when (delta, r) is an admissible table: 0 <= delta < 1 < obstacle fits."""
    return 0.0 <= delta < 1.0 and r > 0.0 and r + delta < 1.0


def in_expansion_regime(delta: float, r: float) -> bool:
    """Hypotheses of the deflection-ratio bounds: delta^2 > 1/2, r < (delta - delta^2)/4."""
    return delta * delta > 0.5 and 0.0 < r < 0.25 * (delta - delta * delta)


def cone_margin_constant(delta: float) -> float:
    """The delta-only constant A entering the expansion lower bound 4A/sqrt(r).

    Positive on delta in (1/sqrt(2), 1); tends to 0 at both ends.
    """
    first = math.sqrt(delta) - delta
    d2 = delta * delta
    second = 6.0 * d2 / (2.0 * (1.0 + d2)) - delta * math.sqrt(3.0) / (2.0 * math.sqrt(1.0 + d2))
    return min(first, second)


def certified_radius_bound(delta: float) -> float:
    """Largest obstacle radius admitted by the certified parameter set at this delta."""
    a = cone_margin_constant(delta)
    return min(
        0.25 * (delta - delta * delta),
        a * a / (0.25 + 4.0 * math.sqrt(delta)) ** 2,
    )


def in_certified_domain(delta: float, r: float) -> bool:
    """Membership in the certified parameter set (delta^2 > 1/2, r below both radius bounds)."""
    return delta * delta > 0.5 and 0.0 < r < certified_radius_bound(delta)


@dataclass(frozen=True)
class Params:
    """Table parameters: eccentricity ``delta`` and obstacle radius ``r``."""

    delta: float
    r: float

    def __post_init__(self):
        if not in_parameter_domain(self.delta, self.r):
            raise PreconditionError(
                f"(delta={self.delta}, r={self.r}) outside the parameter domain"
            )

    @property
    def center(self) -> np.ndarray:
        """Cartesian center of the obstacle."""
        return np.array([-self.delta, 0.0])

    def in_certified_domain(self) -> bool:
        return in_certified_domain(self.delta, self.r)

    def in_expansion_regime(self) -> bool:
        return in_expansion_regime(self.delta, self.r)


@dataclass(frozen=True)
class OuterState:
    """Collision with the outer wall: arc angle ``s``, reflection angle ``theta``."""

    s: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "s", wrap(self.s))
        if not abs(self.theta) < 0.5 * math.pi:
            raise PreconditionError(f"|theta| must be < pi/2, got {self.theta}")


@dataclass(frozen=True)
class InnerState:
    """Collision with the obstacle: central angle ``omega``, reflection angle ``beta``."""

    omega: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "omega", wrap(self.omega))
        b = self.beta
        if abs(b) > 0.5 * math.pi:
            if abs(b) - 0.5 * math.pi > _BOUNDARY_SLACK:
                raise PreconditionError(f"|beta| must be <= pi/2, got {b}")
            object.__setattr__(self, "beta", math.copysign(0.5 * math.pi, b))

    @property
    def grazing(self) -> bool:
        return abs(abs(self.beta) - 0.5 * math.pi) <= _BOUNDARY_SLACK


def involution(x):
    """The time-reversal involution R: flip the reflection angle.

    Conjugates the billiard map to its inverse; applying it twice is the identity.
    """
    if isinstance(x, OuterState):
        return OuterState(x.s, -x.theta)
    if isinstance(x, InnerState):
        return InnerState(x.omega, -x.beta)
    raise TypeError(f"not a phase-space state: {x!r}")


def to_cartesian(x, p: Params):
    """Collision point and outgoing unit velocity of a state, as 2-vectors."""
    if isinstance(x, OuterState):
        point = np.array([math.cos(x.s), math.sin(x.s)])
        a = x.s - x.theta
        direction = np.array([-math.cos(a), -math.sin(a)])
        return point, direction
    if isinstance(x, InnerState):
        point = p.center + p.r * np.array([math.cos(x.omega), -math.sin(x.omega)])
        a = x.omega + x.beta
        direction = np.array([math.cos(a), -math.sin(a)])
        return point, direction
    raise TypeError(f"not a phase-space state: {x!r}")


def from_cartesian(point, direction, p: Params):
    """Inverse of :func:`to_cartesian`; the owning circle is inferred from the point."""
    px, py = float(point[0]), float(point[1])
    dx, dy = float(direction[0]), float(direction[1])
    rho = math.hypot(px, py)
    if abs(rho - 1.0) < abs(math.hypot(px + p.delta, py) - p.r):
        s = math.atan2(py, px)
        theta = wrap(s + math.pi - math.atan2(dy, dx))
        return OuterState(s, theta)
    ex, ey = (px + p.delta) / p.r, py / p.r
    omega = math.atan2(-ey, ex)
    beta = wrap(math.atan2(-dy, dx) - omega)
    return InnerState(omega, beta)


@dataclass(frozen=True)
class RegionSet:
    """Membership predicates for the named invariant regions at fixed parameters."""

    params: Params

    def to_obstacle(self, x: OuterState) -> bool:
        """Outer states whose next collision is with the obstacle."""
        p = self.params
        return abs(math.sin(x.theta) + p.delta * math.sin(x.theta - x.s)) <= p.r

    def from_obstacle(self, x: OuterState) -> bool:
        """Outer states whose previous collision was with the obstacle."""
        p = self.params
        return abs(math.sin(x.theta) + p.delta * math.sin(x.theta + x.s)) <= p.r

    def whispering(self, x: OuterState) -> bool:
        """The whispering gallery: circulating orbits that never meet the obstacle."""
        p = self.params
        return abs(math.sin(x.theta)) > p.delta + p.r

    def flat_band(self, x: OuterState) -> bool:
        """Outer band |sin theta| < delta^2 on which the deflection-ratio bounds hold."""
        d = self.params.delta
        return abs(math.sin(x.theta)) < d * d

    def launch_zone(self, x: InnerState) -> bool:
        """Obstacle states whose outgoing flight lands in the flat band.

        This is the pullback of the flat band; the return map expands a cone
        field here.  Closed form: |delta sin(omega+beta) - r sin beta| < delta^2.
        """
        p = self.params
        v = p.delta * math.sin(x.omega + x.beta) - p.r * math.sin(x.beta)
        return abs(v) < p.delta * p.delta

    def arrival_zone(self, x: InnerState) -> bool:
        """Obstacle states reached from the flat band; the involution image of the launch zone.

        Closed form: |delta sin(omega-beta) + r sin beta| < delta^2.
        """
        p = self.params
        v = p.delta * math.sin(x.omega - x.beta) + p.r * math.sin(x.beta)
        return abs(v) < p.delta * p.delta


@dataclass(frozen=True)
class CurveSet:
    """Implicit-function evaluators for the distinguished curves; zero residual = on curve."""

    params: Params

    def symmetry_residual(self, x: InnerState) -> float:
        """The orthogonal-launch line beta = 0 on the obstacle cylinder."""
        return x.beta

    def image_line_residual(self, x: OuterState) -> float:
        """Image of the symmetry line on the outer cylinder: sin theta + delta sin(theta+s)."""
        return math.sin(x.theta) + self.params.delta * math.sin(x.theta + x.s)

    def preimage_line_residual(self, x: OuterState) -> float:
        """Preimage of the symmetry line: sin theta + delta sin(theta-s)."""
        return math.sin(x.theta) + self.params.delta * math.sin(x.theta - x.s)

    @staticmethod
    def stable_limit_residual(x: InnerState, omega0: float) -> float:
        """Signed offset from the decreasing line omega + beta = omega0."""
        return wrap(x.omega + x.beta - omega0)

    @staticmethod
    def unstable_limit_residual(x: InnerState, omega0: float) -> float:
        """Signed offset from the increasing line omega - beta = omega0."""
        return wrap(x.omega - x.beta - omega0)
