"""Analytic tangent map of the first-return map and its finite-difference oracle.

The derivative of the return map at a non-grazing return splits as

    DG = a21 * [[1, 1], [1, 1]] + [[at11, at12], [0, at22]]

with every piece a closed-form expression in the geometry of the excursion:
the shared reflection angle theta of the outer hits, the horizontal flight
angles phi0 (outgoing) and phi1 (incoming), the flight count m, and the
obstacle angles beta0, beta1.  As r -> 0 the rank-one a21 block dominates,
which is the source of the expansion exploited by the cone certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ReturnRecord, return_map
from .errors import ComponentChangeError, DegenerateJacobianError, PreconditionError
from .geometry import InnerState, Params, wrap

#: Denominators (cos beta1, cos theta) below this are reported as degenerate.
DEGENERATE_TOL = 1e-12

#: |trace| this close to 2 classifies as parabolic.
PARABOLIC_TOL = 1e-9


@dataclass(frozen=True)
class JacobianTerms:
    """Entries of DG at one return, with the decomposition pieces."""

    a11: float
    a12: float
    a21: float
    a22: float
    atilde11: float
    atilde12: float
    atilde22: float
    zeta0: float
    zeta1: float
    m: int
    phi0: float
    phi1: float
    theta: float
    beta0: float
    beta1: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def det_expected(self) -> float:
        """cos(beta0)/cos(beta1), the exact determinant of DG."""
        return math.cos(self.beta0) / math.cos(self.beta1)


def return_map_jacobian(rec: ReturnRecord, p: Params) -> JacobianTerms:
    """Closed-form DG from the geometry of a recorded return.

    Raises :class:`DegenerateJacobianError` when the return is grazing
    (cos beta1 ~ 0) or the flight is nearly tangent to the wall (cos theta ~ 0).
    """
    if rec.start is None:
        raise PreconditionError("record has no obstacle start")
    theta = rec.theta
    beta0, beta1 = rec.start.beta, rec.end.beta
    ct, cb1 = math.cos(theta), math.cos(beta1)
    if abs(cb1) < DEGENERATE_TOL or abs(ct) < DEGENERATE_TOL:
        raise DegenerateJacobianError(
            f"cos(beta1)={cb1:.3e}, cos(theta)={ct:.3e} below {DEGENERATE_TOL}"
        )
    phi0 = wrap(rec.s_start + theta)
    phi1 = wrap(rec.s_final - theta)
    d, m = p.delta, rec.m
    zeta0 = d * math.cos(phi0) / ct
    zeta1 = d * math.cos(phi1) / ct
    cb0 = math.cos(beta0)
    a21 = -(ct / (p.r * cb1)) * (zeta0 + zeta1 + 2.0 * (m + 1) * zeta0 * zeta1)
    at11 = 1.0 + 2.0 * (m + 1) * zeta0
    at22 = (cb0 / cb1) * (1.0 + 2.0 * (m + 1) * zeta1)
    # The r-correction divides by cos(theta), not cos(beta1): only this form
    # reproduces det DG = cos(beta0)/cos(beta1) and the finite differences.
    at12 = at11 + at22 - 2.0 * p.r * (m + 1) * cb0 / ct
    return JacobianTerms(
        a11=a21 + at11,
        a12=a21 + at12,
        a21=a21,
        a22=a21 + at22,
        atilde11=at11,
        atilde12=at12,
        atilde22=at22,
        zeta0=zeta0,
        zeta1=zeta1,
        m=m,
        phi0=phi0,
        phi1=phi1,
        theta=theta,
        beta0=beta0,
        beta1=beta1,
    )


def return_map_jacobian_fd(x: InnerState, p: Params, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the return map.

    The five stencil points must share a return time; a mismatch means the
    stencil straddles a singularity and raises :class:`ComponentChangeError`.
    """
    recs = {}
    for tag, (dw, db) in {
        "c": (0.0, 0.0),
        "w+": (h, 0.0), "w-": (-h, 0.0),
        "b+": (0.0, h), "b-": (0.0, -h),
    }.items():
        recs[tag] = return_map(InnerState(x.omega + dw, x.beta + db), p)
    nus = {tag: rec.nu for tag, rec in recs.items()}
    if len(set(nus.values())) != 1:
        raise ComponentChangeError(f"return time differs across stencil: {nus}")
    def diff(a: ReturnRecord, b: ReturnRecord):
        return (
            wrap(a.end.omega - b.end.omega) / (2.0 * h),
            (a.end.beta - b.end.beta) / (2.0 * h),
        )
    dw = diff(recs["w+"], recs["w-"])
    db = diff(recs["b+"], recs["b-"])
    return np.array([[dw[0], db[0]], [dw[1], db[1]]])


def map_inner_to_outer_jacobian_fd(x: InnerState, p: Params, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the obstacle-to-wall map (measure-invariance oracle)."""
    from .dynamics import map_inner_to_outer

    cols = []
    for dw, db in ((h, 0.0), (0.0, h)):
        a = map_inner_to_outer(InnerState(x.omega + dw, x.beta + db), p)
        b = map_inner_to_outer(InnerState(x.omega - dw, x.beta - db), p)
        cols.append((wrap(a.s - b.s) / (2.0 * h), (a.theta - b.theta) / (2.0 * h)))
    return np.array([[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]])


def period_two_trace(which: str, p: Params) -> float:
    """Trace of DG at one of the two period-2 points, by the closed form."""
    if which == "center":
        return 2.0 + 4.0 * p.delta - 4.0 * p.delta * (1.0 + p.delta) / p.r
    if which == "far":
        return 2.0 - 4.0 * p.delta + 4.0 * p.delta * (1.0 - p.delta) / p.r
    raise PreconditionError(f"which must be 'center' or 'far', got {which!r}")


def fixed_point_stability(which: str, p: Params) -> tuple[str, float]:
    """Stability of a period-2 point: ('elliptic'|'parabolic'|'hyperbolic', trace).

    ``center`` is the bounce through the near side of the obstacle (omega = 0),
    ``far`` the one through omega = pi.  Classification is by |trace DG| with a
    parabolic band of width :data:`PARABOLIC_TOL`.
    """
    omega = 0.0 if which == "center" else math.pi
    if which not in ("center", "far"):
        raise PreconditionError(f"which must be 'center' or 'far', got {which!r}")
    rec = return_map(InnerState(omega, 0.0), p)
    tr = return_map_jacobian(rec, p).trace
    if abs(abs(tr) - 2.0) <= PARABOLIC_TOL:
        return "parabolic", tr
    return ("elliptic" if abs(tr) < 2.0 else "hyperbolic"), tr
