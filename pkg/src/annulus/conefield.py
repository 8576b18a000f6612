"""Quantitative hyperbolicity certificates for the return map.

Everything here is a sampling check of a closed-form bound: the deflection
ratio zeta = delta cos(phi)/cos(theta) is pinched into (zeta_min, zeta_max)
on the flat band, which forces |a21| >= 4A/sqrt(r) on the launch zone, which
in turn makes the return map strictly preserve the horizontal cone
u1*u2 >= 0 and expand it at a rate that diverges as r -> 0.

Reports are plain dataclasses that serialize to JSON; sampling is rejection
sampling with a seeded generator, so reports are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional

import numpy as np

from .dynamics import first_return, return_map
from .errors import PreconditionError
from .geometry import InnerState, Params, RegionSet, cone_margin_constant, in_certified_domain
from .tangent_map import JacobianTerms, return_map_jacobian

#: Margin used to call an image slope "strictly inside" the cone.
STRICT_MARGIN = 1e-9


def zeta_interval(delta: float) -> tuple[float, float]:
    """The pinching interval (zeta_min, zeta_max) for the deflection ratio."""
    zmin = 0.5 * delta * math.sqrt(3.0 / (1.0 + delta * delta))
    return zmin, math.sqrt(delta)


def expansion_floor(p: Params) -> float:
    """The certified lower bound 4A/sqrt(r) for |a21| on the launch zone."""
    return 4.0 * cone_margin_constant(p.delta) / math.sqrt(p.r)


@dataclass(frozen=True)
class ConeBounds:
    """Closed-form constants entering the cone certificates at fixed parameters."""

    delta: float
    r: float
    zeta_min: float
    zeta_max: float
    A: float
    a21_floor: float
    ratio_scales: tuple[float, float, float]  # (A11, A22, A12); |atilde_ij/a21| <= A_ij sqrt(r)

    @classmethod
    def from_params(cls, p: Params) -> "ConeBounds":
        zmin, zmax = zeta_interval(p.delta)
        a = cone_margin_constant(p.delta)
        rootd = math.sqrt(p.delta)
        return cls(
            delta=p.delta,
            r=p.r,
            zeta_min=zmin,
            zeta_max=zmax,
            A=a,
            a21_floor=expansion_floor(p),
            ratio_scales=(2.0 * rootd / a, 2.0 * rootd / a, (4.0 * rootd + 0.25) / a),
        )


def _require_expansion_regime(p: Params):
    if not p.in_expansion_regime():
        raise PreconditionError(
            f"(delta={p.delta}, r={p.r}) outside the expansion regime "
            "(need delta^2 > 1/2 and r < (delta - delta^2)/4)"
        )


@dataclass
class CheckReport:
    """Common shape of a sampling-certificate report."""

    check: str
    params: dict
    samples: int
    seed: int
    passed: bool
    margins: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def zeta_bounds_check(p: Params, samples: int = 10**5, seed: int = 0) -> CheckReport:
    """Sample the deflection ratio over the flat band and test the pinching bounds.

    Draws (phi, sin theta) pairs with |sin theta + delta sin phi| <= r and
    |sin theta| <= delta^2, evaluates zeta = delta cos(phi)/cos(theta), and
    compares the observed range against (zeta_min, zeta_max).
    """
    _require_expansion_regime(p)
    zmin, zmax = zeta_interval(p.delta)
    rng = np.random.default_rng(seed)
    d, r = p.delta, p.r
    d2 = d * d
    phi = rng.uniform(-math.pi, math.pi, size=samples)
    u = rng.uniform(0.0, 1.0, size=samples)
    lo = np.maximum(-d * np.sin(phi) - r, -d2)
    hi = np.minimum(-d * np.sin(phi) + r, d2)
    ok = lo < hi
    y = lo + u * (hi - lo)
    zeta = d * np.cos(phi[ok]) / np.sqrt(1.0 - y[ok] ** 2)
    az = np.abs(zeta)
    observed_min, observed_max = float(az.min()), float(az.max())
    passed = bool(observed_min > zmin and observed_max < zmax)
    return CheckReport(
        check="zeta_bounds",
        params={"delta": p.delta, "r": p.r},
        samples=int(ok.sum()),
        seed=seed,
        passed=passed,
        margins={
            "zeta_min": zmin,
            "zeta_max": zmax,
            "observed_min": observed_min,
            "observed_max": observed_max,
            "lower_margin": observed_min - zmin,
            "upper_margin": zmax - observed_max,
        },
    )


def sample_launch_zone_returns(
    p: Params, n: int, seed: int = 0, max_attempts_factor: int = 400
) -> Iterator[tuple[InnerState, JacobianTerms]]:
    """Rejection-sample returning launch-zone states with their tangent maps."""
    regions = RegionSet(p)
    rng = np.random.default_rng(seed)
    produced = 0
    attempts = 0
    limit = max_attempts_factor * n
    while produced < n and attempts < limit:
        attempts += 1
        x = InnerState(rng.uniform(-math.pi, math.pi), rng.uniform(-0.5 * math.pi, 0.5 * math.pi))
        if not regions.launch_zone(x):
            continue
        orbit = first_return(x, p)
        if not orbit.returned:
            continue
        try:
            terms = return_map_jacobian(orbit.record, p)
        except Exception:
            continue
        produced += 1
        yield x, terms
    if produced < n:
        raise PreconditionError(f"launch-zone sampling starved: {produced}/{n}")


def a21_bound_check(p: Params, samples: int = 10**4, seed: int = 0) -> CheckReport:
    """Verify |a21| >= 4A/sqrt(r) on sampled launch-zone returns."""
    _require_expansion_regime(p)
    floor = expansion_floor(p)
    worst = math.inf
    for _, terms in sample_launch_zone_returns(p, samples, seed):
        worst = min(worst, abs(terms.a21))
    return CheckReport(
        check="a21_bound",
        params={"delta": p.delta, "r": p.r},
        samples=samples,
        seed=seed,
        passed=bool(worst >= floor),
        margins={"floor": floor, "observed_min": worst, "ratio": worst / floor},
    )


def _slope(v1: float, v2: float) -> float:
    return math.inf if v1 == 0.0 else v2 / v1


def _strictly_positive_slope(v1: float, v2: float, margin: float = STRICT_MARGIN) -> bool:
    sl = _slope(v1, v2)
    return margin < sl < 1.0 / margin


def _strictly_negative_slope(v1: float, v2: float, margin: float = STRICT_MARGIN) -> bool:
    sl = _slope(v1, v2)
    return -1.0 / margin < sl < -margin


def cone_preservation_check(p: Params, samples: int = 10**4, seed: int = 0) -> CheckReport:
    """Certify strict invariance and expansion of the horizontal cone by sampling.

    For each sampled launch-zone return: (i) the images of the cone boundary
    rays (1,0) and (0,1) must lie strictly inside the open horizontal cone;
    (ii) the image of the unit diagonal must be at least as long as
    |a21| (2 - e); (iii) through time reversal, the inverse tangent map must
    carry the vertical cone boundary strictly into the vertical cone.  The
    minimum observed diagonal stretch is reported as ``rho_observed``.

    The parameter gate is the expansion regime (the hypotheses of the
    pinching bounds); membership in the smaller certified parameter set is
    reported, not required.
    """
    _require_expansion_regime(p)
    violations = 0
    rho_observed = math.inf
    k_measured = 0.0
    min_ray_slope = math.inf
    max_ray_slope = 0.0
    sq2 = math.sqrt(2.0)
    for _, t in sample_launch_zone_returns(p, samples, seed):
        ok = True
        # (i) boundary rays of {u1*u2 >= 0} land strictly inside
        ok &= _strictly_positive_slope(t.a11, t.a21)
        ok &= _strictly_positive_slope(t.a12, t.a22)
        # (ii) guaranteed stretch of the diagonal direction
        du1 = (t.a11 + t.a12) / sq2
        du2 = (t.a21 + t.a22) / sq2
        stretch = math.hypot(du1, du2)
        e_spec = math.hypot(t.a11 + t.a12, t.a22) / (sq2 * abs(t.a21))
        ok &= stretch >= abs(t.a21) * (2.0 - e_spec) - 1e-9
        # (iii) inverse map on the arrival zone preserves the vertical cone:
        # columns of DG^{-1} up to det are (a22, -a21) and (-a12, a11)
        ok &= _strictly_negative_slope(t.a22, -t.a21)
        ok &= _strictly_negative_slope(-t.a12, t.a11)
        if not ok:
            violations += 1
            continue
        rho_observed = min(rho_observed, stretch)
        e_tilde = math.hypot(t.atilde11 + t.atilde12, t.atilde22) / (sq2 * abs(t.a21))
        k_measured = max(k_measured, e_tilde / math.sqrt(p.r))
        min_ray_slope = min(min_ray_slope, _slope(t.a11, t.a21), _slope(t.a12, t.a22))
        max_ray_slope = max(max_ray_slope, _slope(t.a11, t.a21), _slope(t.a12, t.a22))
    return CheckReport(
        check="cone_preservation",
        params={"delta": p.delta, "r": p.r, "in_certified_domain": in_certified_domain(p.delta, p.r)},
        samples=samples,
        seed=seed,
        passed=violations == 0,
        margins={
            "violations": violations,
            "rho_observed": rho_observed,
            "a21_floor": expansion_floor(p),
            "K_measured": k_measured,
            "ray_slope_range": [min_ray_slope, max_ray_slope],
        },
    )


def slope_bounds(p: Params, samples: int = 10**4, seed: int = 0) -> tuple[float, float]:
    """Empirical slope bounds (c1, c2) of the image cone over the launch zone.

    c1 is the least a21/a11, c2 the greatest a22/a12; unstable curves have
    slopes in [c1, c2] and stable curves in [-c2, -c1].  Both tend to 1 as
    r -> 0.
    """
    _require_expansion_regime(p)
    c1, c2 = math.inf, -math.inf
    for _, t in sample_launch_zone_returns(p, samples, seed):
        c1 = min(c1, t.a21 / t.a11)
        c2 = max(c2, t.a22 / t.a12)
    return c1, c2
