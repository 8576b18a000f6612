"""Numerics for the eccentric annular billiard.

Collision maps and the first-return-to-obstacle map, its analytic tangent map,
cone-field hyperbolicity certificates, normal (orthogonal-return) periodic
orbits, horseshoe strips with symbolic dynamics, and homoclinic-tangency
continuation in parameter space.
"""

from .geometry import (
    CurveSet,
    InnerState,
    OuterState,
    Params,
    RegionSet,
    RESIDUAL_TOL,
    cone_margin_constant,
    certified_radius_bound,
    from_cartesian,
    in_certified_domain,
    in_expansion_regime,
    in_parameter_domain,
    involution,
    to_cartesian,
    wrap,
)
from .dynamics import (
    OrbitClass,
    ReturnRecord,
    circle_flight,
    first_return,
    first_return_from_outer,
    iterate_return_map,
    map_inner_to_outer,
    map_outer,
    return_map,
    return_map_inverse,
)
from .errors import (
    AnchorNotEnclosedError,
    BilliardError,
    ComponentChangeError,
    DegenerateJacobianError,
    DegenerateTangencyError,
    NonReturningError,
    PreconditionError,
    SpacingUnattainableError,
)

__version__ = "0.1.0"
