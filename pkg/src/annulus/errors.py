"""Exception types shared across the package."""


class BilliardError(Exception):
    """Base class for all package-specific errors."""


class PreconditionError(BilliardError):
    """An operation was called outside its stated domain of validity."""


class NonReturningError(BilliardError):
    """A return-map evaluation was requested for a non-returning orbit.

    Carries the classification of the offending orbit in ``orbit``.
    """

    def __init__(self, orbit):
        self.orbit = orbit
        super().__init__(f"orbit does not return to the obstacle: {orbit.tag}")


class DegenerateJacobianError(BilliardError):
    """A tangent-map denominator (cos beta_1 or cos theta) is below tolerance."""


class ComponentChangeError(BilliardError):
    """A finite-difference stencil straddles a singularity of the return map."""


class AnchorNotEnclosedError(BilliardError):
    """Strip construction failed: the obstacle radius is too large for this anchor."""


class SpacingUnattainableError(BilliardError):
    """No anchor family with the required gap bound exists at the given depth."""


class DegenerateTangencyError(BilliardError):
    """The leading-order tangency-curve coefficient is too close to zero."""
