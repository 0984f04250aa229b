"""Exception types shared across the package."""


class InvalidSpecError(ValueError):
    """Surface parameters are malformed (non-finite, non-positive, over budget)."""


class NotStrictlyConvexError(ValueError):
    """The sampled curvature proxy is not strictly positive."""


class DomainError(ValueError):
    """An argument lies outside the operation's domain."""


class DegenerateConfigurationError(DomainError):
    """Two cyclically consecutive vertices are closer than the separation floor."""


class NumericError(RuntimeError):
    """An iterative numerical routine failed to bracket or converge."""


class IdentityError(RuntimeError):
    """An exact algebraic identity that must hold did not."""
