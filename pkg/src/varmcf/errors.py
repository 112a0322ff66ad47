"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine-specific failures."""


class DimensionMismatch(EngineError):
    """Operands live in incompatible (d, n) spaces."""


class DegeneratePushforward(EngineError):
    """A differential crushed a tangent plane (rank-deficient image)."""


class CertificateViolation(EngineError):
    """The sampled diffeomorphism certificate failed.

    Attributes carry the offending value so callers can suggest a smaller
    time step.
    """

    def __init__(self, certificate: float, limit: float, message: str | None = None):
        self.certificate = certificate
        self.limit = limit
        super().__init__(
            message
            or f"diffeomorphism certificate {certificate:.6g} exceeds limit {limit:.6g}; "
            "reduce the time step"
        )


class QuadratureBudgetExceeded(EngineError):
    """A quadrature would require more nodes than the configured budget."""


class QuadratureError(EngineError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class LoadError(EngineError):
    """An input file could not be parsed; message names the offending row/field."""


class ConfigError(EngineError):
    """A run configuration failed schema validation."""
