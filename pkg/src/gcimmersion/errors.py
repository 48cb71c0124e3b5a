"""Exception hierarchy shared by all stages."""


class GCError(Exception):
    """Base class for every error raised by this package."""


class MetricError(GCError):
    """Structural problem with a metric (wrong form, inconsistent curvature, bad parameters)."""


class DegenerateMetricError(MetricError):
    """EG - F^2 <= 0 at a sampled point."""


class MetricDomainError(MetricError):
    """Evaluation point lies outside the metric's declared domain."""


class CurvatureSignError(MetricError):
    """Gauss curvature is not strictly negative where the hyperbolic solver needs it."""


class SonicError(GCError):
    """Speed q reached the sonic guard (q <= 1 + delta)."""


class ConstraintError(GCError):
    """Second fundamental form violates the scaled Monge-Ampere constraint."""


class RegionError(GCError):
    """Invalid diamond region or a state outside it."""


class MarchError(GCError):
    """Failure while marching the viscous system (NaN, step underflow, ...)."""


class RegionViolation(MarchError):
    """The marched state left the invariant region beyond tolerance."""

    def __init__(self, message, t=None, index=None, trajectory=None):
        super().__init__(message)
        self.t = t
        self.index = index
        self.trajectory = trajectory


class SweepError(MarchError):
    """An epsilon-sweep member failed; completed members are kept on ``partial``."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial or []


class ReconstructionError(GCError):
    """Frame integration degenerated or the base frame is inconsistent."""


class ConfigError(GCError):
    """Run configuration failed validation."""
