"""Exception types raised across the package."""


class StochCHError(Exception):
    """Base class for every error raised by stochch."""


class NonZeroMean(StochCHError, ValueError):
    """Neumann inversion requested for a field whose mean is not zero."""


class SpectrumGridMismatch(StochCHError, ValueError):
    pass


class NoiseGridMismatch(StochCHError, ValueError):
    pass


class DivergentTrace(StochCHError, ArithmeticError):
    """Partial sums of a noise trace do not settle at the cutoff."""


class KernelUnresolved(StochCHError, ValueError):
    """Time step too coarse to resolve the smoothing kernel."""


class SolveFailure(StochCHError, RuntimeError):
    pass


class NonConservativeNoise(StochCHError, ValueError):
    pass


class NoInterface(StochCHError, ValueError):
    pass


class StrideTooCoarse(StochCHError, ValueError):
    pass


class SingularGeometry(StochCHError, ValueError):
    pass


class GeometryCollapse(StochCHError, RuntimeError):
    """Two interfaces met, or an interface left the admissible range."""


class NonPositiveValue(StochCHError, ValueError):
    pass


class ConfigError(StochCHError, ValueError):
    pass
