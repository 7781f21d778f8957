"""Exception hierarchy shared by the simulation modules."""


class CmvError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CmvError, ValueError):
    """Invalid stream key, seed, or experiment configuration."""


class InputError(CmvError, ValueError):
    """Invalid argument to a numerical routine (bad grid, horizon, bound...)."""


class IntensityBoundError(CmvError):
    """An intensity evaluated above the height bound of the dominating base field."""

    def __init__(self, time, dimension, value, bound):
        self.time = float(time)
        self.dimension = int(dimension)
        self.value = float(value)
        self.bound = float(bound)
        super().__init__(
            f"intensity {self.value:.6g} exceeds bound {self.bound:.6g} "
            f"in noise dimension {self.dimension} at t={self.time:.6g}"
        )


class NumericalDivergenceError(CmvError):
    """A state coordinate became non-finite."""

    def __init__(self, time):
        self.time = float(time)
        super().__init__(f"numerical divergence: non-finite state at t={self.time:.6g}")
