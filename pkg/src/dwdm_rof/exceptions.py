"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(SimulationError):
    """Inconsistent or invalid parameters (mismatched grids, bad ranges, ...)."""


class AliasingError(SimulationError):
    """Signal energy would leave (or has left) the representable Nyquist band."""


class ResolutionError(SimulationError):
    """A requested spectral resolution is finer than the data allows."""
