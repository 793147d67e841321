class SimulationError(Exception):
    """Base class for every error raised by the simulator apps."""


class ConfigurationError(SimulationError, ValueError):
    """A model parameter is outside its valid range."""
