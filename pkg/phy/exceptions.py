from ehcrsim.exceptions import SimulationError


class UnsensableChannel(SimulationError):
    """The sensing channel is too faded for the detector targets to be met."""


class NoTransmission(SimulationError):
    """Transmit power was requested for a zero-gain (region 1) channel."""
