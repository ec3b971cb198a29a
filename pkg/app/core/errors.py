from typing import Optional


class HoloError(Exception):
    """Base class for errors raised by the simulator."""


class GeometryError(HoloError, ValueError):
    """Invalid panel geometry (spacing, dimensions, feed layout)."""


class ShapeError(HoloError, ValueError):
    """Array shapes do not agree with the panels / user count."""


class QuantizationError(HoloError, ValueError):
    """Value outside the quantizer's input range."""


class InfeasibleError(HoloError):
    """A problem instance admits no feasible point (or ZF has no right inverse)."""


class SolverError(HoloError):
    """The conic solver failed inside the long-term loop."""

    def __init__(
        self,
        message: str,
        *,
        iteration: Optional[int] = None,
        sample: Optional[int] = None,
    ) -> None:
        self.iteration = iteration
        self.sample = sample
        context = []
        if iteration is not None:
            context.append(f"t={iteration}")
        if sample is not None:
            context.append(f"l={sample}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)


class OracleError(HoloError):
    """The uplink-downlink fixed point could not produce a reference precoder."""
