import enum
from dataclasses import dataclass


class ComplexMode(str, enum.Enum):
    CARTESIAN = "cartesian"
    POLAR = "polar"


@dataclass(frozen=True)
class QuantSpec:
    bits: int
    mu: float = 255.0
    complex_mode: ComplexMode = ComplexMode.CARTESIAN

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ValueError("quantizer needs at least one bit")
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    @property
    def levels(self) -> int:
        return 2 ** self.bits
