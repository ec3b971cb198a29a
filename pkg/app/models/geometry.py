from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SurfacePanel:
    """Geometry of one holographic surface.

    Element positions are row-major over the ``rows x rows`` grid in the
    z=0 plane; feeds are coplanar with the elements.
    """
    rows: int
    spacing: float
    element_positions: np.ndarray  # (rows**2, 3) meters
    feed_positions: np.ndarray  # (K, 3) meters
    wavelength: float
    refractive_index: float = 1.0

    @property
    def num_elements(self) -> int:
        return self.rows * self.rows

    @property
    def num_feeds(self) -> int:
        return int(self.feed_positions.shape[0])

    @property
    def free_space_wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def feed_wavenumber(self) -> float:
        return self.refractive_index * self.free_space_wavenumber


@dataclass(frozen=True)
class PhaseCoupling:
    theta: np.ndarray  # (N, K) unit-modulus
    beta: np.ndarray  # (M,) unit-modulus

    @property
    def b_matrix(self) -> np.ndarray:
        return np.diag(self.beta)
