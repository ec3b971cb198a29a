"""Panel geometry and the phase / amplitude quantities fixed by it."""

from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from app.core.errors import GeometryError
from app.core.logger import get_logger
from app.models.geometry import PhaseCoupling, SurfacePanel
from app.schemas.geometry import FeedLayout, PanelSpec

logger = get_logger(__name__)

_UNIT_NORM_TOL = 1e-9


def _grid_offsets(count: int, extent: float) -> np.ndarray:
    if count == 1:
        return np.zeros(1)
    return np.linspace(-extent / 2.0, extent / 2.0, count)


def build_panel(
    rows: int,
    spacing: float,
    wavelength: float,
    feed_layout: FeedLayout = FeedLayout.CENTER,
    k_side: int = 1,
    refractive_index: float = 1.0,
) -> SurfacePanel:
    """
    Lay out a square ``rows x rows`` element grid centred at the origin.

    - GRID: ``k_side x k_side`` feeds spread uniformly over the central half
      of the aperture.
    - CENTER: a single feed at the origin.
    """
    if rows < 1:
        raise GeometryError("panel needs at least one element per side")
    if not spacing > 0 or not wavelength > 0:
        raise GeometryError("spacing and wavelength must be positive")
    if spacing >= wavelength / 2.0:
        raise GeometryError(
            f"element spacing {spacing:g} m must be below half the wavelength ({wavelength / 2.0:g} m)"
        )
    if not refractive_index > 0:
        raise GeometryError("refractive index must be positive")

    offsets = _grid_offsets(rows, (rows - 1) * spacing)
    yy, xx = np.meshgrid(offsets, offsets, indexing="ij")
    elements = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(rows * rows)])

    if feed_layout == FeedLayout.CENTER:
        feeds = np.zeros((1, 3))
    elif feed_layout == FeedLayout.GRID:
        if k_side < 1:
            raise GeometryError("feed grid needs at least one feed per side")
        if k_side > 1 and (k_side > rows or rows == 1):
            raise GeometryError(f"{k_side}x{k_side} feeds do not fit a {rows}x{rows} aperture")
        feed_offsets = _grid_offsets(k_side, (rows - 1) * spacing / 2.0)
        fy, fx = np.meshgrid(feed_offsets, feed_offsets, indexing="ij")
        feeds = np.column_stack([fx.ravel(), fy.ravel(), np.zeros(k_side * k_side)])
    else:
        raise GeometryError(f"unknown feed layout {feed_layout!r}")

    panel = SurfacePanel(
        rows=rows,
        spacing=float(spacing),
        element_positions=elements,
        feed_positions=feeds,
        wavelength=float(wavelength),
        refractive_index=float(refractive_index),
    )
    logger.debug(
        "Built panel rows=%s N=%s K=%s spacing=%g wavelength=%g",
        rows, panel.num_elements, panel.num_feeds, spacing, wavelength,
    )
    return panel


def build_panel_from_spec(spec: PanelSpec, wavelength: float) -> SurfacePanel:
    return build_panel(
        rows=spec.rows,
        spacing=spec.spacing_m,
        wavelength=wavelength,
        feed_layout=spec.feed_layout,
        k_side=spec.feed_grid_side,
        refractive_index=spec.refractive_index,
    )


def _feed_distances(panel: SurfacePanel) -> np.ndarray:
    return cdist(panel.element_positions, panel.feed_positions)


def feed_phase_matrix(panel: SurfacePanel) -> np.ndarray:
    """Theta[n, k] = exp(-i k_f d_{n,k}), reference-wave phase from feed k to element n."""
    if panel.num_feeds < 1:
        raise GeometryError("panel has no feeds")
    return np.exp(-1j * panel.feed_wavenumber * _feed_distances(panel))


def rx_phase_vector(panel: SurfacePanel) -> np.ndarray:
    if panel.num_feeds != 1:
        raise GeometryError(f"receive panel must have exactly one feed, got {panel.num_feeds}")
    return feed_phase_matrix(panel)[:, 0]


def phase_coupling(tx: SurfacePanel, rx: SurfacePanel) -> PhaseCoupling:
    return PhaseCoupling(theta=feed_phase_matrix(tx), beta=rx_phase_vector(rx))


def holographic_amplitude(
    panel: SurfacePanel,
    object_direction: np.ndarray,
    feed_weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Amplitude pattern recording the interference of the object beam with
    each feed's reference wave: ``(cos(k_s . r_n - k_f d_{n,k}) + 1) / 2``,
    averaged over feeds (optionally weighted).
    """
    direction = np.asarray(object_direction, dtype=float)
    if direction.shape != (3,) or abs(np.linalg.norm(direction) - 1.0) > _UNIT_NORM_TOL:
        raise GeometryError("object direction must be a unit 3-vector")

    k_s = panel.free_space_wavenumber * direction
    phase = (panel.element_positions @ k_s)[:, None] - panel.feed_wavenumber * _feed_distances(panel)
    per_feed = (np.cos(phase) + 1.0) / 2.0

    if feed_weights is None:
        amplitude = per_feed.mean(axis=1)
    else:
        weights = np.asarray(feed_weights, dtype=float)
        amplitude = per_feed @ (weights / weights.sum())
    return np.clip(amplitude, 0.0, 1.0)


def direction_from_angles(azimuth: float, elevation: float) -> np.ndarray:
    """Unit vector for an azimuth in the panel plane and an elevation off the plane."""
    return np.array([
        np.cos(elevation) * np.cos(azimuth),
        np.cos(elevation) * np.sin(azimuth),
        np.sin(elevation),
    ])
