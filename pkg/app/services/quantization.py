"""mu-law quantization of beampatterns and precoders."""

import numpy as np

from app.core.errors import QuantizationError
from app.models.quantization import ComplexMode, QuantSpec
from app.models.system import BeampatternState, Precoder

_RANGE_SLACK = 1e-12


def compress(x: np.ndarray, mu: float) -> np.ndarray:
    return np.log1p(mu * x) / np.log1p(mu)


def expand(y: np.ndarray, mu: float) -> np.ndarray:
    return np.expm1(y * np.log1p(mu)) / mu


def mu_law_quantize(x, spec: QuantSpec):
    """
    Compress, round to one of 2^Q levels k / (2^Q - 1) and expand.

    The grid contains both 0 and 1, so the endpoints are reproduced exactly
    and quantizing twice changes nothing.
    """
    values = np.asarray(x, dtype=float)
    if np.any(values < -_RANGE_SLACK) or np.any(values > 1.0 + _RANGE_SLACK) or np.any(np.isnan(values)):
        raise QuantizationError("mu-law quantizer input must lie in [0, 1]")
    values = np.clip(values, 0.0, 1.0)
    steps = spec.levels - 1
    y = np.round(compress(values, spec.mu) * steps) / steps
    out = np.where(y >= 1.0, 1.0, np.clip(expand(y, spec.mu), 0.0, 1.0))
    return float(out) if np.ndim(x) == 0 else out


def _quantize_signed(x: np.ndarray, scale: float, spec: QuantSpec) -> np.ndarray:
    return (2.0 * mu_law_quantize((x / scale + 1.0) / 2.0, spec) - 1.0) * scale


def quantize_precoder(precoder: Precoder, spec: QuantSpec) -> Precoder:
    w = precoder.w
    if spec.complex_mode == ComplexMode.POLAR:
        magnitude = np.abs(w)
        peak = float(magnitude.max(initial=0.0))
        if peak == 0.0:
            return precoder
        levels = spec.levels
        phase = np.round(np.angle(w) / (2.0 * np.pi) * levels) * (2.0 * np.pi / levels)
        return Precoder(mu_law_quantize(magnitude / peak, spec) * peak * np.exp(1j * phase))

    scale = float(max(np.abs(w.real).max(initial=0.0), np.abs(w.imag).max(initial=0.0)))
    if scale == 0.0:
        return precoder
    return Precoder(_quantize_signed(w.real, scale, spec) + 1j * _quantize_signed(w.imag, scale, spec))


def quantize_state(
    state: BeampatternState,
    precoder: Precoder,
    spec: QuantSpec,
) -> tuple[BeampatternState, Precoder]:
    """Quantize alpha and V directly and W through a shared per-matrix scale."""
    quantized = BeampatternState(
        alpha=mu_law_quantize(state.alpha, spec),
        v=mu_law_quantize(state.v, spec),
    )
    return quantized, quantize_precoder(precoder, spec)
