"""SINR, spectral efficiency and transmit power for (alpha, V, W, H)."""

import numpy as np

from app.core.errors import ShapeError
from app.models.channel import ChannelRealization
from app.models.system import BeampatternState, Precoder, QosSpec


def _check_shapes(state: BeampatternState, channels: ChannelRealization, beta: np.ndarray) -> None:
    users, m, n = channels.h.shape
    if state.alpha.shape != (n,):
        raise ShapeError(f"alpha has shape {state.alpha.shape}, channel expects ({n},)")
    if state.v.shape != (m, users):
        raise ShapeError(f"V has shape {state.v.shape}, channel expects ({m}, {users})")
    if beta.shape != (m,):
        raise ShapeError(f"beta has shape {beta.shape}, channel expects ({m},)")


def effective_rx_channel(
    u: int,
    state: BeampatternState,
    beta: np.ndarray,
    channels: ChannelRealization,
) -> np.ndarray:
    """h_u = H_u^H B^H v_u, so stream u arrives with amplitude h_u^H diag(Theta w) alpha."""
    _check_shapes(state, channels, beta)
    return channels.h[u].conj().T @ (beta.conj() * state.v[:, u])


def effective_channels(state: BeampatternState, beta: np.ndarray, channels: ChannelRealization) -> np.ndarray:
    """All effective channels stacked as rows, shape (U, N)."""
    _check_shapes(state, channels, beta)
    weighted = beta.conj()[None, :] * state.v.T  # (U, M)
    return np.einsum("umn,um->un", channels.h.conj(), weighted)


def _stream_fields(state: BeampatternState, precoder: Precoder, theta: np.ndarray) -> np.ndarray:
    """alpha * (Theta w_u) for every user, shape (N, U)."""
    if theta.shape != (state.alpha.shape[0], precoder.w.shape[0]):
        raise ShapeError(f"Theta {theta.shape} does not match alpha / W")
    return state.alpha[:, None] * (theta @ precoder.w)


def cross_amplitudes(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
) -> np.ndarray:
    """a[u, u'] = h_u^H diag(Theta w_u') alpha via effective channels."""
    heff = effective_channels(state, beta, channels)
    return heff.conj() @ _stream_fields(state, precoder, theta)


def received_amplitudes(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
) -> np.ndarray:
    """a[u, u'] = v_u^H B H_u A Theta w_u', evaluated in matrix form."""
    _check_shapes(state, channels, beta)
    a_matrix = np.diag(state.alpha)
    b_matrix = np.diag(beta)
    users = channels.num_users
    out = np.empty((users, users), dtype=complex)
    for u in range(users):
        row = state.v[:, u].conj() @ b_matrix @ channels.h[u] @ a_matrix @ theta
        out[u] = row @ precoder.w
    return out


def sinr_from_amplitudes(amplitudes: np.ndarray, v: np.ndarray, sigma2: float) -> np.ndarray:
    power = np.abs(amplitudes) ** 2
    signal = np.diag(power).copy()
    interference = power.sum(axis=1) - signal
    noise = np.sum(np.abs(v) ** 2, axis=0) * sigma2
    denominator = interference + noise
    out = np.zeros_like(signal)
    mask = signal > 0
    out[mask] = signal[mask] / denominator[mask]
    return out


def sinr_all(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
    qos: QosSpec,
) -> np.ndarray:
    amplitudes = cross_amplitudes(state, precoder, channels, theta, beta)
    return sinr_from_amplitudes(amplitudes, state.v, qos.sigma2)


def sinr(
    u: int,
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
    qos: QosSpec,
) -> float:
    return float(sinr_all(state, precoder, channels, theta, beta, qos)[u])


def spectral_efficiency_all(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
    qos: QosSpec,
) -> np.ndarray:
    return np.log2(1.0 + sinr_all(state, precoder, channels, theta, beta, qos))


def spectral_efficiency(
    u: int,
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
    qos: QosSpec,
) -> float:
    return float(np.log2(1.0 + sinr(u, state, precoder, channels, theta, beta, qos)))


def transmit_power(state: BeampatternState, precoder: Precoder, theta: np.ndarray) -> float:
    """sum_u ||diag(Theta w_u) alpha||^2, watts."""
    return float(np.sum(np.abs(_stream_fields(state, precoder, theta)) ** 2))


def transmit_power_trace(state: BeampatternState, precoder: Precoder, theta: np.ndarray) -> float:
    """Tr(A Theta W W^H Theta^H A^H), the trace form of the same power."""
    field = np.diag(state.alpha) @ theta @ precoder.w
    return float(np.real(np.trace(field @ field.conj().T)))
