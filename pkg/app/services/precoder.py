"""Short-term (per-slot) precoding: SOCP power minimization, ZF and a duality oracle."""

from typing import Optional

import numpy as np
from scipy import sparse

from app.core.errors import InfeasibleError, OracleError
from app.core.logger import get_logger
from app.models.channel import ChannelRealization
from app.models.conic import SolverStatus
from app.models.precoder import ShortTermInstance, ShortTermSolution
from app.models.system import BeampatternState, Precoder, QosSpec
from app.services.conic_solver import ConeProgramBuilder, complex_matrix_to_real, inner_product_rows, solve_socp
from app.services.system_model import effective_channels

logger = get_logger(__name__)

_RANK_TOL = 1e-10


def build_instance(
    state: BeampatternState,
    theta: np.ndarray,
    beta: np.ndarray,
    channels: ChannelRealization,
    qos: QosSpec,
) -> ShortTermInstance:
    eta = np.broadcast_to(qos.eta, (channels.num_users,)).astype(float)
    sigma_bar = np.linalg.norm(state.v, axis=0) * np.sqrt(qos.sigma2)
    return ShortTermInstance(
        d_matrix=state.alpha[:, None] * theta,
        eff_channels=effective_channels(state, beta, channels),
        eta=eta,
        sigma_bar=sigma_bar,
    )


def _normalized_gains(instance: ShortTermInstance) -> tuple[np.ndarray, float]:
    """Rows g_u = D^H h_u / sigma_bar_u scaled by their largest norm."""
    g = (instance.d_matrix.conj().T @ instance.eff_channels.T / instance.sigma_bar).T  # (U, K)
    scale = float(np.max(np.linalg.norm(g, axis=1)))
    return (g / scale if scale > 0 else g), scale


def colinear_infeasible(gains: np.ndarray, eta: np.ndarray, tol: float = 1e-9) -> bool:
    """
    Users whose gain vectors are parallel share one scalar channel, which can
    only serve them if sum eta / (1 + eta) < 1 over the group. Returns True
    when some group violates that bound.
    """
    active = np.flatnonzero(eta > 0)
    norms = np.linalg.norm(gains, axis=1)
    unassigned = set(int(u) for u in active)
    while unassigned:
        lead = min(unassigned)
        unassigned.remove(lead)
        group = [lead]
        for other in sorted(unassigned):
            overlap = abs(np.vdot(gains[lead], gains[other]))
            if overlap >= (1.0 - tol) * norms[lead] * norms[other]:
                group.append(other)
        unassigned.difference_update(group)
        if len(group) > 1 and np.sum(eta[group] / (1.0 + eta[group])) >= 1.0 - tol:
            return True
    return False


def solve_precoder(
    instance: ShortTermInstance,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> ShortTermSolution:
    """
    Minimize sum_u ||D w_u||^2 subject to SINR_u >= eta_u for every user.

    Each SINR constraint becomes a second-order cone after rotating the
    phase of the user's own amplitude to the real axis:
        Re(g_u^H w_u) >= sqrt(eta_u) ||[g_u^H w_u' (u' != u), 1]||,  Im(g_u^H w_u) = 0
    with g_u = D^H h_u / sigma_bar_u. The objective is written as
    ||R W||_F with R the triangular factor of D.
    """
    users, k = instance.num_users, instance.num_feeds
    active = instance.eta > 0
    if not np.any(active):
        return ShortTermSolution(SolverStatus.OPTIMAL, Precoder.zeros(k, users), 0.0)

    g, scale = _normalized_gains(instance)
    if scale == 0 or np.any(np.linalg.norm(g[active], axis=1) == 0):
        logger.debug("short-term instance has an active user with zero gain")
        return ShortTermSolution(SolverStatus.INFEASIBLE, None, float("inf"))
    if colinear_infeasible(g, instance.eta):
        logger.debug("short-term instance has colinear users beyond the scalar-channel bound")
        return ShortTermSolution(SolverStatus.INFEASIBLE, None, float("inf"))

    r = np.linalg.qr(instance.d_matrix, mode="r")
    r_norm = float(np.linalg.norm(r))
    r_hat = r / r_norm if r_norm > 0 else r

    block = 2 * k
    num_vars = block * users + 1
    t_index = num_vars - 1
    builder = ConeProgramBuilder(num_vars)

    # ||R_hat y_u|| stacked over users <= t
    r_real = complex_matrix_to_real(r_hat)
    objective_rows = sparse.hstack(
        [sparse.block_diag([r_real] * users), sparse.csr_matrix((r_real.shape[0] * users, 1))],
        format="csr",
    )
    t_row = np.zeros(num_vars)
    t_row[t_index] = 1.0
    builder.add_soc(objective_rows, np.zeros(objective_rows.shape[0]), t_row, 0.0)

    for u in np.flatnonzero(active):
        re_row, im_row = inner_product_rows(g[u])
        others = [j for j in range(users) if j != u]
        rows = np.zeros((2 * len(others) + 1, num_vars))
        for i, j in enumerate(others):
            rows[2 * i, block * j:block * (j + 1)] = re_row
            rows[2 * i + 1, block * j:block * (j + 1)] = im_row
        offset = np.zeros(rows.shape[0])
        offset[-1] = 1.0
        signal = np.zeros(num_vars)
        signal[block * u:block * (u + 1)] = re_row / np.sqrt(instance.eta[u])
        builder.add_soc(rows, offset, signal, 0.0)

        phase = np.zeros((1, num_vars))
        phase[0, block * u:block * (u + 1)] = im_row
        builder.add_equality(phase, np.zeros(1))

    solution = solve_socp(builder.build(t_row), tol=tol, max_iters=max_iters)
    if not solution.is_optimal:
        status = solution.status
        if status == SolverStatus.MAX_ITERS and _uplink_diverges(instance):
            status = SolverStatus.INFEASIBLE
        logger.debug("short-term SOCP ended with status=%s after %s iterations", status.value, solution.iterations)
        return ShortTermSolution(status, None, float("inf"), solution.iterations)

    y = solution.x[:t_index].reshape(users, block)
    w = (y[:, :k] + 1j * y[:, k:]).T / scale
    w[:, ~active] = 0.0
    precoder = Precoder(w)
    return ShortTermSolution(SolverStatus.OPTIMAL, precoder, instance.power(precoder), solution.iterations)


def _uplink_diverges(instance: ShortTermInstance) -> bool:
    r = np.linalg.qr(instance.d_matrix, mode="r")
    diag = np.abs(np.diag(r))
    if r.shape[0] < instance.num_feeds or diag.min() <= _RANK_TOL * max(diag.max(), np.finfo(float).tiny):
        return False
    try:
        duality_precoder(instance)
    except InfeasibleError:
        return True
    except OracleError as exc:
        logger.debug("uplink fixed point unavailable (%s); leaving status unresolved", exc)
    return False


def _scale_columns(instance: ShortTermInstance, w0: np.ndarray) -> Precoder:
    gains = np.abs(np.diag(instance.gain_matrix @ w0))
    target = np.sqrt(instance.eta) * instance.sigma_bar
    factor = np.zeros_like(target)
    np.divide(target, gains, out=factor, where=gains > 0)
    return Precoder(w0 * factor[None, :])


def zf_precoder(instance: ShortTermInstance) -> Precoder:
    """
    Zero-forcing W = G^+ with columns scaled so each user meets its threshold
    with equality. Raises ``InfeasibleError`` when G = [h_u^H D] lacks full row rank.
    """
    g = instance.gain_matrix
    if not np.any(instance.eta > 0):
        return Precoder.zeros(instance.num_feeds, instance.num_users)
    singular = np.linalg.svd(g, compute_uv=False)
    if singular.shape[0] < instance.num_users or singular[-1] <= _RANK_TOL * max(singular[0], np.finfo(float).tiny):
        raise InfeasibleError("effective channel matrix has no right inverse; ZF is infeasible")
    return _scale_columns(instance, np.linalg.pinv(g))


def regularized_zf_precoder(instance: ShortTermInstance, regularization: float = 1e-3) -> Precoder:
    """G^H (G G^H + lambda I)^-1 with lambda relative to the mean channel energy."""
    g = instance.gain_matrix
    gram = g @ g.conj().T
    lam = max(regularization * float(np.real(np.trace(gram))) / instance.num_users, np.finfo(float).tiny)
    w0 = g.conj().T @ np.linalg.solve(gram + lam * np.eye(instance.num_users), np.eye(instance.num_users))
    return _scale_columns(instance, w0)


def duality_precoder(
    instance: ShortTermInstance,
    max_iters: int = 2000,
    tol: float = 1e-13,
) -> Precoder:
    """
    Power-minimizing precoder through uplink-downlink duality.

    Virtual uplink powers follow the fixed point
        lambda_u = 1 / ((1 + 1/eta_u) f_u^H (I + sum_j lambda_j f_j f_j^H)^-1 f_u)
    in the whitened space f_u = R^-H D^H h_u / sigma_bar_u; MMSE receive
    directions then become transmit directions and downlink powers come from
    a linear solve. Needs D with full column rank.

    Raises ``InfeasibleError`` when the fixed point diverges and
    ``OracleError`` when a linear solve on the way is singular.
    """
    try:
        return _duality_fixed_point(instance, max_iters, tol)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"uplink-downlink fixed point broke down: {exc}") from exc


def _duality_fixed_point(instance: ShortTermInstance, max_iters: int, tol: float) -> Precoder:
    users, k = instance.num_users, instance.num_feeds
    active = np.flatnonzero(instance.eta > 0)
    if active.size == 0:
        return Precoder.zeros(k, users)

    r = np.linalg.qr(instance.d_matrix, mode="r")
    if r.shape[0] < k or np.min(np.abs(np.diag(r))) <= _RANK_TOL * np.max(np.abs(np.diag(r))):
        raise InfeasibleError("D = diag(alpha) Theta is rank deficient")
    f = np.linalg.solve(r.conj().T, (instance.d_matrix.conj().T @ instance.eff_channels.T) / instance.sigma_bar)
    f = f[:, active]  # (K, A)
    eta = instance.eta[active]

    lam = np.zeros(active.size)
    for _ in range(max_iters):
        cov = np.eye(k) + (f * lam) @ f.conj().T
        quad = np.real(np.einsum("ka,ka->a", f.conj(), np.linalg.solve(cov, f)))
        updated = 1.0 / ((1.0 + 1.0 / eta) * quad)
        if not np.all(np.isfinite(updated)) or np.max(updated) > 1e12 * max(1.0, np.max(lam, initial=1.0)):
            raise InfeasibleError("uplink power iteration diverged")
        done = np.max(np.abs(updated - lam)) <= tol * max(1.0, np.max(updated))
        lam = updated
        if done:
            break
    else:
        raise InfeasibleError("uplink power iteration did not converge")

    cov = np.eye(k) + (f * lam) @ f.conj().T
    directions = np.linalg.solve(cov, f)
    directions /= np.linalg.norm(directions, axis=0)

    cross = np.abs(f.conj().T @ directions) ** 2  # [u, j] = |f_u^H d_j|^2
    system = -cross.copy()
    np.fill_diagonal(system, np.diag(cross) / eta)
    powers = np.linalg.solve(system, np.ones(active.size))
    if np.any(powers < 0):
        raise InfeasibleError("downlink power solve returned negative powers")

    w = np.zeros((k, users), dtype=complex)
    w[:, active] = np.linalg.solve(r, directions * np.sqrt(powers))
    return Precoder(w)
