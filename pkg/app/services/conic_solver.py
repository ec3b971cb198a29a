"""
Dense second-order cone programming.

Primal-dual interior-point method on the homogeneous self-dual embedding
with Nesterov-Todd scaling and a Mehrotra predictor-corrector step. Problems
are in the standard form of ``SocpProblem``; ``ConeProgramBuilder`` assembles
that form from the usual constraint types.
"""

import math
import warnings
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as la
from scipy import sparse

from app.core.config import settings
from app.core.logger import get_logger
from app.models.conic import ConeDims, SocpProblem, SocpSolution, SolverStatus

logger = get_logger(__name__)

MatrixLike = Union[np.ndarray, sparse.spmatrix, Sequence[Sequence[float]]]

_STEP_FRACTION = 0.99
_REGULARIZATION = 1e-12
_REFINEMENT_STEPS = 3
_STALL_ITERATIONS = 20
_NEAR_OPTIMAL = 1e2


# ---------------------------------------------------------------------------
# complex <-> real stacking
# ---------------------------------------------------------------------------

def complex_to_real(z: np.ndarray) -> np.ndarray:
    """Stack a complex vector as ``[Re z; Im z]`` (Re(a^H b) becomes a dot product)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    return np.concatenate([z.real, z.imag])


def real_to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    half = x.shape[0] // 2
    if 2 * half != x.shape[0]:
        raise ValueError("stacked vector must have even length")
    return x[:half] + 1j * x[half:]


def complex_matrix_to_real(m: np.ndarray) -> np.ndarray:
    """Real form ``[[Re, -Im], [Im, Re]]`` so that stack(M z) = real(M) @ stack(z)."""
    m = np.asarray(m, dtype=complex)
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def inner_product_rows(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows r, i with Re(h^H z) = r @ stack(z) and Im(h^H z) = i @ stack(z)."""
    h = np.asarray(h, dtype=complex)
    return np.concatenate([h.real, h.imag]), np.concatenate([-h.imag, h.real])


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------

def _to_csr(matrix: MatrixLike, num_vars: int) -> sparse.csr_matrix:
    if sparse.issparse(matrix):
        out = sparse.csr_matrix(matrix, dtype=float)
    else:
        out = sparse.csr_matrix(np.atleast_2d(np.asarray(matrix, dtype=float)))
    if out.shape[1] != num_vars:
        raise ValueError(f"constraint has {out.shape[1]} columns, expected {num_vars}")
    return out


class ConeProgramBuilder:
    """Collects constraints and compiles them to ``SocpProblem`` standard form."""

    def __init__(self, num_vars: int) -> None:
        if num_vars < 1:
            raise ValueError("problem needs at least one variable")
        self.num_vars = num_vars
        self._lin_G: list[sparse.csr_matrix] = []
        self._lin_h: list[np.ndarray] = []
        self._soc_G: list[sparse.csr_matrix] = []
        self._soc_h: list[np.ndarray] = []
        self._soc_dims: list[int] = []
        self._eq_A: list[sparse.csr_matrix] = []
        self._eq_b: list[np.ndarray] = []

    def add_equality(self, a: MatrixLike, b: np.ndarray) -> "ConeProgramBuilder":
        """A x = b"""
        a = _to_csr(a, self.num_vars)
        self._eq_A.append(a)
        self._eq_b.append(np.broadcast_to(np.asarray(b, dtype=float), (a.shape[0],)).copy())
        return self

    def add_inequality(self, g: MatrixLike, h: np.ndarray) -> "ConeProgramBuilder":
        """G x <= h"""
        g = _to_csr(g, self.num_vars)
        self._lin_G.append(g)
        self._lin_h.append(np.broadcast_to(np.asarray(h, dtype=float), (g.shape[0],)).copy())
        return self

    def add_box(
        self,
        lower: Union[float, np.ndarray, None],
        upper: Union[float, np.ndarray, None],
        index: Optional[np.ndarray] = None,
    ) -> "ConeProgramBuilder":
        """lower <= x[index] <= upper (either side may be None)."""
        index = np.arange(self.num_vars) if index is None else np.asarray(index, dtype=int)
        count = index.shape[0]
        select = sparse.csr_matrix(
            (np.ones(count), (np.arange(count), index)), shape=(count, self.num_vars)
        )
        if lower is not None:
            self.add_inequality(-select, -np.broadcast_to(np.asarray(lower, dtype=float), (count,)))
        if upper is not None:
            self.add_inequality(select, np.broadcast_to(np.asarray(upper, dtype=float), (count,)))
        return self

    def add_soc(
        self,
        a: MatrixLike,
        b: np.ndarray,
        c: np.ndarray,
        d: float,
    ) -> "ConeProgramBuilder":
        """||A x + b|| <= c^T x + d"""
        a = _to_csr(a, self.num_vars)
        c_row = _to_csr(np.asarray(c, dtype=float).reshape(1, -1), self.num_vars)
        b = np.broadcast_to(np.asarray(b, dtype=float), (a.shape[0],))
        self._soc_G.append(sparse.vstack([-c_row, -a], format="csr"))
        self._soc_h.append(np.concatenate([[float(d)], b]))
        self._soc_dims.append(a.shape[0] + 1)
        return self

    def build(self, objective: np.ndarray) -> SocpProblem:
        c = np.asarray(objective, dtype=float)
        if c.shape != (self.num_vars,):
            raise ValueError("objective length must equal the variable count")
        blocks = self._lin_G + self._soc_G
        if not blocks:
            raise ValueError("problem needs at least one cone constraint")
        g = sparse.vstack(blocks, format="csr")
        h = np.concatenate(self._lin_h + self._soc_h)
        if self._eq_A:
            a = sparse.vstack(self._eq_A, format="csr")
            b = np.concatenate(self._eq_b)
        else:
            a = sparse.csr_matrix((0, self.num_vars))
            b = np.zeros(0)
        dims = ConeDims(l=sum(m.shape[0] for m in self._lin_G), q=tuple(self._soc_dims))
        return SocpProblem(c=c, G=g, h=h, dims=dims, A=a, b=b)


# ---------------------------------------------------------------------------
# cone algebra
# ---------------------------------------------------------------------------

class _Cone:
    """Index bookkeeping plus Jordan-algebra operations for R+^l x Q^q."""

    def __init__(self, dims: ConeDims) -> None:
        self.dims = dims
        self.lin = slice(0, dims.l)
        self.socs: list[slice] = []
        start = dims.l
        for q in dims.q:
            self.socs.append(slice(start, start + q))
            start += q

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dims.rows)
        e[self.lin] = 1.0
        for sl in self.socs:
            e[sl.start] = 1.0
        return e

    def product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        out[self.lin] = u[self.lin] * v[self.lin]
        for sl in self.socs:
            ub, vb = u[sl], v[sl]
            out[sl.start] = ub @ vb
            out[sl.start + 1:sl.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
        return out

    def divide(self, lam: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Solve lam o x = r."""
        out = np.empty_like(r)
        out[self.lin] = r[self.lin] / lam[self.lin]
        for sl in self.socs:
            lb, rb = lam[sl], r[sl]
            det = lb[0] ** 2 - lb[1:] @ lb[1:]
            x0 = (lb[0] * rb[0] - lb[1:] @ rb[1:]) / det
            out[sl.start] = x0
            out[sl.start + 1:sl.stop] = (rb[1:] - x0 * lb[1:]) / lb[0]
        return out

    def max_step(self, x: np.ndarray, dx: np.ndarray) -> float:
        """Largest a > 0 keeping x + a dx in the cone (inf if unbounded)."""
        step = math.inf
        xl, dl = x[self.lin], dx[self.lin]
        neg = dl < 0
        if np.any(neg):
            step = min(step, float(np.min(-xl[neg] / dl[neg])))
        for sl in self.socs:
            step = min(step, _soc_step(x[sl], dx[sl]))
        return step

    def violation(self, r: np.ndarray) -> float:
        """How far r lies outside the cone (0 when inside)."""
        worst = 0.0
        if self.dims.l:
            worst = max(worst, float(np.max(-r[self.lin], initial=0.0)))
        for sl in self.socs:
            rb = r[sl]
            worst = max(worst, float(np.linalg.norm(rb[1:]) - rb[0]))
        return max(worst, 0.0)


def _soc_step(x: np.ndarray, d: np.ndarray) -> float:
    # smallest positive root of (x0 + a d0)^2 - ||x1 + a d1||^2
    a = d[0] ** 2 - d[1:] @ d[1:]
    b = x[0] * d[0] - x[1:] @ d[1:]
    c = x[0] ** 2 - x[1:] @ x[1:]
    if c <= 0.0:
        return 0.0
    disc = b * b - a * c
    if disc < 0.0:
        return math.inf
    root = math.sqrt(disc)
    if a == 0.0:
        roots = [-c / (2.0 * b)] if b != 0.0 else []
    else:
        q = -(b + math.copysign(root, b))
        roots = [q / a, c / q] if q != 0.0 else [-b / a]
    positive = [r for r in roots if r > 0.0]
    return min(positive) if positive else math.inf


class _NtScaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lambda (W symmetric)."""

    def __init__(self, cone: _Cone, s: np.ndarray, z: np.ndarray) -> None:
        self.cone = cone
        self.d = np.sqrt(s[cone.lin] / z[cone.lin])
        self.blocks: list[tuple[float, np.ndarray]] = []
        for sl in cone.socs:
            sb, zb = s[sl], z[sl]
            s_norm = math.sqrt(max(sb[0] ** 2 - sb[1:] @ sb[1:], np.finfo(float).tiny))
            z_norm = math.sqrt(max(zb[0] ** 2 - zb[1:] @ zb[1:], np.finfo(float).tiny))
            sbar, zbar = sb / s_norm, zb / z_norm
            gamma = math.sqrt(max((1.0 + sbar @ zbar) / 2.0, np.finfo(float).tiny))
            wbar = sbar.copy()
            wbar[0] += zbar[0]
            wbar[1:] -= zbar[1:]
            wbar /= 2.0 * gamma
            self.blocks.append((math.sqrt(s_norm / z_norm), wbar))
        self.lmbda = self.apply(z)

    def apply(self, x: np.ndarray, inverse: bool = False) -> np.ndarray:
        """W x (or W^{-1} x); x may be a vector or a matrix with cone rows."""
        out = np.empty_like(x, dtype=float)
        lin = self.cone.lin
        scale = self.d if x.ndim == 1 else self.d[:, None]
        out[lin] = x[lin] / scale if inverse else x[lin] * scale
        for sl, (beta, wbar) in zip(self.cone.socs, self.blocks):
            out[sl] = _apply_block(beta, wbar, x[sl], inverse)
        return out


def _apply_block(beta: float, wbar: np.ndarray, x: np.ndarray, inverse: bool) -> np.ndarray:
    w0, w1 = wbar[0], wbar[1:]
    x0, x1 = x[0], x[1:]
    t = w1 @ x1
    out = np.empty_like(x, dtype=float)
    if inverse:
        out[0] = (w0 * x0 - t) / beta
        out[1:] = (x1 + np.multiply.outer(w1, (-x0 + t / (1.0 + w0)))) / beta
    else:
        out[0] = beta * (w0 * x0 + t)
        out[1:] = beta * (x1 + np.multiply.outer(w1, (x0 + t / (1.0 + w0))))
    return out


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

class _KktSystem:
    """Reduced Newton system [[G^T W^-2 G, A^T], [A, 0]] for the current scaling."""

    def __init__(self, problem: SocpProblem, cone: _Cone, soc_columns: list, scaling: _NtScaling) -> None:
        self.problem = problem
        self.scaling = scaling
        n, p = problem.num_vars, problem.b.shape[0]
        self.n = n
        p_mat = np.zeros((n, n))
        if cone.dims.l:
            g_lin = problem.G[cone.lin]
            weights = 1.0 / scaling.d ** 2
            p_mat += (g_lin.T @ sparse.diags(weights) @ g_lin).toarray()
        for (cols, g_block), (beta, wbar) in zip(soc_columns, scaling.blocks):
            scaled = _apply_block(beta, wbar, g_block, inverse=True)
            p_mat[np.ix_(cols, cols)] += scaled.T @ scaled
        if not np.all(np.isfinite(p_mat)):
            raise la.LinAlgError("scaled constraint matrix is not finite")
        a_dense = problem.A.toarray()
        self.matrix = np.block([[p_mat, a_dense.T], [a_dense, np.zeros((p, p))]])
        regularized = self.matrix.copy()
        regularized[:n, :n] += _REGULARIZATION * np.eye(n)
        regularized[n:, n:] -= _REGULARIZATION * np.eye(p)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            self.factor = la.lu_factor(regularized, check_finite=False)

    def _solve_dense(self, rhs: np.ndarray) -> np.ndarray:
        sol = la.lu_solve(self.factor, rhs, check_finite=False)
        for _ in range(_REFINEMENT_STEPS):
            residual = rhs - self.matrix @ sol
            sol = sol + la.lu_solve(self.factor, residual, check_finite=False)
        if not np.all(np.isfinite(sol)):
            if not (np.all(np.isfinite(self.matrix)) and np.all(np.isfinite(rhs))):
                raise la.LinAlgError("KKT system is not finite")
            sol = la.lstsq(self.matrix, rhs)[0]
        return sol

    def solve(self, b1: np.ndarray, b2: np.ndarray, b3: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Solve A'dy + G'dz = b1, -A dx = b2, -G dx + W^2 dz = b3."""
        g = self.problem.G
        w2b3 = self.scaling.apply(self.scaling.apply(b3, inverse=True), inverse=True)
        rhs = np.concatenate([b1 - g.T @ w2b3, -b2])
        sol = self._solve_dense(rhs)
        dx, dy = sol[:self.n], sol[self.n:]
        dz = self.scaling.apply(self.scaling.apply(b3 + g @ dx, inverse=True), inverse=True)
        return dx, dy, dz


def _soc_columns(problem: SocpProblem, cone: _Cone) -> list[tuple[np.ndarray, np.ndarray]]:
    parts = []
    for sl in cone.socs:
        block = problem.G[sl]
        cols = np.unique(block.indices)
        parts.append((cols, block[:, cols].toarray()))
    return parts


def _violation(problem: SocpProblem, cone: _Cone, x: np.ndarray) -> float:
    worst = cone.violation(problem.h - problem.G @ x)
    if problem.b.shape[0]:
        worst = max(worst, float(np.max(np.abs(problem.A @ x - problem.b))))
    return worst


class _Breakdown(ArithmeticError):
    """Newton system or scaling produced non-finite values."""


def _finite(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


def solve_socp(
    problem: SocpProblem,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> SocpSolution:
    """
    Solve a second-order cone program.

    - OPTIMAL: primal / dual residuals and the duality gap are within ``tol``,
      or the best iterate seen is within ``_NEAR_OPTIMAL * tol`` and satisfies
      the constraints to ``feasibility_tolerance`` when progress stops.
    - INFEASIBLE / UNBOUNDED: only when a Farkas-type certificate holds within
      ``tol``.
    - MAX_ITERS: anything else, including numerical breakdown; the best
      iterate is returned.
    """
    tol = settings.SOLVER_TOL if tol is None else tol
    max_iters = settings.SOLVER_MAX_ITERS if max_iters is None else max_iters
    if not tol > 0:
        raise ValueError("tolerance must be positive")

    c, g, h, a, b = problem.c, problem.G, problem.h, problem.A, problem.b
    cone = _Cone(problem.dims)
    soc_columns = _soc_columns(problem, cone)
    degree = problem.dims.degree

    resx0 = max(1.0, float(np.linalg.norm(c)))
    resy0 = max(1.0, float(np.linalg.norm(b)))
    resz0 = max(1.0, float(np.linalg.norm(h)))
    feas_tol = 2.0 * tol * max(resy0, resz0)

    x = np.zeros(problem.num_vars)
    y = np.zeros(b.shape[0])
    s = cone.identity()
    z = cone.identity()
    tau, kappa = 1.0, 1.0

    status = SolverStatus.MAX_ITERS
    best_merit, best, stall = math.inf, None, 0
    iteration = 0
    for iteration in range(max_iters + 1):
        rx = a.T @ y + g.T @ z + c * tau
        ry = -(a @ x) + b * tau
        rz = -(g @ x) + h * tau - s
        rt = -(c @ x) - b @ y - h @ z - kappa

        pcost = float(c @ x) / tau
        dcost = -float(h @ z + b @ y) / tau
        gap = float(s @ z) / tau ** 2
        pres = max(float(np.linalg.norm(ry)) / resy0, float(np.linalg.norm(rz)) / resz0) / tau
        dres = float(np.linalg.norm(rx)) / resx0 / tau
        merit = max(pres, dres, gap / max(1.0, abs(pcost)))

        hz = float(h @ z + b @ y)
        cx = float(c @ x)
        pinf = float(np.linalg.norm(a.T @ y + g.T @ z)) / resx0 / -hz if hz < 0 else math.inf
        dinf = (
            max(float(np.linalg.norm(g @ x + s)) / resz0, float(np.linalg.norm(a @ x)) / resy0) / -cx
            if cx < 0 else math.inf
        )

        logger.debug(
            "socp it=%s pcost=%.6e dcost=%.6e gap=%.2e pres=%.2e dres=%.2e tau=%.2e kappa=%.2e",
            iteration, pcost, dcost, gap, pres, dres, tau, kappa,
        )

        if merit <= tol:
            status = SolverStatus.OPTIMAL
            best = None
            break
        if best_merit <= _NEAR_OPTIMAL * tol and merit > 1e2 * best_merit:
            logger.debug("socp drifting away from a near-optimal point at it=%s", iteration)
            break
        if pinf <= tol:
            status = SolverStatus.INFEASIBLE
            break
        if dinf <= tol:
            status = SolverStatus.UNBOUNDED
            break

        if np.isfinite(merit) and merit < best_merit:
            if merit < 0.5 * best_merit:
                stall = 0
            best_merit, best = merit, (x, y, z, s, tau)
        else:
            stall += 1
        if stall >= _STALL_ITERATIONS:
            logger.debug("socp stalled at it=%s merit=%.2e", iteration, best_merit)
            break
        if iteration == max_iters:
            break

        try:
            with np.errstate(all="ignore"):
                step_result = _predictor_corrector(
                    problem, cone, soc_columns, degree, x, y, z, s, tau, kappa, rx, ry, rz, rt,
                )
        except (ArithmeticError, la.LinAlgError, ValueError) as exc:
            logger.debug("socp numerical breakdown at it=%s: %s", iteration, exc)
            break
        if step_result is None:
            logger.debug("socp step length collapsed at it=%s", iteration)
            break
        x, y, z, s, tau, kappa = step_result

    if status == SolverStatus.MAX_ITERS and best is not None:
        x, y, z, s, tau = best
    if status in (SolverStatus.OPTIMAL, SolverStatus.MAX_ITERS) and tau > 0:
        x_hat, y_hat, z_hat, s_hat = x / tau, y / tau, z / tau, s / tau
    else:
        x_hat, y_hat, z_hat, s_hat = x, y, z, s
    violation = _violation(problem, cone, x_hat)

    near_tol = _NEAR_OPTIMAL * feas_tol
    if status == SolverStatus.MAX_ITERS and best_merit <= _NEAR_OPTIMAL * tol and violation <= near_tol:
        logger.debug("socp accepted best iterate with merit %.2e", best_merit)
        status, feas_tol = SolverStatus.OPTIMAL, near_tol
    if status == SolverStatus.OPTIMAL and violation > feas_tol:
        logger.warning("socp residual test passed but violation %.2e exceeds %.2e", violation, feas_tol)
        status = SolverStatus.MAX_ITERS

    return SocpSolution(
        status=status,
        x=x_hat,
        objective_value=float(c @ x_hat),
        max_constraint_violation=violation,
        feasibility_tolerance=feas_tol,
        iterations=iteration,
        y=y_hat,
        z=z_hat,
        s=s_hat,
        gap=float(s_hat @ z_hat),
    )


def _predictor_corrector(problem, cone, soc_columns, degree, x, y, z, s, tau, kappa, rx, ry, rz, rt):
    """One Mehrotra step. Returns the new iterate, or None if no step is possible."""
    c, b, h = problem.c, problem.b, problem.h
    mu = (float(s @ z) + tau * kappa) / (degree + 1)
    scaling = _NtScaling(cone, s, z)
    lmbda = scaling.lmbda
    if not _finite(scaling.d, lmbda, *(w for _, w in scaling.blocks), [beta for beta, _ in scaling.blocks]):
        raise _Breakdown("scaling is not finite")

    kkt = _KktSystem(problem, cone, soc_columns, scaling)
    dx2, dy2, dz2 = kkt.solve(-c, -b, -h)
    wdz2 = scaling.apply(dz2)
    denominator = float(wdz2 @ wdz2) + kappa / tau

    def newton(rhs_c: np.ndarray, rhs_k: float, eta: float):
        u = cone.divide(lmbda, rhs_c)
        dx1, dy1, dz1 = kkt.solve(
            -(1.0 - eta) * rx, -(1.0 - eta) * ry, -(1.0 - eta) * rz + scaling.apply(u)
        )
        numerator = -(1.0 - eta) * rt + c @ dx1 + b @ dy1 + h @ dz1 + rhs_k / tau
        dtau = float(numerator) / denominator
        dx = dx1 + dtau * dx2
        dy = dy1 + dtau * dy2
        dz = dz1 + dtau * dz2
        ds = scaling.apply(u - scaling.apply(dz))
        dkappa = (rhs_k - kappa * dtau) / tau
        if not _finite(dx, dy, dz, ds, [dtau, dkappa]):
            raise _Breakdown("Newton direction is not finite")
        return dx, dy, dz, ds, dtau, dkappa

    def step_length(ds, dz, dtau, dkappa) -> float:
        step = min(cone.max_step(s, ds), cone.max_step(z, dz))
        if dtau < 0:
            step = min(step, -tau / dtau)
        if dkappa < 0:
            step = min(step, -kappa / dkappa)
        return step

    lam_sq = cone.product(lmbda, lmbda)
    aff = newton(-lam_sq, -tau * kappa, 0.0)
    step_aff = min(1.0, step_length(aff[3], aff[2], aff[4], aff[5]))
    sigma = min(1.0, max(0.0, (1.0 - step_aff) ** 3))

    corrector = cone.product(scaling.apply(aff[3], inverse=True), scaling.apply(aff[2]))
    rhs_c = -lam_sq - corrector + sigma * mu * cone.identity()
    rhs_k = -tau * kappa - aff[4] * aff[5] + sigma * mu
    dx, dy, dz, ds, dtau, dkappa = newton(rhs_c, rhs_k, sigma)

    step = min(1.0, _STEP_FRACTION * step_length(ds, dz, dtau, dkappa))
    if not np.isfinite(step) or step <= 0.0:
        return None
    new_tau, new_kappa = tau + step * dtau, kappa + step * dkappa
    if not new_tau > 0.0 or not new_kappa > 0.0:
        return None
    iterate = (x + step * dx, y + step * dy, z + step * dz, s + step * ds)
    if not _finite(*iterate, [new_tau, new_kappa]):
        raise _Breakdown("iterate is not finite")
    return (*iterate, new_tau, new_kappa)
