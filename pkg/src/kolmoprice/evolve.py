"""
Time-evolution engines.

expm_action emulates the Hamiltonian simulator: e^{-iHt}v for Hermitian H by
Lanczos with full reorthogonalization, falling back to a dense eigendecomposition
for small dimensions. time_ordered_product is the first-order product of short
propagators, and implicit_stepper the classical BackwardEuler/CrankNicolson
baseline. None of the engines renormalize mid-run; drift is reported instead.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from kolmoprice.errors import DomainError, NumericError
from kolmoprice.generator import GeneratorMatrix
from kolmoprice.grid import Grid1D
from kolmoprice.logging_setup import get_logger, timed_stage

logger = get_logger()

KRYLOV_DIM = 32
DENSE_THRESHOLD = 4096
STABILITY_GUARD = 0.5
HERMITIAN_TOL = 1e-12
_MIN_STEP_FRACTION = 1e-12

Operator = Union[sp.spmatrix, np.ndarray]
OperatorLike = Union[Operator, GeneratorMatrix]
Builder = Callable[[float], OperatorLike]


class Engine(str, Enum):
    DENSE = "dense"
    KRYLOV = "krylov"
    PRODUCT = "time_ordered_product"
    BACKWARD_EULER = "backward_euler"
    CRANK_NICOLSON = "crank_nicolson"


@dataclass(frozen=True)
class EvolutionReport:
    final: np.ndarray
    steps: int
    max_norm_drift: float
    wall_time: float
    engine: Engine


def _unwrap(op: OperatorLike) -> Operator:
    return op.matrix if isinstance(op, GeneratorMatrix) else op


def _max_abs(op: Operator) -> float:
    if sp.issparse(op):
        return float(abs(op).max()) if op.nnz else 0.0
    return float(np.max(np.abs(op))) if op.size else 0.0


def check_hermitian(H: Operator, tol: float = HERMITIAN_TOL) -> None:
    scale = _max_abs(H)
    if scale == 0.0:
        return
    defect = _max_abs(H - H.conj().T)
    if defect > tol * scale:
        raise NumericError(f"non-Hermitian input: relative defect {defect / scale:.3e}")


def _dense_action(H: Operator, v0: np.ndarray, t: float) -> np.ndarray:
    dense = H.toarray() if sp.issparse(H) else np.asarray(H)
    evals, evecs = la.eigh(dense)
    coeffs = evecs.conj().T @ v0
    return evecs @ (np.exp(-1j * evals * t) * coeffs)


def _lanczos(
    H: Operator, v: np.ndarray, m: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """
    Orthonormal Krylov basis V, tridiagonal (alpha, beta) and the residual
    coupling beta_m. A zero residual means the subspace is invariant.
    """
    n = v.size
    m = min(m, n)
    V = np.zeros((n, m), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[:, 0] = v / np.linalg.norm(v)
    scale = max(_max_abs(H), 1.0)
    for j in range(m):
        w = H @ V[:, j]
        alpha[j] = float(np.real(np.vdot(V[:, j], w)))
        w = w - alpha[j] * V[:, j]
        if j > 0:
            w = w - beta[j - 1] * V[:, j - 1]
        w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] <= 1e-13 * scale:
            return V[:, : j + 1], alpha[: j + 1], beta[:j], 0.0
        if j + 1 < m:
            V[:, j + 1] = w / beta[j]
    return V, alpha, beta[: m - 1], float(beta[m - 1])


def _krylov_action(
    H: Operator, v0: np.ndarray, t: float, tol: float, krylov_dim: int
) -> Tuple[np.ndarray, int]:
    w = v0.astype(complex)
    # backward time runs the same step control on |t|
    sign = 1.0 if t > 0 else -1.0
    t = abs(t)
    remaining = t
    dt = t
    steps = 0
    while remaining > 0.0:
        dt = min(dt, remaining)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            break
        V, alpha, beta, residual = _lanczos(H, w, krylov_dim)
        if alpha.size == 1:
            evals, Q = alpha, np.ones((1, 1))
        else:
            evals, Q = la.eigh_tridiagonal(alpha, beta)
        while True:
            y = Q @ (np.exp(-1j * sign * evals * dt) * Q[0, :])
            estimate = residual * abs(y[-1])
            if estimate <= 0.1 * tol * dt / t:
                break
            dt *= 0.5
            if dt < _MIN_STEP_FRACTION * t:
                raise NumericError("Krylov step collapsed below the minimum step")
        w = norm_w * (V @ y)
        remaining -= dt
        steps += 1
    return w, steps


def expm_action(
    H: OperatorLike,
    v0: np.ndarray,
    t: float,
    tol: float = 1e-10,
    krylov_dim: int = KRYLOV_DIM,
    dense_threshold: int = DENSE_THRESHOLD,
) -> np.ndarray:
    """
    e^{-iHt} v0 for Hermitian H.

    Dimensions up to dense_threshold use an eigendecomposition; larger ones
    use restarted Lanczos, halving the step until the a-posteriori estimate
    meets tol.
    """
    if not 1e-14 < tol < 1e-4:
        raise DomainError(f"tol must lie in (1e-14, 1e-4), got {tol}")
    mat = _unwrap(H)
    check_hermitian(mat)
    v0 = np.asarray(v0)
    if t == 0.0:
        return v0.astype(complex)
    if v0.size <= dense_threshold:
        return _dense_action(mat, v0, t)
    result, steps = _krylov_action(mat.tocsr() if sp.issparse(mat) else mat, v0, t, tol, krylov_dim)
    logger.debug(f"Krylov evolution: dim={v0.size}, steps={steps}")
    return result


def evolve_slices(
    blocks: Sequence[OperatorLike], states: np.ndarray, t: float, tol: float = 1e-10
) -> EvolutionReport:
    """
    Evolve a block-diagonal Hamiltonian slice by slice, in slice order.

    states has shape (n_slices, dim); row j evolves under blocks[j].
    """
    if len(blocks) != states.shape[0]:
        raise DomainError(f"{len(blocks)} blocks for {states.shape[0]} slices")
    out = np.empty(states.shape, dtype=complex)
    dim = states.shape[1]
    engine = Engine.DENSE if dim <= DENSE_THRESHOLD else Engine.KRYLOV
    with timed_stage("evolve_slices", dim=states.size) as elapsed:
        for j, block in enumerate(blocks):
            out[j] = expm_action(block, states[j], t, tol)
    before = np.linalg.norm(states)
    drift = abs(np.linalg.norm(out) - before) / before if before > 0 else 0.0
    return EvolutionReport(out, len(blocks), float(drift), elapsed[0], engine)


def _evaluate(builder: Union[Builder, OperatorLike], tau: float) -> Operator:
    return _unwrap(builder(tau) if callable(builder) else builder)


def time_ordered_product(
    A: Union[Builder, OperatorLike],
    v: np.ndarray,
    t_span: Tuple[float, float],
    N_t: int,
    direction: str = "backward",
) -> EvolutionReport:
    """
    First-order product of short-time propagators on the grid t_k = t0 + k dt.

    backward: u(t0) = (I - A(t_1) dt) ... (I - A(t_N) dt) u(t1), the rightmost
    factor applied first (terminal-value problems).
    forward:  p(t1) = (I + A(t_{N-1}) dt) ... (I + A(t_0) dt) p(t0) for dp/dtau = A p.
    """
    if N_t < 1:
        raise DomainError(f"N_t must be >= 1, got {N_t}")
    if direction not in ("forward", "backward"):
        raise DomainError(f"direction must be 'forward' or 'backward', got {direction!r}")
    t0, t1 = t_span
    dt = (t1 - t0) / N_t
    u = np.asarray(v, dtype=complex if np.iscomplexobj(v) else float).copy()
    initial = np.linalg.norm(u)
    drift = 0.0
    with timed_stage("time_ordered_product", dim=u.size) as elapsed:
        for k in range(N_t):
            if direction == "forward":
                tau, sign = t0 + k * dt, 1.0
            else:
                tau, sign = t1 - k * dt, -1.0
            mat = _evaluate(A, tau)
            if _max_abs(mat) * abs(dt) > STABILITY_GUARD:
                raise NumericError(
                    f"stability guard violated: |A|_max*dt = {_max_abs(mat) * abs(dt):.3g} "
                    f"> {STABILITY_GUARD} at t={tau:.6g}"
                )
            u = u + sign * dt * (mat @ u)
            if initial > 0:
                drift = max(drift, abs(np.linalg.norm(u) - initial) / initial)
    return EvolutionReport(u, N_t, drift, elapsed[0], Engine.PRODUCT)


class Stepper(str, Enum):
    BACKWARD_EULER = "backward_euler"
    CRANK_NICOLSON = "crank_nicolson"


def _factorize(M: sp.spmatrix) -> spla.SuperLU:
    try:
        return spla.splu(sp.csc_matrix(M))
    except RuntimeError as e:
        raise NumericError(f"singular implicit system: {e}") from e


def implicit_stepper(
    L_builder: Union[Builder, OperatorLike],
    p0: np.ndarray,
    T: float,
    N_t: int,
    scheme: Union[Stepper, str] = Stepper.CRANK_NICOLSON,
    t0: float = 0.0,
    grid: Optional[Grid1D] = None,
) -> EvolutionReport:
    """
    Implicit time stepping of dp/dtau = L(tau) p from t0 to t0 + T.

    BackwardEuler: (I - dt L(tau_k)) p_k = p_{k-1}.
    CrankNicolson: (I - dt/2 L(tau_k)) p_k = (I + dt/2 L(tau_{k-1})) p_{k-1}.
    A constant operator (not callable) is factorized once. max_norm_drift holds
    the relative drift of sum(p) dx when a grid is given, else of the 2-norm.
    """
    if N_t < 1:
        raise DomainError(f"N_t must be >= 1, got {N_t}")
    scheme = Stepper(scheme)
    dt = T / N_t
    p = np.asarray(p0).copy()
    n = p.size
    eye = sp.identity(n, format="csc")

    def measure(vec: np.ndarray) -> float:
        if grid is not None:
            return float(np.real(vec.sum()) * grid.delta)
        return float(np.linalg.norm(vec))

    initial = measure(p)
    drift = 0.0
    constant = not callable(L_builder)
    lu: Optional[spla.SuperLU] = None
    explicit: Optional[sp.spmatrix] = None
    L_prev = sp.csr_matrix(_evaluate(L_builder, t0))

    with timed_stage(f"implicit_stepper[{scheme.value}]", dim=n) as elapsed:
        for k in range(1, N_t + 1):
            L_k = L_prev if constant else sp.csr_matrix(_evaluate(L_builder, t0 + k * dt))
            if scheme is Stepper.BACKWARD_EULER:
                if lu is None or not constant:
                    lu = _factorize(eye - dt * L_k)
                rhs = p
            else:
                if lu is None or not constant:
                    lu = _factorize(eye - 0.5 * dt * L_k)
                if explicit is None or not constant:
                    explicit = eye + 0.5 * dt * L_prev
                rhs = explicit @ p
            p = lu.solve(np.asarray(rhs))
            if not np.all(np.isfinite(p)):
                raise NumericError(f"non-finite values after step {k}")
            if initial != 0.0:
                drift = max(drift, abs(measure(p) - initial) / abs(initial))
            L_prev = L_k
    engine = Engine.BACKWARD_EULER if scheme is Stepper.BACKWARD_EULER else Engine.CRANK_NICOLSON
    return EvolutionReport(p, N_t, drift, elapsed[0], engine)


def trusted_window(g: Grid1D, sigma_max: float, T: float, width: float = 5.0) -> np.ndarray:
    """Mask of grid points x <= b*exp(-width*sigma_max*sqrt(T)), away from the wrap boundary layer."""
    cutoff = g.b * np.exp(-width * sigma_max * np.sqrt(T))
    mask = g.points <= cutoff
    if not mask.any():
        raise DomainError(f"trusted window x <= {cutoff:.6g} holds no grid points")
    return mask


def overlap_series(
    L_or_Lb: Union[Builder, OperatorLike],
    state0: np.ndarray,
    T: float,
    N_samples: int,
    steps_per_sample: int = 64,
    scheme: Union[Stepper, str] = Stepper.CRANK_NICOLSON,
    window: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    |<psi(0)|psi(t_k)>| of the normalized states at t_k = k T / N_samples, k = 0..N_samples.

    window restricts both states to a boolean mask before normalizing.
    """
    if N_samples < 1:
        raise DomainError(f"N_samples must be >= 1, got {N_samples}")
    mask = np.ones(state0.size, dtype=bool) if window is None else np.asarray(window, bool)

    def normalized(vec: np.ndarray) -> np.ndarray:
        part = vec[mask]
        nrm = np.linalg.norm(part)
        if nrm == 0.0:
            raise NumericError("state vanished on the overlap window")
        return part / nrm

    ref = normalized(np.asarray(state0))
    times = np.linspace(0.0, T, N_samples + 1)
    overlaps: List[float] = [float(abs(np.vdot(ref, ref)))]
    current = np.asarray(state0)
    h = T / N_samples
    for k in range(N_samples):
        current = implicit_stepper(L_or_Lb, current, h, steps_per_sample, scheme, t0=k * h).final
        overlaps.append(float(abs(np.vdot(ref, normalized(current)))))
    return times, np.array(overlaps)
