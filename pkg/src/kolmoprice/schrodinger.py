"""
Schrödingerisation of the forward dynamics.

With L = S - i H_K (S, H_K Hermitian) and the warped variable w(p) = e^{-p} u for
p > 0, the extended state obeys dw/dt = -S dw/dp - i H_K w. In the Fourier dual
eta of p this is dw/dt = -i (eta S + H_K) w: one Hermitian block per eta value.

Layout: amplitudes are stored with shape (N_price, N_w); flattening in C order
gives the price (x) w tensor order used by build_extended_hamiltonian. The
p representation is the grid on [-L_w, L_w]; the eta representation is the
unitary FFT (norm="ortho", kernel e^{-2 pi i jk/N}) along the w axis, stored
in centered order (fftshift).
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import simpson
from scipy.special import erf

from kolmoprice.errors import DomainError, NumericError, PostSelectionError
from kolmoprice.evolve import EvolutionReport, evolve_slices
from kolmoprice.generator import GeneratorMatrix, PseudoHamiltonian, Role
from kolmoprice.grid import Grid1D
from kolmoprice.logging_setup import get_logger

logger = get_logger()

DECAY_TOL = 1e-8
P_SUCC_MIN = 1e-12
NODES_PER_UNIT = 64
DEFAULT_ERF_A = 6.0
DEFAULT_MAX_STATE_DIM = 2**23

# w-grid planning
W_MARGIN = 12.0
W_MAX_SPACING = 0.125
_W_FLOOR = {"mollified_window": 8.0, "exponential": 20.0, "erf_damped": 20.0}


class WVariant(str, Enum):
    EXPONENTIAL = "exponential"
    ERF_DAMPED = "erf_damped"
    MOLLIFIED_WINDOW = "mollified_window"


class WRepresentation(str, Enum):
    P = "p"
    ETA = "eta"


class RecoveryMode(str, Enum):
    SLICE = "slice"
    WEIGHTED_AVERAGE = "weighted_average"


def split_generator(L: Union[GeneratorMatrix, sp.spmatrix]) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """S = (L + L^H)/2, H_K = i(L - L^H)/2, so that L = S - i H_K."""
    M = L.matrix if isinstance(L, GeneratorMatrix) else sp.csr_matrix(L)
    if M.shape[0] != M.shape[1]:
        raise DomainError(f"generator must be square, got {M.shape}")
    adj = M.conj().T
    S = ((M + adj) * 0.5).tocsr()
    H_K = ((M - adj) * 0.5j).tocsr()
    return S, H_K


def w_grid(L_w: float, n_w: int) -> Grid1D:
    return Grid1D(-float(L_w), float(L_w), int(n_w))


def eta_values(g_w: Grid1D) -> np.ndarray:
    """Fourier-dual values of the w grid in centered order."""
    return np.fft.fftshift(2.0 * np.pi * np.fft.fftfreq(g_w.size, d=g_w.delta))


def build_extended_hamiltonian(
    S: sp.spmatrix, H_K: sp.spmatrix, g_w: Grid1D
) -> GeneratorMatrix:
    """H_ext = S (x) diag(eta) + H_K (x) 1_w."""
    if S.shape != H_K.shape:
        raise DomainError(f"dimension mismatch: S {S.shape} vs H_K {H_K.shape}")
    eta = eta_values(g_w)
    H = sp.kron(S, sp.diags(eta)) + sp.kron(H_K, sp.identity(g_w.size))
    return GeneratorMatrix(sp.csr_matrix(H), Role.EXTENDED_HERMITIAN, g_w)


def extended_blocks(S: sp.spmatrix, H_K: sp.spmatrix, g_w: Grid1D) -> List[sp.csr_matrix]:
    """The diagonal blocks eta_j S + H_K of H_ext, in centered eta order."""
    return [(eta * S + H_K).tocsr() for eta in eta_values(g_w)]


@dataclass(frozen=True)
class WRegisterState:
    grid_w: Grid1D
    amplitudes: np.ndarray
    variant: WVariant
    window: Optional[Tuple[float, float]]
    erf_a: Optional[float]
    mollifier_norm: Optional[float]
    # amplitudes = scale * psi, psi the unnormalized profile
    scale: float

    @property
    def positive_fraction(self) -> float:
        """L_+: fraction of the L2 mass at p > 0."""
        return float(np.sum(np.abs(self.amplitudes[self.grid_w.points > 0]) ** 2))


def _bump(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(1.0 / (u[inside] ** 2 - 1.0))
    return out


def _simpson_nodes(lo: float, hi: float) -> np.ndarray:
    count = max(2 * math.ceil(NODES_PER_UNIT * (hi - lo) / 2) + 1, 3)
    return np.linspace(lo, hi, count)


def mollifier_norm() -> float:
    nodes = _simpson_nodes(-1.0, 1.0)
    return float(simpson(_bump(nodes), x=nodes))


def mollified_window(p: np.ndarray, a_xi: float, b_xi: float, C: float) -> np.ndarray:
    """zeta = eta * chi_[a_xi, b_xi] with the standard mollifier, by composite Simpson."""
    zeta = np.zeros_like(p, dtype=float)
    for j, pj in enumerate(p):
        lo, hi = max(a_xi, pj - 1.0), min(b_xi, pj + 1.0)
        if lo >= hi:
            continue
        if a_xi <= pj - 1.0 and pj + 1.0 <= b_xi:
            zeta[j] = 1.0
            continue
        z = _simpson_nodes(lo, hi)
        zeta[j] = simpson(_bump(pj - z), x=z) / C
    return zeta


def prepare_w_state(
    variant: Union[WVariant, str],
    g_w: Grid1D,
    window: Optional[Tuple[float, float]] = None,
    erf_a: float = DEFAULT_ERF_A,
) -> WRegisterState:
    """
    Normalized auxiliary profile psi(p) = zeta(p) e^{-p}.

    Exponential uses e^{-|p|}; ErfDamped zeta = (erf(a p) + 1)/2;
    MollifiedWindow defaults to the window [-1, L_w - 1].
    """
    variant = WVariant(variant)
    p = g_w.points
    L_w = g_w.b
    C: Optional[float] = None
    a_used: Optional[float] = None
    if variant is WVariant.EXPONENTIAL:
        psi = np.exp(-np.abs(p))
        window = None
    elif variant is WVariant.ERF_DAMPED:
        if erf_a <= 0:
            raise DomainError(f"erf slope must be positive, got {erf_a}")
        a_used = erf_a
        psi = 0.5 * (erf(erf_a * p) + 1.0) * np.exp(-p)
        window = None
    else:
        if window is None:
            window = (-1.0, L_w - 1.0)
        a_xi, b_xi = window
        if b_xi <= a_xi:
            raise DomainError(f"empty mollifier window [{a_xi}, {b_xi}]")
        C = mollifier_norm()
        psi = mollified_window(p, a_xi, b_xi, C) * np.exp(-p)
    peak = np.max(np.abs(psi))
    if peak == 0.0 or max(abs(psi[0]), abs(psi[-1])) > DECAY_TOL * peak:
        raise NumericError(
            f"insufficient w-domain: psi does not decay below {DECAY_TOL:g} at p = +/-{L_w:g} "
            f"for variant {variant.value}"
        )
    scale = 1.0 / np.linalg.norm(psi)
    return WRegisterState(g_w, psi * scale, variant, window, a_used, C, float(scale))


class WGridPlan(NamedTuple):
    L_w: float
    n_w: int
    lambda_min: float
    lambda_max: float
    p_star: float

    @property
    def grid(self) -> Grid1D:
        return w_grid(self.L_w, self.n_w)


def _extreme_eigenvalues(S: sp.spmatrix) -> Tuple[float, float]:
    if S.shape[0] <= 4096:
        evals = la.eigvalsh(S.toarray())
        return float(evals[0]), float(evals[-1])
    lo = spla.eigsh(S, k=1, which="SA", return_eigenvectors=False)[0]
    hi = spla.eigsh(S, k=1, which="LA", return_eigenvectors=False)[0]
    return float(lo), float(hi)


def choose_p_star(g_w: Grid1D, lambda_max: float, T: float) -> float:
    """Smallest w grid value >= max(0.5, lambda_max^+ T)."""
    target = max(0.5, max(lambda_max, 0.0) * T)
    p = g_w.points
    candidates = p[p >= target - 1e-12]
    if candidates.size == 0:
        raise PostSelectionError(f"no w grid value at or above p* target {target:.6g}")
    return float(candidates[0])


def plan_w_grid(
    S_samples: Sequence[sp.spmatrix],
    T: float,
    variant: Union[WVariant, str] = WVariant.MOLLIFIED_WINDOW,
    L_w: Optional[float] = None,
    n_w: Optional[int] = None,
    margin: float = W_MARGIN,
    max_spacing: float = W_MAX_SPACING,
) -> WGridPlan:
    """
    Size the w register so the transport along p stays inside the grid.

    Each eigencomponent of S moves by lambda t along p, so the window of exact
    e^{-p} must reach from p* to p* + |lambda_min| T. None means auto; explicit
    values below the plan are honoured with a warning.
    """
    variant = WVariant(variant)
    bounds = [_extreme_eigenvalues(sp.csr_matrix(S)) for S in S_samples]
    lam_min = min(b[0] for b in bounds)
    lam_max = max(b[1] for b in bounds)
    p_target = max(0.5, max(lam_max, 0.0) * T)
    needed = max(_W_FLOOR[variant.value], math.ceil(p_target + max(-lam_min, 0.0) * T + margin))
    if L_w is None:
        L_w = float(needed)
    elif L_w < needed:
        logger.warning(
            f"w-domain L_w={L_w:g} is below the planned {needed:g} "
            f"(lambda_min={lam_min:.4g}, T={T:g}); recovery may alias"
        )
    needed_n = max(2, math.ceil(math.log2(2.0 * L_w / max_spacing + 1.0)))
    if n_w is None:
        n_w = needed_n
    elif n_w < needed_n:
        logger.warning(f"n_w={n_w} gives spacing above {max_spacing:g}; planned n_w={needed_n}")
    g_w = w_grid(L_w, n_w)
    p_star = choose_p_star(g_w, lam_max, T)
    logger.debug(
        f"w plan: L_w={L_w:g}, n_w={n_w}, lambda in [{lam_min:.4g}, {lam_max:.4g}], p*={p_star:.4g}"
    )
    return WGridPlan(float(L_w), int(n_w), lam_min, lam_max, p_star)


@dataclass(frozen=True)
class ExtendedState:
    """Amplitudes over price (x) w [(x) y]; w is axis 1."""

    amplitudes: np.ndarray
    representation: WRepresentation

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.amplitudes.shape)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def flat(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)


def initial_extended_state(u0: np.ndarray, w_state: WRegisterState) -> ExtendedState:
    nrm = np.linalg.norm(u0)
    if nrm == 0.0:
        raise DomainError("initial state must be nonzero")
    amps = np.outer(np.asarray(u0) / nrm, w_state.amplitudes).astype(complex)
    return ExtendedState(amps, WRepresentation.P)


def to_eta(state: ExtendedState) -> ExtendedState:
    if state.representation is WRepresentation.ETA:
        return state
    amps = np.fft.fftshift(np.fft.fft(state.amplitudes, axis=1, norm="ortho"), axes=1)
    return ExtendedState(amps, WRepresentation.ETA)


def to_p(state: ExtendedState) -> ExtendedState:
    if state.representation is WRepresentation.P:
        return state
    amps = np.fft.ifft(np.fft.ifftshift(state.amplitudes, axes=1), axis=1, norm="ortho")
    return ExtendedState(amps, WRepresentation.P)


SplitSource = Union[Tuple[sp.spmatrix, sp.spmatrix], Callable[[float], Tuple[sp.spmatrix, sp.spmatrix]]]


def evolve_extended(
    state: ExtendedState,
    g_w: Grid1D,
    split: SplitSource,
    T: float,
    n_segments: int = 1,
    tol: float = 1e-10,
    max_state_dim: int = DEFAULT_MAX_STATE_DIM,
) -> Tuple[ExtendedState, EvolutionReport]:
    """
    Evolve under H_ext one eta slice at a time.

    split is (S, H_K) or tau -> (S, H_K); a callable is frozen at segment
    midpoints over n_segments equal segments. Returns the state in the p
    representation.
    """
    if state.amplitudes.size > max_state_dim:
        raise NumericError(
            f"state too large: {state.amplitudes.size} amplitudes exceed max_state_dim={max_state_dim}"
        )
    if n_segments < 1:
        raise DomainError(f"n_segments must be >= 1, got {n_segments}")
    current = to_eta(state)
    eta = eta_values(g_w)
    dt = T / n_segments
    steps = 0
    wall = 0.0
    drift = 0.0
    for k in range(n_segments):
        S, H_K = split((k + 0.5) * dt) if callable(split) else split
        blocks = [(e * S + H_K).tocsr() for e in eta]
        report = evolve_slices(blocks, current.amplitudes.T, dt, tol)
        current = ExtendedState(np.ascontiguousarray(report.final.T), WRepresentation.ETA)
        steps += report.steps
        wall += report.wall_time
        drift = max(drift, report.max_norm_drift)
    final = to_p(current)
    return final, EvolutionReport(final.amplitudes, steps, drift, wall, report.engine)


@dataclass(frozen=True)
class Recovery:
    vector: np.ndarray
    p_succ: float
    p_star: float
    mode: RecoveryMode


def success_probability(state: ExtendedState, g_w: Grid1D) -> float:
    amps = to_p(state).amplitudes
    total = np.sum(np.abs(amps) ** 2)
    if total == 0.0:
        return 0.0
    positive = g_w.points > 0
    return float(np.sum(np.abs(amps[:, positive, ...]) ** 2) / total)


def recover_solution(
    final: ExtendedState,
    w_state: WRegisterState,
    p_star: float,
    mode: Union[RecoveryMode, str] = RecoveryMode.SLICE,
) -> Recovery:
    """
    Undo the warped transform on p > 0.

    Slice returns e^{p*} v(., p*) / scale; WeightedAverage the least-squares fit
    of v(., p_j) = e^{-p_j} u over p_j in [p*, p* + 2]. For unit-norm u0 the result
    approximates e^{LT} u0 / |u0|.
    """
    mode = RecoveryMode(mode)
    g_w = w_state.grid_w
    state = to_p(final)
    p_succ = success_probability(state, g_w)
    if p_succ < P_SUCC_MIN:
        raise PostSelectionError(f"no positive-momentum support: P_succ = {p_succ:.3e}")
    p = g_w.points
    amps = state.amplitudes
    if mode is RecoveryMode.SLICE:
        j = int(np.argmin(np.abs(p - p_star)))
        vec = math.exp(p[j]) * amps[:, j, ...]
    else:
        sel = np.nonzero((p >= p_star - 1e-12) & (p <= p_star + 2.0 + 1e-12))[0]
        if sel.size == 0:
            raise PostSelectionError(f"no w grid points in [{p_star:g}, {p_star + 2:g}]")
        weights = np.exp(-p[sel])
        vec = np.tensordot(amps[:, sel, ...], weights, axes=([1], [0])) / np.sum(weights**2)
    return Recovery(vec / w_state.scale, p_succ, float(p_star), mode)


@dataclass(frozen=True)
class SymbolicSplit:
    """
    Hermitian/anti-Hermitian pieces of H_LV = H_h + i H_a from the coefficient operators.

    corrected: H_h = [C, P^2]/2 + {B, P}/2,   H_a = -i{C, P^2}/2 - i[B, P]/2 - A
    printed:   H_h = {C, P^2}/2 + {B, P}/2,   H_a = -i[C, P^2]/2 - i[B, P]/2 - A
    """

    grouping: str
    H_h: sp.csr_matrix
    H_a: sp.csr_matrix
    hermiticity_defect_h: float
    hermiticity_defect_a: float


def _relative_defect(M: sp.spmatrix) -> float:
    scale = abs(M).max() if M.nnz else 0.0
    if scale == 0.0:
        return 0.0
    diff = M - M.conj().T
    return float(abs(diff).max() / scale) if diff.nnz else 0.0


def symbolic_split(ph: PseudoHamiltonian, grouping: str = "corrected") -> SymbolicSplit:
    if grouping not in ("corrected", "printed"):
        raise DomainError(f"grouping must be 'corrected' or 'printed', got {grouping!r}")
    A = sp.diags(ph.A)
    B = sp.diags(ph.B)
    C = sp.diags(ph.C)
    P1, P2 = ph.momentum, ph.momentum_sq
    comm_c = C @ P2 - P2 @ C
    anti_c = C @ P2 + P2 @ C
    comm_b = B @ P1 - P1 @ B
    anti_b = B @ P1 + P1 @ B
    if grouping == "corrected":
        H_h = 0.5 * comm_c + 0.5 * anti_b
        H_a = -0.5j * anti_c - 0.5j * comm_b - A
    else:
        H_h = 0.5 * anti_c + 0.5 * anti_b
        H_a = -0.5j * comm_c - 0.5j * comm_b - A
    H_h = sp.csr_matrix(H_h)
    H_a = sp.csr_matrix(H_a)
    return SymbolicSplit(grouping, H_h, H_a, _relative_defect(H_h), _relative_defect(H_a))

