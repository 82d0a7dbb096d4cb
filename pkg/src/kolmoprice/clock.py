"""
Clock register for time-dependent surfaces.

The time tau becomes the position of an extra y register, and

    H = 1 (x) 1_w (x) P_y + sum_j H_ext(tau = y_j) (x) |j><j|

is time independent. A packet starting at y = 0 moves at unit speed, so the
y slice at y = t carries the state evolved along tau in [0, t]. Blocks for
y_j > T are frozen at tau = T; the packet never reaches them before extraction.
State layout is (N_price, N_w, N_y) with y as the fastest index.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from kolmoprice.errors import DomainError, NumericError
from kolmoprice.evolve import EvolutionReport, check_hermitian, evolve_slices
from kolmoprice.generator import GeneratorMatrix, Role
from kolmoprice.grid import Grid1D, Scheme, first_derivative
from kolmoprice.logging_setup import get_logger
from kolmoprice.schrodinger import (
    DEFAULT_MAX_STATE_DIM,
    ExtendedState,
    WRepresentation,
    eta_values,
    to_eta,
    to_p,
)

logger = get_logger()

CLOCK_BUFFER = 1.25
LOCALIZATION_MIN = 0.5
LOCALIZATION_HALF_WIDTH = 2


class ClockProfile(str, Enum):
    BASIS_DELTA = "basis_delta"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ClockConfig:
    g_y: Grid1D
    horizon: float
    profile: ClockProfile = ClockProfile.BASIS_DELTA
    width: Optional[float] = None
    scheme: Scheme = Scheme.SPECTRAL

    def __post_init__(self) -> None:
        if self.g_y.a != 0.0:
            raise DomainError(f"clock grid must start at y=0, got {self.g_y.a}")
        if self.horizon <= 0:
            raise DomainError(f"clock horizon must be positive, got {self.horizon}")
        if self.g_y.b < CLOCK_BUFFER * self.horizon * (1 - 1e-12):
            raise DomainError(
                f"buffer violation: Y={self.g_y.b:g} < {CLOCK_BUFFER} * T = {CLOCK_BUFFER * self.horizon:g}"
            )
        if self.scheme not in (Scheme.SPECTRAL, Scheme.CENTRAL2):
            raise DomainError(f"clock momentum must be spectral or central2, got {self.scheme}")
        if self.profile is ClockProfile.GAUSSIAN:
            if self.width is None or self.width < self.g_y.delta:
                raise DomainError(f"Gaussian clock width must be >= dy = {self.g_y.delta:g}")

    @property
    def n_y(self) -> int:
        return self.g_y.n

    @classmethod
    def aligned(
        cls,
        T: float,
        n_y: int,
        profile: Union[ClockProfile, str] = ClockProfile.BASIS_DELTA,
        width: Optional[float] = None,
        scheme: Union[Scheme, str] = Scheme.SPECTRAL,
    ) -> "ClockConfig":
        """Y chosen so that T is a whole number of steps dy and Y >= 1.25 T."""
        if T <= 0:
            raise DomainError(f"horizon must be positive, got {T}")
        N_y = 2**n_y
        steps = math.floor((N_y - 1) / CLOCK_BUFFER)
        if steps < 1:
            raise DomainError(f"n_y={n_y} leaves no room for the clock buffer")
        Y = T * (N_y - 1) / steps
        return cls(Grid1D(0.0, Y, n_y), T, ClockProfile(profile), width, Scheme(scheme))

    def tau_values(self) -> np.ndarray:
        return np.minimum(self.g_y.points, self.horizon)


def gaussian_delta(g_y: Grid1D, center: float, width: float) -> np.ndarray:
    """(1/(2 pi w^2))^{1/4} exp(-(y - c)^2 / (4 w^2)) with periodic images, unit discrete norm."""
    if width <= 0:
        raise DomainError("Gaussian width must be positive")
    y = g_y.points
    d = (y - center + 0.5 * g_y.period) % g_y.period - 0.5 * g_y.period
    amp = (1.0 / (2.0 * np.pi * width**2)) ** 0.25 * np.exp(-(d**2) / (4.0 * width**2))
    return amp / np.linalg.norm(amp)


def gaussian_degree_bound(eps: float, width: float) -> float:
    """Polynomial degree needed to load the Gaussian profile to precision eps."""
    if not 0 < eps < 1 or width <= 0:
        raise DomainError("need 0 < eps < 1 and width > 0")
    log_eps = math.log(1.0 / eps)
    return (log_eps + math.log(1.0 / width)) / math.log(1.0 + 2.0 * width * log_eps)


def clock_profile(cfg: ClockConfig) -> np.ndarray:
    if cfg.profile is ClockProfile.BASIS_DELTA:
        e0 = np.zeros(cfg.g_y.size)
        e0[0] = 1.0
        return e0
    return gaussian_delta(cfg.g_y, 0.0, float(cfg.width))


def attach_clock(state: ExtendedState, cfg: ClockConfig) -> ExtendedState:
    """Tensor the y profile onto a (N_price, N_w) state."""
    if state.amplitudes.ndim != 2:
        raise DomainError(f"expected an unclocked (price, w) state, got shape {state.shape}")
    amps = state.amplitudes[:, :, None] * clock_profile(cfg)[None, None, :]
    return ExtendedState(amps, state.representation)


def _blockdiag_minor(mats: List[sp.spmatrix]) -> sp.csr_matrix:
    """sum_j M_j (x) |j><j| with j the fast index."""
    N_y = len(mats)
    rows, cols, data = [], [], []
    for j, M in enumerate(mats):
        coo = sp.coo_matrix(M)
        rows.append(coo.row * N_y + j)
        cols.append(coo.col * N_y + j)
        data.append(coo.data)
    N = mats[0].shape[0] * N_y
    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    ).tocsr()


def build_clock_hamiltonian(
    H_ext_builder: Callable[[float], Union[GeneratorMatrix, sp.spmatrix]], cfg: ClockConfig
) -> GeneratorMatrix:
    blocks = []
    for tau in cfg.tau_values():
        H = H_ext_builder(float(tau))
        blocks.append(sp.csr_matrix(H.matrix if isinstance(H, GeneratorMatrix) else H))
    shapes = {b.shape for b in blocks}
    if len(shapes) != 1:
        raise DomainError(f"clock blocks differ in shape: {sorted(shapes)}")
    dim = blocks[0].shape[0]
    P_y = first_derivative(cfg.g_y, cfg.scheme)
    H = sp.kron(sp.identity(dim), P_y) + _blockdiag_minor(blocks)
    H = sp.csr_matrix(H)
    check_hermitian(H)
    return GeneratorMatrix(H, Role.CLOCK_HERMITIAN, cfg.g_y)


def evolve_clocked(
    state: ExtendedState,
    g_w: Grid1D,
    split_builder: Callable[[float], Tuple[sp.spmatrix, sp.spmatrix]],
    cfg: ClockConfig,
    t: float,
    tol: float = 1e-10,
    max_state_dim: int = DEFAULT_MAX_STATE_DIM,
) -> Tuple[ExtendedState, EvolutionReport]:
    """
    Evolve a clocked (N_price, N_w, N_y) state for time t, one eta slice at a time.

    Within a slice the operator is 1 (x) P_y + sum_j (eta S_j + H_K,j) (x) |j><j|.
    """
    if state.amplitudes.ndim != 3:
        raise DomainError(f"expected a clocked (price, w, y) state, got shape {state.shape}")
    if state.amplitudes.size > max_state_dim:
        raise NumericError(
            f"state too large: {state.amplitudes.size} amplitudes exceed max_state_dim={max_state_dim}"
        )
    splits = [split_builder(float(tau)) for tau in cfg.tau_values()]
    S_diag = _blockdiag_minor([s for s, _ in splits])
    H_diag = _blockdiag_minor([h for _, h in splits])
    N = state.amplitudes.shape[0]
    shift = sp.kron(sp.identity(N), first_derivative(cfg.g_y, cfg.scheme)).tocsr()
    check_hermitian(S_diag)
    check_hermitian(H_diag)

    current = to_eta(state)
    N_w, N_y = current.amplitudes.shape[1], current.amplitudes.shape[2]
    # (N, N_w, N_y) -> (N_w, N * N_y): row j is the eta_j slice, price-major
    slices = np.transpose(current.amplitudes, (1, 0, 2)).reshape(N_w, N * N_y)
    blocks = [(shift + eta * S_diag + H_diag).tocsr() for eta in eta_values(g_w)]
    report = evolve_slices(blocks, slices, t, tol)
    amps = np.transpose(report.final.reshape(N_w, N, N_y), (1, 0, 2))
    final = to_p(ExtendedState(np.ascontiguousarray(amps), WRepresentation.ETA))
    return final, EvolutionReport(
        final.amplitudes, report.steps, report.max_norm_drift, report.wall_time, report.engine
    )


@dataclass(frozen=True)
class ClockSlice:
    state: ExtendedState
    localization: float
    y_index: int
    # norm of the slice before renormalization
    weight: float


def extract_at_time(final: ExtendedState, cfg: ClockConfig, t: float) -> ClockSlice:
    """Project onto the y slice nearest to t and renormalize."""
    g_y = cfg.g_y
    buffer = LOCALIZATION_HALF_WIDTH * g_y.delta
    if not 0.0 <= t <= g_y.b - buffer + 1e-12:
        raise DomainError(f"extraction time {t} outside [0, {g_y.b - buffer:g}]")
    amps = to_p(final).amplitudes if final.representation is WRepresentation.ETA else final.amplitudes
    if amps.ndim != 3:
        raise DomainError(f"expected a clocked state, got shape {amps.shape}")
    j = g_y.nearest_index(t)
    y_mass = np.sum(np.abs(amps) ** 2, axis=(0, 1))
    total = y_mass.sum()
    lo, hi = max(0, j - LOCALIZATION_HALF_WIDTH), min(g_y.size, j + LOCALIZATION_HALF_WIDTH + 1)
    localization = float(y_mass[lo:hi].sum() / total) if total > 0 else 0.0
    if localization < LOCALIZATION_MIN:
        raise NumericError(
            f"clock wavepacket dispersed: mass {localization:.3f} within +/-{LOCALIZATION_HALF_WIDTH} dy of t={t:g}"
        )
    if localization < 0.9:
        logger.warning(f"clock packet spread: localization {localization:.3f} at t={t:g}")
    piece = amps[:, :, j]
    weight = float(np.linalg.norm(piece))
    if weight == 0.0:
        raise NumericError(f"clock slice at t={t:g} is empty")
    return ClockSlice(ExtendedState(piece / weight, WRepresentation.P), localization, j, weight)
