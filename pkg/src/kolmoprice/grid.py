"""
Uniform periodic grids and the discrete position/momentum operators on them.

Conventions:
    x_j = a + j*delta, j = 0..N-1, N = 2**n, delta = (b - a) / (N - 1).
    The periodic lattice therefore has period N*delta: the neighbour of x_{N-1} = b
    is x_0 = a, one spacing away.
    first_derivative returns P = -i d/dx (Hermitian); second_derivative returns
    P^2 = -d^2/dx^2 (symmetric positive semidefinite).
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from kolmoprice.errors import DomainError


class Scheme(str, Enum):
    CENTRAL2 = "central2"
    CENTRAL4 = "central4"
    SPECTRAL = "spectral"


# (offset, weight) stencils in units of 1/delta and 1/delta**2.
_FIRST_STENCILS: Dict[Scheme, Sequence[Tuple[int, float]]] = {
    Scheme.CENTRAL2: ((1, 0.5), (-1, -0.5)),
    Scheme.CENTRAL4: ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12)),
}
_SECOND_STENCILS: Dict[Scheme, Sequence[Tuple[int, float]]] = {
    Scheme.CENTRAL2: ((1, 1.0), (0, -2.0), (-1, 1.0)),
    Scheme.CENTRAL4: (
        (2, -1 / 12),
        (1, 16 / 12),
        (0, -30 / 12),
        (-1, 16 / 12),
        (-2, -1 / 12),
    ),
}
_MIN_POINTS = {Scheme.CENTRAL2: 3, Scheme.CENTRAL4: 5, Scheme.SPECTRAL: 2}


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    n: int
    boundary: str = "periodic"

    def __post_init__(self) -> None:
        if not np.isfinite(self.a) or not np.isfinite(self.b):
            raise DomainError(f"grid endpoints must be finite, got [{self.a}, {self.b}]")
        if self.b <= self.a:
            raise DomainError(f"degenerate domain: b={self.b} must exceed a={self.a}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"qubit count n must be an integer >= 1, got {self.n}")
        if self.boundary != "periodic":
            raise DomainError(f"unsupported boundary '{self.boundary}' (only 'periodic')")

    @property
    def size(self) -> int:
        return 2 ** int(self.n)

    @property
    def delta(self) -> float:
        return (self.b - self.a) / (self.size - 1)

    @property
    def period(self) -> float:
        return self.size * self.delta

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.size)

    def nearest_index(self, x: float) -> int:
        return int(np.clip(np.rint((x - self.a) / self.delta), 0, self.size - 1))


def angular_frequencies(g: Grid1D) -> np.ndarray:
    """Wavenumbers of the unitary DFT basis in natural (FFT) order; Nyquist is negative."""
    return 2.0 * np.pi * np.fft.fftfreq(g.size, d=g.delta)


def position_operator(g: Grid1D) -> sp.csr_matrix:
    return sp.diags(g.points, format="csr")


def _check_size(g: Grid1D, scheme: Scheme) -> None:
    if g.size < _MIN_POINTS[scheme]:
        raise DomainError(
            f"stencil exceeds grid: {scheme.value} needs at least "
            f"{_MIN_POINTS[scheme]} points, grid has {g.size}"
        )


def _circulant(N: int, stencil: Sequence[Tuple[int, float]], scale: float) -> sp.csr_matrix:
    rows = np.tile(np.arange(N), len(stencil))
    cols = np.concatenate([(np.arange(N) + off) % N for off, _ in stencil])
    data = np.concatenate([np.full(N, w * scale) for _, w in stencil])
    # coo -> csr sums duplicates, which only arise for tiny grids
    return sp.coo_matrix((data, (rows, cols)), shape=(N, N)).tocsr()


def _spectral_matrix(g: Grid1D, symbol: np.ndarray) -> np.ndarray:
    eye = np.eye(g.size)
    return np.fft.ifft(symbol[:, None] * np.fft.fft(eye, axis=0), axis=0)


def difference_matrix(g: Grid1D, scheme: Scheme = Scheme.CENTRAL2) -> sp.csr_matrix:
    """Periodic d/dx: real antisymmetric for the stencils, i*P (dense, in csr) for Spectral."""
    scheme = Scheme(scheme)
    _check_size(g, scheme)
    if scheme is Scheme.SPECTRAL:
        return sp.csr_matrix(_spectral_matrix(g, 1j * angular_frequencies(g)))
    return _circulant(g.size, _FIRST_STENCILS[scheme], 1.0 / g.delta)


def second_difference_matrix(g: Grid1D, scheme: Scheme = Scheme.CENTRAL2) -> sp.csr_matrix:
    """Real periodic d^2/dx^2 (symmetric negative semidefinite)."""
    scheme = Scheme(scheme)
    _check_size(g, scheme)
    if scheme is Scheme.SPECTRAL:
        mat = _spectral_matrix(g, -(angular_frequencies(g) ** 2)).real
        return sp.csr_matrix(mat)
    return _circulant(g.size, _SECOND_STENCILS[scheme], 1.0 / g.delta**2)


def first_derivative(g: Grid1D, scheme: Scheme = Scheme.CENTRAL2) -> sp.csr_matrix:
    """
    Momentum operator P = -i d/dx with periodic wraparound.

    For Spectral the Nyquist mode carries wavenumber -pi/delta, so exp(-i P t)
    shifts a grid delta exactly by t whenever t is a multiple of delta.
    """
    scheme = Scheme(scheme)
    if scheme is Scheme.SPECTRAL:
        _check_size(g, scheme)
        return sp.csr_matrix(_spectral_matrix(g, angular_frequencies(g)))
    return (-1j * difference_matrix(g, scheme)).tocsr()


def second_derivative(g: Grid1D, scheme: Scheme = Scheme.CENTRAL2) -> sp.csr_matrix:
    """P^2 = -d^2/dx^2; Central2 eigenvalues are 2(1 - cos(2 pi k/N))/delta^2."""
    return (-second_difference_matrix(g, scheme)).tocsr()


def spectral_apply(g: Grid1D, v: np.ndarray, power: int = 1) -> np.ndarray:
    """Apply P**power through the FFT without forming the dense matrix."""
    kappa = angular_frequencies(g) ** power
    return np.fft.ifft(kappa * np.fft.fft(v))


def spectral_shift(g: Grid1D, v: np.ndarray, t: float) -> np.ndarray:
    """exp(-i P t) v: band-limited translation by +t along the periodic grid."""
    return np.fft.ifft(np.exp(-1j * angular_frequencies(g) * t) * np.fft.fft(v))
