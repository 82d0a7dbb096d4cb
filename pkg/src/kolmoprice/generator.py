"""
Discretized Kolmogorov generators.

The forward generator is built from the divergence form

    dp/dtau = -d/dx (r x p) + 1/2 d^2/dx^2 (sigma^2 x^2 p),

so every column of L sums to zero and total mass sum_j p_j dx is conserved.
The backward generator uses the non-divergence form and, with matching stencils,
is exactly the transpose of the forward one. The expanded pseudo-Hamiltonian
H_LV (dp/dtau = -i H_LV p) is assembled separately from sigma and its spatial
derivatives; it agrees with L only up to discretization error.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.stats import lognorm

from kolmoprice.errors import DomainError
from kolmoprice.grid import (
    Grid1D,
    Scheme,
    difference_matrix,
    first_derivative,
    position_operator,
    second_derivative,
    second_difference_matrix,
)
from kolmoprice.volatility import VolSurface

Matrix = Union[sp.csr_matrix, np.ndarray]


class Role(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    PSEUDO_HAMILTONIAN = "pseudo_hamiltonian"
    EXTENDED_HERMITIAN = "extended_hermitian"
    CLOCK_HERMITIAN = "clock_hermitian"


@dataclass(frozen=True)
class GeneratorMatrix:
    matrix: sp.csr_matrix
    role: Role
    grid: Grid1D
    tau: Optional[float] = None
    r: float = 0.0

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    def max_abs(self) -> float:
        m = self.matrix
        return float(abs(m).max()) if m.nnz else 0.0

    def column_sum_residual(self) -> float:
        """max_j |sum_i M_ij| relative to max |M_ij| (0 for the zero matrix)."""
        scale = self.max_abs()
        if scale == 0.0:
            return 0.0
        sums = np.asarray(self.matrix.sum(axis=0)).ravel()
        return float(np.max(np.abs(sums)) / scale)

    def hermiticity_defect(self) -> float:
        scale = self.max_abs()
        if scale == 0.0:
            return 0.0
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max() / scale) if diff.nnz else 0.0


def _diffusion_coefficient(
    g: Grid1D, v: Optional[VolSurface], tau: float
) -> np.ndarray:
    x = g.points
    if v is None:
        return np.zeros_like(x)
    sigma = np.asarray(v.eval(x, tau), dtype=float)
    if np.any(sigma <= 0.0) or not np.all(np.isfinite(sigma)):
        raise DomainError(f"volatility must be positive on the grid at tau={tau}")
    return 0.5 * sigma**2 * x**2


def build_forward_generator(
    g: Grid1D,
    v: Optional[VolSurface],
    r: float,
    tau: float,
    scheme: Scheme = Scheme.CENTRAL2,
) -> GeneratorMatrix:
    """
    L(tau) = -D1 diag(r x) + D2 diag(sigma^2 x^2 / 2).

    v=None means zero volatility (pure drift).
    """
    D1 = difference_matrix(g, scheme)
    D2 = second_difference_matrix(g, scheme)
    drift = sp.diags(r * g.points)
    diffusion = sp.diags(_diffusion_coefficient(g, v, tau))
    L = (-(D1 @ drift) + D2 @ diffusion).tocsr()
    return GeneratorMatrix(L, Role.FORWARD, g, tau, r)


def build_backward_generator(
    g: Grid1D,
    v: Optional[VolSurface],
    r: float,
    t: float,
    horizon: float,
    scheme: Scheme = Scheme.CENTRAL2,
) -> GeneratorMatrix:
    """L_b(t) = diag(sigma^2(x, T - t) x^2 / 2) D2 + diag(r x) D1, for dC/dt = L_b C."""
    D1 = difference_matrix(g, scheme)
    D2 = second_difference_matrix(g, scheme)
    diffusion = sp.diags(_diffusion_coefficient(g, v, horizon - t))
    drift = sp.diags(r * g.points)
    Lb = (diffusion @ D2 + drift @ D1).tocsr()
    return GeneratorMatrix(Lb, Role.BACKWARD, g, t, r)


@dataclass(frozen=True)
class PseudoHamiltonian:
    """
    H_LV = -i A + B P + C P^2 with diagonal coefficient operators

        A = r - sigma^2 - 4 sigma sigma_x x - sigma_x^2 x^2 - sigma sigma_xx x^2
        B = r x - 2 sigma^2 x - 2 sigma sigma_x x^2
        C = -(i/2) sigma^2 x^2
    """

    generator: GeneratorMatrix
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    position: sp.csr_matrix
    momentum: sp.csr_matrix
    momentum_sq: sp.csr_matrix

    @property
    def matrix(self) -> sp.csr_matrix:
        return self.generator.matrix


def build_pseudo_hamiltonian(
    g: Grid1D,
    v: Optional[VolSurface],
    r: float,
    tau: float,
    scheme: Scheme = Scheme.CENTRAL2,
) -> PseudoHamiltonian:
    x = g.points
    if v is None:
        sigma = sig_x = sig_xx = np.zeros_like(x)
    else:
        sigma, sig_x, sig_xx = (np.asarray(a, float) for a in v.derivatives(x, tau))
        if np.any(sigma <= 0.0):
            raise DomainError(f"volatility must be positive on the grid at tau={tau}")
    A = (
        r
        - sigma**2
        - 4.0 * sigma * sig_x * x
        - sig_x**2 * x**2
        - sigma * sig_xx * x**2
    )
    B = r * x - 2.0 * sigma**2 * x - 2.0 * sigma * sig_x * x**2
    C = -0.5j * sigma**2 * x**2
    P1 = first_derivative(g, scheme)
    P2 = second_derivative(g, scheme)
    H = (-1j * sp.diags(A) + sp.diags(B) @ P1 + sp.diags(C) @ P2).tocsr()
    return PseudoHamiltonian(
        generator=GeneratorMatrix(H, Role.PSEUDO_HAMILTONIAN, g, tau, r),
        A=A,
        B=B,
        C=C,
        position=position_operator(g),
        momentum=P1,
        momentum_sq=P2,
    )


def analytic_lognormal(S0: float, r: float, sigma: float, tau: float, g: Grid1D) -> np.ndarray:
    """
    Lognormal transition density of geometric Brownian motion on the grid.

    p(s) = exp(-(ln s - gamma)^2 / (2 sigma^2 tau)) / (s sigma sqrt(2 pi tau)),
    gamma = (r - sigma^2/2) tau + ln S0; zero for s <= 0.
    """
    if tau <= 0:
        raise DomainError("lognormal density needs tau > 0 (use a Gaussian initial state at tau=0)")
    if sigma <= 0:
        raise DomainError("lognormal density needs a constant sigma > 0")
    if not g.a < S0 < g.b:
        raise DomainError(f"spot {S0} must lie inside ({g.a}, {g.b})")
    gamma = (r - 0.5 * sigma**2) * tau + np.log(S0)
    x = g.points
    density = np.zeros_like(x)
    positive = x > 0
    density[positive] = lognorm.pdf(x[positive], s=sigma * np.sqrt(tau), scale=np.exp(gamma))
    return density


def gaussian_density(g: Grid1D, center: float, width: float) -> np.ndarray:
    """Gaussian bump exp(-(x-center)^2 / (2 width^2)) normalized to sum p dx = 1."""
    if width <= 0:
        raise DomainError("Gaussian width must be positive")
    p = np.exp(-0.5 * ((g.points - center) / width) ** 2)
    mass = p.sum() * g.delta
    if mass <= 0.0:
        raise DomainError(f"Gaussian centred at {center} has no mass on the grid")
    return p / mass


def total_mass(g: Grid1D, p: np.ndarray) -> float:
    return float(np.real(np.sum(p)) * g.delta)
