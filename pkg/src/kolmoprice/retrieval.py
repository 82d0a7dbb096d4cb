"""
Payoff states, swap-test emulation and price assembly.

Conventions follow the closed-form derivation: call payoff (x - K)+, put
payoff (K - x)+. The price uses two overlaps of the normalized p(T):
F1 with the uniform state |+>^n and F2 with the normalized payoff state.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from kolmoprice.errors import DomainError, PostSelectionError
from kolmoprice.grid import Grid1D

NORM_TOL = 1e-8


class OptionKind(str, Enum):
    CALL = "call"
    PUT = "put"


@dataclass(frozen=True)
class PayoffSpec:
    kind: OptionKind
    K: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", OptionKind(self.kind))
        if not math.isfinite(self.K):
            raise DomainError(f"strike must be finite, got {self.K}")

    def payoff(self, x: np.ndarray) -> np.ndarray:
        if self.kind is OptionKind.CALL:
            return np.maximum(x - self.K, 0.0)
        return np.maximum(self.K - x, 0.0)

    def kappa(self, g: Grid1D) -> int:
        """Last in-the-money index for puts, first for calls."""
        x = g.points
        if self.kind is OptionKind.PUT:
            return int(np.nonzero(x <= self.K)[0][-1])
        return int(np.nonzero(x >= self.K)[0][0])

    def continuum_prefactor(self, g: Grid1D) -> float:
        """(b - K)^{3/2} for calls, (K - a)^{3/2} for puts."""
        span = g.b - self.K if self.kind is OptionKind.CALL else self.K - g.a
        return max(span, 0.0) ** 1.5


@dataclass(frozen=True)
class PayoffState:
    spec: PayoffSpec
    vector: np.ndarray
    norm_exact: float
    norm_continuum: float
    filling_ratio: float
    kappa: int


def filling_ratio(f: np.ndarray) -> float:
    """Mean of |f|^2 over the grid divided by 2 max|f|^2."""
    peak = np.max(np.abs(f)) ** 2
    if peak == 0.0:
        return 0.0
    return float(np.mean(np.abs(f) ** 2) / (2.0 * peak))


def payoff_state(spec: PayoffSpec, g: Grid1D) -> PayoffState:
    if not g.a < spec.K < g.b:
        raise DomainError(f"strike K={spec.K} outside the open domain ({g.a}, {g.b})")
    f = spec.payoff(g.points)
    nrm = float(np.linalg.norm(f))
    if nrm == 0.0:
        raise DomainError(f"payoff vanishes on the grid for K={spec.K}")
    continuum = spec.continuum_prefactor(g) / math.sqrt(3.0 * g.delta)
    return PayoffState(spec, f / nrm, nrm, continuum, filling_ratio(f), spec.kappa(g))


def uniform_state(N: int) -> np.ndarray:
    return np.full(N, 1.0 / math.sqrt(N))


@dataclass(frozen=True)
class SwapTestResult:
    estimate: float
    stderr: float
    exact: float
    n_shots: int


def _check_unit(name: str, v: np.ndarray) -> None:
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > NORM_TOL:
        raise DomainError(f"non-normalized input: |{name}| = {nrm:.12g}")


def swap_test_overlap(
    u: np.ndarray, v: np.ndarray, n_shots: int = 0, seed: Union[int, np.random.SeedSequence, None] = None
) -> SwapTestResult:
    """
    |<u|v>|^2 from a simulated swap test.

    The ancilla reads 0 with probability (1 + F)/2; F-hat = 2 k/N - 1 clamped
    to [0, 1]. n_shots = 0 returns the exact overlap with zero error.
    """
    _check_unit("u", u)
    _check_unit("v", v)
    if n_shots < 0:
        raise DomainError(f"n_shots must be >= 0, got {n_shots}")
    exact = float(abs(np.vdot(u, v)) ** 2)
    if n_shots == 0:
        return SwapTestResult(exact, 0.0, exact, 0)
    rng = np.random.default_rng(seed)
    successes = rng.binomial(n_shots, min(1.0, (1.0 + exact) / 2.0))
    estimate = min(max(2.0 * successes / n_shots - 1.0, 0.0), 1.0)
    stderr = math.sqrt(max(1.0 - estimate**2, 0.0) / n_shots)
    if estimate == 0.0:
        stderr = 1.0 / math.sqrt(n_shots)
    return SwapTestResult(estimate, stderr, exact, n_shots)


@dataclass(frozen=True)
class PricingResult:
    kind: OptionKind
    K: float
    value: float
    value_exact_norm: float
    F1: float
    F2: float
    n_shots: int
    stderr: float
    dx: float
    discount: float


Overlap = Union[float, SwapTestResult]


def _unpack(o: Overlap) -> SwapTestResult:
    if isinstance(o, SwapTestResult):
        return o
    return SwapTestResult(float(o), 0.0, float(o), 0)


def price_from_overlaps(
    F1: Overlap, F2: Overlap, spec: PayoffSpec, g: Grid1D, r: float, T: float
) -> PricingResult:
    """
    V = e^{-rT} P / sqrt(3 (b - a)) * sqrt((N - 1)/N) * sqrt(F2 / F1),
    P = (b - K)^{3/2} (call) or (K - a)^{3/2} (put).

    value_exact_norm replaces the continuum payoff norm by the exact discrete
    one, so it equals e^{-rT} sum f p dx whenever sum p dx = 1.
    """
    o1, o2 = _unpack(F1), _unpack(F2)
    discount = math.exp(-r * T)
    N = g.size
    prefactor = spec.continuum_prefactor(g)
    n_shots = max(o1.n_shots, o2.n_shots)
    if prefactor == 0.0:
        return PricingResult(spec.kind, spec.K, 0.0, 0.0, o1.estimate, o2.estimate, n_shots, 0.0, g.delta, discount)
    if o1.estimate <= 0.0:
        raise PostSelectionError(
            "uniform-overlap underflow: F1 <= 0 (p(T) norm blow-up or domain too wide)"
        )
    ratio = math.sqrt(o2.estimate / o1.estimate)
    value = discount * prefactor / math.sqrt(3.0 * (g.b - g.a)) * math.sqrt((N - 1) / N) * ratio
    if g.a < spec.K < g.b:
        norm_exact = payoff_state(spec, g).norm_exact
        value_exact = discount * norm_exact * ratio / math.sqrt(N)
    else:
        value_exact = value
    rel = 0.0
    if o2.estimate > 0.0:
        rel = 0.5 * math.hypot(o1.stderr / o1.estimate, o2.stderr / o2.estimate)
    return PricingResult(
        spec.kind, spec.K, value, value_exact, o1.estimate, o2.estimate, n_shots, value * rel, g.delta, discount
    )


def riemann_price(spec: PayoffSpec, g: Grid1D, p: np.ndarray, r: float, T: float) -> float:
    """Direct quadrature e^{-rT} sum_j f(x_j) p_j dx."""
    return float(math.exp(-r * T) * np.sum(spec.payoff(g.points) * np.real(p)) * g.delta)
