"""
Local-volatility surfaces sigma(s, tau).

Two forms are supported: a bivariate polynomial sum_{k,q} C_kq s^k tau^q, and a
small-rank separable sum sum_m alpha_m r_m(s) q_m(tau) with one-dimensional
polynomial factors. Spatial derivatives are analytic. Positivity is checked by
dense sampling when a domain is declared; it is not proven symbolically.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as P

from kolmoprice.errors import DomainError
from kolmoprice.grid import Grid1D

TAU_SAMPLES = 256
MAX_RANK = 8
_SPATIAL_SAMPLES = 1024
_DOMAIN_TOL = 1e-9


class Domain(NamedTuple):
    a: float
    b: float
    T: float


class SampledMax(NamedTuple):
    value: float
    n_price: int
    n_tau: int


ArrayLike = Union[float, np.ndarray]


def _horner(c: np.ndarray, s: ArrayLike, tau: ArrayLike) -> np.ndarray:
    """Evaluate sum_kq c[k, q] s^k tau^q: Horner in s over polynomials in tau."""
    s_arr, t_arr = np.broadcast_arrays(np.asarray(s, float), np.asarray(tau, float))
    result = P.polyval(t_arr, c[-1])
    for k in range(c.shape[0] - 2, -1, -1):
        result = result * s_arr + P.polyval(t_arr, c[k])
    return np.asarray(result, dtype=float)


class VolSurface:
    """Common interface; subclasses provide the coefficient matrix."""

    domain: Optional[Domain]

    def coefficient_matrix(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def degrees(self) -> Tuple[int, int]:
        c = self.coefficient_matrix()
        return c.shape[0] - 1, c.shape[1] - 1

    @property
    def is_time_dependent(self) -> bool:
        c = self.coefficient_matrix()
        return bool(np.any(c[:, 1:] != 0.0))

    @property
    def is_constant(self) -> bool:
        c = self.coefficient_matrix()
        return bool(np.all(c.ravel()[1:] == 0.0))

    def _check_inside(self, s: ArrayLike, tau: ArrayLike) -> None:
        if self.domain is None:
            return
        a, b, T = self.domain
        span = max(b - a, 1.0)
        s_arr = np.asarray(s, dtype=float)
        t_arr = np.asarray(tau, dtype=float)
        if np.any(s_arr < a - _DOMAIN_TOL * span) or np.any(s_arr > b + _DOMAIN_TOL * span):
            raise DomainError(f"price outside the declared domain [{a}, {b}]")
        if np.any(t_arr < -_DOMAIN_TOL) or np.any(t_arr > T * (1 + _DOMAIN_TOL) + _DOMAIN_TOL):
            raise DomainError(f"time outside the declared horizon [0, {T}]")

    def eval(self, s: ArrayLike, tau: ArrayLike) -> np.ndarray:
        self._check_inside(s, tau)
        return _horner(self.coefficient_matrix(), s, tau)

    def derivatives(self, s: ArrayLike, tau: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        self._check_inside(s, tau)
        c = self.coefficient_matrix()
        s_arr = np.asarray(s, float)
        t_arr = np.asarray(tau, float)
        sigma = _horner(c, s_arr, t_arr)
        if c.shape[0] == 1:
            zero = np.zeros_like(sigma)
            return sigma, zero, zero.copy()
        c_x = P.polyder(c, 1, axis=0)
        c_xx = P.polyder(c, 2, axis=0) if c.shape[0] > 2 else np.zeros((1, c.shape[1]))
        return sigma, _horner(c_x, s_arr, t_arr), _horner(c_xx, s_arr, t_arr)

    def check_positive(self, domain: Domain) -> None:
        a, b, T = domain
        s = np.linspace(a, b, _SPATIAL_SAMPLES)
        taus = np.linspace(0.0, T, TAU_SAMPLES) if T > 0 else np.zeros(1)
        ss, tt = np.meshgrid(s, taus, indexing="ij")
        values = _horner(self.coefficient_matrix(), ss, tt)
        if not np.all(np.isfinite(values)) or values.min() <= 0.0:
            i, j = np.unravel_index(np.argmin(values), values.shape)
            raise DomainError(
                f"volatility must be positive on the domain: sigma({ss[i, j]:.6g}, "
                f"{tt[i, j]:.6g}) = {values[i, j]:.6g}"
            )


@dataclass(frozen=True)
class PolyVolSurface(VolSurface):
    coeffs: Dict[Tuple[int, int], float]
    domain: Optional[Domain] = None
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.coeffs:
            raise DomainError("polynomial surface needs at least one coefficient")
        for (k, q), c in self.coeffs.items():
            if k < 0 or q < 0:
                raise DomainError(f"negative polynomial degree ({k}, {q})")
            if not np.isfinite(c):
                raise DomainError(f"non-finite coefficient at ({k}, {q})")
        if all(c == 0.0 for c in self.coeffs.values()):
            raise DomainError("polynomial surface has only zero coefficients")
        D_s = max(k for k, _ in self.coeffs)
        D_t = max(q for _, q in self.coeffs)
        mat = np.zeros((D_s + 1, D_t + 1))
        for (k, q), c in self.coeffs.items():
            mat[k, q] += c
        object.__setattr__(self, "_matrix", mat)
        if self.domain is not None:
            self.check_positive(self.domain)

    @classmethod
    def from_triples(
        cls, triples: Iterable[Sequence[float]], domain: Optional[Domain] = None
    ) -> "PolyVolSurface":
        coeffs: Dict[Tuple[int, int], float] = {}
        for k, q, c in triples:
            key = (int(k), int(q))
            coeffs[key] = coeffs.get(key, 0.0) + float(c)
        return cls(coeffs, domain)

    @classmethod
    def constant(cls, sigma: float, domain: Optional[Domain] = None) -> "PolyVolSurface":
        return cls({(0, 0): float(sigma)}, domain)

    def coefficient_matrix(self) -> np.ndarray:
        return self._matrix


@dataclass(frozen=True)
class SeparableTerm:
    alpha: float
    r_coeffs: Tuple[float, ...]
    q_coeffs: Tuple[float, ...]


@dataclass(frozen=True)
class SeparableVolSurface(VolSurface):
    terms: Tuple[SeparableTerm, ...]
    domain: Optional[Domain] = None
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 1 <= len(self.terms) <= MAX_RANK:
            raise DomainError(f"separable rank must be in [1, {MAX_RANK}], got {len(self.terms)}")
        D_s = max(len(t.r_coeffs) for t in self.terms) - 1
        D_t = max(len(t.q_coeffs) for t in self.terms) - 1
        if D_s < 0 or D_t < 0:
            raise DomainError("separable factors need at least one coefficient")
        mat = np.zeros((D_s + 1, D_t + 1))
        for t in self.terms:
            r = np.asarray(t.r_coeffs, float)
            q = np.asarray(t.q_coeffs, float)
            mat[: r.size, : q.size] += t.alpha * np.outer(r, q)
        object.__setattr__(self, "_matrix", mat)
        if not np.any(mat != 0.0):
            raise DomainError("separable surface is identically zero")
        if self.domain is not None:
            self.check_positive(self.domain)

    @property
    def rank(self) -> int:
        return len(self.terms)

    def coefficient_matrix(self) -> np.ndarray:
        return self._matrix

    def eval(self, s: ArrayLike, tau: ArrayLike) -> np.ndarray:
        self._check_inside(s, tau)
        s_arr = np.asarray(s, float)
        t_arr = np.asarray(tau, float)
        total = np.zeros(np.broadcast(s_arr, t_arr).shape)
        for t in self.terms:
            total = total + t.alpha * P.polyval(s_arr, t.r_coeffs) * P.polyval(t_arr, t.q_coeffs)
        return total

    def to_poly(self) -> PolyVolSurface:
        mat = self._matrix
        coeffs = {
            (k, q): float(mat[k, q])
            for k in range(mat.shape[0])
            for q in range(mat.shape[1])
            if mat[k, q] != 0.0
        }
        return PolyVolSurface(coeffs, self.domain)


def sigma_eval(v: VolSurface, s: ArrayLike, tau: ArrayLike) -> np.ndarray:
    return v.eval(s, tau)


def sigma_derivatives(
    v: VolSurface, s: ArrayLike, tau: ArrayLike
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(sigma, d sigma/ds, d^2 sigma/ds^2) by term-wise differentiation."""
    return v.derivatives(s, tau)


def sigma_max(v: VolSurface, g: Grid1D, T: float) -> SampledMax:
    """Sampled supremum of |sigma| over the grid points and TAU_SAMPLES times in [0, T]."""
    taus = np.linspace(0.0, T, TAU_SAMPLES) if T > 0 else np.zeros(1)
    ss, tt = np.meshgrid(g.points, taus, indexing="ij")
    values = np.abs(_horner(v.coefficient_matrix(), ss, tt))
    return SampledMax(float(values.max()), g.size, taus.size)


def surface_from_spec(spec: Any, domain: Optional[Domain] = None) -> VolSurface:
    """
    Build a surface from its config form.

    Accepted: a number (constant), a list of [k, q, c] triples, or a mapping
    {"rank": R, "terms": [{"alpha", "r_coeffs", "q_coeffs"}, ...]}.
    """
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return PolyVolSurface.constant(float(spec), domain)
    if isinstance(spec, list):
        for triple in spec:
            if not isinstance(triple, (list, tuple)) or len(triple) != 3:
                raise DomainError(f"coefficient entries must be [k, q, c], got {triple!r}")
        return PolyVolSurface.from_triples(spec, domain)
    if isinstance(spec, dict):
        terms_raw: List[Dict[str, Any]] = spec.get("terms") or []
        terms = tuple(
            SeparableTerm(
                alpha=float(t.get("alpha", 1.0)),
                r_coeffs=tuple(float(c) for c in t["r_coeffs"]),
                q_coeffs=tuple(float(c) for c in t["q_coeffs"]),
            )
            for t in terms_raw
        )
        rank = spec.get("rank", len(terms))
        if rank != len(terms):
            raise DomainError(f"declared rank {rank} does not match {len(terms)} terms")
        return SeparableVolSurface(terms, domain)
    raise DomainError(f"unrecognised volatility specification: {spec!r}")
