"""Closed-form Black–Scholes prices, kept independent of the PDE machinery."""

import math

from scipy.stats import norm

from kolmoprice.errors import DomainError


def black_scholes_price(S0: float, K: float, r: float, sigma: float, T: float, kind: str) -> float:
    """European call or put under constant volatility and no dividends."""
    if S0 <= 0 or K <= 0:
        raise DomainError("spot and strike must be positive")
    if sigma <= 0 or T <= 0:
        raise DomainError("volatility and maturity must be positive")
    sqrt_t = math.sqrt(T)
    d1 = (math.log(S0 / K) + (r + 0.5 * sigma**2) * T) / (sigma * sqrt_t)
    d2 = d1 - sigma * sqrt_t
    discount = math.exp(-r * T)
    if kind == "call":
        return float(S0 * norm.cdf(d1) - K * discount * norm.cdf(d2))
    if kind == "put":
        return float(K * discount * norm.cdf(-d2) - S0 * norm.cdf(-d1))
    raise DomainError(f"option kind must be 'call' or 'put', got {kind!r}")
