import numpy as np
import pytest

from kolmoprice.errors import DomainError
from kolmoprice.grid import Grid1D
from kolmoprice.volatility import (
    Domain,
    PolyVolSurface,
    SeparableTerm,
    SeparableVolSurface,
    sigma_derivatives,
    sigma_eval,
    sigma_max,
    surface_from_spec,
)


def test_constant_surface():
    v = PolyVolSurface.constant(0.2)
    assert v.is_constant
    assert not v.is_time_dependent
    assert v.degrees == (0, 0)
    s, ds, d2s = sigma_derivatives(v, np.array([10.0, 50.0]), 0.3)
    assert np.allclose(s, 0.2)
    assert np.allclose(ds, 0.0)
    assert np.allclose(d2s, 0.0)


def test_polynomial_eval_and_derivatives():
    # sigma = 0.1 + 0.01 s + 0.001 s^2 tau
    v = PolyVolSurface.from_triples([[0, 0, 0.1], [1, 0, 0.01], [2, 1, 0.001]])
    assert v.degrees == (2, 1)
    assert v.is_time_dependent
    s = np.array([1.0, 2.0, 3.0])
    tau = 0.5
    sig, ds, d2s = sigma_derivatives(v, s, tau)
    assert np.allclose(sig, 0.1 + 0.01 * s + 0.001 * s**2 * tau)
    assert np.allclose(ds, 0.01 + 0.002 * s * tau)
    assert np.allclose(d2s, 0.002 * tau)
    assert np.allclose(sigma_eval(v, s, tau), sig)


def test_repeated_triples_accumulate():
    v = PolyVolSurface.from_triples([[0, 0, 0.1], [0, 0, 0.05]])
    assert float(sigma_eval(v, 3.0, 0.0)) == pytest.approx(0.15)


def test_separable_matches_expanded_polynomial():
    terms = (
        SeparableTerm(1.0, (0.2, 0.001), (1.0,)),
        SeparableTerm(0.5, (0.0, 0.0, 1e-5), (0.0, 1.0)),
    )
    v = SeparableVolSurface(terms)
    assert v.rank == 2
    s = np.linspace(10, 90, 7)
    tau = np.linspace(0, 1, 7)
    assert np.allclose(v.eval(s, tau), v.to_poly().eval(s, tau))
    assert np.allclose(v.eval(s, tau), 0.2 + 0.001 * s + 0.5e-5 * s**2 * tau)


def test_positivity_checked_on_domain():
    with pytest.raises(DomainError, match="must be positive"):
        PolyVolSurface.from_triples([[0, 0, 0.1], [1, 0, -0.01]], Domain(0.0, 20.0, 1.0))
    PolyVolSurface.from_triples([[0, 0, 0.1], [1, 0, -0.01]], Domain(0.0, 5.0, 1.0))


def test_zero_surface_rejected():
    with pytest.raises(DomainError, match="only zero"):
        PolyVolSurface({(0, 0): 0.0})


def test_eval_outside_domain_rejected():
    v = PolyVolSurface.constant(0.2, Domain(1.0, 10.0, 1.0))
    with pytest.raises(DomainError, match="price outside"):
        sigma_eval(v, 11.0, 0.5)
    with pytest.raises(DomainError, match="time outside"):
        sigma_eval(v, 5.0, 1.5)


def test_sigma_max_samples_grid_and_time():
    g = Grid1D(0.0, 4.0, 4)
    v = PolyVolSurface.from_triples([[0, 0, 0.1], [1, 1, 0.05]])
    sm = sigma_max(v, g, 2.0)
    assert sm.value == pytest.approx(0.1 + 0.05 * 4.0 * 2.0)
    assert sm.n_price == g.size


def test_surface_from_spec_forms():
    assert surface_from_spec(0.3).is_constant
    poly = surface_from_spec([[0, 0, 0.2], [1, 0, 0.001]])
    assert isinstance(poly, PolyVolSurface)
    sep = surface_from_spec(
        {"rank": 1, "terms": [{"alpha": 2.0, "r_coeffs": [0.1], "q_coeffs": [1.0, 0.5]}]}
    )
    assert isinstance(sep, SeparableVolSurface)
    assert float(sep.eval(5.0, 1.0)) == pytest.approx(0.3)


def test_surface_from_spec_rejects_bad_forms():
    with pytest.raises(DomainError, match=r"\[k, q, c\]"):
        surface_from_spec([[0, 0]])
    with pytest.raises(DomainError, match="declared rank"):
        surface_from_spec({"rank": 2, "terms": [{"r_coeffs": [0.1], "q_coeffs": [1.0]}]})
    with pytest.raises(DomainError, match="unrecognised"):
        surface_from_spec("flat")
