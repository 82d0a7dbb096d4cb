import math

import numpy as np
import pytest
import scipy.linalg as la

from kolmoprice.clock import (
    ClockConfig,
    ClockProfile,
    attach_clock,
    build_clock_hamiltonian,
    clock_profile,
    evolve_clocked,
    extract_at_time,
    gaussian_degree_bound,
    gaussian_delta,
)
from kolmoprice.errors import DomainError, NumericError
from kolmoprice.evolve import expm_action
from kolmoprice.generator import build_forward_generator, gaussian_density
from kolmoprice.grid import Grid1D
from kolmoprice.schrodinger import (
    ExtendedState,
    WRepresentation,
    WVariant,
    evolve_extended,
    initial_extended_state,
    plan_w_grid,
    prepare_w_state,
    split_generator,
)
from kolmoprice.volatility import PolyVolSurface


def test_aligned_clock_grid():
    cfg = ClockConfig.aligned(0.25, 5)
    assert cfg.n_y == 5
    assert cfg.g_y.b >= 1.25 * 0.25
    assert cfg.g_y.nearest_index(0.25) == 24
    assert cfg.g_y.points[24] == pytest.approx(0.25)
    taus = cfg.tau_values()
    assert taus.max() == pytest.approx(0.25)
    assert np.all(np.diff(taus) >= 0)


def test_clock_config_validation():
    with pytest.raises(DomainError, match="buffer violation"):
        ClockConfig(Grid1D(0.0, 0.3, 4), 0.25)
    with pytest.raises(DomainError, match="start at y=0"):
        ClockConfig(Grid1D(0.1, 1.0, 4), 0.25)
    with pytest.raises(DomainError, match="Gaussian clock width"):
        ClockConfig.aligned(0.25, 5, ClockProfile.GAUSSIAN, width=1e-4)
    with pytest.raises(DomainError, match="no room"):
        ClockConfig.aligned(0.25, 0)


def test_gaussian_delta_profile():
    g_y = Grid1D(0.0, 1.0, 6)
    psi = gaussian_delta(g_y, 0.0, 0.05)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert np.argmax(psi) == 0
    # periodic images make the profile symmetric about y = 0
    assert psi[1] == pytest.approx(psi[-1], rel=0.05)


def test_gaussian_degree_bound_formula():
    eps, width = 1e-3, 0.1
    expected = (math.log(1e3) + math.log(10.0)) / math.log(1.0 + 0.2 * math.log(1e3))
    assert gaussian_degree_bound(eps, width) == pytest.approx(expected)
    with pytest.raises(DomainError):
        gaussian_degree_bound(2.0, 0.1)


def test_clock_profile_basis_delta():
    cfg = ClockConfig.aligned(1.0, 4)
    profile = clock_profile(cfg)
    assert profile[0] == 1.0
    assert profile.sum() == 1.0


def test_clock_hamiltonian_follows_time_dependence():
    rng = np.random.default_rng(7)
    M0 = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    M1 = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    H0 = (M0 + M0.conj().T) / 4
    H1 = (M1 + M1.conj().T) / 4
    T = 1.0
    cfg = ClockConfig.aligned(T, 6)
    H = build_clock_hamiltonian(lambda tau: H0 + 0.2 * tau * H1, cfg)

    v = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
    state = np.kron(v, clock_profile(cfg))
    evolved = expm_action(H, state, T).reshape(4, cfg.g_y.size)
    piece = evolved[:, cfg.g_y.nearest_index(T)]
    piece = piece / np.linalg.norm(piece)

    reference = v.copy()
    steps = 400
    for k in range(steps):
        tau = (k + 0.5) * T / steps
        reference = la.expm(-1j * (H0 + 0.2 * tau * H1) * T / steps) @ reference
    overlap = abs(np.vdot(reference, piece))
    assert overlap > 0.95


@pytest.fixture
def small_problem():
    g = Grid1D(40.0, 200.0, 4)
    L = build_forward_generator(g, PolyVolSurface.constant(0.2), 0.05, 0.0)
    S, H_K = split_generator(L)
    T = 0.25
    plan = plan_w_grid([S], T)
    w_state = prepare_w_state(WVariant.MOLLIFIED_WINDOW, plan.grid)
    p0 = gaussian_density(g, 100.0, 15.0)
    return S, H_K, T, plan, w_state, initial_extended_state(p0, w_state)


def test_time_independent_clock_matches_unclocked(small_problem):
    S, H_K, T, plan, _, state0 = small_problem
    cfg = ClockConfig.aligned(T, 4)
    clocked, _ = evolve_clocked(attach_clock(state0, cfg), plan.grid, lambda tau: (S, H_K), cfg, T)
    piece = extract_at_time(clocked, cfg, T)
    assert piece.localization == pytest.approx(1.0, abs=1e-8)
    assert piece.weight == pytest.approx(1.0, abs=1e-8)
    unclocked, _ = evolve_extended(state0, plan.grid, (S, H_K), T)
    assert np.allclose(piece.state.amplitudes * piece.weight, unclocked.amplitudes, atol=1e-6)


def test_attach_clock_shapes(small_problem):
    _, _, T, _, _, state0 = small_problem
    cfg = ClockConfig.aligned(T, 3)
    clocked = attach_clock(state0, cfg)
    assert clocked.shape == state0.shape + (cfg.g_y.size,)
    with pytest.raises(DomainError, match="unclocked"):
        attach_clock(clocked, cfg)


def test_evolve_clocked_requires_clocked_state(small_problem):
    S, H_K, T, plan, _, state0 = small_problem
    cfg = ClockConfig.aligned(T, 3)
    with pytest.raises(DomainError, match="clocked"):
        evolve_clocked(state0, plan.grid, lambda tau: (S, H_K), cfg, T)


def test_extract_detects_dispersed_packet():
    cfg = ClockConfig.aligned(1.0, 5)
    amps = np.ones((2, 4, cfg.g_y.size), dtype=complex)
    with pytest.raises(NumericError, match="dispersed"):
        extract_at_time(ExtendedState(amps, WRepresentation.P), cfg, 1.0)
    with pytest.raises(DomainError, match="extraction time"):
        extract_at_time(ExtendedState(amps, WRepresentation.P), cfg, 10.0)
