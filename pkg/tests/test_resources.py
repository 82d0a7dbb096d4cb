import math

import numpy as np
import pytest
import scipy.sparse as sp

from kolmoprice.clock import gaussian_degree_bound
from kolmoprice.errors import DomainError
from kolmoprice.grid import Grid1D
from kolmoprice.resources import (
    ASYMPTOTIC,
    EXACT,
    ClassicalMethod,
    PrepKind,
    classical_flops,
    estimate_resources,
    hamiltonian_norm_bound,
    multiasset_scaling,
    norm_bound_formula,
    postselection_queries,
    simulation_cost,
    sparsity,
    stateprep_cost,
    swap_test_repetitions,
)
from kolmoprice.volatility import PolyVolSurface


def test_sparsity():
    assert sparsity(False) == 3
    assert sparsity(True) == 5


def test_norm_bound():
    assert norm_bound_formula(0.2, 1.0, 400.0, 10) == pytest.approx(0.04 * 400.0**2 * 4.0**10)
    g = Grid1D(1.0, 400.0, 6)
    v = PolyVolSurface.from_triples([[0, 0, 0.2], [0, 1, 0.1]])
    nb = hamiltonian_norm_bound(v, g, 1.0, H=sp.diags([3.0, -5.0]))
    assert nb.sigma_max == pytest.approx(0.3)
    assert nb.measured == pytest.approx(5.0)
    assert nb.bound == pytest.approx(norm_bound_formula(0.3, 1.0, 400.0, 6))


def test_simulation_cost():
    cost = simulation_cost(3, 2.0, 0.5, 1e-3, 6, 8)
    assert cost.gamma == pytest.approx(3.0)
    log_inv = math.log(1e3)
    tail = log_inv / math.log(math.e + log_inv / 3.0)
    assert cost.queries_block == pytest.approx(3.0 + tail)
    assert cost.gates == pytest.approx(cost.queries_block * cost.block_encoding_gates)
    assert cost.valid == (3.0 <= tail)
    assert cost.kind == ASYMPTOTIC
    with pytest.raises(DomainError, match="below 1"):
        simulation_cost(3, 2.0, 0.5, 1.5, 6, 8)
    with pytest.raises(DomainError, match="positive"):
        simulation_cost(3, 0.0, 0.5, 1e-3, 6, 8)


def test_exact_gate_counts():
    comparator = stateprep_cost(PrepKind.COMPARATOR, 10)
    assert (comparator.cnots, comparator.ancillas, comparator.kind) == (116, 9, EXACT)
    payoff = stateprep_cost(PrepKind.PAYOFF_STATE, 10)
    assert payoff.cnots == 566
    swap = stateprep_cost("swap_test", 10)
    assert (swap.cnots, swap.ancillas) == (70, 1)


def test_asymptotic_gate_counts():
    gauss = stateprep_cost(PrepKind.GAUSSIAN_DELTA, 6, width=0.1, eps=1e-3)
    assert gauss.kind == ASYMPTOTIC
    assert gauss.degree == pytest.approx(gaussian_degree_bound(1e-3, 0.1))
    poly = stateprep_cost(PrepKind.PIECEWISE_POLY, 8, degrees=(2, 3))
    assert poly.cnots == pytest.approx(5 * 8 * 3)
    with pytest.raises(DomainError, match="at least one piece"):
        stateprep_cost(PrepKind.PIECEWISE_POLY, 8)
    with pytest.raises(DomainError, match="width and eps"):
        stateprep_cost(PrepKind.GAUSSIAN_DELTA, 8)


def test_multiasset_scaling_is_fifth_power():
    scaling = multiasset_scaling(2, 6)
    assert scaling.norm_factor == 4.0
    assert scaling.sparsity_factor == 4.0 * 9
    assert scaling.product == pytest.approx(32.0)
    assert multiasset_scaling(3, 6).product == pytest.approx(243.0)


def test_classical_and_retrieval_costs():
    cost = classical_flops(1024, 1.0, 3, ClassicalMethod.FINITE_DIFFERENCE)
    assert cost.flops == pytest.approx(3 * 1024.0**3)
    assert cost.memory == pytest.approx(3 * 1024.0)
    assert postselection_queries(1e-3, 2.0, 1.0) == pytest.approx(4 * math.log(1e3))
    assert swap_test_repetitions(0.01) == pytest.approx(1e4)


def test_estimate_resources_switches_sparsity_with_clock():
    g = Grid1D(1.0, 400.0, 6)
    flat = estimate_resources(PolyVolSurface.constant(0.2), g, 1.0, 7, 5, 1e-3, 1e-3, 1e-2)
    assert flat.sparsity == 3
    assert flat.registers["clock"]["prep"] == 0.0
    skew = PolyVolSurface.from_triples([[0, 0, 0.2], [0, 1, 0.05]])
    timed = estimate_resources(skew, g, 1.0, 7, 5, 1e-3, 1e-3, 1e-2)
    assert timed.sparsity == 5
    assert timed.registers["clock"]["prep"] == 1.0
    record = timed.to_dict()
    assert record["registers"]["main"]["retrieval"] == pytest.approx(1e4)
    assert record["multiasset"]["d"] == 1
    assert record["quantum_vs_classical"]["classical_N3"] == pytest.approx(64.0**3)
    assert np.isfinite(record["gates"])


def test_estimate_resources_lists_every_circuit():
    g = Grid1D(1.0, 400.0, 6)
    skew = PolyVolSurface.from_triples([[0, 0, 0.2], [0, 1, 0.05]])
    est = estimate_resources(
        skew, g, 1.0, 7, 5, 1e-3, 1e-3, 1e-2, prep_degrees=(2, 1), prep_width=0.1, eps_prep=1e-3
    )
    record = est.to_dict()
    prep = record["stateprep"]
    assert set(prep) == {kind.value for kind in PrepKind}
    assert prep["comparator"]["cnots"] == 12 * 6 - 4
    assert prep["comparator"]["ancillas"] == 5
    assert prep["comparator"]["kind"] == EXACT
    assert prep["gaussian_delta"]["degree"] == gaussian_degree_bound(1e-3, 0.1)
    assert prep["gaussian_delta"]["kind"] == ASYMPTOTIC
    assert prep["piecewise_poly"]["cnots"] == stateprep_cost(PrepKind.PIECEWISE_POLY, 6, degrees=(2, 1)).cnots
    assert record["queries_sparse"] > 0.0
    assert set(record["classical"]) == {"finite_difference", "exponential_integrator"}
    assert record["classical"]["exponential_integrator"]["flops"] == pytest.approx(5 * 64.0**3)
