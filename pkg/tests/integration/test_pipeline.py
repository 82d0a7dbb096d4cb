import numpy as np
import pytest

from kolmoprice.config import EngineConfig, GridConfig, ModelConfig, RunConfig
from kolmoprice.core import PRICE_COLUMNS, classical_forward, quantum_solution, run_compare, run_price
from kolmoprice.generator import total_mass
from kolmoprice.retrieval import OptionKind, PayoffSpec


@pytest.fixture(scope="module")
def small_run():
    """Coarse grid so the extended state stays small."""
    return RunConfig(
        model=ModelConfig(r=0.05, S0=100.0, T=0.25, volatility=0.2),
        grid=GridConfig(40.0, 200.0, 5),
        payoffs=(PayoffSpec(OptionKind.PUT, 100.0), PayoffSpec(OptionKind.CALL, 100.0)),
        engine=EngineConfig(classical_steps=512),
    )


def test_quantum_density_matches_classical(small_run):
    run = quantum_solution(small_run)
    p_T, drift = classical_forward(small_run)
    assert not run.clocked
    assert 0.0 < run.p_succ <= 1.0
    assert drift < 1e-8
    error = np.linalg.norm(run.p_T - p_T) / np.linalg.norm(p_T)
    assert error < 2e-2
    g = small_run.grid.grid()
    assert total_mass(g, run.p_T) == pytest.approx(total_mass(g, p_T), rel=2e-2)


def test_compare_prices_agree(small_run):
    record, rows = run_compare(small_run)
    assert [row[0] for row in rows] == ["put", "call"]
    for _, _, quantum, classical, difference, relative in rows:
        assert quantum > 0.0
        assert classical > 0.0
        assert difference == pytest.approx(quantum - classical)
        assert relative < 5e-2
    assert record["diagnostics"]["clocked"] is False
    assert record["diagnostics"]["n_w"] >= 1


def test_sampled_price_brackets_exact(small_run):
    exact, _ = run_price(small_run, shots=0)
    sampled, rows = run_price(small_run, shots=200_000, seed=5)
    again, _ = run_price(small_run, shots=200_000, seed=5)
    assert sampled["results"] == again["results"]
    for exact_row, row in zip(exact["results"], sampled["results"]):
        assert row["n_shots"] == 200_000
        assert row["stderr"] > 0.0
        assert abs(row["value"] - exact_row["value"]) < 6 * row["stderr"]
    assert len(rows[0]) == len(PRICE_COLUMNS)
