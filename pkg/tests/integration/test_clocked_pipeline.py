from kolmoprice.config import ClockSection, EngineConfig, GridConfig, ModelConfig, RunConfig
from kolmoprice.core import run_compare
from kolmoprice.retrieval import OptionKind, PayoffSpec


def test_time_dependent_volatility_runs_clocked():
    # sigma rises from 0.20 to 0.22 over the horizon
    cfg = RunConfig(
        model=ModelConfig(r=0.05, S0=100.0, T=0.25, volatility=[[0, 0, 0.2], [0, 1, 0.08]]),
        grid=GridConfig(40.0, 200.0, 4),
        payoffs=(PayoffSpec(OptionKind.PUT, 100.0),),
        clock=ClockSection(n_y=4),
        engine=EngineConfig(classical_steps=512),
    )
    record, rows = run_compare(cfg)
    diagnostics = record["diagnostics"]
    assert diagnostics["clocked"] is True
    assert diagnostics["localization"] > 0.5
    ((kind, _, quantum, classical, _, relative),) = rows
    assert kind == "put"
    assert quantum > 0.0
    assert classical > 0.0
    assert relative < 1e-1
    assert record["quantum"][0]["reference"] == ""
