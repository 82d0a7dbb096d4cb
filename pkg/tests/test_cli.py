import json
import sys

import pytest

from kolmoprice import __main__ as main_mod
from kolmoprice.__main__ import main
from kolmoprice.errors import ConfigError, NumericError, PostSelectionError

TINY = """
schema_version: 1
model: {r: 0.05, S0: 100.0, T: 0.25, volatility: 0.2}
grid: {a: 40.0, b: 200.0, n: 5}
payoffs:
  - {kind: put, K: 100.0}
  - {kind: call, K: 100.0}
engine: {classical_steps: 256}
"""


def _run(monkeypatch, *argv):
    monkeypatch.setattr(sys, "argv", ["kp", *argv])
    with pytest.raises(SystemExit) as exc:
        main()
    return exc.value.code


def test_cli_no_args(capsys, monkeypatch):
    monkeypatch.setattr(sys, "argv", ["kp"])
    main()  # prints help
    captured = capsys.readouterr()
    assert "Available commands" in captured.out


def test_init_creates_config_once(capsys, monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(sys, "argv", ["kp", "init"])
    main()
    assert "Created kp.yaml" in capsys.readouterr().out
    assert (tmp_path / "kp.yaml").read_text(encoding="utf-8").startswith("schema_version: 1")

    assert _run(monkeypatch, "init") == 1


def test_malformed_config_exits_one(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "kp.yaml").write_text(TINY.replace("K: 100.0}\n  - {kind: call", "K: 250.0}\n  - {kind: call"), encoding="utf-8")
    assert _run(monkeypatch, "classical") == 1
    assert not (tmp_path / "kp_result.json").exists()


def test_seed_must_be_unsigned(monkeypatch, capsys):
    assert _run(monkeypatch, "price", "--seed", "-4") == 2
    assert "unsigned 64-bit" in capsys.readouterr().err


@pytest.mark.parametrize(
    "error,code",
    [
        (PostSelectionError("post-selection failed: p_succ below threshold"), 3),
        (NumericError("solver did not converge"), 2),
        (ConfigError("model.T: must be positive"), 1),
        (KeyboardInterrupt(), 130),
    ],
)
def test_error_exit_codes(monkeypatch, error, code):
    def boom(args):
        raise error

    monkeypatch.setattr(main_mod, "_load", boom)
    assert _run(monkeypatch, "price") == code


def test_classical_run_is_deterministic(monkeypatch, tmp_path, capsys):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "kp.yaml").write_text(TINY, encoding="utf-8")

    outputs = []
    for name in ("a.json", "b.json"):
        monkeypatch.setattr(sys, "argv", ["kp", "classical", "--deterministic", "--out", name])
        main()
        outputs.append((tmp_path / name).read_text(encoding="utf-8"))
    assert outputs[0] == outputs[1]

    record = json.loads(outputs[0])
    assert "timestamp" not in record
    assert record["command"] == "classical"
    assert [r["kind"] for r in record["results"]] == ["put", "call"]
    for result in record["results"]:
        assert result["value"] > 0.0
        assert result["reference"] > 0.0

    lines = (tmp_path / "a.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("kind,K,value,stderr")
    assert len(lines) == 3
    assert "put,100," in capsys.readouterr().out


def test_timestamp_added_without_deterministic(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "kp.yaml").write_text(TINY, encoding="utf-8")
    monkeypatch.setattr(sys, "argv", ["kp", "resources"])
    main()
    record = json.loads((tmp_path / "kp_result.json").read_text(encoding="utf-8"))
    assert "timestamp" in record
    assert record["estimate"]["sparsity"] == 3
    estimate = record["estimate"]
    assert estimate["stateprep"]["comparator"]["cnots"] == 12 * 5 - 4
    assert estimate["stateprep"]["gaussian_delta"]["degree"] > 0
    assert "queries_sparse" in estimate
    assert set(estimate["classical"]) == {"finite_difference", "exponential_integrator"}
    assert "stateprep.comparator" in record["labels"]["exact"]
    rows = (tmp_path / "kp_result.csv").read_text(encoding="utf-8")
    assert "stateprep.comparator.cnots," in rows
    assert "classical.exponential_integrator.flops," in rows
