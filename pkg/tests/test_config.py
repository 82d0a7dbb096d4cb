import pytest

from kolmoprice import config as config_module
from kolmoprice.config import DEFAULT_CONFIG, load_config
from kolmoprice.errors import ConfigError
from kolmoprice.grid import Scheme
from kolmoprice.retrieval import OptionKind

MINIMAL = """
schema_version: 1
model: {r: 0.05, S0: 100.0, T: 0.25, volatility: 0.2}
grid: {a: 40.0, b: 200.0, n: 5}
payoffs:
  - {kind: put, K: 100.0}
"""


def _write(tmp_path, monkeypatch, text, name="kp.yaml"):
    (tmp_path / name).write_text(text, encoding="utf-8")
    monkeypatch.chdir(tmp_path)


def test_default_config_parses(tmp_path, monkeypatch):
    _write(tmp_path, monkeypatch, DEFAULT_CONFIG)
    cfg = load_config()
    assert cfg.model.S0 == 100.0
    assert cfg.grid.scheme is Scheme.CENTRAL2
    assert [p.kind for p in cfg.payoffs] == [OptionKind.PUT, OptionKind.CALL]
    assert cfg.clock.enabled is None
    assert cfg.schrodinger.L_w is None
    assert cfg.schrodinger.n_w is None
    assert cfg.retrieval.shots == 0
    assert cfg.overlap.trusted_window is True
    assert cfg.resources.prep_degrees == (2,)
    assert cfg.resources.eps_prep == 1e-3


def test_minimal_config_defaults(tmp_path, monkeypatch):
    _write(tmp_path, monkeypatch, MINIMAL)
    cfg = load_config()
    assert cfg.grid.grid().size == 32
    assert cfg.schrodinger.variant == "mollified_window"
    assert cfg.engine.classical_scheme == "crank_nicolson"
    assert cfg.output.path == "kp_result.json"
    assert cfg.surface().is_constant


def test_config_profile(monkeypatch, tmp_path):
    _write(tmp_path, monkeypatch, DEFAULT_CONFIG)

    monkeypatch.setenv("KP_ENV", "sampled")
    assert load_config().retrieval.shots == 100000

    assert load_config(env="exact").retrieval.shots == 0


def test_unknown_profile_lists_available(monkeypatch, tmp_path):
    _write(tmp_path, monkeypatch, DEFAULT_CONFIG)
    with pytest.raises(ConfigError, match="available: exact, sampled"):
        load_config(env="prod")


def test_env_overrides(monkeypatch, tmp_path):
    _write(tmp_path, monkeypatch, MINIMAL)
    monkeypatch.setenv("KP_SEED", "99")
    monkeypatch.setenv("KP_OUTPUT", "run.json")
    cfg = load_config()
    assert cfg.retrieval.seed == 99
    assert cfg.output.path == "run.json"


def test_invalid_seed_override_warns_once(monkeypatch, tmp_path, caplog):
    _write(tmp_path, monkeypatch, MINIMAL)
    monkeypatch.setattr(config_module, "_warned", set())
    monkeypatch.setenv("KP_SEED", "abc")
    load_config()
    load_config()
    assert caplog.text.count("KP_SEED") == 1
    assert load_config().retrieval.seed == 1234


def test_missing_file(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(ConfigError, match="not found"):
        load_config()


def test_explicit_path(monkeypatch, tmp_path):
    _write(tmp_path, monkeypatch, MINIMAL, name="other.yaml")
    assert load_config("other.yaml").model.T == 0.25


@pytest.mark.parametrize(
    "text,message",
    [
        (MINIMAL.replace("schema_version: 1", "schema_version: 2"), "schema_version"),
        (MINIMAL.replace("n: 5}", "n: 5, foo: 1}"), r"grid\.foo: unknown key"),
        (MINIMAL.replace("K: 100.0", "K: 250.0"), r"payoffs\[0\]\.K"),
        (MINIMAL.replace("S0: 100.0", "S0: 300.0"), r"model\.S0"),
        (MINIMAL.replace("T: 0.25", "T: -1.0"), r"model\.T: must be positive"),
        (MINIMAL.replace("volatility: 0.2", "volatility: -0.2"), r"model\.volatility"),
        (MINIMAL.replace("kind: put", "kind: straddle"), r"payoffs\[0\]\.kind"),
        (MINIMAL.replace("a: 40.0, ", ""), r"grid\.a: required"),
        (MINIMAL.replace("b: 200.0", "b: .inf"), r"^grid: grid endpoints must be finite"),
        (MINIMAL + "engine: {tol: 0.1}\n", r"engine\.tol"),
        (MINIMAL + "clock: {enabled: sometimes}\n", r"clock\.enabled"),
        (MINIMAL + "overlap: {payoff: 3}\n", r"overlap\.payoff"),
        (MINIMAL + "schrodinger: {window: [3, 1]}\n", r"schrodinger\.window"),
        (MINIMAL + "resources: {prep_degrees: []}\n", r"resources\.prep_degrees"),
        (MINIMAL + "resources: {eps_prep: 2.0}\n", r"resources\.eps_prep: must be below 1"),
    ],
)
def test_invalid_configs(monkeypatch, tmp_path, text, message):
    _write(tmp_path, monkeypatch, text)
    with pytest.raises(ConfigError, match=message):
        load_config()


def test_json_config_accepted(monkeypatch, tmp_path):
    text = (
        '{"schema_version": 1, "model": {"r": 0.0, "S0": 5.0, "T": 1.0, "volatility": '
        '[[0, 0, 0.2], [1, 0, 0.01]]}, "grid": {"a": 1.0, "b": 10.0, "n": 4}, '
        '"payoffs": [{"kind": "call", "K": 5.0}]}'
    )
    _write(tmp_path, monkeypatch, text, name="run.json")
    cfg = load_config("run.json")
    assert cfg.surface().degrees == (1, 0)
