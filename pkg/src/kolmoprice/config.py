import copy
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set, Tuple

import yaml
from dotenv import load_dotenv

from kolmoprice.errors import ConfigError, DomainError
from kolmoprice.grid import Grid1D, Scheme
from kolmoprice.logging_setup import get_logger
from kolmoprice.retrieval import OptionKind, PayoffSpec
from kolmoprice.volatility import Domain, VolSurface, surface_from_spec

logger = get_logger()

CONFIG_FILENAME = "kp.yaml"
SCHEMA_VERSION = 1

# Load .env file if present
load_dotenv()

_ENV_VAR_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
_ESCAPE_SENTINEL = "\x00KP_LITERAL_DOLLAR_BRACE\x00"

_warned: Set[str] = set()

DEFAULT_CONFIG = """schema_version: 1

model:
  r: 0.05
  S0: 100.0
  T: 1.0
  # constant, [[k, q, c], ...] triples, or {rank: R, terms: [...]}
  volatility: 0.2
  initial:
    kind: gaussian
    width: null

grid:
  a: 1.0
  b: 400.0
  n: 6
  scheme: central2

schrodinger:
  variant: mollified_window
  L_w: auto
  n_w: auto
  recovery: slice
  segments: 1

clock:
  enabled: auto
  n_y: 5
  profile: basis_delta
  scheme: spectral

payoffs:
  - {kind: put, K: 100.0}
  - {kind: call, K: 100.0}

retrieval:
  shots: 0
  seed: 1234

engine:
  tol: 1.0e-10
  max_state_dim: 8388608
  classical_steps: 4096
  classical_scheme: crank_nicolson

resources:
  eps_evol: 1.0e-3
  eps_schr: 1.0e-3
  eps_v: 1.0e-2
  n_w: 7
  n_y: 5
  assets: 1
  prep_degrees: [2]
  prep_width: 0.1
  eps_prep: 1.0e-3

overlap:
  samples: 20
  steps_per_sample: 64
  payoff: 0
  trusted_window: true

output:
  path: kp_result.json

envs:
  exact:
    retrieval:
      shots: 0
  sampled:
    retrieval:
      shots: 100000
"""


def _interpolate_env_vars(content: str, source: str) -> str:
    """
    Replace ${VAR} with the value of the environment variable VAR.

    A bare `$` is left untouched and `$${VAR}` produces a literal `${VAR}`.
    Referencing an unset variable is an error.
    """
    content = content.replace("$${", _ESCAPE_SENTINEL)

    def _sub(match: "re.Match[str]") -> str:
        name = match.group(1)
        value = os.environ.get(name)
        if value is None:
            raise ConfigError(f"Environment variable '{name}' referenced in {source} is not set.")
        return value

    content = _ENV_VAR_RE.sub(_sub, content)
    return content.replace(_ESCAPE_SENTINEL, "${")


def _deep_merge(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "gaussian"
    width: Optional[float] = None
    tau0: float = 0.05


@dataclass(frozen=True)
class ModelConfig:
    r: float
    S0: float
    T: float
    volatility: Any
    initial: InitialConfig = field(default_factory=InitialConfig)


@dataclass(frozen=True)
class GridConfig:
    a: float
    b: float
    n: int
    scheme: Scheme = Scheme.CENTRAL2

    def grid(self) -> Grid1D:
        return Grid1D(self.a, self.b, self.n)


@dataclass(frozen=True)
class SchrodingerConfig:
    variant: str = "mollified_window"
    L_w: Optional[float] = None
    n_w: Optional[int] = None
    window: Optional[Tuple[float, float]] = None
    erf_a: float = 6.0
    recovery: str = "slice"
    segments: int = 1


@dataclass(frozen=True)
class ClockSection:
    enabled: Optional[bool] = None
    n_y: int = 5
    profile: str = "basis_delta"
    width: Optional[float] = None
    scheme: Scheme = Scheme.SPECTRAL


@dataclass(frozen=True)
class RetrievalConfig:
    shots: int = 0
    seed: Optional[int] = 1234


@dataclass(frozen=True)
class EngineConfig:
    tol: float = 1e-10
    max_state_dim: int = 2**23
    classical_steps: int = 4096
    classical_scheme: str = "crank_nicolson"


@dataclass(frozen=True)
class ResourcesConfig:
    eps_evol: float = 1e-3
    eps_schr: float = 1e-3
    eps_v: float = 1e-2
    n_w: int = 7
    n_y: int = 5
    assets: int = 1
    prep_degrees: Tuple[int, ...] = (2,)
    prep_width: float = 0.1
    eps_prep: float = 1e-3


@dataclass(frozen=True)
class OverlapConfig:
    samples: int = 20
    steps_per_sample: int = 64
    payoff: int = 0
    trusted_window: bool = True


@dataclass(frozen=True)
class OutputConfig:
    path: str = "kp_result.json"


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    grid: GridConfig
    payoffs: Tuple[PayoffSpec, ...]
    schrodinger: SchrodingerConfig = field(default_factory=SchrodingerConfig)
    clock: ClockSection = field(default_factory=ClockSection)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    resources: ResourcesConfig = field(default_factory=ResourcesConfig)
    overlap: OverlapConfig = field(default_factory=OverlapConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def surface(self) -> VolSurface:
        return surface_from_spec(
            self.model.volatility, Domain(self.grid.a, self.grid.b, self.model.T)
        )


class _Reader:
    """Typed access to one mapping, reporting errors with their field path."""

    def __init__(self, raw: Any, path: str, allowed: List[str]) -> None:
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a mapping, got {type(raw).__name__}")
        unknown = sorted(set(raw) - set(allowed))
        if unknown:
            raise ConfigError(f"{self._join(path, unknown[0])}: unknown key")
        self.raw = raw
        self.path = path

    @staticmethod
    def _join(path: str, key: str) -> str:
        return f"{path}.{key}" if path else key

    def where(self, key: str) -> str:
        return self._join(self.path, key)

    def has(self, key: str) -> bool:
        return key in self.raw and self.raw[key] is not None

    def number(
        self, key: str, default: Optional[float] = None, positive: bool = False, required: bool = False
    ) -> Optional[float]:
        if not self.has(key):
            if required:
                raise ConfigError(f"{self.where(key)}: required")
            return default
        value = self.raw[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{self.where(key)}: expected a number, got {value!r}")
        if positive and not value > 0:
            raise ConfigError(f"{self.where(key)}: must be positive, got {value}")
        return float(value)

    def integer(
        self, key: str, default: Optional[int] = None, minimum: int = 0, required: bool = False
    ) -> Optional[int]:
        if not self.has(key):
            if required:
                raise ConfigError(f"{self.where(key)}: required")
            return default
        value = self.raw[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{self.where(key)}: expected an integer, got {value!r}")
        if value < minimum:
            raise ConfigError(f"{self.where(key)}: must be >= {minimum}, got {value}")
        return value

    def auto_number(self, key: str, positive: bool = True) -> Optional[float]:
        if self.raw.get(key) == "auto":
            return None
        return self.number(key, positive=positive)

    def auto_integer(self, key: str, minimum: int = 1) -> Optional[int]:
        if self.raw.get(key) == "auto":
            return None
        return self.integer(key, minimum=minimum)

    def choice(self, key: str, options: List[str], default: str) -> str:
        value = self.raw.get(key, default)
        if value is None:
            value = default
        if value not in options:
            raise ConfigError(f"{self.where(key)}: must be one of {', '.join(options)}, got {value!r}")
        return str(value)


def _parse_model(raw: Any) -> ModelConfig:
    m = _Reader(raw, "model", ["r", "S0", "T", "volatility", "initial"])
    if "volatility" not in m.raw:
        raise ConfigError("model.volatility: required")
    i = _Reader(m.raw.get("initial"), "model.initial", ["kind", "width", "tau0"])
    initial = InitialConfig(
        kind=i.choice("kind", ["gaussian", "lognormal"], "gaussian"),
        width=i.number("width", positive=True),
        tau0=float(i.number("tau0", 0.05, positive=True)),
    )
    return ModelConfig(
        r=float(m.number("r", required=True)),
        S0=float(m.number("S0", required=True, positive=True)),
        T=float(m.number("T", required=True, positive=True)),
        volatility=m.raw["volatility"],
        initial=initial,
    )


def _parse_grid(raw: Any) -> GridConfig:
    g = _Reader(raw, "grid", ["a", "b", "n", "scheme"])
    cfg = GridConfig(
        a=float(g.number("a", required=True)),
        b=float(g.number("b", required=True)),
        n=int(g.integer("n", required=True, minimum=2)),
        scheme=Scheme(g.choice("scheme", [s.value for s in Scheme], "central2")),
    )
    if cfg.b <= cfg.a:
        raise ConfigError(f"grid.b: must exceed grid.a ({cfg.b} <= {cfg.a})")
    try:
        cfg.grid()
    except DomainError as e:
        raise ConfigError(f"grid: {e}") from e
    return cfg


def _parse_payoffs(raw: Any, grid: GridConfig) -> Tuple[PayoffSpec, ...]:
    if raw is None:
        raise ConfigError("payoffs: required")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("payoffs: expected a non-empty list")
    specs = []
    for idx, item in enumerate(raw):
        p = _Reader(item, f"payoffs[{idx}]", ["kind", "K"])
        kind = p.choice("kind", [k.value for k in OptionKind], "put")
        K = float(p.number("K", required=True, positive=True))
        if not grid.a < K < grid.b:
            raise ConfigError(f"payoffs[{idx}].K: {K} outside the domain ({grid.a}, {grid.b})")
        specs.append(PayoffSpec(OptionKind(kind), K))
    return tuple(specs)


def _parse_schrodinger(raw: Any) -> SchrodingerConfig:
    s = _Reader(raw, "schrodinger", ["variant", "L_w", "n_w", "window", "erf_a", "recovery", "segments"])
    window = None
    if s.has("window"):
        w = s.raw["window"]
        if not (isinstance(w, list) and len(w) == 2 and all(isinstance(x, (int, float)) for x in w)):
            raise ConfigError(f"schrodinger.window: expected [a_xi, b_xi], got {w!r}")
        if w[1] <= w[0]:
            raise ConfigError(f"schrodinger.window: empty window {w!r}")
        window = (float(w[0]), float(w[1]))
    return SchrodingerConfig(
        variant=s.choice("variant", ["exponential", "erf_damped", "mollified_window"], "mollified_window"),
        L_w=s.auto_number("L_w"),
        n_w=s.auto_integer("n_w", minimum=2),
        window=window,
        erf_a=float(s.number("erf_a", 6.0, positive=True)),
        recovery=s.choice("recovery", ["slice", "weighted_average"], "slice"),
        segments=int(s.integer("segments", 1, minimum=1)),
    )


def _parse_clock(raw: Any) -> ClockSection:
    c = _Reader(raw, "clock", ["enabled", "n_y", "profile", "width", "scheme"])
    enabled = c.raw.get("enabled", "auto")
    if enabled not in ("auto", True, False, None):
        raise ConfigError(f"clock.enabled: must be auto, true or false, got {enabled!r}")
    return ClockSection(
        enabled=None if enabled in ("auto", None) else bool(enabled),
        n_y=int(c.integer("n_y", 5, minimum=2)),
        profile=c.choice("profile", ["basis_delta", "gaussian"], "basis_delta"),
        width=c.number("width", positive=True),
        scheme=Scheme(c.choice("scheme", ["spectral", "central2"], "spectral")),
    )


def _parse_retrieval(raw: Any) -> RetrievalConfig:
    r = _Reader(raw, "retrieval", ["shots", "seed"])
    return RetrievalConfig(
        shots=int(r.integer("shots", 0, minimum=0)),
        seed=r.integer("seed", 1234, minimum=0),
    )


def _parse_engine(raw: Any) -> EngineConfig:
    e = _Reader(raw, "engine", ["tol", "max_state_dim", "classical_steps", "classical_scheme"])
    tol = float(e.number("tol", 1e-10, positive=True))
    if not 1e-14 < tol < 1e-4:
        raise ConfigError(f"engine.tol: must lie in (1e-14, 1e-4), got {tol}")
    return EngineConfig(
        tol=tol,
        max_state_dim=int(e.integer("max_state_dim", 2**23, minimum=1)),
        classical_steps=int(e.integer("classical_steps", 4096, minimum=1)),
        classical_scheme=e.choice(
            "classical_scheme", ["crank_nicolson", "backward_euler"], "crank_nicolson"
        ),
    )


def _parse_resources(raw: Any) -> ResourcesConfig:
    r = _Reader(
        raw,
        "resources",
        ["eps_evol", "eps_schr", "eps_v", "n_w", "n_y", "assets", "prep_degrees", "prep_width", "eps_prep"],
    )
    degrees = r.raw["prep_degrees"] if r.has("prep_degrees") else [2]
    if (
        not isinstance(degrees, list)
        or not degrees
        or any(isinstance(q, bool) or not isinstance(q, int) or q < 0 for q in degrees)
    ):
        raise ConfigError(f"{r.where('prep_degrees')}: expected a non-empty list of degrees >= 0, got {degrees!r}")
    cfg = ResourcesConfig(
        eps_evol=float(r.number("eps_evol", 1e-3, positive=True)),
        eps_schr=float(r.number("eps_schr", 1e-3, positive=True)),
        eps_v=float(r.number("eps_v", 1e-2, positive=True)),
        n_w=int(r.integer("n_w", 7, minimum=1)),
        n_y=int(r.integer("n_y", 5, minimum=0)),
        assets=int(r.integer("assets", 1, minimum=1)),
        prep_degrees=tuple(degrees),
        prep_width=float(r.number("prep_width", 0.1, positive=True)),
        eps_prep=float(r.number("eps_prep", 1e-3, positive=True)),
    )
    for key in ("eps_evol", "eps_schr", "eps_prep"):
        if getattr(cfg, key) >= 1:
            raise ConfigError(f"resources.{key}: must be below 1")
    return cfg


def _parse_overlap(raw: Any, n_payoffs: int) -> OverlapConfig:
    o = _Reader(raw, "overlap", ["samples", "steps_per_sample", "payoff", "trusted_window"])
    payoff = int(o.integer("payoff", 0, minimum=0))
    if payoff >= n_payoffs:
        raise ConfigError(f"overlap.payoff: index {payoff} but only {n_payoffs} payoffs")
    trusted = o.raw.get("trusted_window", True)
    if not isinstance(trusted, bool):
        raise ConfigError(f"overlap.trusted_window: expected true or false, got {trusted!r}")
    return OverlapConfig(
        samples=int(o.integer("samples", 20, minimum=1)),
        steps_per_sample=int(o.integer("steps_per_sample", 64, minimum=1)),
        payoff=payoff,
        trusted_window=trusted,
    )


def parse_config(doc: Any) -> RunConfig:
    top = _Reader(
        doc,
        "",
        [
            "schema_version",
            "model",
            "grid",
            "schrodinger",
            "clock",
            "payoffs",
            "retrieval",
            "engine",
            "resources",
            "overlap",
            "output",
            "envs",
        ],
    )
    version = top.raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    model = _parse_model(top.raw.get("model"))
    grid = _parse_grid(top.raw.get("grid"))
    payoffs = _parse_payoffs(top.raw.get("payoffs"), grid)
    out = _Reader(top.raw.get("output"), "output", ["path"])
    path = out.raw.get("path", "kp_result.json")
    if not isinstance(path, str) or not path:
        raise ConfigError(f"output.path: expected a file name, got {path!r}")
    cfg = RunConfig(
        model=model,
        grid=grid,
        payoffs=payoffs,
        schrodinger=_parse_schrodinger(top.raw.get("schrodinger")),
        clock=_parse_clock(top.raw.get("clock")),
        retrieval=_parse_retrieval(top.raw.get("retrieval")),
        engine=_parse_engine(top.raw.get("engine")),
        resources=_parse_resources(top.raw.get("resources")),
        overlap=_parse_overlap(top.raw.get("overlap"), len(payoffs)),
        output=OutputConfig(path),
    )
    try:
        cfg.surface()
    except DomainError as e:
        raise ConfigError(f"model.volatility: {e}") from e
    if not grid.a < model.S0 < grid.b:
        raise ConfigError(f"model.S0: {model.S0} outside the domain ({grid.a}, {grid.b})")
    return cfg


def _select_profile(doc: Dict[str, Any], env: Optional[str], source: str) -> Dict[str, Any]:
    """
    Deep-merge the named envs profile over the root document.

    An explicitly requested profile (--env or KP_ENV) that does not exist is an
    error; it never falls back to the root settings.
    """
    explicit_env = env or os.getenv("KP_ENV")
    envs = doc.get("envs")
    if not explicit_env:
        return doc
    if not isinstance(envs, dict) or explicit_env not in envs:
        available = sorted(envs) if isinstance(envs, dict) else []
        detail = (
            f" (available: {', '.join(available)})" if available else f" (no 'envs' section in {source})"
        )
        raise ConfigError(f"Environment '{explicit_env}' is not defined in {source}{detail}.")
    profile = envs[explicit_env]
    if not isinstance(profile, dict):
        raise ConfigError(f"envs.{explicit_env}: expected a mapping")
    return _deep_merge(doc, profile)


def _apply_env_overrides(doc: Dict[str, Any]) -> Dict[str, Any]:
    seed = os.getenv("KP_SEED")
    if seed:
        try:
            doc.setdefault("retrieval", {})["seed"] = int(seed)
        except ValueError:
            if "KP_SEED" not in _warned:
                logger.warning(f"KP_SEED={seed!r} is not an integer; ignoring it.")
                _warned.add("KP_SEED")
    output = os.getenv("KP_OUTPUT")
    if output:
        doc.setdefault("output", {})["path"] = output
    return doc


def load_document(path: Optional[str] = None, env: Optional[str] = None) -> Dict[str, Any]:
    source = path or CONFIG_FILENAME
    if not os.path.exists(source):
        raise ConfigError(f"{source} not found (run 'kp init' to create one)")
    try:
        with open(source, "r", encoding="utf-8") as f:
            content = f.read()
        doc = yaml.safe_load(_interpolate_env_vars(content, source)) or {}
    except (yaml.YAMLError, OSError) as e:
        raise ConfigError(f"Error parsing {source}: {e}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    doc = _select_profile(doc, env, source)
    return _apply_env_overrides(doc)


def load_config(path: Optional[str] = None, env: Optional[str] = None) -> RunConfig:
    """
    Load and validate a run configuration.

    Priority (highest first): CLI flags (applied by the caller), KP_SEED /
    KP_OUTPUT, the selected envs profile, the root document.
    """
    return parse_config(load_document(path, env))
