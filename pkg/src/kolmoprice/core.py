"""Pipeline orchestration behind the CLI commands."""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from kolmoprice.clock import (
    ClockConfig,
    attach_clock,
    clock_profile,
    evolve_clocked,
    extract_at_time,
)
from kolmoprice.config import RunConfig
from kolmoprice.errors import DomainError
from kolmoprice.evolve import implicit_stepper, overlap_series, trusted_window
from kolmoprice.generator import (
    analytic_lognormal,
    build_backward_generator,
    build_forward_generator,
    gaussian_density,
    total_mass,
)
from kolmoprice.grid import Grid1D
from kolmoprice.logging_setup import get_logger
from kolmoprice.oracles import black_scholes_price
from kolmoprice.resources import estimate_resources
from kolmoprice.retrieval import (
    PayoffSpec,
    PricingResult,
    payoff_state,
    price_from_overlaps,
    riemann_price,
    swap_test_overlap,
    uniform_state,
)
from kolmoprice.schrodinger import (
    ExtendedState,
    WRepresentation,
    build_extended_hamiltonian,
    evolve_extended,
    initial_extended_state,
    plan_w_grid,
    prepare_w_state,
    recover_solution,
    split_generator,
    w_grid,
)
from kolmoprice.volatility import VolSurface, sigma_max

logger = get_logger()

PRICE_COLUMNS = [
    "kind",
    "K",
    "value",
    "stderr",
    "F1",
    "F2",
    "n_shots",
    "value_exact_norm",
    "riemann",
    "reference",
]
COMPARE_COLUMNS = ["kind", "K", "quantum", "classical", "difference", "relative"]
OVERLAP_COLUMNS = ["t", "overlap_forward", "overlap_backward"]
RESOURCE_COLUMNS = ["quantity", "value"]

# Time samples of S used to size the w register for time-dependent surfaces.
_PLAN_SAMPLES = 5


def constant_sigma(v: VolSurface) -> Optional[float]:
    return float(v.coefficient_matrix()[0, 0]) if v.is_constant else None


def initial_density(cfg: RunConfig, g: Grid1D, v: VolSurface) -> Tuple[np.ndarray, float]:
    """Initial density and the time tau it represents."""
    init = cfg.model.initial
    if init.kind == "lognormal":
        sigma = constant_sigma(v)
        if sigma is None:
            raise DomainError("a lognormal initial state needs a constant volatility")
        if init.tau0 >= cfg.model.T:
            raise DomainError(f"tau0={init.tau0} must be below T={cfg.model.T}")
        return analytic_lognormal(cfg.model.S0, cfg.model.r, sigma, init.tau0, g), init.tau0
    width = init.width if init.width is not None else 2.0 * g.delta
    return gaussian_density(g, cfg.model.S0, width), 0.0


@dataclass(frozen=True)
class QuantumRun:
    p_T: np.ndarray
    p_succ: float
    p_star: float
    L_w: float
    n_w: int
    lambda_min: float
    lambda_max: float
    clocked: bool
    localization: Optional[float]
    norm_drift: float
    wall_time: float


def _forward_builder(cfg: RunConfig, g: Grid1D, v: VolSurface, tau_start: float) -> Callable[[float], Any]:
    def build(t: float) -> Any:
        return build_forward_generator(g, v, cfg.model.r, tau_start + t, cfg.grid.scheme)

    return build


def quantum_solution(cfg: RunConfig) -> QuantumRun:
    """Schrödingerised (optionally clocked) emulation of the forward solve."""
    g = cfg.grid.grid()
    v = cfg.surface()
    p0, tau_start = initial_density(cfg, g, v)
    horizon = cfg.model.T - tau_start
    forward = _forward_builder(cfg, g, v, tau_start)

    def split_at(t: float) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        return split_generator(forward(t))

    sc = cfg.schrodinger
    clocked = cfg.clock.enabled if cfg.clock.enabled is not None else v.is_time_dependent
    ccfg: Optional[ClockConfig] = None
    if clocked:
        ccfg = ClockConfig.aligned(
            horizon, cfg.clock.n_y, cfg.clock.profile, cfg.clock.width, cfg.clock.scheme
        )
        sample_times: Sequence[float] = ccfg.tau_values()
    elif v.is_time_dependent:
        sample_times = np.linspace(0.0, horizon, _PLAN_SAMPLES)
    else:
        sample_times = [0.0]
    plan = plan_w_grid([split_at(float(t))[0] for t in sample_times], horizon, sc.variant, sc.L_w, sc.n_w)
    g_w = plan.grid
    w_state = prepare_w_state(sc.variant, g_w, sc.window, sc.erf_a)
    state0 = initial_extended_state(p0, w_state)
    logger.info(
        f"Schrödingerised solve: N={g.size}, N_w={g_w.size}, clocked={clocked}, p*={plan.p_star:.4g}"
    )

    localization: Optional[float] = None
    if ccfg is not None:
        final, report = evolve_clocked(
            attach_clock(state0, ccfg), g_w, split_at, ccfg, horizon, cfg.engine.tol, cfg.engine.max_state_dim
        )
        piece = extract_at_time(final, ccfg, horizon)
        localization = piece.localization
        restored = piece.state.amplitudes * (piece.weight / clock_profile(ccfg)[0])
        final = ExtendedState(restored, WRepresentation.P)
    else:
        split: Any = split_at if v.is_time_dependent else split_at(0.0)
        final, report = evolve_extended(
            state0, g_w, split, horizon, sc.segments, cfg.engine.tol, cfg.engine.max_state_dim
        )
    rec = recover_solution(final, w_state, plan.p_star, sc.recovery)
    p_T = np.real(rec.vector) * np.linalg.norm(p0)
    return QuantumRun(
        p_T=p_T,
        p_succ=rec.p_succ,
        p_star=rec.p_star,
        L_w=plan.L_w,
        n_w=plan.n_w,
        lambda_min=plan.lambda_min,
        lambda_max=plan.lambda_max,
        clocked=bool(clocked),
        localization=localization,
        norm_drift=report.max_norm_drift,
        wall_time=report.wall_time,
    )


def classical_forward(cfg: RunConfig) -> Tuple[np.ndarray, float]:
    """CrankNicolson (or BackwardEuler) reference p(T); returns it with its mass drift."""
    g = cfg.grid.grid()
    v = cfg.surface()
    p0, tau_start = initial_density(cfg, g, v)
    horizon = cfg.model.T - tau_start
    builder: Any = _forward_builder(cfg, g, v, tau_start)
    if not v.is_time_dependent:
        builder = builder(0.0)
    report = implicit_stepper(
        builder, p0, horizon, cfg.engine.classical_steps, cfg.engine.classical_scheme, grid=g
    )
    return report.final, report.max_norm_drift


def classical_backward(cfg: RunConfig, spec: PayoffSpec) -> float:
    """Discounted price at S0 from the backward equation started at the payoff."""
    g = cfg.grid.grid()
    v = cfg.surface()
    T = cfg.model.T

    def build(t: float) -> Any:
        return build_backward_generator(g, v, cfg.model.r, t, T, cfg.grid.scheme)

    builder: Any = build if v.is_time_dependent else build(0.0)
    report = implicit_stepper(
        builder, spec.payoff(g.points), T, cfg.engine.classical_steps, cfg.engine.classical_scheme
    )
    undiscounted = float(np.interp(cfg.model.S0, g.points, report.final))
    return float(np.exp(-cfg.model.r * T) * undiscounted)


def price_payoffs(
    cfg: RunConfig, g: Grid1D, p_T: np.ndarray, shots: int, seed: Optional[int]
) -> List[PricingResult]:
    """Swap-test retrieval for every payoff, sharing one p(T)."""
    nrm = np.linalg.norm(p_T)
    if nrm == 0.0:
        raise DomainError("final density vanished")
    phat = p_T / nrm
    seeds = np.random.SeedSequence(seed).spawn(1 + len(cfg.payoffs))
    F1 = swap_test_overlap(uniform_state(g.size), phat, shots, seeds[0])
    results = []
    for spec, ss in zip(cfg.payoffs, seeds[1:]):
        F2 = swap_test_overlap(payoff_state(spec, g).vector, phat, shots, ss)
        results.append(price_from_overlaps(F1, F2, spec, g, cfg.model.r, cfg.model.T))
    return results


def _reference(cfg: RunConfig, v: VolSurface, spec: PayoffSpec) -> Optional[float]:
    sigma = constant_sigma(v)
    if sigma is None:
        return None
    return black_scholes_price(cfg.model.S0, spec.K, cfg.model.r, sigma, cfg.model.T, spec.kind.value)


def _rows(
    cfg: RunConfig, v: VolSurface, g: Grid1D, p_T: np.ndarray, results: List[PricingResult]
) -> List[List[Any]]:
    rows = []
    for spec, res in zip(cfg.payoffs, results):
        ref = _reference(cfg, v, spec)
        rows.append(
            [
                spec.kind.value,
                spec.K,
                res.value,
                res.stderr,
                res.F1,
                res.F2,
                res.n_shots,
                res.value_exact_norm,
                riemann_price(spec, g, p_T, cfg.model.r, cfg.model.T),
                "" if ref is None else ref,
            ]
        )
    return rows


def _inputs(cfg: RunConfig) -> Dict[str, Any]:
    return {
        "r": cfg.model.r,
        "S0": cfg.model.S0,
        "T": cfg.model.T,
        "volatility": cfg.model.volatility,
        "grid": {"a": cfg.grid.a, "b": cfg.grid.b, "n": cfg.grid.n, "scheme": cfg.grid.scheme.value},
        "initial": cfg.model.initial.kind,
    }


def run_price(cfg: RunConfig, shots: Optional[int] = None, seed: Optional[int] = None) -> Tuple[Dict[str, Any], List[List[Any]]]:
    g = cfg.grid.grid()
    v = cfg.surface()
    shots = cfg.retrieval.shots if shots is None else shots
    seed = cfg.retrieval.seed if seed is None else seed
    run = quantum_solution(cfg)
    results = price_payoffs(cfg, g, run.p_T, shots, seed)
    rows = _rows(cfg, v, g, run.p_T, results)
    record = {
        "command": "price",
        "inputs": _inputs(cfg),
        "retrieval": {"shots": shots, "seed": seed},
        "results": [dict(zip(PRICE_COLUMNS, row)) for row in rows],
        "diagnostics": {
            "p_succ": run.p_succ,
            "p_star": run.p_star,
            "L_w": run.L_w,
            "n_w": run.n_w,
            "lambda_min": run.lambda_min,
            "lambda_max": run.lambda_max,
            "clocked": run.clocked,
            "localization": run.localization,
            "norm_drift": run.norm_drift,
            "mass": total_mass(g, run.p_T),
            "wall_time_s": run.wall_time,
        },
    }
    return record, rows


def run_classical(cfg: RunConfig) -> Tuple[Dict[str, Any], List[List[Any]]]:
    g = cfg.grid.grid()
    v = cfg.surface()
    p_T, drift = classical_forward(cfg)
    results = price_payoffs(cfg, g, p_T, 0, None)
    rows = _rows(cfg, v, g, p_T, results)
    backward = [classical_backward(cfg, spec) for spec in cfg.payoffs]
    record = {
        "command": "classical",
        "inputs": _inputs(cfg),
        "engine": {"scheme": cfg.engine.classical_scheme, "steps": cfg.engine.classical_steps},
        "results": [
            dict(zip(PRICE_COLUMNS, row), backward=b) for row, b in zip(rows, backward)
        ],
        "diagnostics": {"mass": total_mass(g, p_T), "mass_drift": drift},
    }
    return record, rows


def run_compare(cfg: RunConfig) -> Tuple[Dict[str, Any], List[List[Any]]]:
    quantum, q_rows = run_price(cfg)
    classical, c_rows = run_classical(cfg)
    rows = []
    for q, c in zip(q_rows, c_rows):
        q_val, c_val = q[2], c[2]
        rel = abs(q_val - c_val) / abs(c_val) if c_val else float("nan")
        rows.append([q[0], q[1], q_val, c_val, q_val - c_val, rel])
    record = {
        "command": "compare",
        "inputs": _inputs(cfg),
        "quantum": quantum["results"],
        "classical": classical["results"],
        "differences": [dict(zip(COMPARE_COLUMNS, row)) for row in rows],
        "diagnostics": quantum["diagnostics"],
    }
    return record, rows


def run_overlap(cfg: RunConfig) -> Tuple[Dict[str, Any], List[List[Any]]]:
    """Forward and backward overlap series on the shared horizon T - tau_start."""
    g = cfg.grid.grid()
    v = cfg.surface()
    oc = cfg.overlap
    T = cfg.model.T
    p0, tau_start = initial_density(cfg, g, v)
    horizon = T - tau_start
    forward: Any = _forward_builder(cfg, g, v, tau_start)

    def backward(t: float) -> Any:
        return build_backward_generator(g, v, cfg.model.r, t, T, cfg.grid.scheme)

    window = trusted_window(g, sigma_max(v, g, T).value, horizon) if oc.trusted_window else None
    series = []
    for builder, state0, mask in (
        (forward, p0, None),
        (backward, cfg.payoffs[oc.payoff].payoff(g.points), window),
    ):
        op: Any = builder if v.is_time_dependent else builder(0.0)
        series.append(
            overlap_series(
                op, state0, horizon, oc.samples, oc.steps_per_sample, cfg.engine.classical_scheme, mask
            )
        )
    (times, fwd), (_, bwd) = series
    rows = [[float(t), float(f), float(b)] for t, f, b in zip(times, fwd, bwd)]
    record = {
        "command": "overlap",
        "inputs": _inputs(cfg),
        "payoff": {"kind": cfg.payoffs[oc.payoff].kind.value, "K": cfg.payoffs[oc.payoff].K},
        "trusted_window": window is not None,
        "series": [dict(zip(OVERLAP_COLUMNS, row)) for row in rows],
    }
    return record, rows


def _flatten(prefix: str, value: Any, out: List[List[Any]]) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], out)
    elif isinstance(value, (int, float)) and not isinstance(value, bool):
        out.append([prefix, float(value)])


def run_resources(cfg: RunConfig) -> Tuple[Dict[str, Any], List[List[Any]]]:
    g = cfg.grid.grid()
    v = cfg.surface()
    rc = cfg.resources
    p0, _ = initial_density(cfg, g, v)
    p_T, _ = classical_forward(cfg)
    S, H_K = split_generator(build_forward_generator(g, v, cfg.model.r, 0.0, cfg.grid.scheme))
    H_ext = build_extended_hamiltonian(S, H_K, w_grid(8.0, rc.n_w)).matrix
    est = estimate_resources(
        v,
        g,
        cfg.model.T,
        rc.n_w,
        rc.n_y,
        rc.eps_evol,
        rc.eps_schr,
        rc.eps_v,
        d=rc.assets,
        norm0=float(np.linalg.norm(p0)),
        normT=float(np.linalg.norm(p_T)),
        H=H_ext,
        prep_degrees=rc.prep_degrees,
        prep_width=rc.prep_width,
        eps_prep=rc.eps_prep,
    )
    estimate = est.to_dict()
    rows: List[List[Any]] = []
    _flatten("", estimate, rows)
    record = {
        "command": "resources",
        "inputs": dict(_inputs(cfg), **{"n_w": rc.n_w, "n_y": rc.n_y, "eps_evol": rc.eps_evol}),
        "estimate": estimate,
        "labels": {
            "exact": ["stateprep.comparator", "stateprep.payoff_state", "stateprep.swap_test"],
            "asymptotic": [
                "stateprep.piecewise_poly",
                "stateprep.gaussian_delta",
                "queries",
                "queries_sparse",
                "gates",
                "classical",
            ],
        },
    }
    return record, rows
