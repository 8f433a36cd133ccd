"""Config-driven experiment runner.

Usage:  autoclock <experiment> --config <path> [--out <dir>] [--seed <u64>]

Experiments: crossing, channel, protocol, laws.  Each run reads one JSON
config, writes report.json and metrics.csv into the output directory,
and exits 0 only if every declared tolerance passes (1 on a tolerance
failure, 2 on a config problem, 3 on a numerical exception).  Reports
are deterministic for a fixed (config, seed) pair; the wall_clock_s
field of report.json is the only volatile entry.  AUTOCLOCK_THREADS
caps internal parallelism.
"""

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .clock import (
    ClockGrid,
    EngineSpec,
    InteractionWindow,
    crossing_report,
    gaussian_clock_state,
    two_bump_clock_mixture,
)
from .presets import (
    ConfigError,
    resolve_hamiltonian,
    resolve_state,
    resolve_unitary,
)
from .protocol import (
    TransformTask,
    default_clock_settings,
    protocol_delta_sweep,
    run_protocol_with_clock,
)
from .thermo import noncompliant_scenario, run_law_scenario, run_scenario_batch
from .weight import SystemSpec, convergence_sweep, gauss_hermite_weight

EXPERIMENTS = ("crossing", "channel", "protocol", "laws")


def _take(d: dict, allowed: dict, context: str) -> dict:
    """Merge defaults with a config section, rejecting unknown fields."""
    if not isinstance(d, dict):
        raise ConfigError(f"{context}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown fields {sorted(unknown)}")
    out = dict(allowed)
    out.update(d)
    missing = [k for k, v in out.items() if v is _REQUIRED]
    if missing:
        raise ConfigError(f"{context}: missing required fields {sorted(missing)}")
    return out


_REQUIRED = object()


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    payload: dict
    raw: dict


def build_config(experiment: str, doc: dict) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    top = dict(doc)
    declared = top.pop("experiment", experiment)
    if declared != experiment:
        raise ConfigError(f"config declares experiment {declared!r}, command asked for {experiment!r}")
    seed = top.pop("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    builder = {
        "crossing": _build_crossing,
        "channel": _build_channel,
        "protocol": _build_protocol,
        "laws": _build_laws,
    }[experiment]
    payload = builder(top)
    return ExperimentConfig(experiment=experiment, seed=seed, payload=payload, raw=doc)


def _build_crossing(top: dict) -> dict:
    spec = _take(
        top,
        {
            "engine": _REQUIRED,
            "clock": {},
            "window": {},
            "t": 24.0,
            "dt": 2.0**-6,
            "require_crossed": True,
            "tolerances": {},
        },
        "crossing",
    )
    engine = _take(
        spec["engine"],
        {"hamiltonian": _REQUIRED, "unitary": _REQUIRED, "state": "plus-state", "temperature": 1.0},
        "crossing.engine",
    )
    clock = _take(
        spec["clock"],
        {
            "n_points": 512,
            "period": 64.0,
            "origin": -16.0,
            "support": [-8.0, 0.0],
            "shape": "gaussian",
            "sigma": None,
        },
        "crossing.clock",
    )
    window = _take(
        spec["window"],
        {"start": 0.0, "length": 8.0, "profile": "gaussian"},
        "crossing.window",
    )
    tol = _take(
        spec["tolerances"],
        {"engine_error": 1e-3, "clock_error": 1e-3, "product_error": 1e-3},
        "crossing.tolerances",
    )
    h = resolve_hamiltonian(engine["hamiltonian"], "crossing.engine.hamiltonian")
    u = resolve_unitary(engine["unitary"], "crossing.engine.unitary")
    state = resolve_state(engine["state"], h, engine["temperature"], "crossing.engine.state")
    if clock["shape"] not in ("gaussian", "two-bump"):
        raise ConfigError(f"crossing.clock.shape: unknown shape {clock['shape']!r}")
    return {
        "h": h,
        "u": u,
        "state": state,
        "clock": clock,
        "window": window,
        "t": float(spec["t"]),
        "dt": float(spec["dt"]),
        "require_crossed": bool(spec["require_crossed"]),
        "tolerances": {k: float(v) for k, v in tol.items()},
    }


def _build_channel(top: dict) -> dict:
    spec = _take(
        top,
        {
            "system": _REQUIRED,
            "weight": {},
            "delta_sweep": [2.0**-k for k in range(9)],
            "tolerances": {},
        },
        "channel",
    )
    system = _take(
        spec["system"],
        {"hamiltonian": _REQUIRED, "target": _REQUIRED, "state": "ground", "temperature": 1.0},
        "channel.system",
    )
    weight = _take(
        spec["weight"],
        {"p0": 0.0, "sigma": 1.0, "nodes": 41},
        "channel.weight",
    )
    tol = _take(
        spec["tolerances"],
        {"final_error": 1e-3, "jitter": 0.10},
        "channel.tolerances",
    )
    h = resolve_hamiltonian(system["hamiltonian"], "channel.system.hamiltonian")
    target = resolve_unitary(system["target"], "channel.system.target")
    state = resolve_state(system["state"], h, system["temperature"], "channel.system.state")
    deltas = [float(d) for d in spec["delta_sweep"]]
    return {
        "h": h,
        "target": target,
        "state": state,
        "weight": weight,
        "deltas": deltas,
        "tolerances": {k: float(v) for k, v in tol.items()},
    }


def _build_protocol(top: dict) -> dict:
    spec = _take(
        top,
        {
            "subsystem": _REQUIRED,
            "temperature": 1.0,
            "delta_p": [1e-1, 1e-2, 1e-3],
            "rank_floor": 1e-8,
            "clock": None,
            "tolerances": {},
        },
        "protocol",
    )
    sub = _take(
        spec["subsystem"],
        {"hamiltonian": _REQUIRED, "initial": _REQUIRED, "target": _REQUIRED},
        "protocol.subsystem",
    )
    tol = _take(
        spec["tolerances"],
        {"gap_factor": 10.0, "clock_subsystem_error": 2e-3},
        "protocol.tolerances",
    )
    temperature = float(spec["temperature"])
    h = resolve_hamiltonian(sub["hamiltonian"], "protocol.subsystem.hamiltonian")
    rho0 = resolve_state(sub["initial"], h, temperature, "protocol.subsystem.initial")
    sigma = resolve_state(sub["target"], h, temperature, "protocol.subsystem.target")
    deltas = spec["delta_p"]
    if isinstance(deltas, (int, float)):
        deltas = [deltas]
    deltas = [float(d) for d in deltas]
    clock = spec["clock"]
    if clock is not None:
        clock = _take(
            clock,
            {"n_points": 512, "dt": 2.0**-6, "delta_p": 0.75, "weight_dim": 4},
            "protocol.clock",
        )
    return {
        "h": h,
        "rho0": rho0,
        "sigma": sigma,
        "temperature": temperature,
        "deltas": deltas,
        "rank_floor": float(spec["rank_floor"]),
        "clock": clock,
        "tolerances": {k: float(v) for k, v in tol.items()},
    }


def _build_laws(top: dict) -> dict:
    spec = _take(
        top,
        {
            "scenarios": 200,
            "time": 1.0,
            "include_negative_control": True,
            "tolerances": {},
        },
        "laws",
    )
    tol = _take(
        spec["tolerances"],
        {"first_law": 1e-8, "second_law": 1e-8, "entropy": 1e-8},
        "laws.tolerances",
    )
    n = int(spec["scenarios"])
    if n < 1:
        raise ConfigError("laws.scenarios must be at least 1")
    return {
        "scenarios": n,
        "time": float(spec["time"]),
        "include_negative_control": bool(spec["include_negative_control"]),
        "tolerances": {k: float(v) for k, v in tol.items()},
    }


# --- pre-run diagnostics ----------------------------------------------------

def validate(config: ExperimentConfig):
    """All rule violations found without running the experiment."""
    diags = []
    p = config.payload
    if config.experiment == "crossing":
        clock = p["clock"]
        support = clock["support"]
        window_start = p["window"]["start"]
        window_end = window_start + p["window"]["length"]
        origin, period = clock["origin"], clock["period"]
        if window_start < support[1] - 1e-12:
            diags.append(
                "interaction window overlaps the clock support: the clock state must be "
                "confined to a known interval strictly left of the window"
            )
        if support[1] + p["t"] >= origin + period:
            diags.append(
                "wrap-around risk: support end + evolution time reaches the grid period; "
                "the periodic clock is only faithful for timescales below the period"
            )
        if window_end > origin + period or window_start < origin:
            diags.append("interaction window does not fit inside the grid")
        if p["require_crossed"] and p["t"] <= window_end - support[0]:
            diags.append("t does not exceed the crossing span (set require_crossed false to probe it)")
        if p["dt"] <= 0:
            diags.append("dt must be positive")
    elif config.experiment == "channel":
        if any(d <= 0 for d in p["deltas"]):
            diags.append("delta sweep entries must be positive")
        if p["weight"]["sigma"] <= 0:
            diags.append("weight sigma must be positive")
        if p["weight"]["nodes"] < 1:
            diags.append("weight needs at least one node")
    elif config.experiment == "protocol":
        for d in p["deltas"]:
            if not (0.0 < d < 1.0):
                diags.append(f"delta_p = {d} outside (0, 1)")
        dim = p["h"].shape[0]
        if not (0.0 < p["rank_floor"] < 1.0 / dim):
            diags.append("rank_floor outside (0, 1/dim)")
        if p["temperature"] <= 0:
            diags.append("temperature must be positive")
    elif config.experiment == "laws":
        if p["time"] <= 0:
            diags.append("time must be positive")
    return diags


# --- runners -----------------------------------------------------------------

@dataclass
class RunReport:
    experiment: str
    seed: int
    config: dict
    metrics: list
    passes: dict
    passed: bool
    wall_clock_s: float
    version: str = __version__
    csv_columns: tuple = ()

    def to_json(self) -> str:
        doc = {
            "experiment": self.experiment,
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "metrics": self.metrics,
            "passes": self.passes,
            "passed": self.passed,
            "wall_clock_s": self.wall_clock_s,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# autoclock metrics v1 experiment={self.experiment} seed={self.seed}\n")
        writer = csv.DictWriter(buf, fieldnames=list(self.csv_columns), lineterminator="\n")
        writer.writeheader()
        for row in self.metrics:
            writer.writerow({k: row[k] for k in self.csv_columns})
        return buf.getvalue()


def _run_crossing(config: ExperimentConfig) -> tuple:
    p = config.payload
    spec = EngineSpec(h=p["h"], u=p["u"])
    clock_cfg = p["clock"]
    grid = ClockGrid(
        n_points=int(clock_cfg["n_points"]),
        period=float(clock_cfg["period"]),
        origin=float(clock_cfg["origin"]),
    )
    support = tuple(float(x) for x in clock_cfg["support"])
    sigma = clock_cfg["sigma"]
    if clock_cfg["shape"] == "two-bump":
        clock = two_bump_clock_mixture(grid, support, sigma=sigma)
    else:
        clock = gaussian_clock_state(grid, support, sigma=sigma)
    window = InteractionWindow(
        start=float(p["window"]["start"]),
        length=float(p["window"]["length"]),
        profile=p["window"]["profile"],
    )
    report = crossing_report(
        spec,
        window,
        grid,
        clock,
        p["state"],
        p["t"],
        p["dt"],
        require_crossed=p["require_crossed"],
    )
    tol = p["tolerances"]
    metrics = []
    passes = {}
    for name in ("engine_error", "clock_error", "product_error"):
        value = getattr(report, name)
        ok = value <= tol[name]
        passes[name] = ok
        metrics.append({"metric": name, "value": value, "tolerance": tol[name], "passed": ok})
    columns = ("metric", "value", "tolerance", "passed")
    return metrics, passes, columns


def _run_channel(config: ExperimentConfig) -> tuple:
    p = config.payload
    system = SystemSpec(h=p["h"])
    mu = gauss_hermite_weight(
        p0=float(p["weight"]["p0"]),
        sigma=float(p["weight"]["sigma"]),
        n_nodes=int(p["weight"]["nodes"]),
    )
    sweep = convergence_sweep(p["state"], system, p["target"], mu, p["deltas"])
    tol = p["tolerances"]
    jitter = tol["jitter"]
    monotone = all(
        later <= earlier * (1.0 + jitter)
        for (_, earlier), (_, later) in zip(sweep, sweep[1:])
    )
    final_ok = sweep[-1][1] <= tol["final_error"]
    metrics = [{"delta": d, "error": e} for d, e in sweep]
    passes = {"monotone_within_jitter": monotone, "final_error": final_ok}
    return metrics, passes, ("delta", "error")


def _run_protocol(config: ExperimentConfig) -> tuple:
    p = config.payload
    task = TransformTask(
        h_u=p["h"],
        rho_u0=p["rho0"],
        sigma_u=p["sigma"],
        temperature=p["temperature"],
        delta_p=p["deltas"][0],
        rank_floor=p["rank_floor"],
    )
    rows = protocol_delta_sweep(task, p["deltas"])
    factor = p["tolerances"]["gap_factor"]
    metrics = []
    passes = {}
    previous_gap = None
    decreasing = True
    for row in rows:
        bound = factor * row["delta_p"]
        ok = row["gap"] <= bound
        passes[f"gap_at_{row['delta_p']:g}"] = ok
        if previous_gap is not None and row["gap"] > previous_gap:
            decreasing = False
        previous_gap = row["gap"]
        metrics.append(
            {
                "delta_p": row["delta_p"],
                "W": row["W"],
                "dF_u": row["dF_u"],
                "gap": row["gap"],
                "bound": bound,
                "steps": row["steps"],
                "passed": ok,
            }
        )
    if len(rows) > 1:
        passes["gap_decreasing"] = decreasing
    if p["clock"] is not None:
        clock_cfg = p["clock"]
        settings = default_clock_settings(
            n_points=int(clock_cfg["n_points"]), dt=float(clock_cfg["dt"])
        )
        settings = type(settings)(
            grid=settings.grid,
            window=settings.window,
            clock_state=settings.clock_state,
            t=settings.t,
            dt=settings.dt,
            weight_dim=int(clock_cfg["weight_dim"]),
        )
        clock_task = TransformTask(
            h_u=p["h"],
            rho_u0=p["rho0"],
            sigma_u=p["sigma"],
            temperature=p["temperature"],
            delta_p=float(clock_cfg["delta_p"]),
            rank_floor=p["rank_floor"],
        )
        clock_rep = run_protocol_with_clock(clock_task, settings)
        tol = p["tolerances"]["clock_subsystem_error"]
        ok = clock_rep.subsystem_error <= tol
        passes["clock_subsystem_error"] = ok
        metrics.append(
            {
                "delta_p": float(clock_cfg["delta_p"]),
                "W": clock_rep.work_explicit,
                "dF_u": float("nan"),
                "gap": clock_rep.subsystem_error,
                "bound": tol,
                "steps": 1,
                "passed": ok,
            }
        )
    columns = ("delta_p", "W", "dF_u", "gap", "bound", "steps", "passed")
    return metrics, passes, columns


def _run_laws(config: ExperimentConfig) -> tuple:
    p = config.payload
    results = run_scenario_batch(config.seed, p["scenarios"], t=p["time"])
    tol = p["tolerances"]
    metrics = []
    worst_first = 0.0
    worst_second = 0.0
    worst_entropy = 0.0
    max_cyclic_w = None
    for r in results:
        metrics.append(
            {
                "scenario_id": r.scenario_id,
                "dU": r.dU,
                "W": r.W,
                "Q": r.Q,
                "dF_u": r.dF_u,
                "first_law_residual": r.first_law_residual,
                "second_law_margin": r.second_law_margin,
                "entropy_delta": r.entropy_delta,
            }
        )
        worst_first = max(worst_first, abs(r.first_law_residual))
        worst_second = min(worst_second, r.second_law_margin)
        worst_entropy = min(worst_entropy, r.entropy_delta)
        if r.kind == "cyclic":
            max_cyclic_w = r.W if max_cyclic_w is None else max(max_cyclic_w, r.W)
    passes = {
        "first_law": worst_first <= tol["first_law"],
        "second_law": worst_second >= -tol["second_law"],
        "entropy_monotone": worst_entropy >= -tol["entropy"],
    }
    if max_cyclic_w is not None:
        passes["cyclic_no_work"] = max_cyclic_w <= tol["first_law"]
    if p["include_negative_control"]:
        control = run_law_scenario(
            noncompliant_scenario(np.random.default_rng(config.seed + 1)),
            scenario_id=-1,
            t=p["time"],
        )
        passes["negative_control_flagged"] = abs(control.first_law_residual) > 1e-3
    columns = (
        "scenario_id",
        "dU",
        "W",
        "Q",
        "dF_u",
        "first_law_residual",
        "second_law_margin",
        "entropy_delta",
    )
    return metrics, passes, columns


def run(config: ExperimentConfig) -> RunReport:
    """Dispatch to the owning module and collect the report."""
    start = time.perf_counter()
    runner = {
        "crossing": _run_crossing,
        "channel": _run_channel,
        "protocol": _run_protocol,
        "laws": _run_laws,
    }[config.experiment]
    metrics, passes, columns = runner(config)
    elapsed = time.perf_counter() - start
    return RunReport(
        experiment=config.experiment,
        seed=config.seed,
        config=config.raw,
        metrics=metrics,
        passes=passes,
        passed=all(passes.values()),
        wall_clock_s=elapsed,
        csv_columns=columns,
    )


def write_outputs(report: RunReport, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(report.to_csv())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="autoclock",
        description="Run one clock-engine experiment from a JSON config.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=".", help="output directory (default: cwd)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--validate-only",
        action="store_true",
        help="report config diagnostics and exit without running",
    )
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        config = build_config(args.experiment, doc)
        if args.seed is not None:
            config.seed = args.seed
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    diagnostics = validate(config)
    if args.validate_only:
        for d in diagnostics:
            print(d)
        return 2 if diagnostics else 0
    if diagnostics:
        for d in diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return 2

    try:
        report = run(config)
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

    write_outputs(report, args.out)
    for name, ok in report.passes.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
