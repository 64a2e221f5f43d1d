"""Scenario configuration, run orchestration, result files, and plot exports.

A scenario is one YAML file with nested sections (time grid, catalog,
demand, observer, sun, solver); `run_scenario` builds the instance and
dispatches one solver mode (lm | mps-export | import-solution), then writes
a JSON result.  Timing numbers live under the top-level "timings" key so
golden comparisons can drop them.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import demand as dm
from . import dynamics as dyn
from . import illumination as ill
from . import lagrangean as lg
from . import model
from .errors import (
    CislunarError,
    ConfigError,
    DimensionMismatch,
    ParseError,
)

DEMAND_KINDS = ("soi", "cone", "let", "file")
SOLVER_MODES = ("lm", "mps-export", "import-solution")
THREADS_ENV = "CISLUNAR_SSA_THREADS"


@dataclass
class TimeGridConfig:
    # defaults give l = 120 steps at dt = T_syn/60 (about 11.8 hours)
    steps_per_month: int = 60
    months: int = 2

    @property
    def steps(self) -> int:
        return self.steps_per_month * self.months


@dataclass
class CatalogConfig:
    dt_b_hours: float = 12.0
    families: list[str] | None = None
    resonances: list[str] | None = None
    table: str | None = None
    correct: bool = True


@dataclass
class DemandConfig:
    kind: str = "soi"
    counts: list[int] | None = None
    yz_halfwidth_km: float = dm.SOI_WIDTH_KM / 2.0
    inner_radius_km: float = 2.0 * dm.GEO_RADIUS_KM
    half_angle_deg: float = dm.CONE_FULL_ANGLE_DEG / 2.0
    spans_km: list[float] = field(
        default_factory=lambda: list(dm.LET_SPANS_KM))
    density: float = 0.3
    pattern_seed: int | None = None
    path: str | None = None


@dataclass
class ObserverConfig:
    fov_deg: float = 60.0
    m_crit: float = 18.0
    diameter_km: float = 0.001
    spec_reflectance: float = 0.0
    diff_reflectance: float = 0.2
    moon_radius_km: float = ill.MOON_RADIUS_KM


@dataclass
class SunConfig:
    theta0_deg: float = 0.0
    distance_km: float = ill.SUN_DISTANCE_KM


@dataclass
class SolverConfig:
    mode: str = "lm"
    # lm hyperparameters
    max_iterations: int = 30
    gap_tol: float = 0.01
    max_stagnant: int = 10
    stagnant_to_reduce_step: int = 5
    c_alpha: int = 4
    stagnant_to_inter_swap: int = 4
    strategy: str = "full_factorial_greedy"
    time_limit_s: float | None = None
    # mps-export
    variant: str = "aggregate"
    mps_path: str | None = None
    # import-solution
    solution_path: str | None = None


@dataclass
class ScenarioConfig:
    label: str = "scenario"
    p: int = 2
    seed: int = 0
    threads: int = 1
    output: str | None = None
    time_grid: TimeGridConfig = field(default_factory=TimeGridConfig)
    catalog: CatalogConfig = field(default_factory=CatalogConfig)
    demand: DemandConfig = field(default_factory=DemandConfig)
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    sun: SunConfig = field(default_factory=SunConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def validate(self):
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.demand.kind not in DEMAND_KINDS:
            raise ConfigError(f"unknown demand kind {self.demand.kind!r}")
        if self.solver.mode not in SOLVER_MODES:
            raise ConfigError(f"unknown solver mode {self.solver.mode!r}")
        if self.demand.kind == "file":
            if not self.demand.path:
                raise ConfigError("demand kind 'file' requires a path")
            if not Path(self.demand.path).exists():
                raise ConfigError(f"demand file not found: {self.demand.path}")
        if self.solver.mode == "import-solution":
            if not self.solver.solution_path:
                raise ConfigError("import-solution mode requires solution_path")
            if not Path(self.solver.solution_path).exists():
                raise ConfigError(
                    f"solution file not found: {self.solver.solution_path}")
        if self.catalog.table and not Path(self.catalog.table).exists():
            raise ConfigError(f"catalog table not found: {self.catalog.table}")
        if self.time_grid.steps_per_month < 1 or self.time_grid.months < 1:
            raise ConfigError("time grid counts must be >= 1")


def _coerce(section_cls, data, where):
    if data is None:
        return section_cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    known = {f for f in section_cls.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where!r}: {sorted(unknown)}")
    return section_cls(**data)


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("scenario file must contain a mapping")
    sections = {
        "time_grid": TimeGridConfig, "catalog": CatalogConfig,
        "demand": DemandConfig, "observer": ObserverConfig,
        "sun": SunConfig, "solver": SolverConfig,
    }
    kwargs = {}
    for key, value in raw.items():
        if key in sections:
            kwargs[key] = _coerce(sections[key], value, key)
        elif key in ("label", "p", "seed", "threads", "output"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    config = ScenarioConfig(**kwargs)
    config.validate()
    return config


def _parse_resonance(token: str) -> tuple[int, int]:
    try:
        m_str, n_str = token.split(":")
        return int(m_str), int(n_str)
    except ValueError:
        raise ConfigError(f"bad resonance {token!r}, expected M:N") from None


def build_catalog(config: CatalogConfig) -> list[dyn.LpoRecord]:
    records = dyn.build_catalog(config.dt_b_hours, table_path=config.table)
    if config.families:
        wanted = set(config.families)
        known = {f.value for f in dyn.LpoFamily}
        if wanted - known:
            raise ConfigError(f"unknown families: {sorted(wanted - known)}")
        records = [r for r in records if r.family.value in wanted]
    if config.resonances:
        wanted_res = {_parse_resonance(tok) for tok in config.resonances}
        records = [r for r in records if r.resonance in wanted_res]
    if not records:
        raise ConfigError("catalog filters removed every orbit")
    return records


def build_demand(config: DemandConfig, steps: int, seed: int) -> dm.DemandSet:
    kind = config.kind
    if kind == "file":
        dset = dm.load_demand(config.path)
        if dset.steps != steps:
            raise DimensionMismatch(
                f"demand file has {dset.steps} steps, scenario needs {steps}")
        return dset
    if kind == "soi":
        counts = tuple(config.counts or dm.SOI_COUNTS)
        return dm.soi_grid(steps=steps, yz_halfwidth_km=config.yz_halfwidth_km,
                           counts=counts)
    if kind == "cone":
        counts = tuple(config.counts or dm.CONE_COUNTS)
        return dm.cone_of_shame(steps=steps,
                                inner_radius_km=config.inner_radius_km,
                                half_angle_deg=config.half_angle_deg,
                                counts=counts)
    counts = tuple(config.counts or dm.LET_COUNTS)
    targets = dm.let_window(spans_km=tuple(config.spans_km), counts=counts)
    pattern_seed = config.pattern_seed if config.pattern_seed is not None else seed
    pattern = dm.monthly_pattern(len(targets), config.density, pattern_seed)
    return dm.synthesize_let_demand(targets, steps, pattern)


def build_instance(config: ScenarioConfig) -> tuple[model.Instance, dict]:
    """Catalog -> ephemeris -> demand -> tensor -> instance, with timings."""
    timings = {}
    tick = time.perf_counter()
    catalog = build_catalog(config.catalog)
    timings["catalog_s"] = time.perf_counter() - tick

    steps = config.time_grid.steps
    dt = dyn.EARTH_MOON.synodic_period_tu / config.time_grid.steps_per_month
    tick = time.perf_counter()
    ephemeris = dyn.slot_ephemeris(catalog, horizon=steps, dt=dt,
                                   correct=config.catalog.correct)
    timings["ephemeris_s"] = time.perf_counter() - tick

    tick = time.perf_counter()
    demand = build_demand(config.demand, steps, config.seed)
    timings["demand_s"] = time.perf_counter() - tick

    n_slots = len(ephemeris)
    if config.p > n_slots:
        raise ConfigError(f"p = {config.p} exceeds the {n_slots} catalog slots")
    sensor = ill.SensorParams(fov_deg=config.observer.fov_deg,
                              m_crit=config.observer.m_crit,
                              moon_radius_km=config.observer.moon_radius_km)
    optics = ill.TargetOptics(diameter_km=config.observer.diameter_km,
                              spec_reflectance=config.observer.spec_reflectance,
                              diff_reflectance=config.observer.diff_reflectance)
    sun = ill.SunModel(theta0=float(np.radians(config.sun.theta0_deg)),
                       distance=config.sun.distance_km
                       / dyn.EARTH_MOON.length_unit_km)
    tick = time.perf_counter()
    instance = model.assemble_instance(
        catalog, ephemeris, demand, ill.pointing_directions(), sensor, optics,
        sun, dt, config.p, threads=config.threads)
    timings["tensor_s"] = time.perf_counter() - tick
    return instance, timings


def lm_config(solver: SolverConfig) -> lg.LmConfig:
    return lg.LmConfig(
        max_iterations=solver.max_iterations, gap_tol=solver.gap_tol,
        max_stagnant=solver.max_stagnant,
        stagnant_to_reduce_step=solver.stagnant_to_reduce_step,
        c_alpha=solver.c_alpha,
        stagnant_to_inter_swap=solver.stagnant_to_inter_swap,
        strategy=solver.strategy, time_limit_s=solver.time_limit_s)


def _solution_block(solution: model.Solution, instance: model.Instance) -> dict:
    usage: dict[str, int] = {}
    for j in solution.slots:
        label = instance.slots[j].label
        usage[label] = usage.get(label, 0) + 1
    covered = solution.theta.sum(axis=1)
    demanded = instance.demand.demand.sum(axis=1)
    return {
        "slots": [
            {"index": int(j), "orbit": instance.slots[j].label,
             "phase": float(instance.slots[j].phase)}
            for j in solution.slots
        ],
        "schedule": sorted([int(j), int(t), int(i)]
                           for (j, t), i in solution.schedule.items()),
        "objective": float(solution.objective),
        "coverage_fraction": float(solution.coverage),
        "covered_per_step": [int(v) for v in covered],
        "demanded_per_step": [int(v) for v in demanded],
        "orbit_usage": dict(sorted(usage.items())),
    }


def run_scenario(config: ScenarioConfig,
                 output: str | Path | None = None) -> dict:
    """Execute one scenario and return (and optionally write) the result."""
    config.validate()
    total_tick = time.perf_counter()
    instance, timings = build_instance(config)
    result = {
        "label": config.label,
        "config": asdict(config),
        "solver_mode": config.solver.mode,
        "instance": {
            "m": instance.tensor.m, "n": instance.tensor.n,
            "l": instance.tensor.l, "q": instance.tensor.q,
            "p": instance.p,
            "tensor_entries": instance.tensor.n_entries,
            "tensor_density": instance.tensor.density,
            "demand_total": int(instance.demand.demand.sum()),
        },
    }
    tick = time.perf_counter()
    if config.solver.mode == "lm":
        solution, history = lg.run(instance, lm_config(config.solver))
        result["solution"] = _solution_block(solution, instance)
        result["bounds_history"] = [[float(u), float(lo)] for u, lo in history]
    elif config.solver.mode == "mps-export":
        mps_path = config.solver.mps_path or f"{config.label}.mps"
        model.export_mps(instance, config.solver.variant, mps_path)
        result["mps_path"] = str(mps_path)
        result["mps_variant"] = config.solver.variant
    else:
        solution = model.import_solution(config.solver.solution_path, instance)
        result["solution"] = _solution_block(solution, instance)
        result["bounds_history"] = []
    timings["solve_s"] = time.perf_counter() - tick
    timings["total_s"] = time.perf_counter() - total_tick
    result["timings"] = timings
    out_path = output or config.output
    if out_path is not None:
        write_result(result, out_path)
    return result


def write_result(result: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")


def load_result(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def revalidate_result(path: str | Path) -> dict:
    """Rebuild the instance from the embedded config echo and re-validate the
    embedded solution; raises InfeasibleSolution on any violation."""
    result = load_result(path)
    config = _config_from_echo(result["config"])
    instance, _ = build_instance(config)
    if "solution" not in result:
        return result
    block = result["solution"]
    schedule = {(j, t): i for j, t, i in block["schedule"]}
    solution = model.make_solution([s["index"] for s in block["slots"]],
                                   schedule, instance.tensor, instance.costs,
                                   instance.demand)
    model.evaluate_objective(solution, instance)
    if abs(solution.objective - block["objective"]) > 1e-9:
        raise ConfigError("stored objective disagrees with re-evaluation")
    return result


def _config_from_echo(echo: dict) -> ScenarioConfig:
    sections = {
        "time_grid": TimeGridConfig, "catalog": CatalogConfig,
        "demand": DemandConfig, "observer": ObserverConfig,
        "sun": SunConfig, "solver": SolverConfig,
    }
    kwargs = {}
    for key, value in echo.items():
        if key in sections:
            kwargs[key] = sections[key](**value)
        else:
            kwargs[key] = value
    return ScenarioConfig(**kwargs)


def export_plot_data(result: dict, outdir: str | Path) -> list[Path]:
    """Write bounds/coverage/usage tables for a solved result."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    bounds = outdir / "bounds.csv"
    with bounds.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "upper_bound", "lower_bound"])
        for it, (upper, lower) in enumerate(result.get("bounds_history", []),
                                            start=1):
            writer.writerow([it, repr(upper), repr(lower)])
    written.append(bounds)

    coverage = outdir / "coverage.csv"
    with coverage.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "covered", "demanded"])
        block = result.get("solution")
        if block:
            rows = zip(block["covered_per_step"], block["demanded_per_step"])
            for t, (cov, dem) in enumerate(rows, start=1):
                writer.writerow([t, cov, dem])
    written.append(coverage)

    usage = outdir / "usage.csv"
    with usage.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["orbit", "count"])
        block = result.get("solution")
        if block:
            for orbit, count in block["orbit_usage"].items():
                writer.writerow([orbit, count])
    written.append(usage)
    return written


PRESET_GRID = {
    "demands": ("soi", "cone", "let"),
    "fovs": (60.0, 120.0),
    "m_crits": (15.0, 18.0, 20.0),
}


def write_presets(outdir: str | Path) -> list[Path]:
    """Scenario files for the full demand x FOV x cutoff grid."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind in PRESET_GRID["demands"]:
        for fov in PRESET_GRID["fovs"]:
            for m_crit in PRESET_GRID["m_crits"]:
                label = f"{kind}_fov{int(fov)}_m{int(m_crit)}"
                scenario = {
                    "label": label,
                    "p": 2,
                    "seed": 0,
                    "threads": 1,
                    "time_grid": {"steps_per_month": 60, "months": 2},
                    "catalog": {"dt_b_hours": 12.0, "correct": True},
                    "demand": {"kind": kind},
                    "observer": {"fov_deg": fov, "m_crit": m_crit},
                    "sun": {"theta0_deg": 0.0},
                    "solver": {"mode": "lm", "time_limit_s": 1000.0},
                }
                path = outdir / f"{label}.yaml"
                path.write_text(yaml.safe_dump(scenario, sort_keys=True))
                paths.append(path)
    return paths


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    if args.p is not None:
        config.p = args.p
    if args.fov is not None:
        config.observer.fov_deg = args.fov
    if args.m_crit is not None:
        config.observer.m_crit = args.m_crit
    if args.time_limit is not None:
        config.solver.time_limit_s = args.time_limit
    if args.threads is not None:
        config.threads = args.threads
    elif os.environ.get(THREADS_ENV):
        config.threads = int(os.environ[THREADS_ENV])
    if args.seed is not None:
        config.seed = args.seed
    if args.output is not None:
        config.output = args.output
    config.validate()
    return config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cislunar-ssa",
        description="Design cislunar SSA constellations on libration-point "
                    "orbit slots via the time-expanded p-median problem.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario file")
    run_p.add_argument("scenario", help="scenario YAML path")
    run_p.add_argument("--p", type=int, default=None)
    run_p.add_argument("--fov", type=float, default=None)
    run_p.add_argument("--m-crit", dest="m_crit", type=float, default=None)
    run_p.add_argument("--time-limit", dest="time_limit", type=float,
                       default=None)
    run_p.add_argument("--threads", type=int, default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--output", default=None)

    plot_p = sub.add_parser("plot-data", help="export plot tables from a result")
    plot_p.add_argument("result", help="result JSON path")
    plot_p.add_argument("--outdir", required=True)

    val_p = sub.add_parser("validate", help="re-validate a result file")
    val_p.add_argument("result", help="result JSON path")

    pre_p = sub.add_parser("presets", help="write the scenario preset grid")
    pre_p.add_argument("--outdir", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_scenario(args.scenario)
            _apply_overrides(config, args)
            result = run_scenario(config)
            block = result.get("solution")
            if block:
                print(f"{config.label}: Z = {block['objective']:.6f}, "
                      f"coverage = {block['coverage_fraction']:.4f}")
            else:
                print(f"{config.label}: wrote {result.get('mps_path')}")
        elif args.command == "plot-data":
            for path in export_plot_data(load_result(args.result), args.outdir):
                print(f"wrote {path}")
        elif args.command == "validate":
            revalidate_result(args.result)
            print("result validates")
        else:
            for path in write_presets(args.outdir):
                print(f"wrote {path}")
    except (ConfigError, ParseError, DimensionMismatch, OSError,
            json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except CislunarError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
