"""Run configuration, single-run artifacts and the seeded benchmark harness."""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .core import MotionPlanProblem, SolutionPair, dumps_pair, loads_pair, validate_solution
from .planner import BASELINE, HYSST, STATS_HEADER, PlannerConfig, PlanResult, hysst_plan
from .simulation import InputLibrary, IntegratorConfig
from .systems import (
    BouncingBallParams,
    MulticopterParams,
    Wall,
    auxiliary_extension,
    bouncing_ball_library,
    bouncing_ball_problem,
    load_walls,
    multicopter_library,
    multicopter_problem,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NO_PLAN = 2
EXIT_CONFIG = 64


class ConfigError(ValueError):
    """Raised for unknown systems, bad parameters or unreadable config files."""


@dataclass(frozen=True)
class SystemEntry:
    params_cls: type
    problem: Callable[[Any], MotionPlanProblem]
    library: Callable[[Any], InputLibrary]
    planner_defaults: dict
    integrator_defaults: dict


def _ball_aux_problem(params):
    return auxiliary_extension(bouncing_ball_problem(params))


# Presets come from seeded sweeps; see README for the numbers behind them.
SYSTEMS: dict[str, SystemEntry] = {
    "bouncing_ball": SystemEntry(
        BouncingBallParams,
        bouncing_ball_problem,
        bouncing_ball_library,
        {"K": 2000, "delta_bn": 1.5, "delta_s": 0.1, "eps_final": 0.5},
        {"step_size": 0.01},
    ),
    "bouncing_ball_aux": SystemEntry(
        BouncingBallParams,
        _ball_aux_problem,
        bouncing_ball_library,
        {"K": 2000, "delta_bn": 1.5, "delta_s": 0.1, "eps_final": 0.5},
        {"step_size": 0.01},
    ),
    "multicopter": SystemEntry(
        MulticopterParams,
        multicopter_problem,
        multicopter_library,
        {"K": 20000, "delta_bn": 0.8, "delta_s": 0.3, "eps_final": 0.3},
        {"step_size": 0.02},
    ),
}

_PLANNER_KEYS = {f.name for f in fields(PlannerConfig)} - {"X_c", "X_d"}
_INTEGRATOR_KEYS = {f.name for f in fields(IntegratorConfig)}
EMIT_KEYS = ("tree", "plan", "stats", "plotdata")


@dataclass
class RunConfig:
    system: str = "bouncing_ball"
    params: dict = field(default_factory=dict)
    planner: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    out_dir: str = "out"
    emit: dict = field(default_factory=lambda: {k: True for k in EMIT_KEYS})

    def entry(self) -> SystemEntry:
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; choose from {sorted(SYSTEMS)}")
        return SYSTEMS[self.system]

    def build(self) -> tuple[MotionPlanProblem, InputLibrary, PlannerConfig, IntegratorConfig]:
        """Instantiate the problem and configs, mapping bad values to ConfigError."""
        entry = self.entry()
        bad = set(self.planner) - _PLANNER_KEYS
        bad |= {f"integrator.{k}" for k in set(self.integrator) - _INTEGRATOR_KEYS}
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        try:
            params = entry.params_cls(**_coerce_params(self.params))
            planner = PlannerConfig(**{**entry.planner_defaults, **self.planner})
            integrator = IntegratorConfig(**{**entry.integrator_defaults, **self.integrator})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return entry.problem(params), entry.library(params), planner, integrator

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce_params(params: dict) -> dict:
    out = dict(params)
    if "walls_file" in out:
        out["walls"] = load_walls(out.pop("walls_file"))
    elif "walls" in out:
        out["walls"] = tuple(w if isinstance(w, Wall) else Wall(**w) for w in out["walls"])
    for key in ("x0", "xf", "goal"):
        if key in out:
            out[key] = tuple(out[key])
    if "arena" in out:
        out["arena"] = tuple(tuple(a) for a in out["arena"])
    return out


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Merge defaults, then a JSON file, then flag overrides.

    ``overrides`` uses the RunConfig layout; planner and integrator entries
    are merged key by key so a single flag does not wipe out the file.
    """
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    for key, val in (overrides or {}).items():
        if isinstance(val, dict):
            doc[key] = {**doc.get(key, {}), **val}
        else:
            doc[key] = val
    known = {f.name for f in fields(RunConfig)}
    if set(doc) - known:
        raise ConfigError(f"unknown config sections: {sorted(set(doc) - known)}")
    cfg = RunConfig(**doc)
    cfg.emit = {**{k: True for k in EMIT_KEYS}, **cfg.emit}
    cfg.build()  # surface errors before any artifact is written
    return cfg


def validation_tol(integrator: IntegratorConfig) -> float:
    return 10.0 * integrator.step_size**2


def write_stats(path: Path, stats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_HEADER)
        w.writerows(stats)


def run_plan(config: RunConfig) -> tuple[int, Optional[PlanResult]]:
    """Plan once and write the requested artifacts under ``config.out_dir``."""
    try:
        problem, lib, planner, integrator = config.build()
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG, None

    result = hysst_plan(problem, lib, planner, integrator)
    emit = config.emit
    if emit.get("tree", True):
        (out / "tree.json").write_text(json.dumps(result.tree_dump()))
    if emit.get("stats", True):
        write_stats(out / "stats.csv", result.stats)
    if emit.get("plotdata", True):
        emit_tree_segments(result.tree_dump(), out / "tree_segments.csv")
    if not result.found:
        log.info("no plan within %d iterations", planner.K)
        return EXIT_NO_PLAN, result
    if emit.get("plan", True):
        (out / "plan.json").write_text(dumps_pair(result.best.psi))
    if emit.get("plotdata", True):
        emit_trace(result.best.psi, out / "plan_trace.csv")
    log.info("plan found: cost %.4f at iteration %d", result.best.cost, result.best.iteration)
    return EXIT_OK, result


def emit_trace(psi: SolutionPair, path) -> None:
    """Write a plan trace as rows ``t, j, x..., u...``."""
    n, m = psi.state.dim, psi.input.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "j"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)])
        for t, j, x, u in zip(psi.state.t, psi.state.j, psi.state.x, psi.input.x):
            w.writerow([repr(float(t)), int(j)] + [repr(float(a)) for a in x] + [repr(float(a)) for a in u])


def emit_tree_segments(tree_doc: dict, path) -> None:
    """Write parent-child segments of the first two state coordinates."""
    by_id = {v["id"]: v["state"] for v in tree_doc["vertices"]}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "parent_x", "parent_y"])
        for v in tree_doc["vertices"]:
            if v["parent"] is None:
                continue
            s, p = v["state"], by_id[v["parent"]]
            w.writerow([s[0], s[1], p[0], p[1]])


def emit_plotdata(artifact, out_dir) -> list[Path]:
    """Plot-ready CSVs from a plan (SolutionPair) or a tree dump (dict)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(artifact, SolutionPair):
        path = out / "plan_trace.csv"
        emit_trace(artifact, path)
    else:
        path = out / "tree_segments.csv"
        emit_tree_segments(artifact, path)
    return [path]


def validate_plan_file(path, config: RunConfig):
    """Parse a plan file and check it against the configured system."""
    problem, _, _, integrator = config.build()
    psi = loads_pair(Path(path).read_text())
    return psi, validate_solution(problem.system, psi, validation_tol(integrator))


# -- benchmark ---------------------------------------------------------------

ROW_FIELDS = ("seed", "mode", "found", "plan_cost", "n_active", "n_inactive", "n_total", "wall_time")


def _trial(args) -> dict:
    cfg_dict, seed, mode = args
    cfg = RunConfig(**cfg_dict)
    problem, lib, planner, integrator = cfg.build()
    planner = PlannerConfig(**{**asdict(planner), "seed": seed, "mode": mode})
    t0 = time.perf_counter()
    try:
        res = hysst_plan(problem, lib, planner, integrator)
    except Exception:  # noqa: BLE001 - a crashed trial counts as not found
        log.exception("trial seed=%d mode=%s failed", seed, mode)
        return dict(seed=seed, mode=mode, found=False, plan_cost=None, n_active=0,
                    n_inactive=0, n_total=0, wall_time=time.perf_counter() - t0)
    tree = res.tree
    return dict(
        seed=seed,
        mode=mode,
        found=res.found,
        plan_cost=res.best.cost if res.found else None,
        n_active=tree.n_active,
        n_inactive=tree.n_inactive,
        n_total=len(tree),
        wall_time=time.perf_counter() - t0,
    )


def _mean(xs):
    return statistics.fmean(xs) if xs else math.nan


def _median(xs):
    return statistics.median(xs) if xs else math.nan


@dataclass
class BenchmarkReport:
    rows: list

    def aggregates(self) -> dict:
        out = {}
        for mode in sorted({r["mode"] for r in self.rows}):
            rs = [r for r in self.rows if r["mode"] == mode]
            costs = [r["plan_cost"] for r in rs if r["found"]]
            out[mode] = {
                "n_trials": len(rs),
                "success_rate": sum(r["found"] for r in rs) / len(rs),
                "mean_cost": _mean(costs),
                "median_cost": _median(costs),
                "mean_active": _mean([r["n_active"] for r in rs]),
                "mean_inactive": _mean([r["n_inactive"] for r in rs]),
                "mean_total": _mean([r["n_total"] for r in rs]),
            }
        return out

    def fingerprint(self) -> list:
        """Rows without wall time: the part that must repeat bit for bit."""
        return [tuple(r[k] for k in ROW_FIELDS if k != "wall_time") for r in self.rows]

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in ROW_FIELDS})
        (out / "summary.json").write_text(json.dumps(self.aggregates(), indent=2))


def run_benchmark(config: RunConfig, n_trials: int, modes=(HYSST, BASELINE), workers: int = 1) -> BenchmarkReport:
    """Seeded trials per mode; trial i uses seed ``base_seed + i``."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    _, _, planner, _ = config.build()
    cfg_dict = config.to_dict()
    jobs = [(cfg_dict, planner.seed + i, mode) for mode in modes for i in range(n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_trial, jobs))
    else:
        rows = [_trial(job) for job in jobs]
    return BenchmarkReport(rows)


def jump_frames(psi: SolutionPair) -> list[tuple[np.ndarray, np.ndarray]]:
    """(pre, post) state pairs at each jump of ``psi``."""
    t, j, x = psi.state.t, psi.state.j, psi.state.x
    return [(x[i], x[i + 1]) for i in range(len(t) - 1) if j[i + 1] == j[i] + 1]
