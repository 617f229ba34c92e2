"""Command line entry point: ``hysst plan|bench|plot-data|validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .bench import EXIT_CONFIG, EXIT_NO_PLAN, EXIT_OK, ConfigError, load_config
from .core import loads_pair
from .planner import MODES

# flag -> (section, key, type)
_PLANNER_FLAGS = {
    "K": int,
    "p_n": float,
    "delta_bn": float,
    "delta_s": float,
    "eps_final": float,
    "n_init_roots": int,
    "seed": int,
    "mode": str,
    "p_flow_both": float,
}
_INTEGRATOR_FLAGS = {"step_size": float, "boundary_tol": float, "max_steps": int}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--system", help="system name")
    p.add_argument("--params", help="JSON object of system parameter overrides")
    p.add_argument("--out-dir", help="artifact directory")
    for name, typ in {**_PLANNER_FLAGS, **_INTEGRATOR_FLAGS}.items():
        flag = "--" + (name if name == "K" else name.replace("_", "-"))
        p.add_argument(flag, dest=name, type=typ)
    for key in bench.EMIT_KEYS:
        p.add_argument(f"--no-{key}", dest=f"no_{key}", action="store_true", help=f"skip the {key} artifact")


def _overrides(args) -> dict:
    ov: dict = {}
    if args.system is not None:
        ov["system"] = args.system
    if args.out_dir is not None:
        ov["out_dir"] = args.out_dir
    if args.params is not None:
        try:
            ov["params"] = json.loads(args.params)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--params is not valid JSON: {exc}") from exc
    planner = {k: getattr(args, k) for k in _PLANNER_FLAGS if getattr(args, k) is not None}
    integrator = {k: getattr(args, k) for k in _INTEGRATOR_FLAGS if getattr(args, k) is not None}
    if planner:
        ov["planner"] = planner
    if integrator:
        ov["integrator"] = integrator
    emit = {k: False for k in bench.EMIT_KEYS if getattr(args, f"no_{k}", False)}
    if emit:
        ov["emit"] = emit
    return ov


def _cmd_plan(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    code, result = bench.run_plan(cfg)
    if result is not None:
        msg = f"cost={result.best.cost:.6g}" if result.found else "no plan"
        print(f"{cfg.system}: {msg}; active={result.tree.n_active} inactive={result.tree.n_inactive}")
    return code


def _cmd_bench(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    modes = tuple(args.modes.split(","))
    if any(m not in MODES for m in modes):
        raise ConfigError(f"modes must be drawn from {MODES}")
    report = bench.run_benchmark(cfg, args.trials, modes, args.workers)
    report.write(cfg.out_dir)
    print(json.dumps(report.aggregates(), indent=2))
    return EXIT_OK


def _cmd_plot_data(args) -> int:
    if args.plan:
        artifact = loads_pair(Path(args.plan).read_text())
    else:
        artifact = json.loads(Path(args.tree).read_text())
    for path in bench.emit_plotdata(artifact, args.out_dir):
        print(path)
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    _, report = bench.validate_plan_file(args.plan, cfg)
    if report:
        print("valid")
        return EXIT_OK
    for v in report.violations[:20]:
        print(v)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hysst", description="Motion planning for hybrid systems")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run the planner once and write artifacts")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("bench", help="seeded multi-trial comparison")
    _add_run_flags(p)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--modes", default=",".join(MODES))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("plot-data", help="CSV files from a plan or tree dump")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--plan")
    g.add_argument("--tree")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_plot_data)

    p = sub.add_parser("validate", help="check a plan file against a system")
    _add_run_flags(p)
    p.add_argument("--plan", required=True)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
