"""Experiment runner: single runs, rho scans, comparisons, validation.

Runs are described by a single JSON document with blocks ``problem``,
``tableau``, ``grid {N, T}``, ``regularization``, ``acceleration``,
``output {dir}``, and ``seed`` (plus an optional ``stage_solver`` block
for the inner fixed-point tolerances).  Each run writes
``convergence.csv``, ``trajectory.csv`` and ``summary.json``; plotting
is left to external tools.  The environment variable SYMOC_OUTPUT_DIR
overrides the configured output directory.

Exit codes: 0 for completed runs (including non-converged ones, which
are results, not failures), 1 for usage or configuration errors, 2 for
numerical failures such as stage divergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import problems
from .acceleration import AndersonConfig, run_accelerated
from .core import ControlGrid
from .errors import ConfigError, StageDivergenceError, SymocError
from .iteration import MaximizerConfig, RegularizationConfig
from .oracle import validation_suite
from .sweep import StageSolveConfig
from .tableau import from_config as tableau_from_config

ENV_OUTPUT_DIR = "SYMOC_OUTPUT_DIR"

CONFIG_BLOCKS = {
    "problem",
    "tableau",
    "grid",
    "regularization",
    "acceleration",
    "stage_solver",
    "output",
    "seed",
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """One fully resolved experiment."""

    problem: object
    problem_params: object
    initial_state: np.ndarray
    pair: object
    n_steps: int
    horizon: float
    regularization: RegularizationConfig
    anderson: AndersonConfig
    stage_solver: StageSolveConfig
    output_dir: Path
    seed: int
    raw: dict

    @property
    def tau(self) -> float:
        return self.horizon / self.n_steps


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing '{key}' in {where}")
    return block[key]


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - CONFIG_BLOCKS
    if unknown:
        raise ConfigError(f"unknown config blocks: {sorted(unknown)}")

    grid = _require(raw, "grid", "config")
    n_steps = int(_require(grid, "N", "grid block"))
    horizon = float(_require(grid, "T", "grid block"))
    if n_steps < 1 or horizon <= 0.0:
        raise ConfigError("grid block needs N >= 1 and T > 0")

    problem, xi, params = problems.from_config(_require(raw, "problem", "config"), horizon)
    pair = tableau_from_config(_require(raw, "tableau", "config"))

    reg_block = dict(_require(raw, "regularization", "config"))
    max_block = reg_block.pop("maximizer", {"kind": "closed_form"})
    try:
        maximizer = MaximizerConfig(**max_block)
        regularization = RegularizationConfig(
            rho=float(_require(reg_block, "rho", "regularization block")),
            epsilon=float(reg_block.get("epsilon", 1e-8)),
            max_outer_iters=int(reg_block.get("max_outer_iters", 20000)),
            maximizer=maximizer,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad regularization block: {exc}") from exc
    extra = set(reg_block) - {"rho", "epsilon", "max_outer_iters"}
    if extra:
        raise ConfigError(f"unknown regularization keys: {sorted(extra)}")

    try:
        anderson = AndersonConfig(**raw.get("acceleration", {"enabled": False}))
        stage_solver = StageSolveConfig(**raw.get("stage_solver", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad acceleration or stage_solver block: {exc}") from exc

    out_dir = raw.get("output", {}).get("dir", "symoc-out")
    out_dir = os.environ.get(ENV_OUTPUT_DIR, out_dir)
    return RunConfig(
        problem=problem,
        problem_params=params,
        initial_state=xi,
        pair=pair,
        n_steps=n_steps,
        horizon=horizon,
        regularization=regularization,
        anderson=anderson,
        stage_solver=stage_solver,
        output_dir=Path(out_dir),
        seed=int(raw.get("seed", 0)),
        raw=raw,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_convergence(path: Path, report) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "J", "update_norm", "hbar_gain", "max_penalty"])
        for rec in report.records:
            writer.writerow(
                [rec.iteration, _fmt(rec.cost), _fmt(rec.update_norm),
                 _fmt(rec.hbar_gain), _fmt(rec.max_penalty)]
            )


def _write_trajectory(path: Path, cfg: RunConfig, control: ControlGrid, traj) -> None:
    d = cfg.problem.state_dim
    m = cfg.problem.control_dim
    s = cfg.pair.s
    is_double_well = isinstance(cfg.problem_params, problems.DoubleWellParams)
    header = ["n", "t"]
    header += [f"x_{k + 1}" for k in range(d)]
    header += [f"lambda_{k + 1}" for k in range(d)]
    header += [f"u_{i + 1}_{k + 1}" for i in range(s) for k in range(m)]
    if is_double_well:
        header.append("E")
    times = traj.times
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for n in range(cfg.n_steps + 1):
            row = [n, _fmt(times[n])]
            row += [_fmt(v) for v in traj.states[n]]
            row += [_fmt(v) for v in traj.adjoints[n]]
            if n < cfg.n_steps:
                row += [_fmt(v) for v in control.values[n].ravel()]
            else:
                row += [""] * (s * m)
            if is_double_well:
                row.append(_fmt(problems.double_well_energy(traj.states[n])))
            writer.writerow(row)


def _write_summary(path: Path, cfg: RunConfig, report) -> None:
    summary = {
        "final_cost": report.final_cost,
        "iterations": report.iterations,
        "termination_reason": report.termination_reason,
        "converged": report.converged,
        "stalled_steps": report.stalled_steps,
        "config": cfg.raw,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def execute_run(cfg: RunConfig, out_dir: Path):
    """Run one experiment and write its three output files."""
    u0 = ControlGrid.zeros(cfg.n_steps, cfg.pair.s, cfg.problem.control_dim)
    control, traj, report = run_accelerated(
        cfg.problem,
        cfg.pair,
        cfg.initial_state,
        u0,
        cfg.tau,
        cfg.n_steps,
        cfg.regularization,
        cfg.stage_solver,
        cfg.anderson,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_convergence(out_dir / "convergence.csv", report)
    _write_trajectory(out_dir / "trajectory.csv", cfg, control, traj)
    _write_summary(out_dir / "summary.json", cfg, report)
    return control, traj, report


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _, _, report = execute_run(cfg, cfg.output_dir)
    print(
        f"run finished: J = {report.final_cost:.6g}, "
        f"{report.iterations} iterations, {report.termination_reason}"
    )
    return 0


def _parse_rhos(text: str):
    values = [v for v in (part.strip() for part in text.split(",")) if v]
    if not values:
        raise ConfigError("scan-rho needs a non-empty --rhos list")
    try:
        return [float(v) for v in values]
    except ValueError as exc:
        raise ConfigError(f"bad --rhos value: {exc}") from exc


def cmd_scan_rho(args) -> int:
    cfg = load_config(args.config)
    rhos = _parse_rhos(args.rhos)
    combined = []
    for rho in rhos:
        run_cfg = dataclasses.replace(
            cfg, regularization=dataclasses.replace(cfg.regularization, rho=rho)
        )
        sub_dir = cfg.output_dir if len(rhos) == 1 else cfg.output_dir / f"rho-{rho:g}"
        _, _, report = execute_run(run_cfg, sub_dir)
        for rec in report.records:
            combined.append((rho, rec.iteration, rec.cost))
        print(
            f"rho = {rho:g}: J = {report.final_cost:.6g}, "
            f"{report.iterations} iterations, {report.termination_reason}"
        )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.output_dir / "rho_scan.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "iter", "J"])
        for rho, iteration, cost in combined:
            writer.writerow([_fmt(rho), iteration, _fmt(cost)])
    return 0


def cmd_compare(args) -> int:
    comparison = {}
    base_dir = None
    for label, path in (("a", args.config_a), ("b", args.config_b)):
        cfg = load_config(path)
        if base_dir is None:
            base_dir = cfg.output_dir
        _, _, report = execute_run(cfg, base_dir / label)
        comparison[label] = {
            "config": path,
            "final_cost": report.final_cost,
            "iterations": report.iterations,
            "termination_reason": report.termination_reason,
        }
    comparison["cost_difference"] = comparison["a"]["final_cost"] - comparison["b"]["final_cost"]
    with open(base_dir / "compare.json", "w", encoding="utf-8") as fh:
        json.dump(comparison, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"A: J = {comparison['a']['final_cost']:.6g}  "
        f"B: J = {comparison['b']['final_cost']:.6g}  "
        f"difference = {comparison['cost_difference']:.3e}"
    )
    return 0


def cmd_validate(_args) -> int:
    results = validation_suite()
    width = max(len(name) for name, _, _ in results)
    failures = 0
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        failures += int(not passed)
        print(f"{name:<{width}}  {status}  {detail}")
    if failures:
        print(f"{failures} validation check(s) failed")
        return 1
    print("all validation checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symoc",
        description="Regularized forward-backward sweep solver for optimal control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_scan = sub.add_parser("scan-rho", help="repeat a run over a list of rho values")
    p_scan.add_argument("config")
    p_scan.add_argument("--rhos", required=True, help="comma-separated rho values")
    p_scan.set_defaults(func=cmd_scan_rho)

    p_cmp = sub.add_parser("compare", help="run two configs and summarize the difference")
    p_cmp.add_argument("config_a")
    p_cmp.add_argument("config_b")
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="run the oracle cross-check suite")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageDivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except SymocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
