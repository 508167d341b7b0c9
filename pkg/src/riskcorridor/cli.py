"""Command line front end.

Subcommands: plan (single open-loop solve), simulate (closed loop), sweep
(seeded Monte Carlo batch), render (SVG from a result directory).

Exit codes: 0 success, 1 usage or configuration problem, 2 solver did not
converge, 3 infeasible start, 4 collision during simulation.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import load_config, write_effective_config
from .errors import (ConfigError, InfeasibleSeedError, ParameterError, SchemaError,
                     SolverFailureError)
from .ilqr import plan as solve_plan
from .metrics import compute_metrics
from .montecarlo import run_batch
from .render import render
from .risk import HorizonRiskField, write_risk_grid
from .simulation import (build_reference, check_initial_clearance, perturb_scenario,
                         predict_obstacles, simulate)
from .corridor import generate_corridor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_INFEASIBLE = 3
EXIT_COLLISION = 4


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the usage/config code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="planner",
                     description="Risk-field corridor planner and simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_plan = sub.add_parser("plan", help="solve one open-loop planning problem")
    p_plan.add_argument("--config", required=True, help="scenario config file")
    p_plan.add_argument("--out", required=True, help="output directory")
    p_plan.add_argument("--dry-run", action="store_true",
                        help="validate the config and exit")

    p_sim = sub.add_parser("simulate", help="run the closed-loop simulation")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--seed", type=int, default=0,
                       help="perturbation seed (default 0)")
    p_sim.add_argument("--dry-run", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run a seeded Monte Carlo batch")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--runs", type=int, default=100)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--dry-run", action="store_true")

    p_render = sub.add_parser("render", help="draw a result directory as SVG")
    p_render.add_argument("--data", required=True, help="result directory to read")
    p_render.add_argument("--out", required=True, help="output SVG file")
    p_render.add_argument("--layers", default=None,
                          help="comma list from: road, obstacles, corridor, risk, "
                               "trajectory (default: all with data present)")
    return parser


def _prepare_out(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dry_run(cfg) -> int:
    s = cfg.scenario
    print(f"config ok: scenario '{s.name}' ({type(s.road).__name__}), "
          f"{len(s.obstacles)} obstacles, horizon {s.horizon}, duration {s.duration} s")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    if args.dry_run:
        return _dry_run(cfg)
    s = cfg.scenario
    check_initial_clearance(s)
    predictions = predict_obstacles(s.obstacles, 0.0, s.horizon, s.plan_dt)
    regions = generate_corridor(s.host, s.horizon, s.plan_dt, predictions,
                                s.corridor_band(), s.growth, s.kin_limits, s.geom,
                                s.init_margin, t0=0.0)
    field = HorizonRiskField(predictions, s.risk, s.host)
    reference = build_reference(s, s.host, 0.0, s.horizon, s.plan_dt)
    trajectory, report = solve_plan(s.host, reference, regions, field, s.weights,
                                    cfg.solver, s.geom, s.limits, s.plan_dt)
    out = _prepare_out(args.out)
    io.write_trajectory_csv(out / "trajectory.csv", trajectory, report.stage_costs)
    io.write_corridor_txt(out / "corridor.txt", regions)
    io.write_solve_report_txt(out / "solve_report.txt", report)
    write_effective_config(out / "effective_config.cfg", cfg)
    print(f"plan: cost {report.cost:.4f} after {report.iterations} iterations, "
          f"max containment error {report.final_max_violation:.2e} m -> {out}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.dry_run:
        return _dry_run(cfg)
    scenario = cfg.scenario
    if scenario.perturb_position > 0.0 or scenario.perturb_speed > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence(args.seed))
        scenario = perturb_scenario(scenario, rng)
    started = time.perf_counter()
    result = simulate(scenario, cfg.solver, cfg.snapshot_times, cfg.grid_resolution)
    elapsed = time.perf_counter() - started
    report = compute_metrics(result, cfg.metrics)

    out = _prepare_out(args.out)
    files = ["host.csv", "obstacles.csv", "corridors.txt", "cycles.txt", "metrics.txt"]
    io.write_host_csv(out / "host.csv", result)
    io.write_obstacles_csv(out / "obstacles.csv", result)
    io.write_corridors_txt(out / "corridors.txt", result)
    io.write_cycles_txt(out / "cycles.txt", result)
    io.write_metrics_txt(out / "metrics.txt", report)
    for t, grid in sorted(result.risk_grids.items()):
        name = f"risk_grid_t{t!r}.txt"
        write_risk_grid(out / name, grid)
        files.append(name)
    files.append("effective_config.cfg")
    write_effective_config(out / "effective_config.cfg", cfg)
    io.write_manifest_txt(out / "manifest.txt", "simulate", scenario.name, files,
                          seed=args.seed)
    io.write_timing_txt(out / "timing.txt", [c.wall_ms for c in result.cycles], elapsed)
    print(f"simulate: {len(result.cycles)} cycles, {result.n_fallback} fallbacks, "
          f"min obstacle distance {report.min_center_distance:.2f} m -> {out}")
    if result.collided:
        print(f"collision with obstacle {result.collision_obstacle} at "
              f"t={result.collision_time:.2f} s", file=sys.stderr)
        return EXIT_COLLISION
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.runs < 1:
        raise ConfigError(f"--runs must be at least 1, got {args.runs}")
    if args.dry_run:
        return _dry_run(cfg)
    batch = run_batch(cfg.scenario, cfg.solver, args.runs, args.seed, cfg.metrics)
    out = _prepare_out(args.out)
    io.write_runs_csv(out / "runs.csv", batch)
    io.write_batch_summary_txt(out / "summary.txt", batch)
    write_effective_config(out / "effective_config.cfg", cfg)
    io.write_manifest_txt(out / "manifest.txt", "sweep", cfg.scenario.name,
                          ["runs.csv", "summary.txt", "effective_config.cfg"],
                          seed=args.seed, runs=args.runs)
    io.write_timing_txt(out / "timing.txt", [], batch.elapsed_s)
    print(f"sweep: {len(batch.runs)} runs, collision rate {batch.collision_rate:.3f}, "
          f"clearance rate {batch.clearance_rate:.3f} -> {out}")
    return EXIT_OK


def cmd_render(args) -> int:
    layers = None
    if args.layers is not None:
        layers = [part.strip() for part in args.layers.split(",") if part.strip()]
    target = render(args.data, args.out, layers)
    print(f"render: wrote {target}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"plan": cmd_plan, "simulate": cmd_simulate,
                "sweep": cmd_sweep, "render": cmd_render}
    try:
        return handlers[args.command](args)
    except (ConfigError, SchemaError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleSeedError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailureError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
