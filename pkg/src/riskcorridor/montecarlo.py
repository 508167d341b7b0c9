"""Seeded Monte Carlo batches over a perturbed scenario.

Run seeds come from spawning a single root SeedSequence, so a batch is
reproducible from (scenario, seed, n_runs) alone and independent of worker
count. Runs execute serially by default; set PLANNER_THREADS to use a
process pool. Aggregation always happens in run-index order.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .ilqr import SolverOptions
from .metrics import MetricsParams, compute_metrics
from .simulation import Scenario, perturb_scenario, simulate


@dataclass(frozen=True)
class RunSummary:
    run: int
    collided: bool
    near_miss: bool
    min_center_distance: float
    avg_center_distance: float
    min_footprint_gap: float
    min_ttc: float
    fallback_cycles: int
    converged_cycles: int
    total_cycles: int


@dataclass(frozen=True)
class BatchResult:
    runs: tuple[RunSummary, ...]
    seed: int
    collision_count: int
    collision_rate: float
    near_miss_count: int
    near_miss_rate: float
    clearance_threshold: float
    clearance_rate: float  # fraction of runs with min center distance >= threshold
    worst_min_center_distance: float
    mean_min_center_distance: float
    mean_avg_center_distance: float
    fallback_rate: float
    elapsed_s: float  # wall clock; excluded from deterministic outputs


def _run_single(args) -> RunSummary:
    scenario, options, metrics_params, run_index, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    result = simulate(perturb_scenario(scenario, rng), options)
    report = compute_metrics(result, metrics_params)
    return RunSummary(
        run=run_index,
        collided=report.collided,
        near_miss=report.near_miss,
        min_center_distance=report.min_center_distance,
        avg_center_distance=report.avg_center_distance,
        min_footprint_gap=report.min_footprint_gap,
        min_ttc=report.min_ttc,
        fallback_cycles=report.fallback_cycles,
        converged_cycles=report.converged_cycles,
        total_cycles=report.total_cycles,
    )


def run_batch(scenario: Scenario, options: SolverOptions | None = None,
              n_runs: int = 100, seed: int = 0,
              metrics_params: MetricsParams | None = None) -> BatchResult:
    if n_runs < 1:
        raise ParameterError(f"n_runs must be at least 1, got {n_runs}")
    options = options or SolverOptions()
    metrics_params = metrics_params or MetricsParams()
    children = np.random.SeedSequence(seed).spawn(n_runs)
    jobs = [(scenario, options, metrics_params, i, children[i]) for i in range(n_runs)]

    start = time.perf_counter()
    workers = int(os.environ.get("PLANNER_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_single, jobs))
    else:
        runs = [_run_single(job) for job in jobs]
    elapsed = time.perf_counter() - start

    runs.sort(key=lambda r: r.run)
    collisions = sum(1 for r in runs if r.collided)
    near_misses = sum(1 for r in runs if r.near_miss)
    threshold = metrics_params.near_miss_distance
    clear = sum(1 for r in runs if r.min_center_distance >= threshold)
    fallbacks = sum(r.fallback_cycles for r in runs)
    total_cycles = sum(r.total_cycles for r in runs)
    return BatchResult(
        runs=tuple(runs),
        seed=seed,
        collision_count=collisions,
        collision_rate=collisions / n_runs,
        near_miss_count=near_misses,
        near_miss_rate=near_misses / n_runs,
        clearance_threshold=threshold,
        clearance_rate=clear / n_runs,
        worst_min_center_distance=min(r.min_center_distance for r in runs),
        mean_min_center_distance=float(np.mean([r.min_center_distance for r in runs])),
        mean_avg_center_distance=float(np.mean([r.avg_center_distance for r in runs])),
        fallback_rate=fallbacks / max(total_cycles, 1),
        elapsed_s=elapsed,
    )
