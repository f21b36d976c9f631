"""Monte Carlo harness over the simulation designs.

A run is a grid of cells (sampler x d1 x d2) replicated R times.  Every
replication derives its own random streams from the master seed by stable
spawn keys — data streams keyed by (replication, site), recruitment streams
additionally by the grid cell — so results are identical no matter how many
worker processes execute them.  Failed replications (exhausted pool,
infeasible initialization) are recorded with a reason and excluded from the
summary statistics, never silently dropped.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateClassesError, EstimationError, InitInfeasibleError
from .federation import (
    FederationPlan,
    combine,
    confidence_set_contains,
    wald_statistic,
)
from .sequential import SiteConfig, run_site
from .simdata import SimDesign, THETA, make_pool, true_common_cov_block

# spawn-key domains separating data generation from recruitment randomness
_DATA_DOMAIN = 0
_RUN_DOMAIN = 1


@dataclass(frozen=True)
class ExperimentConfig:
    design: SimDesign = field(default_factory=SimDesign)
    d1_grid: tuple = (0.2,)
    d2_grid: tuple = (0.05,)
    samplers: tuple = ("random",)
    replications: int = 200
    alpha: float = 0.05
    n0: Optional[int] = None
    master_seed: int = 20260817
    parallelism: object = "auto"
    budget_weights: Optional[tuple] = None
    max_failure_fraction: float = 0.2
    record_trace: bool = False
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not all(d > 0 for d in self.d1_grid) or len(self.d1_grid) == 0:
            raise ValueError("d1_grid must hold positive values")
        if not all(d > 0 for d in self.d2_grid) or len(self.d2_grid) == 0:
            raise ValueError("d2_grid must hold positive values")
        if len(self.samplers) == 0:
            raise ValueError("need at least one sampler")
        if self.budget_weights is not None and len(self.budget_weights) != self.design.n_sites:
            raise ValueError(
                f"budget_weights has {len(self.budget_weights)} entries for "
                f"{self.design.n_sites} sites"
            )
        if not 0.0 <= self.max_failure_fraction <= 1.0:
            raise ValueError("max_failure_fraction must lie in [0, 1]")

    def workers(self) -> int:
        if self.parallelism == "auto":
            return os.cpu_count() or 1
        w = int(self.parallelism)
        if w < 1:
            raise ValueError(f"parallelism must be at least 1, got {self.parallelism}")
        return w

    def plan(self) -> FederationPlan:
        weights = self.budget_weights
        if weights is None:
            weights = tuple(self.design.budget_weights())
        return FederationPlan(
            n_sites=self.design.n_sites,
            p0=self.design.selector().p0,
            alpha=self.alpha,
            budget_weights=tuple(weights),
        )


@dataclass(frozen=True)
class Cell:
    index: int
    sampler: str
    d1: float
    d2: float


@dataclass(frozen=True)
class RepOutcome:
    cell_index: int
    rep: int
    ok: bool
    reason: str = ""
    n_hat: int = 0
    stop_times: tuple = ()
    theta: tuple = ()
    covered: bool = False
    wald: float = math.nan
    auc_mean: float = math.nan
    site_thetas: tuple = ()
    trace_rows: tuple = ()


def cells_of(config: ExperimentConfig) -> list[Cell]:
    cells = []
    for sampler in config.samplers:
        for d1 in config.d1_grid:
            for d2 in config.d2_grid:
                cells.append(Cell(index=len(cells), sampler=sampler, d1=d1, d2=d2))
    return cells


def _stream(master_seed: int, domain: int, *key) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(domain, *key))
    return np.random.Generator(np.random.Philox(seq))


def run_replication(config: ExperimentConfig, cell: Cell, rep: int) -> RepOutcome:
    """One full replication of one grid cell (pure function of its seeds)."""
    design = config.design
    selector = design.selector()
    budgets = config.plan().site_budgets()
    results = []
    trace_rows = []
    for site in range(1, design.n_sites + 1):
        data_rng = _stream(config.master_seed, _DATA_DOMAIN, rep, site)
        X, y = make_pool(design, site, data_rng)
        run_rng = _stream(config.master_seed, _RUN_DOMAIN, cell.index, rep, site)
        site_config = SiteConfig(
            d1=cell.d1,
            d2=cell.d2,
            budget_sq=float(budgets[site - 1]),
            alpha=config.alpha,
            family="logistic",
            selector=selector,
            sampler=cell.sampler,
            criterion="auc",
            n0=config.n0,
            record_trace=config.record_trace,
        )
        try:
            result = run_site(X, y, site_config, run_rng)
        except (InitInfeasibleError, DegenerateClassesError, EstimationError) as exc:
            return RepOutcome(
                cell_index=cell.index,
                rep=rep,
                ok=False,
                reason=f"{type(exc).__name__}:site{site}",
            )
        if result.exhausted:
            return RepOutcome(
                cell_index=cell.index, rep=rep, ok=False, reason=f"PoolExhausted:site{site}"
            )
        if config.record_trace and result.trace:
            for t in result.trace:
                trace_rows.append(
                    (site, t.step, t.k, t.precision_stat, t.criterion_variance, t.stopped)
                )
        results.append(result)
    combined = combine(results)
    return RepOutcome(
        cell_index=cell.index,
        rep=rep,
        ok=True,
        n_hat=combined.total_n,
        stop_times=tuple(int(r.stopping_time) for r in results),
        theta=tuple(float(v) for v in combined.theta),
        covered=bool(confidence_set_contains(combined, THETA, cell.d1)),
        wald=float(wald_statistic(combined, THETA)),
        auc_mean=float(np.mean([r.criterion_value for r in results])),
        site_thetas=tuple(tuple(float(v) for v in r.theta) for r in results),
        trace_rows=tuple(trace_rows),
    )


def _replicate_packed(task) -> RepOutcome:
    config, cell, rep = task
    return run_replication(config, cell, rep)


def _mean_sd(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def _abs_bias_stats(thetas: np.ndarray, theta0: np.ndarray) -> list[tuple[float, float]]:
    """Per-component (mean, sd) of |estimate - truth| across replications."""
    out = []
    for c in range(theta0.shape[0]):
        out.append(_mean_sd(np.abs(thetas[:, c] - theta0[c])))
    return out


def compute_bias_table(
    outcomes: Sequence[RepOutcome], theta0=THETA, n_sites: Optional[int] = None
) -> dict:
    """Absolute-bias summaries of the combined, equal-weight and single-site estimates."""
    ok = [o for o in outcomes if o.ok]
    if not ok:
        return {}
    theta0 = np.asarray(theta0, dtype=np.float64)
    if n_sites is None:
        n_sites = len(ok[0].site_thetas)
    combined = np.array([o.theta for o in ok])
    site_arr = np.array([o.site_thetas for o in ok])  # (reps, M, p0)
    average = site_arr.mean(axis=1)
    table = {
        "combined": _abs_bias_stats(combined, theta0),
        "average": _abs_bias_stats(average, theta0),
    }
    for j in range(n_sites):
        table[f"site{j + 1}"] = _abs_bias_stats(site_arr[:, j, :], theta0)
    return table


def summarize_cell(
    config: ExperimentConfig, cell: Cell, outcomes: Sequence[RepOutcome]
) -> dict:
    """One summary row (ordered mapping) for a grid cell."""
    design = config.design
    ok = [o for o in outcomes if o.ok]
    row: dict = {
        "sampler": cell.sampler,
        "d1": cell.d1,
        "d2": cell.d2,
        "replications": len(outcomes),
        "failures": len(outcomes) - len(ok),
    }
    m = design.n_sites
    p0 = THETA.shape[0]
    if not ok:
        return row
    n_hat_mean, n_hat_sd = _mean_sd([o.n_hat for o in ok])
    row["coverage"] = float(np.mean([o.covered for o in ok]))
    row["mean_N_hat"] = n_hat_mean
    row["sd_N_hat"] = n_hat_sd
    stop_arr = np.array([o.stop_times for o in ok], dtype=np.float64)
    for j in range(m):
        mean_j, sd_j = _mean_sd(stop_arr[:, j])
        row[f"mean_N_{j + 1}"] = mean_j
        row[f"sd_N_{j + 1}"] = sd_j
    auc_mean, auc_sd = _mean_sd([o.auc_mean for o in ok])
    row["mean_auc"] = auc_mean
    row["sd_auc"] = auc_sd
    row["mean_wald"] = _mean_sd([o.wald for o in ok])[0]
    true_blocks = [true_common_cov_block(design, j + 1) for j in range(m)]
    a_sq = config.plan().a_sq
    ratios = []
    for o in ok:
        weights = np.asarray(o.stop_times, dtype=np.float64) / o.n_hat
        mixed = sum(w * b for w, b in zip(weights, true_blocks))
        mu = float(np.linalg.eigvalsh(0.5 * (mixed + mixed.T))[-1])
        ratios.append(cell.d1 * cell.d1 * o.n_hat / (a_sq * mu))
    ratio_mean, ratio_sd = _mean_sd(ratios)
    row["mean_efficiency_ratio"] = ratio_mean
    row["sd_efficiency_ratio"] = ratio_sd
    bias = compute_bias_table(outcomes, THETA, n_sites=m)
    for estimator, stats in bias.items():
        for c in range(p0):
            row[f"bias_{estimator}_{c + 1}"] = stats[c][0]
            row[f"bias_{estimator}_sd_{c + 1}"] = stats[c][1]
    return row


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    cells: tuple
    outcomes: tuple
    summary_rows: tuple
    failure_threshold_exceeded: bool

    def cell_outcomes(self, cell_index: int) -> list[RepOutcome]:
        return [o for o in self.outcomes if o.cell_index == cell_index]

    def summary_text(self) -> str:
        lines = []
        for row in self.summary_rows:
            if "mean_N_hat" not in row:
                lines.append(
                    f"{row['sampler']} d1={row['d1']} d2={row['d2']}: "
                    f"all {row['failures']} replications failed"
                )
                continue
            sites = " ".join(
                f"{row[f'mean_N_{j + 1}']:.3f}({row[f'sd_N_{j + 1}']:.3f})"
                for j in range(self.config.design.n_sites)
            )
            lines.append(
                f"{row['sampler']} d1={row['d1']} d2={row['d2']}: "
                f"N {row['mean_N_hat']:.3f}({row['sd_N_hat']:.3f}) | sites {sites} | "
                f"coverage {row['coverage']:.3f} | auc {row['mean_auc']:.3f}"
                f"({row['sd_auc']:.3f}) | failures {row['failures']}"
            )
        return "\n".join(lines)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])


def write_outputs(result: ExperimentResult, out_dir: str) -> dict:
    """Write summary.csv / reps.csv (and failures.csv, trace.csv when present)."""
    os.makedirs(out_dir, exist_ok=True)
    config = result.config
    m = config.design.n_sites
    p0 = THETA.shape[0]
    paths = {}

    header: list[str] = []
    for row in result.summary_rows:
        for key in row:
            if key not in header:
                header.append(key)
    summary_path = os.path.join(out_dir, "summary.csv")
    _write_csv(
        summary_path,
        header,
        ([row.get(k, "") for k in header] for row in result.summary_rows),
    )
    paths["summary"] = summary_path

    rep_header = (
        ["sampler", "d1", "d2", "rep", "N_hat"]
        + [f"N_{j + 1}" for j in range(m)]
        + [f"theta_hat_{c + 1}" for c in range(p0)]
        + ["covered", "wald", "auc_mean"]
    )
    cell_by_index = {c.index: c for c in result.cells}
    rep_rows = []
    for o in result.outcomes:
        if not o.ok:
            continue
        cell = cell_by_index[o.cell_index]
        rep_rows.append(
            [cell.sampler, cell.d1, cell.d2, o.rep, o.n_hat]
            + list(o.stop_times)
            + list(o.theta)
            + [o.covered, o.wald, o.auc_mean]
        )
    reps_path = os.path.join(out_dir, "reps.csv")
    _write_csv(reps_path, rep_header, rep_rows)
    paths["reps"] = reps_path

    failures = [o for o in result.outcomes if not o.ok]
    if failures:
        fail_path = os.path.join(out_dir, "failures.csv")
        _write_csv(
            fail_path,
            ["sampler", "d1", "d2", "rep", "reason"],
            (
                [cell_by_index[o.cell_index].sampler, cell_by_index[o.cell_index].d1,
                 cell_by_index[o.cell_index].d2, o.rep, o.reason]
                for o in failures
            ),
        )
        paths["failures"] = fail_path

    if config.record_trace:
        trace_path = os.path.join(out_dir, "trace.csv")
        trace_rows = []
        for o in result.outcomes:
            cell = cell_by_index[o.cell_index]
            for site, step, k, mu, v_a, stopped in o.trace_rows:
                trace_rows.append(
                    [cell.sampler, cell.d1, cell.d2, o.rep, site, step, k, mu, v_a, stopped]
                )
        _write_csv(
            trace_path,
            ["sampler", "d1", "d2", "rep", "site", "step", "k", "mu_jk", "v_A", "stopped"],
            trace_rows,
        )
        paths["trace"] = trace_path
    return paths


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the full replication grid, aggregate, and write any outputs."""
    cells = cells_of(config)
    tasks = [
        (config, cell, rep) for cell in cells for rep in range(config.replications)
    ]
    workers = config.workers()
    if workers > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_replicate_packed, tasks, chunksize=chunk))
    else:
        outcomes = [_replicate_packed(t) for t in tasks]

    summary_rows = []
    exceeded = False
    for cell in cells:
        cell_outcomes = [o for o in outcomes if o.cell_index == cell.index]
        row = summarize_cell(config, cell, cell_outcomes)
        summary_rows.append(row)
        if row["failures"] > config.max_failure_fraction * max(row["replications"], 1):
            exceeded = True

    result = ExperimentResult(
        config=config,
        cells=tuple(cells),
        outcomes=tuple(outcomes),
        summary_rows=tuple(summary_rows),
        failure_threshold_exceeded=exceeded,
    )
    if config.output_dir is not None:
        write_outputs(result, config.output_dir)
    return result
