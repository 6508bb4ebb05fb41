"""Monte Carlo harness: density scans, overlap/cluster/core-size/rank runs.

Every trial is a pure function of (config, grid index, trial index): the
per-trial seed is derived from the master seed and the two indices, so runs
are reproducible point by point and trials can execute in parallel without
changing any output byte.  Records are persisted as CSV with a frozen
column set plus a JSON sidecar holding the config and per-density
aggregates; timing fields are written as 0 to keep outputs byte-stable
(wall-clock timings go to stderr diagnostics instead).
"""

from __future__ import annotations

import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analytic
from .core_peel import extend_core_solution, find_flippable_cycles, peel
from .ensemble import EnsembleParams, RowDistribution, pin_indices, sample_system, substream
from .gf import make_field
from .linalg import (
    decompose_kernel,
    eliminate,
    overlap,
    overlap_tv,
    sample_kernel_uniform,
    symmetry_defect,
)

try:
    from importlib.metadata import version as _pkg_version

    TOOL_VERSION = _pkg_version("fqlin")
except Exception:  # pragma: no cover - not installed
    TOOL_VERSION = "0.1.0"

KINDS = ("scan", "overlap", "clusters", "coresize", "rank", "symmetry")

CSV_COLUMNS = (
    "d",
    "trial",
    "seed",
    "m",
    "solvable",
    "rank",
    "nullity",
    "n_star",
    "m_star",
    "overlap_tv",
    "flip_vars",
    "ms",
)

EPOCH_PLACEHOLDER = "1970-01-01T00:00:00Z"  # fixed so sidecars are byte-stable

_OVERLAP_TAG = 10
_CLUSTER_TAG = 11
_SYM_TAG = 12


def derive_seed(master: int, d_index: int, trial: int) -> int:
    """Stable 64-bit per-trial seed from (master seed, grid index, trial)."""
    words = np.random.SeedSequence([int(master), int(d_index), int(trial)]).generate_state(2)
    return (int(words[0]) << 32) | int(words[1])


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson 95% score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    q: int
    k: int
    n: int
    d_min: float
    d_max: float
    steps: int
    trials: int
    seed: int
    dist: RowDistribution = field(default_factory=RowDistribution.uniform_nonzero)
    threads: int | None = None  # None: machine parallelism
    pairs: int = 10  # solution pairs per instance (overlap runs)
    pin_max: int = 64  # T for symmetry runs
    epsilon: float = 0.05  # defect-rate threshold for symmetry runs

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.d_max < self.d_min:
            raise ValueError("d_max must be >= d_min")
        if self.kind == "overlap" and self.pairs < 1:
            raise ValueError("overlap runs need pairs >= 1")
        if self.kind == "symmetry" and (self.pin_max < 1 or not self.epsilon > 0):
            raise ValueError("symmetry runs need pin_max >= 1 and epsilon > 0")
        EnsembleParams(q=self.q, k=self.k, n=self.n, d=self.d_min, dist=self.dist, seed=0)

    def d_values(self) -> np.ndarray:
        return np.linspace(self.d_min, self.d_max, self.steps)

    def to_dict(self) -> dict:
        dist = {"kind": self.dist.kind}
        if self.dist.weights is not None:
            dist["weights"] = [[list(key), w] for key, w in self.dist.weights]
        return {
            "kind": self.kind,
            "q": self.q,
            "k": self.k,
            "n": self.n,
            "d_min": self.d_min,
            "d_max": self.d_max,
            "steps": self.steps,
            "trials": self.trials,
            "seed": self.seed,
            "dist": dist,
            "pairs": self.pairs,
            "pin_max": self.pin_max,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        dist_spec = data.pop("dist", {"kind": "uniform"})
        if dist_spec["kind"] == "custom":
            weights = {tuple(key): w for key, w in dist_spec["weights"]}
            dist = RowDistribution.custom(weights)
        elif dist_spec["kind"] == "allones":
            dist = RowDistribution.all_ones()
        else:
            dist = RowDistribution.uniform_nonzero()
        data.pop("threads", None)
        return cls(dist=dist, **data)


@dataclass
class ExperimentRecord:
    d: float
    d_index: int
    trial: int
    seed: int
    m: int
    solvable: bool
    rank: int
    nullity: int
    n_star: int
    m_star: int
    overlap_tv: float | None
    flip_vars: int
    ms: int
    extras: dict = field(default_factory=dict)  # aggregate-only diagnostics


def solve_via_peel(system, pi=None, return_solution: bool = False):
    """Solve by peeling to the core, eliminating there, and extending back.

    Returns (solvable, solution or None); agrees with direct elimination on
    solvability for every instance.
    """
    report, trace = peel(system, pi)
    core_res = eliminate(report.reduced, with_basis=return_solution)
    if not core_res.solvable:
        return False, None
    if not return_solution:
        return True, None
    x_core = {var: int(core_res.basis.particular[j]) for j, var in enumerate(report.core_cols)}
    return True, extend_core_solution(report, trace, x_core)


def _peel_stats(system, want_core_basis: bool = False):
    """Peel, count core flippable-cycle variables, eliminate on the core."""
    report, trace = peel(system)
    cycles = find_flippable_cycles(system, report)
    flip_vars = cycles.variable_count(core_only=True)
    core_res = eliminate(report.reduced, with_basis=want_core_basis)
    rank = (system.m - report.m_star) + core_res.rank
    return report, trace, flip_vars, core_res, rank


def run_trial(config: ExperimentConfig, d_index: int, trial: int) -> ExperimentRecord:
    d = float(config.d_values()[d_index])
    trial_seed = derive_seed(config.seed, d_index, trial)
    params = EnsembleParams(q=config.q, k=config.k, n=config.n, d=d, dist=config.dist, seed=trial_seed)
    system = sample_system(params)
    n = config.n
    base = dict(
        d=d,
        d_index=d_index,
        trial=trial,
        seed=trial_seed,
        m=system.m,
        overlap_tv=None,
        ms=0,
    )

    if config.kind == "overlap":
        res = eliminate(system, with_basis=True)
        report, _ = peel(system)
        cycles = find_flippable_cycles(system, report)
        if res.solvable:
            rng = np.random.default_rng(np.random.SeedSequence([trial_seed, _OVERLAP_TAG]))
            tvs = []
            for _ in range(config.pairs):
                x = sample_kernel_uniform(res.basis, rng)
                xp = sample_kernel_uniform(res.basis, rng)
                tvs.append(overlap_tv(overlap(x, xp, config.q)))
            base["overlap_tv"] = float(np.mean(tvs))
        return ExperimentRecord(
            **base,
            solvable=res.solvable,
            rank=res.rank,
            nullity=res.nullity,
            n_star=report.n_star,
            m_star=report.m_star,
            flip_vars=cycles.variable_count(core_only=True),
        )

    if config.kind == "symmetry":
        rng = np.random.default_rng(np.random.SeedSequence([trial_seed, _SYM_TAG]))
        theta = int(rng.integers(1, config.pin_max + 1))
        idx = rng.integers(1, n + 1, size=theta - 1)
        pinned = pin_indices(system, idx)
        res = eliminate(pinned)
        defect_rate = symmetry_defect(decompose_kernel(res.basis)) / (n * n)
        report, _ = peel(system)
        return ExperimentRecord(
            **base,
            solvable=res.solvable,
            rank=res.rank,
            nullity=res.nullity,
            n_star=report.n_star,
            m_star=report.m_star,
            flip_vars=0,
            extras={"defect_rate": defect_rate, "symmetric": defect_rate < config.epsilon},
        )

    want_basis = config.kind == "clusters"
    report, trace, flip_vars, core_res, rank = _peel_stats(system, want_core_basis=want_basis)
    extras: dict = {}
    if config.kind == "clusters":
        core_nullity = report.n_star - core_res.rank
        extras["core_nullity"] = core_nullity
        if core_res.solvable and core_nullity >= 1:
            rng = np.random.default_rng(np.random.SeedSequence([trial_seed, _CLUSTER_TAG]))
            a = sample_kernel_uniform(core_res.basis, rng)
            b = sample_kernel_uniform(core_res.basis, rng)
            if np.array_equal(a, b):
                b = sample_kernel_uniform(core_res.basis, rng)
            if not np.array_equal(a, b):
                xa = extend_core_solution(report, trace, {v: int(a[j]) for j, v in enumerate(report.core_cols)})
                xb = extend_core_solution(report, trace, {v: int(b[j]) for j, v in enumerate(report.core_cols)})
                extras["pair_distance_frac"] = float(np.count_nonzero(xa != xb) / n)
    return ExperimentRecord(
        **base,
        solvable=core_res.solvable,
        rank=rank,
        nullity=n - rank,
        n_star=report.n_star,
        m_star=report.m_star,
        flip_vars=flip_vars,
        extras=extras,
    )


def _trial_task(args) -> ExperimentRecord:
    config, d_index, trial = args
    return run_trial(config, d_index, trial)


def _check_record(config: ExperimentConfig, rec: ExperimentRecord) -> None:
    if rec.rank + rec.nullity != config.n:
        raise AssertionError(f"record invariant broken: rank {rec.rank} + nullity {rec.nullity} != n {config.n}")
    if rec.n_star > config.n or rec.m_star > rec.m:
        raise AssertionError("record invariant broken: core larger than system")


def run_experiment(config: ExperimentConfig) -> tuple[list[ExperimentRecord], list[dict]]:
    """Run all (density, trial) tasks, serially or in a process pool, and
    fold them into per-density aggregates; the fold is order-independent."""
    started = time.monotonic()
    tasks = [(config, di, t) for di in range(config.steps) for t in range(config.trials)]
    threads = config.threads if config.threads is not None else (os.cpu_count() or 1)
    if threads <= 1 or len(tasks) == 1:
        records = [run_trial(config, di, t) for _, di, t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunk = max(1, len(tasks) // (4 * threads))
            records = list(pool.map(_trial_task, tasks, chunksize=chunk))
    records.sort(key=lambda r: (r.d_index, r.trial))
    for rec in records:
        _check_record(config, rec)
    aggregates = aggregate_records(config, records)
    print(
        f"fqlin: {config.kind} run, {len(tasks)} trials in {time.monotonic() - started:.1f}s",
        file=sys.stderr,
    )
    return records, aggregates


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def aggregate_records(config: ExperimentConfig, records: list[ExperimentRecord]) -> list[dict]:
    n = config.n
    out = []
    for di in range(config.steps):
        group = [r for r in records if r.d_index == di]
        d = float(config.d_values()[di])
        solvable = sum(r.solvable for r in group)
        lo, hi = wilson_interval(solvable, len(group))
        row: dict = {
            "d": d,
            "trials": len(group),
            "solvable": solvable,
            "p_solvable": solvable / len(group) if group else None,
            "wilson_low": lo,
            "wilson_high": hi,
            "mean_m": _mean([r.m for r in group]),
            "mean_n_star_frac": _mean([r.n_star / n for r in group]),
            "mean_m_star_frac": _mean([r.m_star / n for r in group]),
        }
        if config.kind == "scan":
            pass
        elif config.kind == "coresize":
            n_frac, m_frac = analytic.core_size_fractions(config.k, d)
            row["predicted_n_star_frac"] = n_frac
            row["predicted_m_star_frac"] = m_frac
        elif config.kind == "rank":
            row["mean_rank_frac"] = _mean([r.rank / r.m for r in group if r.m > 0])
            d_k = analytic.satisfiability_threshold(config.k)
            row["predicted_rank_frac"] = 1.0 if d <= d_k else analytic.rank_fraction(config.k, d)
        elif config.kind == "clusters":
            row["mean_core_nullity_frac"] = _mean([r.extras.get("core_nullity", 0) / n for r in group])
            row["mean_flip_frac"] = _mean([r.flip_vars / n for r in group])
            row["single_cluster_fraction"] = _mean([1.0 if r.m_star == 0 else 0.0 for r in group])
            row["mean_pair_distance_frac"] = _mean([r.extras.get("pair_distance_frac") for r in group])
            d_star = analytic.core_emergence_threshold(config.k)
            d_k = analytic.satisfiability_threshold(config.k)
            row["predicted_cluster_exponent"] = (
                analytic.cluster_exponent(config.k, d) if d_star < d < d_k else None
            )
        elif config.kind == "overlap":
            row["mean_overlap_tv"] = _mean([r.overlap_tv for r in group])
            row["pairs_per_instance"] = config.pairs
        elif config.kind == "symmetry":
            row["symmetric_fraction"] = _mean([1.0 if r.extras.get("symmetric") else 0.0 for r in group])
            row["mean_defect_rate"] = _mean([r.extras.get("defect_rate") for r in group])
        out.append(row)
    return out


# --- persistence --------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(records: list[ExperimentRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            fh.write(",".join(_fmt(getattr(r, col)) for col in CSV_COLUMNS) + "\n")


def write_sidecar(config: ExperimentConfig, aggregates: list[dict], path) -> None:
    doc = {
        "config": config.to_dict(),
        "tool_version": TOOL_VERSION,
        "started_at": EPOCH_PLACEHOLDER,
        "grid": aggregates,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


_HEADLINE = {
    "scan": "p_solvable",
    "coresize": "mean_n_star_frac",
    "rank": "mean_rank_frac",
    "clusters": "mean_core_nullity_frac",
    "overlap": "mean_overlap_tv",
    "symmetry": "symmetric_fraction",
}


def emit_plot(points, path, *, xlabel: str = "", ylabel: str = "", title: str = "") -> None:
    """Write a minimal static SVG line/scatter chart; tolerates an empty table."""
    width, height = 640, 480
    ml, mr, mt, mb = 64, 20, 34, 48
    pts = [(float(x), float(y)) for x, y in points if y is not None]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
    ]
    if title:
        lines.append(f'<text x="{width / 2:.1f}" y="{mt - 12}" text-anchor="middle">{title}</text>')
    if xlabel:
        lines.append(f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>')
    if ylabel:
        lines.append(
            f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" transform="rotate(-90 16 {height / 2:.1f})">{ylabel}</text>'
        )
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5

        def sx(x: float) -> float:
            return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

        def sy(y: float) -> float:
            return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

        for i in range(5):
            xv = x0 + i * (x1 - x0) / 4
            yv = y0 + i * (y1 - y0) / 4
            lines.append(
                f'<line x1="{sx(xv):.2f}" y1="{height - mb}" x2="{sx(xv):.2f}" y2="{height - mb + 5}" stroke="black"/>'
            )
            lines.append(f'<text x="{sx(xv):.2f}" y="{height - mb + 18}" text-anchor="middle">{xv:.3g}</text>')
            lines.append(f'<line x1="{ml - 5}" y1="{sy(yv):.2f}" x2="{ml}" y2="{sy(yv):.2f}" stroke="black"/>')
            lines.append(f'<text x="{ml - 8}" y="{sy(yv) + 4:.2f}" text-anchor="end">{yv:.3g}</text>')
        path_d = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        lines.append(f'<polyline points="{path_d}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
        for x, y in pts:
            lines.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="steelblue"/>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def persist_experiment(config: ExperimentConfig, records, aggregates, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / f"{config.kind}.csv",
        "json": out_dir / f"{config.kind}.json",
        "svg": out_dir / f"{config.kind}.svg",
    }
    write_records_csv(records, paths["csv"])
    write_sidecar(config, aggregates, paths["json"])
    metric = _HEADLINE[config.kind]
    emit_plot(
        [(row["d"], row.get(metric)) for row in aggregates],
        paths["svg"],
        xlabel="d",
        ylabel=metric,
        title=f"{config.kind} (q={config.q}, k={config.k}, n={config.n})",
    )
    return paths
