"""Command-line interface.

Exit codes: 0 success, 1 domain error (bad field order, malformed file,
out-of-regime query, ...), 2 usage error.  Human-readable results go to
stdout, diagnostics to stderr; --json switches stdout to machine-readable
output.  Every stochastic subcommand requires an explicit --seed so runs
are reproducible by construction.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import abelian as abelian_mod
from . import analytic
from .core_peel import find_flippable_cycles, peel
from .ensemble import (
    EnsembleParams,
    RowDistribution,
    read_system,
    sample_planted,
    sample_system,
    write_system,
)
from .errors import FqlinError
from .experiments import (
    ExperimentConfig,
    emit_plot,
    persist_experiment,
    run_experiment,
)
from .linalg import eliminate


def _parse_dist(text: str) -> RowDistribution:
    if text == "uniform":
        return RowDistribution.uniform_nonzero()
    if text == "allones":
        return RowDistribution.all_ones()
    if text.startswith("file:"):
        with open(text[5:], "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        weights = {tuple(int(c) for c in key.split(",")): float(w) for key, w in raw.items()}
        return RowDistribution.custom(weights)
    raise argparse.ArgumentTypeError(f"unknown distribution {text!r} (use uniform|allones|file:PATH)")


def _experiment_parser(sub, name: str, help_text: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d-min", type=float, default=None)
    p.add_argument("--d-max", type=float, default=None)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=None, help="required unless --config is given")
    p.add_argument("--dist", type=_parse_dist, default=RowDistribution.uniform_nonzero(),
                   help="uniform|allones|file:PATH (JSON: {'c1,c2,c3': weight, ...})")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="trial parallelism (default: machine)")
    p.add_argument("--pairs", type=int, default=10, help="solution pairs per instance (overlap)")
    p.add_argument("--config", type=Path, default=None, help="JSON file mirroring the run config; flags win")
    p.add_argument("--json", action="store_true", help="print the aggregate table as JSON")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fqlin", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("thresholds", help="analytic thresholds and rate predictions")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=float, default=None)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("sample", help="draw a system and write it to a file")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dist", type=_parse_dist, default=RowDistribution.uniform_nonzero())
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--planted", action="store_true",
                   help="plant a hidden solution; writes it next to the system as .planted")

    p = sub.add_parser("solve", help="rank / nullity / solvability of a system file")
    p.add_argument("path", type=Path)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("peel", help="2-core sizes and flippable-cycle count of a system file")
    p.add_argument("path", type=Path)
    p.add_argument("--pi-seed", type=int, default=None, help="random removal priority (default: identity)")

    for name, help_text in (
        ("scan", "solvability probability over a density grid"),
        ("overlap", "overlap concentration of random solution pairs"),
        ("clusters", "cluster-count growth rate and flippable-cycle diagnostics"),
        ("coresize", "2-core sizes against their predictions"),
        ("rank", "rank fraction against its prediction"),
    ):
        _experiment_parser(sub, name, help_text)

    p = sub.add_parser("secondmoment", help="GF(2) pair-count rate curve")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--grid", type=int, default=1001)
    p.add_argument("--out", type=Path, required=True, help="CSV path for (z, F) rows plus the argmax row")
    p.add_argument("--svg", type=Path, default=None, help="optional SVG plot path")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("bethe", help="Monte Carlo check of the Bethe free-entropy closed form")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("abelian", help="solvability scan over a finite abelian group")
    p.add_argument("--group", type=abelian_mod.GroupSpec.parse, required=True,
                   help="comma-separated prime-power component orders, e.g. 4,3")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d-min", type=float, required=True)
    p.add_argument("--d-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="CSV path")
    p.add_argument("--json", action="store_true")

    return ap


def _emit(payload: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(payload))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def _cmd_thresholds(args) -> int:
    report = analytic.threshold_report(args.k, args.d)
    payload = {k: v for k, v in report.to_dict().items() if v is not None or args.d is not None}
    _emit(payload, args.json)
    return 0


def _cmd_sample(args) -> int:
    params = EnsembleParams(q=args.q, k=args.k, n=args.n, d=args.d, dist=args.dist, seed=args.seed)
    if args.planted:
        system, hidden = sample_planted(params)
        write_system(system, args.out)
        side = Path(str(args.out) + ".planted")
        side.write_text(" ".join(str(int(c)) for c in hidden) + "\n", encoding="utf-8")
        print(f"wrote {args.out} (m={system.m}) and {side}", file=sys.stderr)
    else:
        system = sample_system(params)
        write_system(system, args.out)
        print(f"wrote {args.out} (m={system.m})", file=sys.stderr)
    return 0


def _cmd_solve(args) -> int:
    system = read_system(args.path)
    res = eliminate(system, with_basis=False)
    # the JSON form is the output contract whether or not --json is given
    print(json.dumps({"rank": res.rank, "nullity": res.nullity, "solvable": res.solvable}))
    return 0


def _cmd_peel(args) -> int:
    system = read_system(args.path)
    pi = None
    if args.pi_seed is not None:
        import numpy as np

        pi = (np.random.default_rng(args.pi_seed).permutation(system.n) + 1).tolist()
    report, _ = peel(system, pi)
    cycles = find_flippable_cycles(system, report)
    print(json.dumps({"n_star": report.n_star, "m_star": report.m_star, "flippable_cycles": len(cycles)}))
    return 0


def _cmd_experiment(kind: str, args) -> int:
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        if loaded.get("kind", kind) != kind:
            raise FqlinError(f"config file is for kind {loaded.get('kind')!r}, not {kind!r}")
        loaded["kind"] = kind
        config = replace(ExperimentConfig.from_dict(loaded), threads=args.threads)
    else:
        missing = [
            flag
            for flag, value in (
                ("--n", args.n),
                ("--d-min", args.d_min),
                ("--d-max", args.d_max),
                ("--seed", args.seed),
            )
            if value is None
        ]
        if missing:
            print(f"usage error: {kind} requires {', '.join(missing)} (or --config)", file=sys.stderr)
            return 2
        config = ExperimentConfig(
            kind=kind,
            q=args.q,
            k=args.k,
            n=args.n,
            d_min=args.d_min,
            d_max=args.d_max,
            steps=args.steps,
            trials=args.trials,
            seed=args.seed,
            dist=args.dist,
            threads=args.threads,
            pairs=args.pairs,
        )
    records, aggregates = run_experiment(config)
    paths = persist_experiment(config, records, aggregates, args.out)
    if args.json:
        print(json.dumps(aggregates))
    else:
        print(f"wrote {paths['csv']}, {paths['json']}, {paths['svg']}")
    return 0


def _cmd_secondmoment(args) -> int:
    curve = analytic.second_moment_curve(args.k, args.d, args.grid)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("z,F\n")
        for z, v in zip(curve.zs, curve.values):
            fh.write(f"{z!r},{v!r}\n")
        fh.write(f"{curve.argmax_z!r},{curve.argmax_value!r}\n")
    if args.svg is not None:
        emit_plot(
            list(zip(curve.zs.tolist(), curve.values.tolist())),
            args.svg,
            xlabel="z",
            ylabel="F",
            title=f"pair-count rate (k={args.k}, d={args.d})",
        )
    payload = {"argmax_z": curve.argmax_z, "argmax_value": curve.argmax_value, "out": str(args.out)}
    _emit(payload, args.json)
    return 0


def _cmd_bethe(args) -> int:
    est = analytic.bethe_free_entropy_mc(args.k, args.d, args.alpha, args.q, args.samples, args.seed)
    closed = analytic.bethe_free_entropy(args.k, args.d, args.alpha, args.q)
    z = (est.estimate - closed) / est.stderr if est.stderr > 0 else 0.0
    payload = {
        "estimate": est.estimate,
        "stderr": est.stderr,
        "closed_form": closed,
        "z_score": z,
    }
    _emit(payload, args.json)
    return 0


def _cmd_abelian(args) -> int:
    import numpy as np

    d_grid = np.linspace(args.d_min, args.d_max, args.steps)
    table = abelian_mod.abelian_scan(args.group, args.k, args.n, d_grid, args.trials, args.seed)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("d,trials,solvable,p_solvable,wilson_low,wilson_high\n")
        for row in table:
            fh.write(
                f"{row['d']!r},{row['trials']},{row['solvable']},"
                f"{row['p_solvable']!r},{row['wilson_low']!r},{row['wilson_high']!r}\n"
            )
    if args.json:
        print(json.dumps(table))
    else:
        print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "thresholds":
            return _cmd_thresholds(args)
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "peel":
            return _cmd_peel(args)
        if args.command in ("scan", "overlap", "clusters", "coresize", "rank"):
            return _cmd_experiment(args.command, args)
        if args.command == "secondmoment":
            return _cmd_secondmoment(args)
        if args.command == "bethe":
            return _cmd_bethe(args)
        if args.command == "abelian":
            return _cmd_abelian(args)
        parser.error(f"unknown command {args.command!r}")
    except FqlinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
