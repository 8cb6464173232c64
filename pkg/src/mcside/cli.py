"""Command-line entry point: scenario sweeps, runtime probe, single completions and reports.

Exit codes: 0 on success, 1 on invalid arguments or scenario configuration,
2 when at least one trial failed (the sweep still completes and is written).
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .completion import CompletionConfig, complete, dimension_report
from .exceptions import McsideError, SpecValidationError
from .io import read_manifest, read_matrix, read_pattern, write_manifest, write_matrix

EXIT_OK, EXIT_INVALID, EXIT_TRIAL_FAILURE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _grid(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers, got {text!r}") from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser():
    parser = _Parser(prog="mcside", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, factory in ex.SCENARIOS.items():
        p = sub.add_parser(name, help=factory.__doc__.splitlines()[0])
        p.add_argument("--noisy", action="store_true", help="add GMM measurement noise at 8 dB")
        p.add_argument("--trials", type=_positive_int)
        p.add_argument("--seed", type=int, help="base seed (default 0)")
        p.add_argument("--out-dir", type=Path)
        p.add_argument("--grid", type=_grid, help="comma-separated override of the sweep values")
        only = p.add_mutually_exclusive_group()
        only.add_argument("--baseline-only", action="store_true")
        only.add_argument("--proposed-only", action="store_true")
        p.add_argument("--config", type=Path, help="JSON file with scenario fields to override")
        p.add_argument("--jobs", type=_positive_int, help=f"worker processes (default ${ex.JOBS_ENV} or CPU count)")
        p.add_argument("--plot", action="store_true", help="also render nmse.png and rnmse.png")
        p.set_defaults(func=cmd_scenario, scenario=name)

    p = sub.add_parser("runtime", help="seconds per iteration versus observation probability")
    p.add_argument("--trials", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=_grid)
    p.add_argument("--out-dir", type=Path, default=Path("results/runtime"))
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_runtime)

    p = sub.add_parser("complete", help="complete one matrix from text files")
    p.add_argument("--observed", type=Path, required=True, help="matrix file with the observed entries")
    p.add_argument("--pattern", type=Path, required=True)
    p.add_argument("--bprime", type=Path, help="basis estimate (n x r); required unless --baseline")
    p.add_argument("--rank", type=_positive_int, required=True)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("results/complete"))
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("generate", help="write one synthetic dataset bundle")
    p.add_argument("scenario", choices=sorted(ex.SCENARIOS))
    p.add_argument("--grid-index", type=int, default=0)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--out-dir", type=Path, default=Path("results/data"))
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("report", help="render figures from a finished sweep directory")
    p.add_argument("directory", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def resolve_spec(args):
    spec = ex.SCENARIOS[args.scenario](noisy=args.noisy)
    data = spec.to_dict()
    if args.config is not None:
        try:
            override = read_manifest(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecValidationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(override, dict):
            raise SpecValidationError("config must be a JSON object")
        data.update(override)
    if args.noisy:
        data["noisy"] = True
    if args.trials is not None:
        data["trials"] = args.trials
    if args.seed is not None:
        data["base_seed"] = args.seed
    if args.grid is not None:
        data["grid"] = list(args.grid)
    if args.baseline_only:
        data["methods"] = ["baseline"]
    elif args.proposed_only:
        data["methods"] = ["proposed"]
    return ex.ScenarioSpec.from_dict(data)


def _x_scale(spec):
    return float(spec.d) if spec.sweep == "S" else 1.0


def cmd_scenario(args):
    spec = resolve_spec(args)
    out = args.out_dir or Path("results") / (spec.name + ("-noisy" if spec.noisy else ""))
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "spec.json", spec.to_dict())

    def progress(done, total):
        print(f"\r{done}/{total} trials", end="", file=sys.stderr, flush=True)

    records = ex.run_scenario(spec, jobs=args.jobs, progress=progress)
    print(file=sys.stderr)
    rows = ex.aggregate(records)
    ex.write_trials_csv(out / "trials.csv", records)
    ex.write_aggregate_csv(out / "aggregate.csv", rows)
    ex.write_timing_csv(out / "timing.csv", records)
    for a in rows:
        print(f"{a.method:9s} {spec.sweep}={a.sweep_value:<7g} nmse={a.nmse_mean:.4e} "
              f"rnmse={a.rnmse_mean:.4e} n={a.count} failed={a.failures}")
    if args.plot:
        from .plotting import render_report

        render_report(rows, spec.sweep, out, spec.name, _x_scale(spec))
    failed = [r for r in records if not r.ok]
    for r in failed:
        print(f"trial failure: {r.method} grid={r.grid_index} trial={r.trial}: {r.error}", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_TRIAL_FAILURE if failed else EXIT_OK


def cmd_runtime(args):
    spec = ex.scenario1(trials=args.trials, base_seed=args.seed)
    if args.grid is not None:
        spec = replace(spec, grid=args.grid)
    rows = ex.runtime_probe(spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    ex.write_runtime_csv(args.out_dir / "runtime.csv", rows)
    for r in rows:
        print(f"p={r.sweep_value:<5g} proposed={r.proposed:.3e}s baseline={r.baseline:.3e}s")
    if args.plot:
        from .plotting import plot_runtime

        plot_runtime(rows, args.out_dir / "runtime.png")
    return EXIT_OK


def cmd_complete(args):
    if not args.baseline and args.bprime is None:
        raise SpecValidationError("--bprime is required unless --baseline is given")
    observed = read_matrix(args.observed)
    pattern = read_pattern(args.pattern)
    Bprime = None if args.baseline else read_matrix(args.bprime)
    cfg = CompletionConfig(r=args.rank, baseline=args.baseline, seed=args.seed)
    res = complete(observed, pattern, Bprime, cfg)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "X_hat.txt", res.X_hat)
    res.write_outer_csv(out / "outer.csv")
    res.write_inner_csv(out / "inner.csv")
    summary = {
        "termination": res.termination_reason,
        "outer_iterations": res.outer_iterations,
        "inner_iterations": res.inner_iterations,
        "max_membership_violation": res.max_membership_violation,
    }
    if res.expression is not None:
        write_matrix(out / "C_hat.txt", res.C_hat)
        res.expression.write_diagnostics(out / "expression.csv")
        from .manifold import make_manifold

        mfd = make_manifold(res.C_hat, args.rank, observed.shape[0])
        summary["dimensions"] = dimension_report(mfd, pattern.observed_count)
    write_manifest(out / "summary.json", summary)
    print(f"{res.termination_reason}: {res.outer_iterations} outer, {res.inner_iterations} inner iterations")
    return EXIT_OK


def cmd_generate(args):
    from .synth import Dataset, save_bundle

    spec = ex.SCENARIOS[args.scenario](noisy=args.noisy, base_seed=args.seed)
    if not 0 <= args.grid_index < len(spec.grid):
        raise SpecValidationError(f"grid index must lie in [0, {len(spec.grid)})")
    data = ex.make_trial_data(spec, args.grid_index, args.trial)
    model, p, snr_b = spec.point(args.grid_index)
    manifest = {
        "scenario": spec.name,
        "grid_index": args.grid_index,
        "trial": args.trial,
        "base_seed": args.seed,
        "m": spec.m, "n": spec.n, "r": model.r, "S": model.S, "d": model.d,
        "counts": list(model.counts), "p": p, "snr_b_db": snr_b, "snr_a_db": spec.snr_a,
        "snr_definition": "10 log10 of realised Frobenius power ratio",
        "noisy": spec.noisy,
        "measurement_snr_db": spec.measurement_snr if spec.noisy else None,
        "measurement_reference": spec.measurement_reference,
        "gmm": spec.to_dict()["gmm"],
    }
    save_bundle(args.out_dir, Dataset(data.truth, data.Bprime, data.Aprime, data.pattern, data.observed, manifest))
    print(f"wrote {args.out_dir}")
    return EXIT_OK


def cmd_report(args):
    from .plotting import render_report

    spec = ex.ScenarioSpec.from_dict(read_manifest(args.directory / "spec.json"))
    rows = ex.read_aggregate_csv(args.directory / "aggregate.csv")
    for path in render_report(rows, spec.sweep, args.directory, spec.name, _x_scale(spec)):
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (McsideError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
