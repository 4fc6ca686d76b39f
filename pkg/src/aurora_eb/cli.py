"""Command line: ``aurora-eb estimate | simulate | weights | oracle``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
All diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import contextlib
import sys
from pathlib import Path

from .errors import AuroraError, InvalidConfig
from .estimators import METHODS, MethodOptions, UnknownMethod, auroral, run_method
from .io import (
    dump_json,
    fmt,
    load_config,
    read_replicates_csv,
    report_json,
    write_estimates,
    write_report_csv,
    write_table,
)
from .oracles import (
    LSTAT_FAMILIES,
    NormalNormalSpec,
    lstat_weights,
    nn_oracle_risks,
    nn_single_holdout_risks,
    van_trees_bound,
)
from .simlab import run_scenario


class UsageError(Exception):
    pass


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _read_input(args):
    return read_replicates_csv(args.input, has_header=args.has_header,
                               id_column=args.id_column, allow_b2=args.allow_b2)


def cmd_estimate(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise UsageError("--methods is empty")
    for m in methods:
        if m not in METHODS:
            raise UsageError(str(UnknownMethod(m, METHODS)))
    table = _read_input(args)
    opts = MethodOptions(sigma2=args.sigma2, k_max=args.k_max, trim=args.trim,
                         workers=args.workers, knn_jitter=args.knn_jitter, seed=args.seed)
    columns = {}
    for m in methods:
        try:
            columns[m] = run_method(m, table.matrix, opts)
        except Exception as exc:
            raise AuroraError(f"method {m!r} failed: {exc}") from exc
    with _output(args.output) as out:
        write_estimates(out, columns, table.ids)
    return 0


def cmd_simulate(args) -> int:
    config, resolved = load_config(args.config, seed_override=args.seed)
    report = run_scenario(config, workers=args.workers)
    as_json = args.output is not None and args.output.endswith(".json")
    with _output(args.output) as out:
        if as_json:
            out.write(report_json(report))
        else:
            write_report_csv(out, report)
    echo = dump_json(resolved)
    if args.output is not None and args.output != "-":
        Path(args.output + ".config.json").write_text(echo)
    else:
        sys.stderr.write(echo)
    return 0


def cmd_weights(args) -> int:
    table = _read_input(args)
    B = table.matrix.B
    _, w = auroral(table.matrix)
    header = ["term"] + [f"j{j}" for j in range(1, B + 1)] + ["average"]
    rows = [["intercept"] + [float(a) for a in w.intercepts] + [w.intercept]]
    avg = w.averaged_slopes
    for c in range(B - 1):
        rows.append([f"X({c + 1})"] + [float(s) for s in w.slopes[:, c]] + [float(avg[c])])
    with _output(args.output) as out:
        write_table(out, header, rows)
    return 0


def cmd_oracle(args) -> int:
    lines: list[tuple[str, float | int | str]] = []
    if args.family == "normal-normal":
        spec = NormalNormalSpec(args.A, args.sigma2, args.m0, args.K)
        r = nn_oracle_risks(spec)
        lines += [("R_K", r.bayes_K), ("R_K_minus_1", r.bayes_Km1),
                  ("R_bar_K_minus_1", r.avg_oracle), ("jackknife_correction", r.jackknife_correction),
                  ("shrinkage_K", spec.shrinkage()), ("shrinkage_K_minus_1", spec.shrinkage(args.K - 1))]
        if args.n is not None:
            a, c = nn_single_holdout_risks(spec, args.n)
            lines += [("auroral_single_holdout", a), ("ccl_single_holdout", c)]
    elif args.family == "van-trees":
        lines.append(("bound", van_trees_bound(args.If, args.Ig, args.K)))
    else:
        lw = lstat_weights(args.lstat_family, args.K)
        lines.append(("intercept", lw.intercept))
        lines += [(f"X({c + 1})", float(s)) for c, s in enumerate(lw.slopes)]
    with _output(args.output) as out:
        out.write("name,value\n")
        for k, v in lines:
            out.write(f"{k},{fmt(v) if isinstance(v, float) else v}\n")
    return 0


def _add_input_flags(p):
    p.add_argument("--input", required=True, help="CSV of replicates, one unit per row")
    p.add_argument("--has-header", action="store_true", help="first row holds column names")
    p.add_argument("--id-column", action="store_true", help="first column holds unit IDs")
    p.add_argument("--allow-b2", action="store_true", help="accept two replicates per unit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aurora-eb", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help="output path (default: standard output)")
    common.add_argument("--seed", type=int, default=None, help="seed for any randomness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common], help="estimate unit means from a CSV")
    _add_input_flags(p)
    p.add_argument("--methods", default="auroral",
                   help=f"comma-separated, from: {', '.join(METHODS)}")
    p.add_argument("--k-max", type=int, default=None, help="largest k for aurora-knn")
    p.add_argument("--sigma2", type=float, default=None,
                   help="noise variance for js (default: pooled within-unit variance)")
    p.add_argument("--trim", type=float, default=0.1, help="trim fraction per tail")
    p.add_argument("--knn-jitter", type=float, default=None,
                   help="break kNN ties with a U[0, eps] extra coordinate")
    p.add_argument("--workers", type=int, default=1, help="threads for the held-out loop")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo scenario")
    p.add_argument("--config", required=True, help="JSON scenario document")
    p.add_argument("--workers", type=int, default=1, help="processes across reps")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("weights", parents=[common], help="Auroral coefficients per held-out j")
    _add_input_flags(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("oracle", parents=[common], help="print closed-form oracle values")
    fam = p.add_subparsers(dest="family", required=True)
    q = fam.add_parser("normal-normal", parents=[common])
    q.add_argument("--A", type=float, required=True)
    q.add_argument("--sigma2", type=float, required=True)
    q.add_argument("--K", type=int, required=True)
    q.add_argument("--m0", type=float, default=0.0)
    q.add_argument("--n", type=int, default=None, help="also print single-holdout risks")
    q = fam.add_parser("van-trees", parents=[common])
    q.add_argument("--If", type=float, required=True)
    q.add_argument("--Ig", type=float, default=0.0)
    q.add_argument("--K", type=int, required=True)
    q = fam.add_parser("lstat", parents=[common])
    q.add_argument("--family", dest="lstat_family", choices=LSTAT_FAMILIES, required=True)
    q.add_argument("--K", type=int, required=True)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidConfig) as exc:
        print(f"aurora-eb: error: {exc}", file=sys.stderr)
        return 2
    except (AuroraError, OSError, ValueError) as exc:
        print(f"aurora-eb: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
