"""Command-line entry point.

Subcommands:
    run <config.json>          optimize a user-supplied problem
    case <1..4>                run a built-in case study
    gradcheck                  finite-difference sensitivity validation
    sweep-p <config.json>      repeat a run over several P-norm powers

Exit codes: 0 converged (or checks passed), 2 stopped at the iteration
limit, 1 error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import export, gradcheck, optimize, problems


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fibertop", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add_run_flags(p):
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--max-iter", type=int, metavar="N",
                       help="override the iteration limit")
        p.add_argument("--quiet", action="store_true",
                       help="suppress per-iteration output")

    p_run = sub.add_parser("run", help="optimize a problem from a config file")
    p_run.add_argument("config", help="path to a JSON problem config")
    add_run_flags(p_run)

    p_case = sub.add_parser("case", help="run a built-in case study")
    p_case.add_argument("case_id", type=int, choices=(1, 2, 3, 4))
    p_case.add_argument("--variant", help="case variant name")
    add_run_flags(p_case)

    p_grad = sub.add_parser("gradcheck",
                            help="validate analytic gradients against finite "
                                 "differences")
    p_grad.add_argument("--mesh", default="4x3", metavar="WxH",
                        help="check-mesh size, e.g. 4x3 (default)")
    p_grad.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep-p",
                             help="run one config for several P-norm powers")
    p_sweep.add_argument("config", help="path to a JSON problem config")
    p_sweep.add_argument("--values", default="4,6,8,10", metavar="P1,P2,...",
                         help="comma-separated even P values")
    add_run_flags(p_sweep)
    return parser


def _progress_printer(quiet: bool):
    if quiet:
        return None

    def show(info: optimize.IterationInfo) -> None:
        import numpy as np

        worst = np.nanmax(info.stress_constraints) \
            if np.isfinite(info.stress_constraints).any() else float("nan")
        print(f"it {info.iteration:5d}  c {info.compliance:12.5e}  "
              f"vol {info.volume:6.4f}  g_max {worst: 9.2e}  "
              f"max|s1| {info.max_sigma1:10.4e}  change {info.change:8.5f}")

    return show


def _run_and_export(config, out, max_iter, quiet) -> int:
    if max_iter is not None:
        config = dataclasses.replace(config, max_iter=max_iter)
    result = optimize.run_optimization(config, progress=_progress_printer(quiet))
    out_dir = out or config.out_dir or f"results/{config.name}"
    files = export.export_fields(result, out_dir)
    if not quiet:
        print(f"status: {result.status} after {result.iterations} iterations")
        print(f"compliance {result.compliance:.6e} N*m, "
              f"volume fraction {result.volume:.4f}")
        print(f"wrote {len(files)} files to {Path(out_dir)}")
    return 0 if result.converged else 2


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = problems.load_config(args.config)
            return _run_and_export(config, args.out, args.max_iter, args.quiet)

        if args.command == "case":
            config = problems.build_case_study(args.case_id, args.variant)
            return _run_and_export(config, args.out, args.max_iter, args.quiet)

        if args.command == "gradcheck":
            try:
                nelx, nely = (int(v) for v in args.mesh.lower().split("x"))
            except ValueError:
                print(f"invalid --mesh {args.mesh!r}; expected WxH",
                      file=sys.stderr)
                return 1
            report = gradcheck.run_gradcheck(nelx, nely, seed=args.seed)
            print(report.format())
            return 0 if report.passed else 1

        if args.command == "sweep-p":
            config = problems.load_config(args.config)
            values = [int(v) for v in args.values.split(",") if v.strip()]
            base_out = Path(args.out or config.out_dir or f"results/{config.name}")
            rows = []
            for power in values:
                cfg = dataclasses.replace(config, pnorm_power=power,
                                          name=f"{config.name}_P{power}")
                if args.max_iter is not None:
                    cfg = dataclasses.replace(cfg, max_iter=args.max_iter)
                cfg.validate()
                result = optimize.run_optimization(
                    cfg, progress=_progress_printer(args.quiet))
                export.export_fields(result, base_out / f"P{power}")
                rows.append((power, result.compliance,
                             float(abs(result.stress.sigma1).max()),
                             float(abs(result.stress.sigma2).max()),
                             result.iterations, result.status))
            summary = base_out / "summary.csv"
            with open(summary, "w", encoding="utf-8") as fh:
                fh.write("P,compliance,max_abs_sigma1,max_abs_sigma2,"
                         "iterations,status\n")
                for row in rows:
                    fh.write(",".join(str(v) for v in row) + "\n")
            print(f"{'P':>4} {'compliance':>14} {'max|s1|':>12} "
                  f"{'max|s2|':>12} {'iters':>7} status")
            for power, comp, s1, s2, iters, status in rows:
                print(f"{power:>4} {comp:>14.6e} {s1:>12.4e} {s2:>12.4e} "
                      f"{iters:>7d} {status}")
            print(f"summary written to {summary}")
            return 0 if all(r[5] == "converged" for r in rows) else 2

    except (problems.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
