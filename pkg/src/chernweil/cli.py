"""Command-line front end: ``chernweil run|sweep|regress|list``.

Exit status is 0 when every check passes, 1 on a tolerance failure and 2 on
a validation or usage error.
"""

import argparse
import os
import sys
from importlib import resources

from .errors import ArgumentError, DomainError, ValidationError
from . import runner

EXIT_PASS, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="chernweil", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--out", metavar="DIR", help="write reports into DIR")
        sp.add_argument("--workers", type=int, metavar="N",
                        help=f"worker threads (default ${runner.WORKERS_ENV} or 1)")
        sp.add_argument("--seed", type=int, metavar="K", help="override the config seed")

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("experiment", nargs="?", help="experiment id (alternative to --config)")
    r.add_argument("--config", metavar="PATH")
    common(r)

    s = sub.add_parser("sweep", help="run an experiment over values of one parameter")
    s.add_argument("experiment", nargs="?")
    s.add_argument("--config", metavar="PATH")
    s.add_argument("--axis", help="parameter to sweep (or sweep_axis in the config)")
    s.add_argument("--values", help="comma-separated values (or sweep_values)")
    common(s)

    g = sub.add_parser("regress", help="compare experiments against golden values")
    g.add_argument("--golden", metavar="PATH", help="golden file (default: bundled)")
    common(g)

    sub.add_parser("list", help="list the experiment catalog")
    return p


def _raw_config(args):
    if args.config:
        raw = runner.load_config(args.config)
        if args.experiment:
            raw["experiment"] = args.experiment
        return raw
    if not args.experiment:
        raise ValidationError("give an experiment id or --config PATH")
    return {"experiment": args.experiment}


def _write(out, name, text):
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, name), "a", encoding="utf-8") as fh:
            fh.write(text)


def _emit(reports, out):
    for rep in reports:
        sys.stdout.write(rep.to_text())
        _write(out, "report.jsonl", rep.to_json() + "\n")
        _write(out, "report.txt", rep.to_text() + "\n")


def _split_values(text):
    return [runner._coerce(v.strip()) for v in str(text).split(",") if v.strip()]


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.verb == "list":
            for name in sorted(runner.EXPERIMENTS):
                exp = runner.EXPERIMENTS[name]
                defaults = ", ".join(f"{k}={v}" for k, v in sorted(exp.params.items())
                                     if v is not None)
                print(f"{name:<16} {exp.summary}\n{'':<16} defaults: {defaults}")
            return EXIT_PASS
        workers = runner.worker_count(args.workers)
        out = getattr(args, "out", None)
        if args.verb == "run":
            raw = _raw_config(args)
            out = out or raw.get("out")
            report = runner.run(runner.make_config(raw, args.seed), workers)
            _emit([report], out)
            return EXIT_PASS if report.passed else EXIT_FAIL
        if args.verb == "sweep":
            raw = _raw_config(args)
            out = out or raw.get("out")
            axis = args.axis or raw.get("sweep_axis")
            values = args.values if args.values is not None else raw.get("sweep_values")
            if not axis or values is None:
                raise ValidationError("sweep needs an axis and a list of values")
            reports = runner.sweep(raw, axis, _split_values(values), args.seed, workers)
            _emit(reports, out)
            table = runner.emit_plot_data(reports, axis)
            sys.stdout.write(table)
            _write(out, f"sweep_{axis}.tsv", table)
            return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL
        # regress
        if args.golden:
            entries = runner.load_golden(args.golden)
        else:
            path = resources.files("chernweil").joinpath("data/golden.jsonl")
            with resources.as_file(path) as p:
                entries = runner.load_golden(p)
        ok = True
        for report, rows in runner.regress(entries, workers):
            _emit([report], out)
            for name, expected, actual, tol, passed in rows:
                print(f"  golden {name}: expected {expected!r} got {actual!r} "
                      f"tol {tol!r} {'PASS' if passed else 'FAIL'}")
                ok &= passed
            ok &= report.passed
        return EXIT_PASS if ok else EXIT_FAIL
    except (ValidationError, ArgumentError, DomainError) as exc:
        print(f"chernweil: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
