"""Command-line entry point.

    topoflock run test4 --set kin_dx=0.4 --out runs/t4
    topoflock sweep test1 --vary m_bar=11,22,60,100 --jobs 4
    topoflock compare-moments runs/t4 runs/t4
"""
import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import io
from .exceptions import ConfigError, error_payload
from .experiments import OUT_ENV, compare_moments, records_from_dir, run_test


def _test_id(text):
    name = text.lower()
    if name.startswith("test"):
        name = name[4:]
    try:
        return int(name)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected testN, got {text!r}") from None


def _pairs(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="topoflock", description="Topological flocking at three scales.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one test")
    run.add_argument("test", nargs="?", type=_test_id, help="test1 .. test8")
    run.add_argument("--config", help="JSON scenario config")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    run.add_argument("--out", help=f"output directory (default under ${OUT_ENV} or ./runs)")

    sweep = sub.add_parser("sweep", help="run several tests or parameter values concurrently")
    sweep.add_argument("tests", nargs="+", type=_test_id)
    sweep.add_argument("--vary", action="append", metavar="KEY=V1,V2",
                       help="values to sweep; several --vary flags form a product")
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep.add_argument("--out", help="root directory for the run directories")
    sweep.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    cmp_ = sub.add_parser("compare-moments", help="kinetic moments of run A against macro fields of run B")
    cmp_.add_argument("a", help="directory with kinetic_t*.csv")
    cmp_.add_argument("b", help="directory with macro_t*.csv")
    return parser


def _emit(obj, stream=None):
    stream = sys.stdout if stream is None else stream
    json.dump(obj, stream, indent=2, sort_keys=True, default=io._jsonable)
    stream.write("\n")


def _run_one(args):
    test_id, overrides, out_dir = args
    m = run_test(test_id, overrides, out_dir)
    return {"test_id": m.test_id, "out_dir": m.out_dir, "config_hash": m.config_hash,
            "timings": m.timings, "error": m.error}


def _sweep_jobs(args):
    base = _pairs(args.set)
    axes = []
    for spec in args.vary or ():
        key, sep, values = spec.partition("=")
        if not sep:
            raise ConfigError(f"expected KEY=V1,V2, got {spec!r}")
        axes.append([(key, v) for v in values.split(",")])
    root = args.out or os.environ.get(OUT_ENV, "runs")
    jobs = []
    for test_id in args.tests:
        for combo in itertools.product(*axes):
            overrides = {**base, **dict(combo)}
            tag = "-".join(f"{k}={v}" for k, v in combo)
            out = os.path.join(root, f"test{test_id}" + (f"-{tag}" if tag else ""))
            jobs.append((test_id, overrides, out))
    return jobs


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.test is None and args.config is None:
                raise ConfigError("give a test id or --config")
            m = run_test(args.test, _pairs(args.set), args.out, args.config)
            _emit(m.to_dict())
            if m.error is not None:
                _emit(m.error, sys.stderr)
                return 1
            return 0
        if args.command == "sweep":
            jobs = _sweep_jobs(args)
            with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
                results = list(pool.map(_run_one, jobs))
            _emit(results)
            return 0 if all(r["error"] is None for r in results) else 1
        result = compare_moments(records_from_dir(args.a, "kinetic"), records_from_dir(args.b, "macro"))
        _emit(result)
        return 0
    except (ValueError, OSError, RuntimeError) as exc:
        _emit(error_payload(exc), sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
