"""Command-line interface.

Exit status: 0 on success, 1 on a data error, 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from ._backend import BACKEND
from .calibrate import DEFAULT_H_GRID, TOLERANCES, calibration_csv, calibration_grid, summarize
from .classify import classify_batch, count_classes, default_ruleset, load_ruleset
from .errors import DataError, DomainError
from .estimators import METHOD_ALIASES, normalize_method
from .ingest import read_capture, write_packet_log
from .report import AnalysisConfig, AnalysisRun, run_analysis
from .series import BinnedSeries, parse_interval, write_series_csv
from .synth import SynthSpec, gen_fgn, gen_iid_gaussian

EXIT_DATA = 1
EXIT_USAGE = 2


def _csv_list(convert):
    def parse(text):
        try:
            return tuple(convert(item) for item in text.split(",") if item.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def _rules(path):
    if path is None:
        return default_ruleset()
    return load_ruleset(Path(path).read_text(encoding="utf-8"))


def cmd_ingest(args) -> int:
    rules = _rules(args.rules)
    report = {"files": {}}
    batches = []
    for path in args.files:
        batch, stats = read_capture(path, args.format)
        report["files"][str(path)] = stats.to_dict()
        batches.append((batch, stats))
    total = None
    for batch, stats in batches:
        total = stats if total is None else total.merge(stats)
    report["total"] = total.to_dict()
    counters = None
    for batch, _ in batches:
        c = count_classes(classify_batch(batch, rules), batch.length)
        counters = c if counters is None else counters.merge(c)
    report["classes"] = counters.to_dict()
    report["rules_version"] = rules.version
    if args.log_out:
        with open(args.log_out, "w", encoding="utf-8") as fh:
            write_packet_log((rec for batch, _ in batches for rec in batch), fh)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_analyze(args) -> int:
    config = AnalysisConfig(
        intervals_ms=args.intervals,
        methods=args.methods,
        measures=("bytes", "packets") if args.measure == "both" else (args.measure,),
        tz_offset_minutes=args.tz_offset,
        input_format=args.input_format,
    )
    run = run_analysis(args.files, _rules(args.rules), config)
    for path in run.write(args.out, args.format):
        print(path)
    return 0


def cmd_synth(args) -> int:
    if args.iid:
        values = gen_iid_gaussian(args.n, args.sigma2, args.seed)
        meta = {"synthetic": "iid", "h": 0.5, "seed": args.seed, "n": args.n, "sigma2": args.sigma2}
    else:
        values = gen_fgn(SynthSpec(args.h, args.n, args.sigma2, args.seed))
        meta = {"synthetic": "fgn", "h": args.h, "seed": args.seed, "n": args.n, "sigma2": args.sigma2}
    series = BinnedSeries(args.interval_ms, 0.0, values, "synthetic")
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        write_series_csv(series, out, meta)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_calibrate(args) -> int:
    rows = calibration_grid(args.h_grid, args.seeds, args.n, args.methods, args.seed, args.iid)
    text = calibration_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for (method, h), s in summarize(rows).items():
        tol = TOLERANCES.get(method)
        verdict = "" if args.iid else (" ok" if s["mean_abs_err"] <= tol else f" exceeds {tol}")
        print(
            f"{method:>14} h={h:<5} mean_h={s['mean_h']:.4f} "
            f"mean_abs_err={s['mean_abs_err']:.4f}{verdict}",
            file=sys.stderr,
        )
    return 0


def cmd_report(args) -> int:
    run = AnalysisRun.from_dict(json.loads(Path(args.run).read_text(encoding="utf-8")))
    sys.stdout.write(run.render_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficlrd",
        description="Classify captured traffic and estimate its long-range dependence.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse captures and print ingest statistics")
    p.add_argument("files", nargs="+")
    p.add_argument("--format", choices=("pcap", "log"), default=None, help="input format (sniffed by default)")
    p.add_argument("--rules", help="rule file used for the per-class counters")
    p.add_argument("--log-out", help="also write all records as a canonical packet log")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="run the full classification and Hurst analysis")
    p.add_argument("files", nargs="+")
    p.add_argument("--rules", help="rule file (built-in defaults if omitted)")
    p.add_argument("--intervals", type=_csv_list(parse_interval), default=(100, 500, 1000, 10000))
    p.add_argument("--methods", type=_csv_list(normalize_method), default=("variance_time", "rs", "periodogram", "whittle"),
                   help="comma list from: " + ",".join(sorted(METHOD_ALIASES)))
    p.add_argument("--measure", choices=("bytes", "packets", "both"), default="both")
    p.add_argument("--tz-offset", type=int, default=0, help="local time offset from UTC in minutes")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="json",
                   help="json writes run.json only; csv adds the report tables")
    p.add_argument("--input-format", choices=("pcap", "log"), default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="emit a synthetic fGn (or iid) series as CSV")
    p.add_argument("--h", type=float, default=0.5)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--interval-ms", type=int, default=100)
    p.add_argument("--iid", action="store_true", help="iid Gaussian instead of fGn")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="estimator accuracy on synthetic fGn")
    p.add_argument("--h-grid", type=_csv_list(float), default=DEFAULT_H_GRID)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--n", type=int, default=65536)
    p.add_argument("--seed", type=int, default=0, help="first seed; seeds run seed..seed+S-1")
    p.add_argument("--methods", type=_csv_list(normalize_method), default=("variance_time", "rs", "periodogram", "whittle"))
    p.add_argument("--iid", action="store_true", help="use iid Gaussian series (true H = 0.5)")
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="render the tables of a saved run.json")
    p.add_argument("run")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        # Out-of-domain parameters (e.g. --h 1.5) are argument mistakes.
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
