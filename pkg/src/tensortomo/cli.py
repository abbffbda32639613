"""Command-line driver: ``tensortomo <suite> [options]``.

Exit status is 0 when every case passes, 1 when any case fails or errors,
and 2 for an invalid configuration.  The report is always written.
"""

import argparse
import csv
import io
import json
import os
import sys
from datetime import datetime, timezone

from . import degree_certificates as dc
from .suites import CERT_MODES, RUNNERS, SUITES, RunConfig

SCHEMA_VERSION = 1
COLUMNS = ["suite", "name", "status", "measured", "tolerance"]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", type=int, default=3, help="ambient dimension n")
    common.add_argument("--rank", type=int, default=2, help="maximal tensor rank m")
    common.add_argument("--cutoff", type=int, default=None, help="harmonic cutoff N (default rank + 3)")
    common.add_argument("--channels", type=int, default=2, help="bundle rank r")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget", type=int, default=dc.DEFAULT_BUDGET, help="direction search budget")
    common.add_argument("--workers", type=int, default=1, help="worker threads")
    common.add_argument("--trials", type=int, default=None, help="randomized trials per check")
    common.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE", help="tolerance override, repeatable")
    common.add_argument("--out", default=None, help="report path ('-' for stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp for byte-identical reports")

    parser = argparse.ArgumentParser(prog="tensortomo", description="Tensor tomography verification suites.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify-algebra", parents=[common], help="tensor and harmonic invariants")
    sub.add_parser("verify-slices", parents=[common], help="restriction, extension and scaling checks")
    cert = sub.add_parser("certify", parents=[common], help="degree certificate searches")
    cert.add_argument("--mode", choices=CERT_MODES, required=True)
    sub.add_parser("symbols", parents=[common], help="principal symbol assembly and dual routes")
    pert = sub.add_parser("perturb", parents=[common], help="second variation audits")
    pert.add_argument("--dim-matrix", type=int, default=10, help="largest matrix size")
    sub.add_parser("disk", parents=[common], help="X-ray transform audits on the unit disk")
    allp = sub.add_parser("all", parents=[common], help="every suite")
    allp.add_argument("--mode", choices=CERT_MODES, default="connection")
    allp.add_argument("--dim-matrix", type=int, default=10)
    return parser


def _tolerances(items, parser):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[key] = float(value)
        except ValueError:
            parser.error(f"--tol expects KEY=VALUE, got {item!r}")
    return out


def config_from_args(args, parser):
    cfg = RunConfig(
        command=args.command,
        dim=args.dim,
        rank=args.rank,
        cutoff=args.cutoff,
        channels=args.channels,
        seed=args.seed,
        budget=args.budget,
        workers=args.workers,
        trials=args.trials,
        mode=getattr(args, "mode", "connection"),
        dim_matrix=getattr(args, "dim_matrix", 10),
        tolerances=_tolerances(args.tol, parser),
        out=args.out,
        format=args.format,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        parser.error(str(exc))
    return cfg


def run(cfg):
    """Run the selected suites; returns ``(report, exit_status)``."""
    names = SUITES if cfg.command == "all" else (cfg.command,)
    cases = []
    for name in names:
        for c in RUNNERS[name](cfg):
            cases.append({"suite": name, **c})
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.resolved(),
        "suite": cfg.command,
        "cases": cases,
    }
    failed = [c for c in cases if c["status"] != "pass"]
    return report, (1 if failed else 0)


def render(report, fmt):
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    extra = sorted({k for c in report["cases"] for k, v in c.get("data", {}).items() if not isinstance(v, (dict, list))})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS + extra)
    for c in report["cases"]:
        data = c.get("data", {})
        w.writerow([c.get(k) for k in COLUMNS] + [data.get(k, "") for k in extra])
    return buf.getvalue()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = config_from_args(args, parser)
    report, status = run(cfg)
    if not args.no_timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    text = render(report, cfg.format)
    out = cfg.out or f"tensortomo-{cfg.command}.{cfg.format}"
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)
    failed = [c for c in report["cases"] if c["status"] != "pass"]
    for c in failed:
        print(f"FAILED [{c['suite']}] {c['name']}: measured={c['measured']} tolerance={c['tolerance']}", file=sys.stderr)
    if out != "-":
        print(f"{len(report['cases']) - len(failed)}/{len(report['cases'])} cases passed; report written to {os.path.abspath(out)}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
