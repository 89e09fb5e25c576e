"""Command line: ``maxwellconst run <config>`` and ``maxwellconst summarize <reports...>``.

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid config (or a
report with a foreign schema version), 3 eigensolver failure.
"""

from __future__ import annotations

import argparse
import copy
import os
import sys

from . import report as R
from .config import ConfigError, load
from .eigensolve import EigensolverError
from .experiments import DRIVERS, THREADS_ENV
from .grid_complex import GridError
from .hilbert_complex import WeightError
from .pullback import TransformError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def default_report_path(config_path: str) -> str:
    stem = os.path.splitext(os.path.basename(config_path))[0]
    return f"{stem}.report.json"


def run(config_path: str, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        cfg = load(config_path)
    except ConfigError as e:
        print(str(e), file=err)
        return EXIT_CONFIG
    kind = cfg["kind"]
    try:
        results, verdicts, rows = DRIVERS[kind](copy.deepcopy(cfg))
    except EigensolverError as e:
        print(f"eigensolver failure: {e}", file=err)
        print(R.dumps(e.dump()), file=err)
        return EXIT_SOLVER
    except (GridError, WeightError, TransformError) as e:
        print(f"config error: {e}", file=err)
        return EXIT_CONFIG
    rep = R.build_report(kind, cfg, results, verdicts, rows)
    path = cfg.get("output", {}).get("report") or default_report_path(config_path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(R.dumps(rep) + "\n")
    failed = [v for v in verdicts if not v.passed]
    print(f"{kind}: {len(verdicts) - len(failed)}/{len(verdicts)} checks passed; report written to {path}", file=out)
    for v in failed:
        print(f"FAILED {v.rule} [{v.label}]: {v.lhs!r} {v.relation} {v.rhs!r} (tolerance {v.tolerance!r})", file=err)
    return EXIT_CHECK if failed else EXIT_OK


def summarize(paths, out_path=None, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    reports = []
    try:
        for p in paths:
            reports.append((os.path.basename(p), R.load_report(p)))
    except R.SchemaMismatch as e:
        print(str(e), file=err)
        return EXIT_CONFIG
    except (OSError, ValueError) as e:
        print(f"cannot read report: {e}", file=err)
        return EXIT_CONFIG
    text = R.summary_table(reports)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="maxwellconst",
        description="Friedrichs, Poincare and Maxwell constants on box grids, with their inequalities checked.",
        epilog=f"Set {THREADS_ENV} to cap the number of worker threads (default 1).",
    )
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config and write its report")
    r.add_argument("config")
    s = sub.add_parser("summarize", help="merge reports into one tab-separated table")
    s.add_argument("reports", nargs="+")
    s.add_argument("-o", "--output", default=None, help="write the table here instead of stdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config)
    return summarize(args.reports, args.output)


if __name__ == "__main__":
    sys.exit(main())
