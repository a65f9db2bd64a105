"""Command-line entry points.

  leadcast run <config> --out-dir DIR
      execute the configured run; writes trace.csv, diagnostics.csv,
      bounds.csv and summary.json into DIR.
  leadcast verify <trace.csv> <config>
      re-run the config from its seed, compare the regenerated trace with
      the given file line by line, and re-check all identities and bounds.
  leadcast report <summary.json>
      print per-family minimum margins and violation counts, and render
      figures next to the summary (margins.png, potential.png).

Exit codes: 0 success, 1 bad config or unreadable input, 2 verification
failure (trace mismatch, identity drift, or bound violation).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional, Sequence

import numpy as np

from .bench import BoundReport, check_bound, quadratic_dual_reports
from .config import ConfigError, Experiment, assemble, load_config
from .leaders import FAMILY_QUADRATIC
from .protocol import ProtocolError, run_protocol

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_VIOLATION = 2

IDENTITY_RTOL = 1e-9  # loss-sum route vs residual-identity route


def _fmt(value) -> str:
    return repr(float(value))


# ============================================================
# Run pipeline
# ============================================================


def execute(exp: Experiment):
    """One full seeded run: trace, leader diagnostics, bound reports."""
    leader = exp.leader_factory()
    reality = exp.generator_factory()
    trace = run_protocol(
        reality,
        leader,
        {b.name: b.strategy for b in exp.benchmarks},
        exp.n_rounds,
        space=exp.space,
    )
    reports = []
    for b in exp.benchmarks:
        if leader.spec.family == FAMILY_QUADRATIC:
            primary, as_bregman = quadratic_dual_reports(trace, b, leader)
            reports.extend([primary, as_bregman])
        else:
            reports.append(check_bound(trace, b, leader))
    return trace, leader, reports


def write_diagnostics(path: str, leader) -> None:
    rows = leader.diagnostics_rows()
    cols = ["n", "mu", "root_residual", "method", "increment", "budget",
            "potential_sq", "cum_slack"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    str(row["n"]) if c == "n" else
                    str(row["method"]) if c == "method" else
                    _fmt(row[c])
                    for c in cols
                )
                + "\n"
            )


def write_bounds(path: str, reports: Sequence[BoundReport]) -> None:
    cols = ["benchmark", "family", "n", "lhs", "rhs", "margin", "potential", "slack"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for rep in reports:
            for i, n in enumerate(rep.prefixes):
                row = [
                    rep.benchmark,
                    rep.family,
                    str(int(n)),
                    _fmt(rep.lhs[i]),
                    _fmt(rep.rhs[i]),
                    _fmt(rep.margin[i]),
                    _fmt(rep.potential[i]) if rep.potential is not None else "",
                    _fmt(rep.slack[i]) if rep.slack is not None else "",
                ]
                fh.write(",".join(row) + "\n")


def summarize(exp: Experiment, leader, reports: Sequence[BoundReport], runtimes: dict) -> dict:
    norms = {b.name: b.norm for b in exp.benchmarks}
    per_benchmark = {}
    families: dict = {}
    for rep in reports:
        key = f"{rep.benchmark}:{rep.family}"
        per_benchmark[key] = {
            "benchmark": rep.benchmark,
            "family": rep.family,
            "norm": norms.get(rep.benchmark),
            "min_margin": rep.min_margin,
            "min_rel_margin": rep.min_rel_margin,
            "violations": rep.violations,
            "gap_rel_residual": rep.gap_rel_residual,
        }
        fam = families.setdefault(rep.family, {"min_margin": float("inf"), "violations": 0})
        fam["min_margin"] = min(fam["min_margin"], rep.min_margin)
        fam["violations"] += rep.violations
    diag = leader.diagnostics_rows()
    return {
        "config": exp.raw,
        "seed": exp.seed,
        "n_rounds": exp.n_rounds,
        "space": {"kind": exp.space.kind, "lower": exp.space.lower, "upper": exp.space.upper},
        "benchmarks": per_benchmark,
        "families": families,
        "potential": {
            "final_sq": diag[-1]["potential_sq"] if diag else 0.0,
            "cum_slack": diag[-1]["cum_slack"] if diag else 0.0,
        },
        "runtimes": runtimes,
    }


def write_summary(path: str, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    try:
        exp = assemble(load_config(args.config))
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    try:
        trace, leader, reports = execute(exp)
    except ProtocolError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    elapsed = time.perf_counter() - t0
    trace.to_csv(os.path.join(args.out_dir, "trace.csv"))
    write_diagnostics(os.path.join(args.out_dir, "diagnostics.csv"), leader)
    write_bounds(os.path.join(args.out_dir, "bounds.csv"), reports)
    summary = summarize(exp, leader, reports, {"run_seconds": elapsed})
    write_summary(os.path.join(args.out_dir, "summary.json"), summary)
    worst = min((rep.min_margin for rep in reports), default=float("inf"))
    total_viol = sum(rep.violations for rep in reports)
    print(f"run: {exp.n_rounds} rounds, {len(exp.benchmarks)} benchmarks, "
          f"min margin {worst:.6g}, violations {total_viol}, {elapsed:.2f}s")
    print(f"wrote {args.out_dir}/trace.csv diagnostics.csv bounds.csv summary.json")
    return EXIT_OK


# ============================================================
# Verify
# ============================================================


def _read_lines(path: str) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read().splitlines()


def cmd_verify(args) -> int:
    try:
        exp = assemble(load_config(args.config))
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        recorded = _read_lines(args.trace)
    except OSError as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    trace, leader, reports = execute(exp)
    import os
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        regen_path = os.path.join(tmp, "trace.csv")
        trace.to_csv(regen_path)
        regenerated = _read_lines(regen_path)

    failures = []
    if len(recorded) != len(regenerated):
        failures.append(
            f"trace length mismatch: file has {len(recorded)} lines, replay has {len(regenerated)}"
        )
    else:
        for i, (a, b) in enumerate(zip(recorded, regenerated)):
            if a != b:
                failures.append(f"trace line {i + 1} differs:\n  file:   {a}\n  replay: {b}")
                break
    for rep in reports:
        if rep.gap_rel_residual > IDENTITY_RTOL:
            failures.append(
                f"identity drift for {rep.benchmark} ({rep.family}): "
                f"rel residual {rep.gap_rel_residual:.3e} > {IDENTITY_RTOL:.0e}"
            )
        if rep.violations:
            failures.append(
                f"bound violation for {rep.benchmark} ({rep.family}): "
                f"{rep.violations} prefixes, min margin {rep.min_margin:.6g}"
            )
    if failures:
        for f in failures:
            print(f"VERIFY FAIL: {f}", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"verify: trace matches replay ({len(trace)} rounds); "
          f"{len(reports)} bound reports clean")
    return EXIT_OK


# ============================================================
# Report
# ============================================================


def cmd_report(args) -> int:
    import os

    try:
        with open(args.summary, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read summary: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    print("per-family minimum margins:")
    for family in sorted(summary.get("families", {})):
        row = summary["families"][family]
        print(f"  {family:10s} min margin {row['min_margin']:.6g}  "
              f"violations {row['violations']}")
    print("per-benchmark:")
    for key in sorted(summary.get("benchmarks", {})):
        row = summary["benchmarks"][key]
        print(f"  {key:24s} min margin {row['min_margin']:.6g}  "
              f"violations {row['violations']}  "
              f"identity residual {row['gap_rel_residual']:.2e}")

    out_dir = os.path.dirname(os.path.abspath(args.summary))
    bounds_path = os.path.join(out_dir, "bounds.csv")
    diag_path = os.path.join(out_dir, "diagnostics.csv")
    from . import plots

    rendered = []
    if os.path.exists(bounds_path):
        target = os.path.join(out_dir, "margins.png")
        plots.render_margins(bounds_path, target)
        rendered.append(target)
    if os.path.exists(diag_path):
        target = os.path.join(out_dir, "potential.png")
        plots.render_potential(diag_path, target)
        rendered.append(target)
    for path in rendered:
        print(f"figure: {path}")
    return EXIT_OK


# ============================================================
# Entry point
# ============================================================


class _Parser(argparse.ArgumentParser):
    # usage errors share the bad-config exit code, keeping 2 for violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="leadcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured run")
    p_run.add_argument("config")
    p_run.add_argument("--out-dir", default="out")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="replay a config and compare with a recorded trace")
    p_verify.add_argument("trace")
    p_verify.add_argument("config")
    p_verify.set_defaults(func=cmd_verify)

    p_report = sub.add_parser("report", help="print margins and render figures")
    p_report.add_argument("summary")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
