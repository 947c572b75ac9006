"""Command-line runner for the scenarios.

Exit status: 0 when the verdict matches expectation (attacks succeed,
controls reject), 1 on a mismatch, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .crypto import DEFAULT_DELTA_T_MS, UsageError
from .harness import SCENARIOS, RunReport, ScenarioConfig, run_scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mecake",
        description="Run the MEC AKE protocol model and its attack scenarios.")
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sessions", type=int, default=10,
                   help="sessions (or trials) to run; per user for traceability")
    p.add_argument("--k-gap", type=int, default=1,
                   help="unrelated sessions between the victim's contact with the "
                        "malicious server and the attacked session")
    p.add_argument("--delta-t-ms", type=int, default=DEFAULT_DELTA_T_MS)
    p.add_argument("--clock-skew-ms", type=int, default=0)
    p.add_argument("--users", type=int, default=2)
    p.add_argument("--negative-control", action="store_true",
                   help="sabotage the attack (or disable the fault) so it should fail")
    p.add_argument("--out", help="write the JSON-lines report to this file")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--verbose", action="store_true", help="include the full transcript")
    return p


def render_text(report: RunReport, verbose: bool) -> str:
    cfg = report.config
    lines = [f"scenario: {cfg.scenario} (seed={cfg.seed})"]
    for k, v in report.metrics.items():
        lines.append(f"  {k}: {v}")
    for a in report.attack_reports[:5]:
        lines.append(f"  [{a.attack}] success={a.success}")
        for name, val in a.recovered.items():
            mark = {True: "==", False: "!="}.get(a.comparison.get(name), "??")
            lines.append(f"      {name:<11} {val} {mark} ground truth")
        for note in a.notes:
            lines.append(f"      note: {note}")
    if len(report.attack_reports) > 5:
        lines.append(f"  ... {len(report.attack_reports) - 5} more attack reports")
    for reason in report.aborted:
        lines.append(f"  aborted: {reason}")
    if verbose:
        for e in report.transcript:
            lines.append(f"  {e.seq:>5} {e.flow} {e.direction:<11} {e.message.to_json()}")
    status = "as expected" if report.ok else "UNEXPECTED"
    lines.append(f"verdict: {report.verdict} (expected {report.expected}, {status})")
    return "\n".join(lines) + "\n"


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = ScenarioConfig(
            scenario=args.scenario, seed=args.seed, n_sessions=args.sessions,
            k_gap=args.k_gap, delta_t=args.delta_t_ms, clock_skew=args.clock_skew_ms,
            n_users=args.users, negative_control=args.negative_control)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return 2

    report = run_scenario(cfg)
    jsonl = report.to_jsonl(include_transcript=args.verbose)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(jsonl)
    if args.format == "json":
        if not args.out:
            sys.stdout.write(jsonl)
    else:
        sys.stdout.write(render_text(report, args.verbose))
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
