"""Command-line entry points.

Verbs: run (headless replay with metrics), serve (wire-protocol endpoint),
verify (replay a stored event log), bench (latency statistics).

Exit codes: 0 success, 2 scenario invalid, 3 replay diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .serialization import canonical_dumps
from .service import ReplayDiverged, ScenarioInvalid, run_headless, verify_log

EXIT_OK = 0
EXIT_SCENARIO_INVALID = 2
EXIT_REPLAY_DIVERGED = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assembly-engine",
        description="Deterministic adaptive assembly-guidance engine",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="replay a scenario headless and emit metrics")
    run_p.add_argument("--scenario", required=True, help="scenario JSON path")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed-override", type=int, default=None)
    run_p.add_argument(
        "--verify", action="store_true", help="replay twice and compare digests"
    )

    serve_p = sub.add_parser("serve", help="run the session wire-protocol endpoint")
    serve_p.add_argument("--bind", default="127.0.0.1:8765", help="host:port")

    verify_p = sub.add_parser("verify", help="check a stored event log against a replay")
    verify_p.add_argument("--scenario", required=True)
    verify_p.add_argument("--log", required=True, help="events.jsonl path")

    bench_p = sub.add_parser("bench", help="per-frame latency statistics")
    bench_p.add_argument("--scenario", default=None, help="scenario JSON path")
    bench_p.add_argument(
        "--parts", type=int, default=50, help="tracked parts for the builtin benchmark"
    )
    bench_p.add_argument("--frames", type=int, default=400)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("ASSEMBLY_ENGINE_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = _build_parser().parse_args(argv)

    if args.verb == "run":
        try:
            report = run_headless(
                args.scenario,
                args.out,
                verify=args.verify,
                seed_override=args.seed_override,
            )
        except ScenarioInvalid as exc:
            print(f"scenario invalid: {exc}", file=sys.stderr)
            return EXIT_SCENARIO_INVALID
        except ReplayDiverged as exc:
            print(f"replay diverged: {exc}", file=sys.stderr)
            return EXIT_REPLAY_DIVERGED
        print(canonical_dumps(report.metrics))
        return EXIT_OK

    if args.verb == "serve":
        from .server import serve

        serve(args.bind)
        return EXIT_OK

    if args.verb == "verify":
        try:
            verify_log(args.scenario, args.log)
        except ScenarioInvalid as exc:
            print(f"scenario invalid: {exc}", file=sys.stderr)
            return EXIT_SCENARIO_INVALID
        except ReplayDiverged as exc:
            print(f"replay diverged: {exc}", file=sys.stderr)
            return EXIT_REPLAY_DIVERGED
        print("replay matches the stored log")
        return EXIT_OK

    if args.verb == "bench":
        if args.scenario is not None:
            source = args.scenario
        else:
            from .scenarios import build_latency_scenario

            source = build_latency_scenario(n_parts=args.parts, frames=args.frames)
        try:
            report = run_headless(source)
        except ScenarioInvalid as exc:
            print(f"scenario invalid: {exc}", file=sys.stderr)
            return EXIT_SCENARIO_INVALID
        print(json.dumps(report.timing, indent=2))
        return EXIT_OK

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
