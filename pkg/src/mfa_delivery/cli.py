"""Command-line front end.

Exit status is 0 when every expected outcome and invariant holds, 1 when a
check fails and 2 on a usage error (bad flags or an unreadable input file).
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .bench import bench_crypto, format_table
from .errors import MfaError, ScenarioError
from .evaluation import Sweep, run_attack_eval
from .sim import Scenario, run_replay, run_scenario
from .wire import Transcript

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def bundled(name: str) -> Path:
    """Path of a bundled scenario or sweep file, by stem or file name."""
    fname = name if name.endswith(".json") else f"{name}.json"
    return Path(str(resources.files("mfa_delivery") / "scenarios" / fname))


def _resolve(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    b = bundled(arg)
    if b.exists():
        return b
    raise ScenarioError(f"no such file or bundled scenario: {arg}")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _iters(text: str) -> int:
    n = int(text)
    if n < 100:
        raise argparse.ArgumentTypeError("--iters must be at least 100")
    return n


def _write(path: Optional[str], text: str) -> None:
    if path:
        Path(path).write_text(text)


def _run(args, label: str) -> int:
    sc = Scenario.load(_resolve(args.scenario), args.seed)
    report, transcript = run_scenario(sc)
    if args.transcript_out:
        transcript.save(args.transcript_out)
    _write(args.report_out, report.to_json())
    print(report.summary())
    t = report.timings
    print(f"{label} wall clock {t['total_s']:.2f}s, per session median {t['session_median_s'] * 1e3:.1f}ms "
          f"p95 {t['session_p95_s'] * 1e3:.1f}ms")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_simulate(args) -> int:
    return _run(args, "simulate")


def cmd_attack(args) -> int:
    args.scenario = args.script
    return _run(args, "attack")


def cmd_evaluate(args) -> int:
    sweep = Sweep.load(_resolve(args.sweep), args.seed)
    report = run_attack_eval(sweep, defended=args.defended)
    _write(args.report_out, report.to_json())
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_bench(args) -> int:
    print(format_table(bench_crypto(args.iters)))
    return EXIT_OK


def cmd_replay(args) -> int:
    recorded = Transcript.load(args.transcript)
    name = args.scenario or recorded.meta.get("scenario")
    if not name:
        raise ScenarioError("transcript header names no scenario; pass --scenario")
    seed = args.seed if args.seed is not None else int(recorded.meta.get("seed", 0))
    sc = Scenario.load(_resolve(name), seed)
    report, _ = run_replay(sc, recorded)
    _write(args.report_out, report.to_json())
    print(report.summary())
    r = report.data["replay"]
    print(f"replayed {r['replayed_sessions']} recorded messages into fresh sessions: {r['accepted']} accepted")
    return EXIT_OK if report.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfa-delivery", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a protocol scenario")
    s.add_argument("--scenario", required=True, help="scenario file or bundled name (honest, adversary, attacks)")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.add_argument("--transcript-out", help="write the public transcript here")
    s.add_argument("--report-out", help="write the JSON report here")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("attack", help="run an adversary script")
    a.add_argument("--script", required=True, help="scenario file with adversary actions")
    a.add_argument("--seed", type=int)
    a.add_argument("--transcript-out")
    a.add_argument("--report-out")
    a.set_defaults(func=cmd_attack)

    e = sub.add_parser("evaluate", help="adversarial-example sweep, original vs defended")
    e.add_argument("--sweep", default="sweep", help="sweep file or bundled name")
    e.add_argument("--defended", type=_bool, default=True, help="also evaluate the defended pipeline")
    e.add_argument("--seed", type=int)
    e.add_argument("--report-out")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="time the crypto primitives")
    b.add_argument("--iters", type=_iters, default=200)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("replay", help="feed a recorded transcript into fresh sessions")
    r.add_argument("--transcript", required=True)
    r.add_argument("--scenario", help="scenario that produced the transcript (default: from its header)")
    r.add_argument("--seed", type=int, help="default: from the transcript header")
    r.add_argument("--report-out")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, OSError, MfaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
