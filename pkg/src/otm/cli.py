"""Command-line runner for the scenario catalogue.

    otm run SCENARIO [--policy round-robin|seeded|exhaustive] [--seed N]
                     [--max-steps N] [--max-restarts N] [--trace PATH]
                     [--check-opacity] [--input STR] [--emit-opg PATH]
                     [--param NAME=INT ...] [--n N] [--human]
    otm check-trace PATH [--emit-opg PATH] [--human]
    otm list

Reports are JSON on stdout. Exit codes depend only on the run outcome and the
opacity verdict:

    0  finished (or blocked / out of budget where the scenario expects it), opaque
    1  opacity violated
    2  usage or trace parse error
    3  unexpected quiescent blocking
    4  step budget or exploration budget exhausted
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from . import history as hist
from . import scenarios
from .opacity import opaque, opg_of
from .values import to_json
from .scheduler import BLOCKED, FINISHED, RoundRobin, RunResult, SeededRandom, explore, run

EXIT_OK, EXIT_OPACITY, EXIT_USAGE, EXIT_BLOCKED, EXIT_BUDGET = 0, 1, 2, 3, 4


def exit_code(outcome: str, opacity: Optional[bool]) -> int:
    """``outcome`` is ``ok``, ``blocked`` or ``exhausted``; ``opacity`` None means unchecked."""
    if opacity is False:
        return EXIT_OPACITY
    return {"ok": EXIT_OK, "blocked": EXIT_BLOCKED, "exhausted": EXIT_BUDGET}[outcome]


def classify(verdict: str, expect_blocking: bool, endless: bool) -> str:
    if verdict == FINISHED:
        return "ok"
    if verdict == BLOCKED:
        return "ok" if expect_blocking else "blocked"
    return "ok" if endless else "exhausted"


def _summary(result: RunResult, sc, params, check: bool) -> dict:
    h = result.history
    c = hist.counts(h)
    report = {
        "verdict": result.verdict,
        "steps": result.steps,
        "commits": c["commit"],
        "aborts": c["abort"],
        "merges": c["merge"],
        "observed": {k: _jsonable(v) for k, v in sc.observe(result, params).items()},
        "output": result.state.output,
        "opacity": None,
    }
    if check:
        v = opaque(h)
        report["opacity"] = v.opaque
        report["opacity_verdict"] = v.to_json()
    return report


def _jsonable(v):
    if isinstance(v, (bool, int, str)) or v is None:
        return v
    return to_json(v)


def _parse_params(args) -> dict:
    params = {}
    for item in args.param or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--param expects NAME=INT, got {item!r}")
        params[name] = int(value)
    if args.n is not None:
        params["n"] = args.n
    return params


def cmd_run(args) -> int:
    try:
        sc = scenarios.get(args.scenario)
        params = _parse_params(args)
        sc.params(params)
        program = sc.program(params)
    except (KeyError, ValueError) as e:
        print(f"error: {e.args[0] if e.args else e}", file=sys.stderr)
        return EXIT_USAGE
    blocking, endless = sc.expects_blocking(params), sc.is_endless(params)
    report: dict = {"scenario": sc.name, "params": sc.params(params), "policy": args.policy}
    if args.policy == "exhaustive":
        ex = explore(program, max_steps=args.max_steps, max_restarts=args.max_restarts, inputs=args.input)
        terminals = [_summary(r, sc, params, args.check_opacity) for r in ex.results]
        outcomes = [classify(r.verdict, blocking, endless) for r in ex.results]
        if ex.partial:
            outcomes.append("exhausted")
        worst = next((o for o in ("blocked", "exhausted") if o in outcomes), "ok")
        opacity = None if not args.check_opacity else all(t["opacity"] for t in terminals)
        report.update(
            verdicts=sorted({r.verdict for r in ex.results}),
            partial=ex.partial,
            states_visited=ex.states_visited,
            terminals=terminals,
            opacity=opacity,
        )
        first = ex.results[0] if ex.results else None
    else:
        policy = SeededRandom(args.seed) if args.policy == "seeded" else RoundRobin()
        first = run(program, policy, inputs=args.input, max_steps=args.max_steps, max_restarts=args.max_restarts)
        report.update(_summary(first, sc, params, args.check_opacity))
        worst = classify(first.verdict, blocking, endless)
        opacity = report["opacity"]
    report["expected_blocking"] = blocking
    if first is not None and args.trace:
        hist.write_trace(args.trace, first.history)
    if first is not None and args.emit_opg:
        with open(args.emit_opg, "w", encoding="utf-8") as f:
            f.write(opg_of(first.history, encode=False).to_dot())
    code = exit_code(worst, opacity)
    report["exit"] = code
    _emit(report, args.human)
    return code


def cmd_check_trace(args) -> int:
    try:
        h = hist.read_trace(args.path)
        hist.validate(h)
    except (OSError, hist.TraceParseError, hist.HistoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    v = opaque(h)
    report = {
        "events": len(h),
        "consistent": hist.consistent(h),
        "opacity": v.opaque,
        "opacity_verdict": v.to_json(),
    }
    if args.emit_opg:
        with open(args.emit_opg, "w", encoding="utf-8") as f:
            f.write(opg_of(h, encode=False).to_dot())
    code = exit_code("ok", v.opaque)
    report["exit"] = code
    _emit(report, args.human)
    return code


def cmd_list(args) -> int:
    rows = {name: {"description": s.description, "params": s.defaults} for name, s in scenarios.SCENARIOS.items()}
    _emit(rows, args.human)
    return EXIT_OK


def _emit(report: dict, human: bool) -> None:
    if not human:
        print(json.dumps(report, sort_keys=True))
        return
    for key, value in report.items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value, sort_keys=True, indent=2)
        print(f"{key:>16}: {value}")


def _positive(text: str) -> int:
    n = int(text)
    if n <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return n


def _seed(text: str) -> int:
    n = int(text)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otm", description="Run open-transaction scenarios and check opacity.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a named scenario")
    p.add_argument("scenario")
    p.add_argument("--policy", choices=["round-robin", "seeded", "exhaustive"], default="round-robin")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--max-steps", type=_positive, default=None)
    p.add_argument("--max-restarts", type=_positive, default=None)
    p.add_argument("--trace", metavar="PATH")
    p.add_argument("--check-opacity", action="store_true")
    p.add_argument("--input", default="", help="characters available to getChar")
    p.add_argument("--emit-opg", metavar="PATH", help="write the opacity graph as DOT")
    p.add_argument("--param", action="append", metavar="NAME=INT", help="override a scenario parameter")
    p.add_argument("--n", type=_positive, help="shorthand for --param n=N")
    p.add_argument("--human", action="store_true")
    p.set_defaults(func=cmd_run)

    c = sub.add_parser("check-trace", help="recheck opacity of a saved trace")
    c.add_argument("path")
    c.add_argument("--emit-opg", metavar="PATH")
    c.add_argument("--human", action="store_true")
    c.set_defaults(func=cmd_check_trace)

    ls = sub.add_parser("list", help="list the scenarios")
    ls.add_argument("--human", action="store_true")
    ls.set_defaults(func=cmd_list)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "policy", None) is not None:
        exhaustive = args.policy == "exhaustive"
        if args.max_steps is None:
            args.max_steps = 200 if exhaustive else 10_000
        if args.max_restarts is None:
            args.max_restarts = 8 if exhaustive else 1_000
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
