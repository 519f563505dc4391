"""Command-line entry points: plan, run, validate."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .agent import (Agent, Config, Desire, VirtualClock, WallClock,
                    desire_from_dict, load_scenario, run_agent)
from .execsim import CommittedBoard, simulate_plan
from .grounding import GroundedTask, ground
from .pddl import PddlError, parse_domain, parse_problem
from .plan import (TimedPlan, extract_timed_plan, makespan, parse_plan_text,
                   plan_to_snap_sequence, Inconsistent)
from .search import (ImprovedPlan, PartialPlan, SearchContext, SearchFailed,
                     search_thread)


def _load_task(domain_path: str, problem_path: str) -> GroundedTask:
    domain = parse_domain(Path(domain_path).read_text())
    problem = parse_problem(Path(problem_path).read_text())
    return ground(domain, problem)


def _drive(gen, clock: VirtualClock) -> None:
    for cost in gen:
        step = cost if isinstance(cost, Fraction) else Fraction(str(cost))
        clock.advance_to(clock.now() + step)


def offline_plan(task: GroundedTask, config: Config,
                 trace_sink=None) -> Optional[TimedPlan]:
    """Search with an inert committed board until a plan or UNSAT.

    A quick greedy-first thread finds the first solution, then a
    complete thread tries to improve it; the better plan wins.
    """
    on_trace = trace_sink or (lambda rec: None)
    clock = VirtualClock()
    board = CommittedBoard(task, task.init)
    messages: list = []
    ctx = SearchContext(task, task.goal, config.limits(), clock,
                        messages.append, on_trace, thread_id=1)
    _drive(search_thread(False, board, ctx), clock)
    if any(isinstance(m, SearchFailed) for m in messages):
        return None
    steps = [x for m in messages if isinstance(m, PartialPlan) for x in m.plan]
    if not simulate_plan(task.init, steps, task.goal, task).ok:
        return None
    first = extract_timed_plan(steps, task)
    if isinstance(first, Inconsistent):
        return None

    # offline there is no execution to interleave with, so the improving
    # pass gets one unbounded round instead of the commit-sized bursts
    improved: list = []
    from .search import RoundLimits
    wide = RoundLimits(interval=Fraction(10 ** 6), plan_size_limit=10 ** 9)
    ctx2 = SearchContext(task, task.goal, wide, clock,
                         improved.append, on_trace, thread_id=2)
    _drive(search_thread(True, board, ctx2, incumbent_makespan=makespan(first)), clock)
    for msg in improved:
        if isinstance(msg, ImprovedPlan):
            steps2 = [x for seg in msg.plans for x in seg]
            if simulate_plan(task.init, steps2, task.goal, task).ok:
                candidate = extract_timed_plan(steps2, task)
                if not isinstance(candidate, Inconsistent) and \
                        makespan(candidate) < makespan(first):
                    return candidate
    return first


def cmd_plan(args) -> int:
    try:
        task = _load_task(args.domain, args.problem)
    except (PddlError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    config = _config_from_args(args)
    plan = offline_plan(task, config)
    if plan is None:
        print("UNSAT")
        return 1
    text = plan.to_text(task)
    if args.output:
        Path(args.output).write_text(text)
    sys.stdout.write(text)
    print(f"; makespan {float(makespan(plan)):.3f}")
    return 0


def cmd_run(args) -> int:
    overrides = {}
    for key in ("min_commit", "interval_ms", "plan_size_limit", "seed"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    if args.time_limit is not None:
        overrides["time_limit"] = args.time_limit
    if args.deterministic is not None:
        overrides["deterministic"] = args.deterministic
    try:
        scenario = load_scenario(args.scenario, overrides)
        task = _load_task(scenario.domain_path, scenario.problem_path)
        desires = [desire_from_dict(d, task) for d in scenario.desires]
    except (PddlError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    trace = run_agent(task, desires, scenario.revision_rules, scenario.config,
                      scenario.events)
    out = trace.to_jsonl()
    if args.trace:
        Path(args.trace).write_text(out)
    else:
        sys.stdout.write(out)
    print(f"outcome: {trace.outcome}", file=sys.stderr)
    return 0 if trace.outcome == "GoalAchieved" else 1


def cmd_validate(args) -> int:
    try:
        task = _load_task(args.domain, args.problem)
        plan = parse_plan_text(Path(args.plan).read_text(), task)
    except (PddlError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    steps = plan_to_snap_sequence(plan, task)
    result = simulate_plan(task.init, steps, task.goal, task)
    if result.ok:
        print(f"valid: {len(plan.entries)} actions, makespan {float(makespan(plan)):.3f}")
        return 0
    if result.outcome == "failure":
        sig = task.snaps[steps[result.step_index]].signature(task)
        print(f"invalid: step {result.step_index} ({sig}) requires {result.failing_literal}")
    else:
        print("invalid: goal not reached")
    return 1


def _config_from_args(args) -> Config:
    cfg = Config()
    if getattr(args, "min_commit", None) is not None:
        cfg.min_commit = args.min_commit
    if getattr(args, "interval_ms", None) is not None:
        cfg.interval_ms = args.interval_ms
    if getattr(args, "plan_size_limit", None) is not None:
        cfg.plan_size_limit = args.plan_size_limit
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "time_limit", None) is not None:
        cfg.time_limit = Fraction(str(args.time_limit))
    if getattr(args, "deterministic", None) is not None:
        cfg.deterministic = args.deterministic
    return cfg


def _bool_flag(value: str) -> bool:
    if value.lower() in ("true", "1", "yes"):
        return True
    if value.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctplan",
        description="Continual temporal planner with interleaved execution.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--min-commit", dest="min_commit", type=int, default=None)
        p.add_argument("--interval-ms", dest="interval_ms", type=int, default=None)
        p.add_argument("--plan-size-limit", dest="plan_size_limit", type=int, default=None)
        p.add_argument("--seed", dest="seed", type=int, default=None)
        p.add_argument("--time-limit", dest="time_limit", type=float, default=None)
        p.add_argument("--deterministic", dest="deterministic", type=_bool_flag,
                       default=None, metavar="BOOL")

    p_plan = sub.add_parser("plan", help="offline: search until a plan or UNSAT")
    p_plan.add_argument("domain")
    p_plan.add_argument("problem")
    p_plan.add_argument("-o", "--output", default=None, help="plan file path")
    add_common(p_plan)
    p_plan.set_defaults(func=cmd_plan)

    p_run = sub.add_parser("run", help="run a scenario through the agent loop")
    p_run.add_argument("scenario")
    p_run.add_argument("--trace", default=None, help="trace file path (JSON lines)")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="simulate a plan file against a task")
    p_val.add_argument("domain")
    p_val.add_argument("problem")
    p_val.add_argument("plan")
    add_common(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
