"""BDI control loop against a deterministic simulated environment.

Goal reasoning (desire activation and rule-gated revision), the
intention scheduler (plan queue, replacement, early arrest), the
executor and the events monitor all run on one discrete-event virtual
timeline, interleaved with the search threads.  All virtual time is
exact rational arithmetic, so a run is a pure function of its inputs.
"""

from __future__ import annotations

import heapq
import itertools
import json
import time as _time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Optional, Sequence

from . import pddl
from .execsim import (CommittedBoard, ForecastClass, classify_forecast,
                      open_actions, select_commit, simulate_plan)
from .grounding import Goal, GroundedTask
from .plan import TimedPlan, extract_timed_plan, makespan, solve_stn, Inconsistent
from .search import (ImprovedPlan, PartialPlan, RoundLimits, SearchContext,
                     SearchFailed, search_thread)
from .state import SnapKind


# ---------------------------------------------------------------------------
# configuration

@dataclass
class Config:
    min_commit: int = 1
    interval_ms: int = 500
    plan_size_limit: int = 4
    time_limit: Fraction = Fraction(300)
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.min_commit < 1 or self.interval_ms <= 0 or self.plan_size_limit < 1:
            raise ValueError("config bounds must be positive")
        if not isinstance(self.time_limit, Fraction):
            self.time_limit = Fraction(str(self.time_limit))

    def limits(self) -> RoundLimits:
        return RoundLimits(interval=Fraction(self.interval_ms, 1000),
                           plan_size_limit=self.plan_size_limit)


class VirtualClock:
    """Event-driven clock; time only moves when the scheduler says so."""

    def __init__(self):
        self._now = Fraction(0)

    def now(self) -> Fraction:
        return self._now

    def advance_to(self, t: Fraction) -> None:
        if t < self._now:
            raise ValueError("virtual time cannot go backwards")
        self._now = t


class WallClock:
    def now(self) -> float:
        return _time.monotonic()


# ---------------------------------------------------------------------------
# desires and goal revision

@dataclass(frozen=True)
class Desire:
    id: str
    goal: Goal
    priority: float = 1.0
    precondition: Goal = Goal(frozenset(), frozenset())
    revision_rules: tuple[str, ...] = ()


@dataclass(frozen=True)
class RevisionRule:
    """Combines two goals into their conjunction when the pattern matches.

    A pattern is a predicate name or "*"; it matches a goal whose
    literals all use that predicate.
    """

    id: str
    applies_to: tuple[str, str]


def activate_goal(desires: Sequence[Desire], beliefs: frozenset[int]) -> Optional[Desire]:
    """Highest-priority desire whose precondition holds; ties by id."""
    eligible = [d for d in desires if d.precondition.satisfied_by(beliefs)]
    if not eligible:
        return None
    return min(eligible, key=lambda d: (-d.priority, d.id))


def _pattern_matches(pattern: str, goal: Goal, task: GroundedTask) -> bool:
    if pattern == "*":
        return True
    for aid in goal.pos | goal.neg:
        name = task.atom_name(aid)
        pred = name[1:-1].split()[0]
        if pred != pattern:
            return False
    return True


def revise_goal(active: Goal, incoming: Goal, rules: Sequence[RevisionRule],
                task: GroundedTask) -> tuple[Optional[Goal], str]:
    """Rule-gated conjunction of the active and incoming goal.

    Returns (revised goal, reason).  The revised goal entails both
    inputs; contradictory literal sets yield no revision.
    """
    rule = None
    for r in rules:
        if _pattern_matches(r.applies_to[0], active, task) and \
                _pattern_matches(r.applies_to[1], incoming, task):
            rule = r
            break
    if rule is None:
        return None, "no matching rule"
    pos = active.pos | incoming.pos
    neg = active.neg | incoming.neg
    if pos & neg:
        return None, "contradictory literals"
    return Goal(frozenset(pos), frozenset(neg)), rule.id


# ---------------------------------------------------------------------------
# plan queue

ScheduleAction = str  # "enqueue" | "replace" | "reject"


@dataclass
class PlanQueue:
    """Committed prefix plus the pending segments that chain after it."""

    chain: list[int] = field(default_factory=list)  # snap ids
    segments: list[tuple[int, ...]] = field(default_factory=list)
    incumbent_makespan: Optional[Fraction] = None


def schedule_plan(queue: PlanQueue, committed: tuple[int, ...], msg) -> ScheduleAction:
    """Decide how a search message lands in the queue.

    A partial plan extending the current chain is enqueued; a plan
    whose context stops at (or inside) the committed prefix replaces
    everything pending after that context; anything else is stale.
    Improved plans must still be anchored at the committed baseline.
    """
    chain = tuple(queue.chain)
    if isinstance(msg, PartialPlan):
        prefix = tuple(msg.prefix)
        if prefix == chain:
            return "enqueue"
        if len(prefix) >= len(committed) and chain[:len(prefix)] == prefix:
            return "replace"
        return "reject"
    if isinstance(msg, ImprovedPlan):
        candidate = tuple(x for seg in msg.plans for x in seg)
        prefix = tuple(msg.prefix)
        if committed[:len(prefix)] != prefix:
            return "reject"
        overrun = committed[len(prefix):]
        if tuple(candidate[:len(overrun)]) != overrun:
            return "reject"
        return "replace"
    return "reject"


def early_arrest_point(plan: TimedPlan, anchor: int) -> set[int]:
    """Entries that must still finish when arresting after entry `anchor`.

    Every action dispatched before the anchor naturally finishes must
    complete; everything else is cancelled before dispatch.
    """
    a = plan.entries[anchor]
    finish = a.time + a.duration
    keep = {anchor}
    for i, e in enumerate(plan.entries):
        if e.time < finish:
            keep.add(i)
    return keep


# ---------------------------------------------------------------------------
# environment and monitor

@dataclass(frozen=True)
class EnvEvent:
    at: Fraction
    kind: str  # "action_status" | "exogenous" | "push_desire"
    # action_status payload
    action: Optional[int] = None
    snap: Optional[int] = None
    status: Optional[str] = None  # running | success | fail
    detail: str = ""
    # exogenous payload
    add: frozenset[int] = frozenset()
    delete: frozenset[int] = frozenset()
    # push_desire payload
    desire: Optional[Desire] = None


class Environment:
    """Ground-truth world state plus the schedule of future happenings."""

    def __init__(self, task: GroundedTask, truth: frozenset[int]):
        self.task = task
        self.truth = truth
        self.running: list[int] = []  # ground action indexes, dispatch order
        self._heap: list[tuple[Fraction, int, int, dict]] = []
        self._seq = itertools.count()
        self._cancelled: set[int] = set()
        self._fail_next: set[str] = set()

    def schedule_exogenous(self, at: Fraction, add: frozenset[int],
                           delete: frozenset[int]) -> None:
        heapq.heappush(self._heap, (at, next(self._seq), 0,
                                    {"kind": "exogenous", "add": add, "delete": delete}))

    def schedule_desire(self, at: Fraction, desire: Desire) -> None:
        heapq.heappush(self._heap, (at, next(self._seq), 0,
                                    {"kind": "push_desire", "desire": desire}))

    def schedule_injected_failure(self, at: Fraction, signature: str) -> None:
        heapq.heappush(self._heap, (at, next(self._seq), 0,
                                    {"kind": "inject_failure", "signature": signature}))

    def schedule_dispatch(self, at: Fraction, snap_id: int, token: int) -> None:
        heapq.heappush(self._heap, (at, next(self._seq), token,
                                    {"kind": "dispatch", "snap": snap_id}))

    def cancel_token(self, token: int) -> None:
        self._cancelled.add(token)

    def next_time(self) -> Optional[Fraction]:
        while self._heap:
            t, _, token, item = self._heap[0]
            if item["kind"] == "dispatch" and token in self._cancelled:
                heapq.heappop(self._heap)
                continue
            return t
        return None

    def goal_holds(self, goal: Goal) -> bool:
        return goal.satisfied_by(self.truth) and not self.running


def executor_tick(env: Environment, until: Fraction) -> list[EnvEvent]:
    """Advance the environment through every happening due by `until`.

    Dispatches re-check applicability against ground truth, not agent
    beliefs; exogenous changes that break a running action's over-all
    guard fail that action on the spot.
    """
    events: list[EnvEvent] = []
    while True:
        nt = env.next_time()
        if nt is None or nt > until:
            break
        t, _, token, item = heapq.heappop(env._heap)
        kind = item["kind"]
        if kind == "dispatch":
            if token in env._cancelled:
                continue
            events.extend(_dispatch(env, t, item["snap"]))
        elif kind == "exogenous":
            env.truth = (env.truth - item["delete"]) | item["add"]
            events.append(EnvEvent(at=t, kind="exogenous",
                                   add=item["add"], delete=item["delete"]))
            events.extend(_check_guards(env, t))
        elif kind == "inject_failure":
            env._fail_next.add(item["signature"])
        elif kind == "push_desire":
            events.append(EnvEvent(at=t, kind="push_desire", desire=item["desire"]))
    return events


def _dispatch(env: Environment, t: Fraction, snap_id: int) -> list[EnvEvent]:
    task = env.task
    snap = task.snaps[snap_id]
    action = task.actions[snap.parent]
    sig = action.signature()

    if sig in env._fail_next:
        env._fail_next.discard(sig)
        if snap.kind is SnapKind.START:
            return [EnvEvent(at=t, kind="action_status", action=snap.parent,
                             snap=snap_id, status="fail", detail="injected failure")]

    ok = snap.cond_pos <= env.truth and not (snap.cond_neg & env.truth)
    if snap.kind is SnapKind.END and snap.parent not in env.running:
        ok = False
    missing = ""
    if ok and snap.kind is SnapKind.START:
        # the action's own over-all guard must hold once it starts
        after = (env.truth - snap.dels) | snap.adds
        if not (snap.guard_pos <= after) or (snap.guard_neg & after):
            ok = False
            missing = "over-all condition violated"
    if not ok:
        if not missing:
            for aid in sorted(snap.cond_pos - env.truth):
                missing = task.atom_name(aid)
                break
            else:
                for aid in sorted(snap.cond_neg & env.truth):
                    missing = f"(not {task.atom_name(aid)})"
                    break
        if snap.parent in env.running:
            env.running.remove(snap.parent)
        return [EnvEvent(at=t, kind="action_status", action=snap.parent,
                         snap=snap_id, status="fail", detail=missing)]

    env.truth = (env.truth - snap.dels) | snap.adds
    if snap.kind is SnapKind.START:
        env.running.append(snap.parent)
        status = "running"
    else:
        env.running.remove(snap.parent)
        status = "success"
    events = [EnvEvent(at=t, kind="action_status", action=snap.parent,
                       snap=snap_id, status=status)]
    events.extend(_check_guards(env, t))
    return events


def _check_guards(env: Environment, t: Fraction) -> list[EnvEvent]:
    out = []
    for a in list(env.running):
        act = env.task.actions[a]
        if not (act.overall_pos <= env.truth) or (act.overall_neg & env.truth):
            env.running.remove(a)
            out.append(EnvEvent(at=t, kind="action_status", action=a,
                                snap=2 * a + 1, status="fail",
                                detail="over-all condition violated"))
    return out


def monitor(events: Sequence[EnvEvent], beliefs: frozenset[int],
            task: GroundedTask) -> frozenset[int]:
    """Fold environment events into the agent's beliefs."""
    for ev in events:
        if ev.kind == "exogenous":
            beliefs = (beliefs - ev.delete) | ev.add
        elif ev.kind == "action_status" and ev.status in ("running", "success"):
            snap = task.snaps[ev.snap]
            beliefs = (beliefs - snap.dels) | snap.adds
    return beliefs


# ---------------------------------------------------------------------------
# trace

class AgentTrace:
    """Append-only record of every deliberation and execution event."""

    def __init__(self, clock: VirtualClock):
        self._clock = clock
        self.records: list[dict] = []
        self._seq = itertools.count()

    def add(self, ev: str, **fields) -> None:
        rec = {"t": float(self._clock.now()), "n": next(self._seq), "ev": ev}
        rec.update(fields)
        self.records.append(rec)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.records) + "\n"

    def select(self, ev: str) -> list[dict]:
        return [r for r in self.records if r["ev"] == ev]

    @property
    def outcome(self) -> str:
        for r in reversed(self.records):
            if r["ev"] == "outcome":
                return r["result"]
        return "Unknown"


# ---------------------------------------------------------------------------
# scenario files

@dataclass
class Scenario:
    domain_path: str
    problem_path: str
    desires: list[dict]
    revision_rules: list[RevisionRule]
    events: list[dict]
    config: Config


def _config_from_dict(raw: dict, base: Optional[Config] = None) -> Config:
    cfg = base or Config()
    known = {"min_commit", "interval_ms", "plan_size_limit", "time_limit",
             "seed", "deterministic"}
    values = {
        "min_commit": cfg.min_commit, "interval_ms": cfg.interval_ms,
        "plan_size_limit": cfg.plan_size_limit, "time_limit": cfg.time_limit,
        "seed": cfg.seed, "deterministic": cfg.deterministic,
    }
    for key, val in raw.items():
        if key not in known:
            raise ValueError(f"unknown config key '{key}'")
        values[key] = val
    if not isinstance(values["time_limit"], Fraction):
        values["time_limit"] = Fraction(str(values["time_limit"]))
    return Config(**values)


def load_scenario(path: str, overrides: Optional[dict] = None) -> Scenario:
    with open(path) as fh:
        raw = json.load(fh)
    for key in ("domain_path", "problem_path", "desires"):
        if key not in raw:
            raise ValueError(f"scenario is missing '{key}'")
    rules = [RevisionRule(id=r["id"], applies_to=tuple(r["applies_to"]))
             for r in raw.get("revision_rules", [])]
    config = _config_from_dict(raw.get("config", {}))
    if overrides:
        config = _config_from_dict(overrides, config)
    return Scenario(
        domain_path=raw["domain_path"],
        problem_path=raw["problem_path"],
        desires=raw["desires"],
        revision_rules=rules,
        events=raw.get("events", []),
        config=config,
    )


def parse_goal_literals(literals: Sequence[str], task: GroundedTask) -> Goal:
    """Ground textual literals like "(at b1 w3)" against the task."""
    pos, neg = set(), set()
    for text in literals:
        forms = pddl._read_sexprs(pddl.tokenize(text))
        if len(forms) != 1:
            raise ValueError(f"bad literal: {text!r}")
        lit = pddl._parse_literal(forms[0])
        key = f"({lit.pred}{''.join(' ' + a for a in lit.args)})"
        if key not in task.atom_index:
            raise ValueError(f"literal {key} names an atom outside the task")
        (pos if lit.positive else neg).add(task.atom_index[key])
    return Goal(frozenset(pos), frozenset(neg))


def desire_from_dict(raw: dict, task: GroundedTask) -> Desire:
    return Desire(
        id=str(raw["id"]),
        goal=parse_goal_literals(raw["goal"], task),
        priority=float(raw.get("priority", 1.0)),
        precondition=parse_goal_literals(raw.get("precondition", []), task),
        revision_rules=tuple(raw.get("revision_rules", [])),
    )


# ---------------------------------------------------------------------------
# the agent

class _Thread:
    def __init__(self, gen: Iterator[float], ctx: SearchContext, improving: bool):
        self.gen = gen
        self.ctx = ctx
        self.improving = improving
        self.next_time: Optional[Fraction] = None
        self.done = False


class Agent:
    """Orchestrates goal reasoning, search, scheduling and execution."""

    def __init__(self, task: GroundedTask, desires: Sequence[Desire],
                 rules: Sequence[RevisionRule], config: Config,
                 scenario_events: Optional[Sequence[dict]] = None):
        self.task = task
        self.config = config
        self.rules = list(rules)
        self.clock = VirtualClock()
        self.trace = AgentTrace(self.clock)
        self.env = Environment(task, task.init)
        self.beliefs: frozenset[int] = task.init
        self.desire_set: list[Desire] = list(desires)
        self.active: Optional[Desire] = None
        self.goal: Optional[Goal] = None
        self.board = CommittedBoard(task, self.beliefs)
        self.queue = PlanQueue()
        self.dispatched = 0  # snaps of the chain already dispatched
        self.committed_len = 0
        self.rel_times: dict[int, Fraction] = {}
        self.anchor: Fraction = Fraction(0)
        self.token = 0  # guards scheduled dispatches
        self.threads: list[_Thread] = []
        self._thread_ids = itertools.count(1)
        self.search_done = False
        self.improving_launched = False
        self.finished: Optional[str] = None
        self._pending_switch = False
        self._revision_pending = False
        self._load_events(scenario_events or [])

    # -- scenario event stream ----------------------------------------------

    def _load_events(self, events: Sequence[dict]) -> None:
        for raw in events:
            at = Fraction(str(raw["at"]))
            kind = raw["kind"]
            payload = raw.get("payload", {})
            if kind == "exogenous":
                addg = parse_goal_literals(payload.get("add", []), self.task)
                delg = parse_goal_literals(payload.get("del", []), self.task)
                self.env.schedule_exogenous(at, addg.pos, delg.pos)
            elif kind == "push_desire":
                self.env.schedule_desire(at, desire_from_dict(payload, self.task))
            elif kind == "inject_failure":
                self.env.schedule_injected_failure(at, payload["action"])
            else:
                raise ValueError(f"unknown scenario event kind '{kind}'")

    # -- search thread management -------------------------------------------

    def _spawn_search(self, improving: bool,
                      incumbent: Optional[Fraction] = None) -> None:
        ctx = SearchContext(
            task=self.task, goal=self.goal, limits=self.config.limits(),
            clock=self.clock if self.config.deterministic else WallClock(),
            on_message=self._on_message,
            on_trace=lambda rec: self.trace.add(**rec),
            thread_id=next(self._thread_ids),
        )
        gen = search_thread(improving, self.board, ctx, incumbent)
        th = _Thread(gen, ctx, improving)
        th.next_time = self.clock.now()
        self.threads.append(th)

    def _kill_searches(self) -> None:
        for th in self.threads:
            th.ctx.cancelled = True
        self.threads = []

    def _resume(self, th: _Thread) -> None:
        try:
            cost = next(th.gen)
        except StopIteration:
            th.done = True
            if th in self.threads:
                self.threads.remove(th)
            if not th.improving and not th.ctx.cancelled:
                self._non_improving_finished()
            return
        th.next_time = self.clock.now() + Fraction(str(cost)) \
            if not isinstance(cost, Fraction) else self.clock.now() + cost

    def _non_improving_finished(self) -> None:
        if self.finished or self.goal is None:
            return
        remaining = self.queue.chain[self.dispatched:]
        running = open_actions(self.queue.chain[:self.dispatched])
        sim = simulate_plan(self.beliefs, remaining, self.goal, self.task, running)
        if sim.ok:
            self.search_done = True
            self._maybe_launch_improving()

    def _maybe_launch_improving(self) -> None:
        if self.improving_launched or not self.search_done:
            return
        pending = self.queue.chain[self.committed_len:]
        if not pending:
            return
        plan = extract_timed_plan(pending, self.task)
        if isinstance(plan, Inconsistent):
            return
        self.queue.incumbent_makespan = makespan(plan)
        self.improving_launched = True
        self._spawn_search(True, incumbent=self.queue.incumbent_makespan)
        self.trace.add("improving_launched",
                       incumbent=float(self.queue.incumbent_makespan))

    # -- message handling -----------------------------------------------------

    def _on_message(self, msg) -> None:
        if self.finished:
            return
        if isinstance(msg, PartialPlan):
            self._on_partial(msg)
        elif isinstance(msg, ImprovedPlan):
            self._on_improved(msg)
        elif isinstance(msg, SearchFailed):
            self.trace.add("search_failed", thread=msg.thread)
            self._finish("SearchFailed")

    def _sig(self, sid: int) -> str:
        return self.task.snaps[sid].signature(self.task)

    def _on_partial(self, msg: PartialPlan) -> None:
        committed = tuple(self.board.snapshot().actions)
        decision = schedule_plan(self.queue, committed, msg)
        if decision == "reject":
            self.trace.add("plan_rejected", thread=msg.thread, reason="stale prefix")
            return
        if decision == "replace":
            cut = len(msg.prefix)
            dropped = self.queue.chain[cut:]
            self.queue.chain = list(msg.prefix) + list(msg.plan)
            self.trace.add("plan_replaced", thread=msg.thread,
                           dropped=[self._sig(s) for s in dropped],
                           added=[self._sig(s) for s in msg.plan],
                           kind="partial")
        else:
            self.queue.chain.extend(msg.plan)
            self.trace.add("plan_enqueued", thread=msg.thread,
                           segment=[self._sig(s) for s in msg.plan])
        self.queue.segments.append(tuple(msg.plan))
        self._revision_pending = False
        self._after_queue_change()

    def _on_improved(self, msg: ImprovedPlan) -> None:
        committed = tuple(self.board.snapshot().actions)
        decision = schedule_plan(self.queue, committed, msg)
        if decision == "reject":
            self.trace.add("plan_rejected", thread=msg.thread, reason="outdated baseline")
            return
        candidate = [x for seg in msg.plans for x in seg]
        consumed = len(committed) - len(msg.prefix)
        new_pending = candidate[consumed:]
        dropped = self.queue.chain[len(committed):]
        must_finish = self._arrest_bookkeeping()
        self.queue.chain = list(committed) + new_pending
        self.trace.add("plan_replaced", thread=msg.thread,
                       dropped=[self._sig(s) for s in dropped],
                       added=[self._sig(s) for s in new_pending],
                       must_finish=sorted(must_finish),
                       improved_makespan=float(msg.makespan), kind="improved")
        self._after_queue_change()

    def _arrest_bookkeeping(self) -> list[str]:
        """Signatures of dispatched-or-committed actions that must finish."""
        out = set()
        for idx in range(self.committed_len):
            sid = self.queue.chain[idx]
            out.add(self.task.actions[self.task.snaps[sid].parent].signature())
        return sorted(out)

    def _after_queue_change(self) -> None:
        if self.queue.chain and self.dispatched == self.committed_len:
            self._extend_commitment()
        else:
            self._reschedule()
        self._forecast()

    # -- commitment and dispatch ---------------------------------------------

    def _extend_commitment(self) -> None:
        pending = self.queue.chain[self.committed_len:]
        batch = select_commit(pending, self.config.min_commit)
        if batch:
            if self.committed_len == 0:
                self.anchor = self.clock.now()
            self.committed_len += len(batch)
            version = self.board.commit(batch)
            self.trace.add("commit", version=version,
                           actions=[self._sig(s) for s in batch],
                           total_committed=self.committed_len)
        self._reschedule()

    def _reschedule(self) -> None:
        """Recompute dispatch times for undispatched snaps and reschedule."""
        self.token += 1
        self.env.cancel_token(self.token - 1)
        chain = self.queue.chain
        if not chain:
            return
        snaps = [self.task.snaps[s] for s in chain]
        now_rel = self.clock.now() - self.anchor
        fixed = {i: self.rel_times[i] for i in range(self.dispatched)}
        lower = {i: now_rel for i in range(self.dispatched, len(chain))}
        times = solve_stn(snaps, self.task, fixed=fixed, lower_bound=lower)
        if times is None:
            self.trace.add("schedule_inconsistent",
                           chain=[self._sig(s) for s in chain])
            return
        for i in range(self.dispatched, len(chain)):
            self.rel_times[i] = times[i]
        for i in range(self.dispatched, self.committed_len):
            self.env.schedule_dispatch(self.anchor + times[i], chain[i], self.token)

    # -- env event handling ----------------------------------------------------

    def _handle_env_events(self, events: list[EnvEvent]) -> None:
        if not events:
            return
        for ev in events:
            if ev.kind == "exogenous":
                self.trace.add("exogenous",
                               add=sorted(self.task.atom_name(a) for a in ev.add),
                               delete=sorted(self.task.atom_name(a) for a in ev.delete))
            elif ev.kind == "action_status":
                self.trace.add("action_status", status=ev.status,
                               action=self.task.actions[ev.action].signature(),
                               snap=self._sig(ev.snap), detail=ev.detail)
            elif ev.kind == "push_desire":
                self.trace.add("desire_pushed", desire=ev.desire.id,
                               priority=ev.desire.priority)
        self.beliefs = monitor(events, self.beliefs, self.task)
        self.board.update_beliefs(self.beliefs)

        for ev in events:
            if ev.kind == "action_status":
                if ev.status in ("running", "success"):
                    self._snap_dispatched(ev)
                elif ev.status == "fail":
                    self._on_execution_failure(ev)
            elif ev.kind == "push_desire":
                self._on_desire_push(ev.desire)
        if self.finished:
            return
        self._forecast()
        self._check_goal_achieved()

    def _snap_dispatched(self, ev: EnvEvent) -> None:
        idx = self.dispatched
        chain = self.queue.chain
        if idx < len(chain) and chain[idx] == ev.snap:
            self.dispatched += 1
            self.board.mark_executed(1)
            if self.dispatched == self.committed_len and \
                    len(chain) > self.committed_len and not self.finished:
                self._extend_commitment()

    def _clear_intention(self) -> None:
        self.queue = PlanQueue()
        self.dispatched = 0
        self.committed_len = 0
        self.rel_times = {}
        self.search_done = False
        self.improving_launched = False
        self._revision_pending = False

    def _on_execution_failure(self, ev: EnvEvent) -> None:
        self.trace.add("execution_failed",
                       action=self.task.actions[ev.action].signature(),
                       detail=ev.detail)
        # stop dispatching, drop the intention's plan, search from scratch
        self.token += 1
        self.env.cancel_token(self.token - 1)
        self._kill_searches()
        self._clear_intention()
        self.board.reset(self.beliefs)
        if self.goal is not None:
            self._revision_pending = True
            self.trace.add("recovery_search_started")
            self._spawn_search(False)

    def _on_desire_push(self, desire: Desire) -> None:
        if self.active is None:
            self.desire_set.append(desire)
            self._activate_next()
            return
        revised, reason = revise_goal(self.goal, desire.goal,
                                      [r for r in self.rules
                                       if r.id in desire.revision_rules or not desire.revision_rules],
                                      self.task)
        if revised is not None:
            self.trace.add("goal_revised", active=self.active.id,
                           incoming=desire.id, rule=reason,
                           semantics="conjunction of literal sets",
                           revised=sorted(self.task.atom_name(a) for a in revised.pos))
            self.goal = revised
            self._kill_searches()
            self.search_done = False
            self.improving_launched = False
            self.queue.incumbent_makespan = None
            self._revision_pending = True
            self._spawn_search(False)
            return
        self.trace.add("revision_skipped", incoming=desire.id, reason=reason)
        if desire.priority > self.active.priority and \
                desire.precondition.satisfied_by(self.beliefs):
            self._preempt(desire)
        else:
            self.desire_set.append(desire)

    def _preempt(self, desire: Desire) -> None:
        """Safely terminate the running plan, then switch to the new desire."""
        plan = self._inflight_timed_plan()
        must_finish: list[str] = []
        if plan is not None and plan.entries:
            anchor = max(range(len(plan.entries)), key=lambda i: plan.entries[i].time)
            keep = early_arrest_point(plan, anchor)
            must_finish = sorted(self.task.actions[plan.entries[i].action].signature()
                                 for i in keep)
        self.trace.add("preempted", active=self.active.id, by=desire.id,
                       must_finish=must_finish)
        # committed snaps keep dispatching; pending is dropped
        self.queue.chain = self.queue.chain[:self.committed_len]
        self._kill_searches()
        self.desire_set.append(self.active)
        self.desire_set.append(desire)
        self.active = None
        self.goal = None
        self._pending_switch = True

    def _inflight_timed_plan(self) -> Optional[TimedPlan]:
        chain = self.queue.chain[:self.committed_len]
        if not chain:
            return None
        snaps = [self.task.snaps[s] for s in chain]
        times = [self.rel_times.get(i, Fraction(0)) for i in range(len(chain))]
        entries = []
        for i, snap in enumerate(snaps):
            if snap.kind is SnapKind.START:
                act = self.task.actions[snap.parent]
                entries.append((times[i], act.index, act.duration))
        entries.sort(key=lambda e: (e[0], e[1]))
        from .plan import TimedEntry
        return TimedPlan(tuple(TimedEntry(*e) for e in entries))

    # -- forecasting -------------------------------------------------------------

    def _forecast(self) -> None:
        if self.goal is None or self.finished:
            return
        remaining = self.queue.chain[self.dispatched:]
        if not remaining and not self.search_done:
            return
        running = open_actions(self.queue.chain[:self.dispatched])
        sim = simulate_plan(self.beliefs, remaining, self.goal, self.task, running)
        version = self.board.version
        if sim.outcome == "failure":
            committed_remaining = self.committed_len - self.dispatched
            cls = classify_forecast(sim.step_index, committed_remaining)
            self.trace.add("forecast", version=version, outcome="failure",
                           failure_index=sim.step_index, cls=cls.value,
                           literal=sim.failing_literal)
            if cls is ForecastClass.AFTER_COMMITTED:
                self._search_revision("forecast_after_committed")
            # within committed: nothing can be done, let it fail naturally
        elif sim.outcome == "goal_not_reached" and self.search_done:
            self.trace.add("forecast", version=version, outcome="goal_not_reached")
            self._search_revision("goal_not_reached")

    def _search_revision(self, reason: str) -> None:
        """Reinitialise the search from the committed projection state."""
        if self._revision_pending:
            return
        if any(not th.improving for th in self.threads) and reason == "goal_not_reached":
            return
        self._revision_pending = True
        self._kill_searches()
        self.search_done = False
        self.improving_launched = False
        self.queue.incumbent_makespan = None
        self.trace.add("search_reinitialized", reason=reason,
                       from_state="committed projection")
        self._spawn_search(False)

    # -- goal achievement ---------------------------------------------------------

    def _check_goal_achieved(self) -> None:
        if self.goal is None or self.finished:
            return
        if self.dispatched < self.committed_len:
            return
        if self.env.goal_holds(self.goal):
            self.trace.add("goal_achieved", desire=self.active.id,
                           makespan=float(self.clock.now() - self.anchor)
                           if self.queue.chain else 0.0)
            self._kill_searches()
            self.active = None
            self.goal = None
            self._clear_intention()
            self.board.reset(self.beliefs)
            self._activate_next()

    def _activate_next(self) -> None:
        if self.active is not None or self.finished:
            return
        desire = activate_goal(self.desire_set, self.beliefs)
        if desire is None:
            if not self.desire_set:
                self._finish("GoalAchieved")
            return
        self.desire_set.remove(desire)
        self.active = desire
        self.goal = desire.goal
        self.board.reset(self.beliefs)
        self.anchor = self.clock.now()
        self.trace.add("goal_activated", desire=desire.id,
                       goal=sorted(self.task.atom_name(a) for a in desire.goal.pos))
        if self.env.goal_holds(self.goal):
            self._check_goal_achieved()
            return
        self._spawn_search(False)

    def _finish(self, result: str) -> None:
        if self.finished:
            return
        self.finished = result
        self._kill_searches()
        self.trace.add("outcome", result=result)

    # -- main loop -------------------------------------------------------------

    def run(self) -> AgentTrace:
        self.trace.add("run_start", seed=self.config.seed,
                       deterministic=self.config.deterministic,
                       min_commit=self.config.min_commit,
                       plan_size_limit=self.config.plan_size_limit)
        self._activate_next()
        limit = self.config.time_limit
        while not self.finished:
            env_t = self.env.next_time()
            thread_ts = [th.next_time for th in self.threads if not th.done]
            candidates = [t for t in [env_t] + thread_ts if t is not None]
            if not candidates:
                if self.active is None and self.desire_set:
                    self._finish("Stalled")
                elif self.active is not None:
                    self._finish("Stalled")
                else:
                    self._finish("GoalAchieved")
                break
            t = min(candidates)
            if t > limit:
                self._finish("TimeLimit")
                break
            self.clock.advance_to(t)
            if env_t is not None and env_t == t:
                events = executor_tick(self.env, t)
                self._handle_env_events(events)
            else:
                for th in list(self.threads):
                    if not th.done and th.next_time == t:
                        self._resume(th)
                        break
            if self._pending_switch and not self.env.running \
                    and self.dispatched >= self.committed_len:
                self._pending_switch = False
                self._clear_intention()
                self.board.reset(self.beliefs)
                self._activate_next()
        return self.trace


def run_agent(task: GroundedTask, desires: Sequence[Desire],
              rules: Sequence[RevisionRule], config: Config,
              scenario_events: Optional[Sequence[dict]] = None) -> AgentTrace:
    """Run the full deliberation/execution cycle and return its trace."""
    agent = Agent(task, desires, rules, config, scenario_events)
    return agent.run()
