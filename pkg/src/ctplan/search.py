"""Round-based continual search with greedy and complete modes.

A search thread is a generator: it yields a virtual-time cost after
every expansion so a scheduler can interleave it with plan execution,
and it reports progress through an injected message callback.  Rounds
return the most promising committable state found so far; between
rounds the search re-roots onto that state, truncating its plan prefix
from the open list.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterator, Optional

from .grounding import Goal, GroundedTask
from .heuristic import INF, Unreachable, build_rpg
from .plan import extract_timed_plan, is_schedulable, makespan, Inconsistent
from .state import SearchState, SnapKind, applicable, apply, goal_reached, initial_state

EXPANSION_COST = 0.001  # virtual seconds charged per expanded state


class SearchMode(Enum):
    G = "G"  # greedy: helpful-action pruned, ordered by heuristic alone
    NG = "NG"  # non-greedy: complete best-first
    UNSAT = "UNSAT"

    def fallback(self) -> "SearchMode":
        return SearchMode.NG if self is SearchMode.G else SearchMode.UNSAT


@dataclass(frozen=True)
class RoundLimits:
    interval: Fraction = Fraction(1, 2)  # (virtual) clock time per round
    plan_size_limit: int = 4  # snap actions

    def __post_init__(self):
        if self.interval <= 0 or self.plan_size_limit < 1:
            raise ValueError("round limits must be positive")


# --- messages --------------------------------------------------------------

@dataclass(frozen=True)
class PartialPlan:
    plan: tuple[int, ...]  # snap ids for the new segment
    prefix: tuple[int, ...]  # snap context the segment extends
    thread: int


@dataclass(frozen=True)
class ImprovedPlan:
    plans: tuple[tuple[int, ...], ...]
    prefix: tuple[int, ...]
    makespan: Fraction
    thread: int


@dataclass(frozen=True)
class SearchFailed:
    thread: int


SearchMessage = "PartialPlan | ImprovedPlan | SearchFailed"


# --- open / closed lists ---------------------------------------------------

class OpenList:
    """Priority queue of search states keyed per mode.

    G pops by heuristic value alone (FIFO on ties).  NG pops by
    estimated total plan length (snaps so far plus heuristic), then
    heuristic value, projected makespan and insertion order, so its
    first solution is snap-minimal whenever the relaxation does not
    overestimate.
    """

    def __init__(self, mode: SearchMode):
        self.mode = mode
        self._heap: list[tuple] = []
        self._seq = itertools.count()
        self._sigs: set = set()

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, state: SearchState, proj_makespan: float = 0.0) -> None:
        sig = state.signature()
        if sig in self._sigs:
            return
        self._sigs.add(sig)
        if self.mode is SearchMode.G:
            key = (state.hval, next(self._seq))
        else:
            key = (state.hval + len(state.steps), state.hval,
                   proj_makespan, next(self._seq))
        heapq.heappush(self._heap, (key, state))

    def pop(self) -> SearchState:
        key, state = heapq.heappop(self._heap)
        self._sigs.discard(state.signature())
        return state

    def states(self) -> list[SearchState]:
        return [s for _, s in self._heap]


class ClosedList:
    """Signatures (fluents + running multiset) seen by the search."""

    def __init__(self):
        self._seen: set = set()

    def __len__(self) -> int:
        return len(self._seen)

    def __contains__(self, sig) -> bool:
        return sig in self._seen

    def add(self, sig) -> None:
        self._seen.add(sig)

    def clear(self) -> None:
        self._seen.clear()


def need_to_visit(succ: SearchState, closed: ClosedList) -> bool:
    """True for a fresh signature; records it as visited."""
    sig = succ.signature()
    if sig in closed:
        return False
    closed.add(sig)
    return True


# --- core logic ------------------------------------------------------------

def search_core_logic(mode: SearchMode, succ: SearchState, open_list: OpenList,
                      task: Optional[GroundedTask] = None) -> OpenList:
    """Insert a successor with the mode's priority."""
    proj = 0.0
    if mode is SearchMode.NG and task is not None:
        plan = extract_timed_plan(succ.steps, task)
        if not isinstance(plan, Inconsistent):
            proj = float(makespan(plan))
    open_list.push(succ, proj)
    return open_list


def reroot(new_state: SearchState, open_list: OpenList, closed: ClosedList,
           ) -> tuple[SearchState, OpenList, ClosedList]:
    """Make new_state the root: clear closed, keep and truncate only the
    open states that extend its plan prefix."""
    prefix = new_state.steps
    cut = len(prefix)
    fresh_open = OpenList(open_list.mode)
    for s in open_list.states():
        if len(s.steps) >= cut and s.steps[:cut] == prefix:
            fresh_open.push(replace(s, steps=s.steps[cut:],
                                    running=tuple((a, i - cut) for a, i in s.running)))
    root = replace(new_state, steps=(), running=tuple((a, i - cut) for a, i in new_state.running))
    return root, fresh_open, ClosedList()


def outdated(s_prefix: tuple[int, ...], commit_p: tuple[int, ...],
             emitted: list[tuple[int, ...]]) -> bool:
    """A search is outdated unless the committed actions equal its prefix
    extended by a prefix of what it has emitted so far."""
    if len(commit_p) < len(s_prefix) or commit_p[:len(s_prefix)] != tuple(s_prefix):
        return True
    rest = commit_p[len(s_prefix):]
    expected: list[int] = []
    for seg in emitted:
        expected.extend(seg)
    return tuple(rest) != tuple(expected[:len(rest)])


def improved_solution(plans: list[tuple[int, ...]], final_state: SearchState,
                      task: GroundedTask, incumbent_makespan: Optional[Fraction]) -> bool:
    """Strictly smaller makespan than the incumbent, same baseline."""
    if incumbent_makespan is None:
        return False
    steps: list[int] = []
    for seg in plans:
        steps.extend(seg)
    candidate = extract_timed_plan(steps, task)
    if isinstance(candidate, Inconsistent):
        return False
    return makespan(candidate) < incumbent_makespan


# --- round (Algorithm: one bounded search burst) ---------------------------

@dataclass
class RoundStats:
    round_no: int
    mode: str
    expansions: int = 0
    best_hval: float = INF
    plan_size: int = 0
    elapsed: float = 0.0
    exit: str = ""
    message: str = "none"
    result: Optional[SearchState] = None


class SearchContext:
    """Shared wiring for a search thread: task, goal, limits, clock, sinks."""

    def __init__(self, task: GroundedTask, goal: Goal, limits: RoundLimits,
                 clock, on_message: Callable, on_trace: Optional[Callable] = None,
                 thread_id: int = 0):
        self.task = task
        self.goal = goal
        self.limits = limits
        self.clock = clock
        self.on_message = on_message
        self.on_trace = on_trace or (lambda record: None)
        self.thread_id = thread_id
        self.cancelled = False


def _ensure_hval(state: SearchState, ctx: SearchContext) -> SearchState:
    if state.hval is not None:
        return state
    graph = build_rpg(state, ctx.task, ctx.goal)
    h = INF if isinstance(graph, Unreachable) else float(len(graph.relaxed_plan))
    return replace(state, hval=h)


def search_round(mode: SearchMode, start: SearchState, open_list: OpenList,
                 closed: ClosedList, ctx: SearchContext,
                 stats: RoundStats) -> Iterator[float]:
    """One bounded burst of expansion.

    Yields the virtual cost of each expansion so the caller can
    interleave search with execution.  Returns the goal state, the best
    committable state so far, or None when the open list is exhausted.
    The best state only advances onto schedulable, committable states
    with a strictly better heuristic value.
    """
    start = _ensure_hval(start, ctx)
    best_s = start
    open_list.push(start)
    need_to_visit(start, closed)
    st = ctx.clock.now()
    stats.best_hval = best_s.hval

    def done(tag: str, result):
        stats.exit = tag
        stats.result = result
        if result is not None:
            stats.plan_size = len(result.steps)
        return result

    while len(open_list):
        if ctx.cancelled:
            return done("cancelled", None)
        s = open_list.pop()
        stats.expansions += 1

        if s.no_run_actions() and s.hval < best_s.hval and is_schedulable(s.steps, ctx.task):
            best_s = s
            stats.best_hval = s.hval
            stats.plan_size = len(s.steps)
        if goal_reached(s, ctx.goal) and is_schedulable(s.steps, ctx.task):
            return done("goal", s)
        if ctx.clock.now() - st >= ctx.limits.interval:
            return done("interval", best_s)
        if len(best_s.steps) >= ctx.limits.plan_size_limit:
            return done("plan_size", best_s)

        graph = build_rpg(s, ctx.task, ctx.goal)
        helpful = None
        if mode is SearchMode.G and not isinstance(graph, Unreachable):
            helpful = set(graph.helpful)
        for succ in _expand(s, ctx.task, mode, helpful):
            if need_to_visit(succ, closed):
                succ = _ensure_hval(succ, ctx)
                if succ.hval == INF:
                    continue  # delete-relaxed dead end is a real dead end
                search_core_logic(mode, succ, open_list, ctx.task)
        yield EXPANSION_COST

    return done("exhausted", None)


def _expand(s: SearchState, task: GroundedTask, mode: SearchMode,
            helpful: Optional[set[int]]) -> list[SearchState]:
    """Applicable successors; G keeps helpful snaps plus pending Ends."""
    out = []
    running = {a for a, _ in s.running}
    for action in task.actions:
        for snap in (task.start_snap(action.index), task.end_snap(action.index)):
            if mode is SearchMode.G and helpful is not None:
                pending_end = snap.kind is SnapKind.END and snap.parent in running
                if snap.snap_id not in helpful and not pending_end:
                    continue
            if applicable(s, snap, task):
                out.append(apply(s, snap, task, strict=False))
    return out


# --- thread (the outer loop) -----------------------------------------------

def search_thread(improving: bool, board, ctx: SearchContext,
                  incumbent_makespan: Optional[Fraction] = None) -> Iterator[float]:
    """Continual search loop around search_round.

    Non-improving threads start greedy and fall back to the complete
    mode when a round exhausts its alternatives; improving threads run
    the complete mode from the start and only report a whole solution
    when it beats the incumbent.  The thread silently stops once the
    executor commits actions it did not anticipate.
    """
    mode = SearchMode.NG if improving else SearchMode.G
    open_list: OpenList = OpenList(mode)
    closed = ClosedList()
    plans: list[tuple[int, ...]] = []
    snapshot = board.snapshot()
    s_prefix = tuple(snapshot.actions)
    curr = _ensure_hval(initial_state(snapshot.projection), ctx)
    round_no = 0

    ctx.on_trace({"ev": "search_started", "thread": ctx.thread_id,
                  "improving": improving, "mode": mode.value,
                  "prefix_len": len(s_prefix)})

    while mode is not SearchMode.UNSAT and not goal_reached(curr, ctx.goal):
        if ctx.cancelled:
            return
        round_no += 1
        stats = RoundStats(round_no=round_no, mode=mode.value)
        t0 = ctx.clock.now()
        new_state = yield from search_round(mode, curr, open_list, closed, ctx, stats)
        stats.elapsed = ctx.clock.now() - t0
        if ctx.cancelled:
            return

        snapshot = board.snapshot()
        commit_p = tuple(snapshot.actions)
        if outdated(s_prefix, commit_p, plans):
            stats.message = "outdated"
            _trace_round(ctx, stats, improving)
            return
        if new_state is None:
            old_mode = mode
            mode = mode.fallback()
            _trace_round(ctx, stats, improving)
            ctx.on_trace({"ev": "mode_transition", "thread": ctx.thread_id,
                          "from": old_mode.value, "to": mode.value})
            if mode is SearchMode.NG:
                # the complete search must not inherit greedy pruning
                s_prefix = commit_p
                if snapshot.projection is None:
                    return
                curr = _ensure_hval(initial_state(snapshot.projection), ctx)
                open_list = OpenList(mode)
                closed = ClosedList()
                plans = []
        elif new_state.steps:
            segment = new_state.steps
            if not improving:
                context = s_prefix + tuple(x for seg in plans for x in seg)
                stats.message = "partial"
                ctx.on_message(PartialPlan(plan=segment, prefix=context,
                                           thread=ctx.thread_id))
            plans.append(segment)
            curr, open_list, closed = reroot(new_state, open_list, closed)
            curr = replace(curr, hval=new_state.hval)
            _trace_round(ctx, stats, improving)
        else:
            _trace_round(ctx, stats, improving)

    if mode is SearchMode.UNSAT and not improving:
        ctx.on_message(SearchFailed(thread=ctx.thread_id))
    elif improving and goal_reached(curr, ctx.goal) and \
            improved_solution(plans, curr, ctx.task, incumbent_makespan):
        steps = tuple(x for seg in plans for x in seg)
        plan = extract_timed_plan(steps, ctx.task)
        ctx.on_message(ImprovedPlan(plans=tuple(plans), prefix=s_prefix,
                                    makespan=makespan(plan), thread=ctx.thread_id))


def _trace_round(ctx: SearchContext, stats: RoundStats, improving: bool) -> None:
    ctx.on_trace({
        "ev": "round", "thread": ctx.thread_id, "improving": improving,
        "round": stats.round_no, "mode": stats.mode,
        "expansions": stats.expansions,
        "best_hval": stats.best_hval if stats.best_hval != INF else "inf",
        "plan_size": stats.plan_size,
        "elapsed_ms": round(float(stats.elapsed) * 1000, 3),
        "exit": stats.exit, "message": stats.message,
    })
