"""Execution simulator: committed-action bookkeeping and failure forecasting.

The CommittedBoard is the one object shared between the agent loop
(single writer) and search threads (readers); snapshots are atomic.
Forecasting progresses the current belief state through the remaining
plan, checking each snap's preconditions and every running action's
over-all guard, exactly as the executor will.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .grounding import Goal, GroundedTask
from .state import SearchState, applicable, apply, initial_state


class ProjectionFailed(Exception):
    def __init__(self, step_index: int, literal: str):
        super().__init__(f"committed step {step_index} requires {literal}")
        self.step_index = step_index
        self.literal = literal


class ForecastClass(Enum):
    WITHIN_COMMITTED = "within_committed"
    AFTER_COMMITTED = "after_committed"


@dataclass(frozen=True)
class SimulationResult:
    outcome: str  # "success" | "failure" | "goal_not_reached"
    final_state: Optional[SearchState] = None
    step_index: Optional[int] = None
    failing_literal: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.outcome == "success"


def _first_violation(state: SearchState, snap, task: GroundedTask) -> str:
    for aid in sorted(snap.cond_pos - state.fluents):
        return task.atom_name(aid)
    for aid in sorted(snap.cond_neg & state.fluents):
        return f"(not {task.atom_name(aid)})"
    return "<running/mutex constraint>"


def open_actions(prefix: Sequence[int]) -> list[int]:
    """Ground actions started but not yet ended in a snap-id sequence."""
    running: list[int] = []
    for sid in prefix:
        action = sid // 2
        if sid % 2 == 0:
            running.append(action)
        elif action in running:
            running.remove(action)
    return running


def _seed_state(fluents: frozenset[int], running: Sequence[int]) -> SearchState:
    entries = tuple((a, -len(running) + i) for i, a in enumerate(running))
    return SearchState(fluents=fluents, running=entries, steps=())


def simulate_plan(fluents: frozenset[int], steps: Sequence[int], goal: Goal,
                  task: GroundedTask, running: Sequence[int] = ()) -> SimulationResult:
    """Progress a belief state through a snap sequence.

    `running` carries the actions already started in the world whose
    End snaps appear in `steps`.  Reports Failure at the first snap
    whose preconditions (or a running action's over-all guard) do not
    hold, GoalNotReached when the plan runs clean but misses the goal,
    Success otherwise.  A plan that leaves actions open cannot have
    achieved the goal.
    """
    state = _seed_state(fluents, running)
    for i, sid in enumerate(steps):
        snap = task.snaps[sid]
        if not applicable(state, snap, task):
            return SimulationResult("failure", step_index=i,
                                    failing_literal=_first_violation(state, snap, task))
        state = apply(state, snap, task, strict=False)
    if not state.no_run_actions() or not goal.satisfied_by(state.fluents):
        return SimulationResult("goal_not_reached", final_state=state)
    return SimulationResult("success", final_state=state)


TOP_GOAL = Goal(frozenset(), frozenset())  # always satisfied


def project_committed(fluents: frozenset[int], committed: Sequence[int],
                      task: GroundedTask, running: Sequence[int] = ()) -> frozenset[int]:
    """Progress the belief state through the committed snaps.

    Raises ProjectionFailed when a committed precondition no longer
    holds; that is precisely a within-committed failure forecast.
    """
    state = _seed_state(fluents, running)
    for i, sid in enumerate(committed):
        snap = task.snaps[sid]
        if not applicable(state, snap, task):
            raise ProjectionFailed(i, _first_violation(state, snap, task))
        state = apply(state, snap, task, strict=False)
    return state.fluents


def classify_forecast(failure_index: int, committed_len: int) -> ForecastClass:
    """Failures inside the committed prefix cannot be avoided."""
    if failure_index < committed_len:
        return ForecastClass.WITHIN_COMMITTED
    return ForecastClass.AFTER_COMMITTED


def select_commit(queue: Sequence[int], min_commit: int) -> list[int]:
    """Shortest committable prefix of at least min_commit snaps.

    A prefix is committable when every Start in it is matched by its
    End (no open actions); snap ids carry their kind in the low bit.
    Falls back to the whole queue when no such point exists.
    """
    if min_commit < 1:
        raise ValueError("min_commit must be >= 1")
    if not queue:
        return []
    balance = 0
    for i, sid in enumerate(queue):
        balance += 1 if sid % 2 == 0 else -1
        if balance == 0 and i + 1 >= min_commit:
            return list(queue[: i + 1])
    return list(queue)


@dataclass(frozen=True)
class BoardSnapshot:
    actions: tuple[int, ...]  # all committed snap ids, executed included
    executed: int  # how many of them have been dispatched
    projection: Optional[frozenset[int]]  # belief progressed through the rest
    version: int
    failed: bool  # a committed precondition no longer holds


class CommittedBoard:
    """Single-writer board of committed actions and their projection.

    Commitment only grows between reinitialisations; every write
    republishes a mutually consistent (actions, projection, version)
    snapshot.
    """

    def __init__(self, task: GroundedTask, beliefs: frozenset[int]):
        self._task = task
        self._lock = threading.Lock()
        self._actions: tuple[int, ...] = ()
        self._executed = 0
        self._version = 0
        self._beliefs = beliefs
        self._projection: Optional[frozenset[int]] = beliefs
        self._failed = False

    def snapshot(self) -> BoardSnapshot:
        with self._lock:
            return BoardSnapshot(self._actions, self._executed,
                                 self._projection, self._version, self._failed)

    @property
    def version(self) -> int:
        return self._version

    def _refresh_projection(self) -> None:
        remaining = self._actions[self._executed:]
        running = open_actions(self._actions[:self._executed])
        try:
            self._projection = project_committed(self._beliefs, remaining,
                                                 self._task, running)
            self._failed = False
        except ProjectionFailed:
            self._projection = None
            self._failed = True

    def commit(self, snaps: Sequence[int]) -> int:
        with self._lock:
            self._actions = self._actions + tuple(snaps)
            self._version += 1
            self._refresh_projection()
            return self._version

    def mark_executed(self, count: int = 1) -> None:
        with self._lock:
            self._executed += count
            self._version += 1
            self._refresh_projection()

    def update_beliefs(self, beliefs: frozenset[int]) -> None:
        with self._lock:
            self._beliefs = beliefs
            self._version += 1
            self._refresh_projection()

    def reset(self, beliefs: frozenset[int]) -> None:
        """Reinitialisation point: execution stopped or intention changed."""
        with self._lock:
            self._actions = ()
            self._executed = 0
            self._beliefs = beliefs
            self._version += 1
            self._refresh_projection()
