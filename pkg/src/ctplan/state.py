"""Totally-ordered forward temporal state model over snap actions.

Every durative action is split into an instantaneous Start and End
snap.  A search state is the set of true atoms plus the multiset of
running (started, unfinished) actions and the snap sequence applied
since the search root.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional

from .grounding import Goal, GroundAction, GroundedTask


class SnapKind(Enum):
    START = "start"
    END = "end"


class PreconditionViolated(Exception):
    def __init__(self, literal: str, snap: "SnapAction"):
        tag = "start" if snap.kind is SnapKind.START else "end"
        super().__init__(f"snap {snap.parent}@{tag} requires {literal}")
        self.literal = literal
        self.snap = snap


@dataclass(frozen=True)
class SnapAction:
    """One instantaneous half of a ground durative action."""

    snap_id: int  # 2*parent for Start, 2*parent+1 for End
    parent: int  # ground action index
    kind: SnapKind
    cond_pos: frozenset[int]
    cond_neg: frozenset[int]
    adds: frozenset[int]
    dels: frozenset[int]
    guard_pos: frozenset[int]  # parent's over-all condition
    guard_neg: frozenset[int]

    def signature(self, task: GroundedTask) -> str:
        tag = "start" if self.kind is SnapKind.START else "end"
        return f"{task.actions[self.parent].signature()}@{tag}"


def split_durative(action: GroundAction) -> tuple[SnapAction, SnapAction]:
    """Split a ground durative action into its Start and End snaps."""
    start = SnapAction(
        snap_id=2 * action.index,
        parent=action.index,
        kind=SnapKind.START,
        cond_pos=action.start_pos,
        cond_neg=action.start_neg,
        adds=action.start_add,
        dels=action.start_del,
        guard_pos=action.overall_pos,
        guard_neg=action.overall_neg,
    )
    end = SnapAction(
        snap_id=2 * action.index + 1,
        parent=action.index,
        kind=SnapKind.END,
        cond_pos=action.end_pos,
        cond_neg=action.end_neg,
        adds=action.end_add,
        dels=action.end_del,
        guard_pos=action.overall_pos,
        guard_neg=action.overall_neg,
    )
    return start, end


@dataclass(frozen=True)
class SearchState:
    """Immutable node of the search space.

    `running` pairs each open action with the step index of its Start,
    ordered by that index.  `steps` is the snap-id sequence applied
    since the search root; re-rooting truncates it.
    """

    fluents: frozenset[int]
    running: tuple[tuple[int, int], ...]  # (action index, start step index)
    steps: tuple[int, ...]
    hval: Optional[float] = field(default=None, compare=False)

    def no_run_actions(self) -> bool:
        return not self.running

    def signature(self) -> tuple:
        return (self.fluents, tuple(sorted(a for a, _ in self.running)))

    def plan_size(self) -> int:
        return len(self.steps)


def initial_state(fluents: frozenset[int]) -> SearchState:
    return SearchState(fluents=fluents, running=(), steps=())


def _guards_hold(fluents: frozenset[int], guards) -> bool:
    for pos, neg in guards:
        if not (pos <= fluents) or (neg & fluents):
            return False
    return True


def applicable(state: SearchState, snap: SnapAction, task: GroundedTask) -> bool:
    """Check snap applicability including the running-action mutex rule.

    A snap applies when its conditions hold, an End has a running
    parent, and the post-snap fluents keep every active over-all guard
    true (for a Start, its own guard becomes active immediately).
    """
    if not (snap.cond_pos <= state.fluents) or (snap.cond_neg & state.fluents):
        return False
    if snap.kind is SnapKind.END:
        if not any(a == snap.parent for a, _ in state.running):
            return False
    after = (state.fluents - snap.dels) | snap.adds
    guards = []
    skipped_own_end = False
    for a, _ in state.running:
        if snap.kind is SnapKind.END and a == snap.parent and not skipped_own_end:
            skipped_own_end = True  # the ending instance releases its guard
            continue
        act = task.actions[a]
        guards.append((act.overall_pos, act.overall_neg))
    if snap.kind is SnapKind.START:
        guards.append((snap.guard_pos, snap.guard_neg))
    return _guards_hold(after, guards)


def apply(state: SearchState, snap: SnapAction, task: GroundedTask,
          strict: bool = True) -> SearchState:
    """Progress a state through one snap (deletes before adds)."""
    if strict and not applicable(state, snap, task):
        for aid in sorted(snap.cond_pos - state.fluents):
            raise PreconditionViolated(task.atom_name(aid), snap)
        for aid in sorted(snap.cond_neg & state.fluents):
            raise PreconditionViolated(f"(not {task.atom_name(aid)})", snap)
        raise PreconditionViolated("<running/mutex constraint>", snap)
    fluents = (state.fluents - snap.dels) | snap.adds
    step_index = len(state.steps)
    if snap.kind is SnapKind.START:
        running = tuple(sorted(state.running + ((snap.parent, step_index),),
                               key=lambda e: e[1]))
    else:
        # remove the earliest unmatched Start of the same action (FIFO)
        entries = list(state.running)
        for i, (a, _) in enumerate(entries):
            if a == snap.parent:
                del entries[i]
                break
        running = tuple(entries)
    return SearchState(fluents=fluents, running=running,
                       steps=state.steps + (snap.snap_id,))


def get_successors(state: SearchState, task: GroundedTask) -> list[SearchState]:
    """One successor per applicable snap, in deterministic task order."""
    out = []
    for action in task.actions:
        start = task.start_snap(action.index)
        if applicable(state, start, task):
            out.append(apply(state, start, task, strict=False))
        end = task.end_snap(action.index)
        if applicable(state, end, task):
            out.append(apply(state, end, task, strict=False))
    return out


def applicable_snaps(state: SearchState, task: GroundedTask) -> list[SnapAction]:
    out = []
    for action in task.actions:
        for snap in (task.start_snap(action.index), task.end_snap(action.index)):
            if applicable(state, snap, task):
                out.append(snap)
    return out


def goal_reached(state: SearchState, goal: Goal) -> bool:
    """Goal literals hold and no action is still open."""
    return state.no_run_actions() and goal.satisfied_by(state.fluents)


def no_run_actions(state: SearchState) -> bool:
    return state.no_run_actions()
