"""Relaxed-planning-graph heuristic over snap actions.

Delete effects and negative conditions are ignored.  End snaps are
gated behind a per-action started marker so each half of a durative
action occupies its own layer; running actions contribute their End
adds to layer 0 for free since their completion is inevitable in the
relaxation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .grounding import Goal, GroundedTask
from .state import SearchState, SnapKind

INF = math.inf


class Unreachable:
    def __repr__(self) -> str:
        return "Unreachable"


UNREACHABLE = Unreachable()


@dataclass
class RelaxedGraph:
    """Layered relaxed reachability graph.

    Facts are atom ids; started markers for action i are encoded as
    -(i + 1) so they share the int fact space.
    """

    fact_layers: list[set[int]]
    action_layers: list[set[int]]  # snap ids
    fact_level: dict[int, int]  # fact -> first layer index
    snap_level: dict[int, int]  # snap id -> first action layer index
    goal_membership: dict[int, int]  # goal atom -> first fact layer
    relaxed_plan: set[int]  # snap ids chosen by backward extraction
    helpful: set[int]  # relaxed-plan snaps in action layer 0


def _marker(action_index: int) -> int:
    return -(action_index + 1)


def _relaxed_pre(snap, markers_needed: bool) -> frozenset[int]:
    pre = snap.cond_pos | snap.guard_pos
    if markers_needed and snap.kind is SnapKind.END:
        pre = pre | {_marker(snap.parent)}
    return pre


def build_rpg(state: SearchState, task: GroundedTask, goal: Goal):
    """Expand delete-relaxed snap layers until the goal or a fixpoint.

    Returns a RelaxedGraph, or UNREACHABLE when the fixpoint comes
    first.  Negative goal literals are outside the relaxation and are
    treated as free.
    """
    facts: set[int] = set(state.fluents)
    running = [a for a, _ in state.running]
    for a in running:
        facts |= task.actions[a].end_add
        facts.add(_marker(a))

    fact_level = {f: 0 for f in facts}
    fact_layers = [set(facts)]
    action_layers: list[set[int]] = []
    snap_level: dict[int, int] = {}

    goal_atoms = set(goal.pos)
    layer = 0
    while True:
        if goal_atoms <= facts:
            break
        new_snaps = set()
        frontier_adds: set[int] = set()
        for snap in task.snaps:
            if snap.snap_id in snap_level:
                continue
            if _relaxed_pre(snap, True) <= facts:
                new_snaps.add(snap.snap_id)
                snap_level[snap.snap_id] = layer
                frontier_adds |= snap.adds
                if snap.kind is SnapKind.START:
                    frontier_adds.add(_marker(snap.parent))
        if not new_snaps and not (frontier_adds - facts):
            return UNREACHABLE
        action_layers.append(new_snaps)
        added = frontier_adds - facts
        if not added:
            if goal_atoms <= facts:
                break
            return UNREACHABLE
        layer += 1
        facts |= added
        for f in added:
            fact_level[f] = layer
        fact_layers.append(set(facts))

    graph = RelaxedGraph(
        fact_layers=fact_layers,
        action_layers=action_layers,
        fact_level=fact_level,
        snap_level=snap_level,
        goal_membership={g: fact_level[g] for g in goal_atoms},
        relaxed_plan=set(),
        helpful=set(),
    )
    _extract_relaxed_plan(graph, task, goal_atoms)
    return graph


def _achiever(graph: RelaxedGraph, task: GroundedTask, fact: int) -> Optional[int]:
    """Earliest-layer achiever snap for a fact, ties by task order."""
    level = graph.fact_level[fact]
    if level == 0:
        return None
    best = None
    for snap in task.snaps:
        lv = graph.snap_level.get(snap.snap_id)
        if lv is None or lv != level - 1:
            continue
        produces = snap.adds if fact >= 0 else set()
        if fact < 0 and snap.kind is SnapKind.START and _marker(snap.parent) == fact:
            produces = {fact}
        if fact in produces:
            best = snap.snap_id
            break  # task.snaps is already in deterministic task order
    return best


def _extract_relaxed_plan(graph: RelaxedGraph, task: GroundedTask,
                          goal_atoms: set[int]) -> None:
    chosen: set[int] = set()
    max_level = max((graph.fact_level[g] for g in goal_atoms), default=0)
    agenda: list[set[int]] = [set() for _ in range(max_level + 1)]
    for g in goal_atoms:
        agenda[graph.fact_level[g]].add(g)
    satisfied: set[int] = set()
    for level in range(max_level, 0, -1):
        for fact in sorted(agenda[level]):
            if fact in satisfied:
                continue
            satisfied.add(fact)
            sid = _achiever(graph, task, fact)
            if sid is None:
                continue
            if sid in chosen:
                continue
            chosen.add(sid)
            snap = task.snaps[sid]
            for pre in _relaxed_pre(snap, True):
                lv = graph.fact_level.get(pre, 0)
                if lv > 0 and pre not in satisfied:
                    agenda[min(lv, level - 1)].add(pre)
    graph.relaxed_plan = chosen
    graph.helpful = {sid for sid in chosen if graph.snap_level.get(sid) == 0}


def hval(state: SearchState, task: GroundedTask, goal: Goal) -> float:
    """Snap count of the extracted relaxed plan; +inf when unreachable."""
    graph = build_rpg(state, task, goal)
    if isinstance(graph, Unreachable):
        return INF
    return float(len(graph.relaxed_plan))


def helpful_actions(graph: RelaxedGraph) -> set[int]:
    """Relaxed-plan snaps applicable in layer 0 (snap ids)."""
    return set(graph.helpful)
