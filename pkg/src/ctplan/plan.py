"""Time-triggered plans and the simple temporal network behind them.

A totally-ordered snap sequence induces an STN: paired Start/End events
are separated by exactly the action's duration, and ordered events get
a small epsilon gap whenever they interfere.  A consistent network
yields an earliest-dispatch schedule; an inconsistent one means the
sequence admits no schedule and the search must keep looking.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .grounding import GroundedTask
from .state import SnapAction, SnapKind

EPSILON = Fraction(1, 1000)


class Inconsistent:
    """Marker result: the snap sequence admits no consistent schedule."""

    def __repr__(self) -> str:
        return "Inconsistent"

    def __eq__(self, other) -> bool:
        return isinstance(other, Inconsistent)

    def __hash__(self) -> int:
        return hash("Inconsistent")


INCONSISTENT = Inconsistent()


@dataclass(frozen=True)
class TimedEntry:
    time: Fraction
    action: int  # ground action index
    duration: Fraction


@dataclass(frozen=True)
class TimedPlan:
    entries: tuple[TimedEntry, ...]

    @property
    def makespan(self) -> Fraction:
        return makespan(self)

    def to_text(self, task: GroundedTask) -> str:
        lines = []
        for e in self.entries:
            sig = task.actions[e.action].signature()
            lines.append(f"{float(e.time):.3f}: {sig} [{float(e.duration):.3f}]")
        return "\n".join(lines) + ("\n" if lines else "")


def makespan(plan: TimedPlan) -> Fraction:
    """Completion time of the last entry; 0 for the empty plan."""
    if not plan.entries:
        return Fraction(0)
    return max(e.time + e.duration for e in plan.entries)


def _conds(snap: SnapAction) -> frozenset[int]:
    # over-all guards count as conditions for ordering purposes
    return snap.cond_pos | snap.guard_pos


def interferes(a: SnapAction, b: SnapAction) -> bool:
    """Later snap b must be strictly after a when they interfere.

    b deletes a condition or add of a, a deletes a condition of b, or
    b adds an atom a requires absent.
    """
    if b.dels & (_conds(a) | a.adds):
        return True
    if a.dels & _conds(b):
        return True
    if b.adds & (a.cond_neg | a.guard_neg):
        return True
    if a.adds & (b.cond_neg | b.guard_neg):
        return True
    return False


def solve_stn(snaps: Sequence[SnapAction], task: GroundedTask,
              fixed: Optional[dict[int, Fraction]] = None,
              lower_bound: Optional[dict[int, Fraction]] = None,
              ) -> Optional[list[Fraction]]:
    """Earliest-time schedule for an ordered snap sequence, or None.

    Constraints: t[i] >= 0; t[j] >= t[i] (+ epsilon on interference)
    for i < j; End at Start + duration for matched pairs; optional
    fixed times and per-event lower bounds.  Solved as longest paths
    from a virtual origin (Bellman-Ford; a positive cycle means the
    network is inconsistent).
    """
    n = len(snaps)
    # edges (u, v, w) meaning t[v] >= t[u] + w, with node n as origin
    edges: list[tuple[int, int, Fraction]] = []
    zero = Fraction(0)
    for i in range(n):
        edges.append((n, i, zero))
    for i in range(n):
        for j in range(i + 1, n):
            gap = EPSILON if interferes(snaps[i], snaps[j]) else zero
            edges.append((i, j, gap))
    # pair Start/End per ground action, FIFO
    open_starts: dict[int, list[int]] = {}
    for i, snap in enumerate(snaps):
        if snap.kind is SnapKind.START:
            open_starts.setdefault(snap.parent, []).append(i)
        else:
            stack = open_starts.get(snap.parent)
            if stack:
                s = stack.pop(0)
                dur = task.actions[snap.parent].duration
                edges.append((s, i, dur))
                edges.append((i, s, -dur))
    if fixed:
        for i, t in fixed.items():
            edges.append((n, i, t))
            edges.append((i, n, -t))
    if lower_bound:
        for i, t in lower_bound.items():
            edges.append((n, i, t))

    dist = [zero] * (n + 1)
    for it in range(n + 1):
        changed = False
        for u, v, w in edges:
            if dist[u] + w > dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            break
    else:
        # one more pass: any further relaxation proves a positive cycle
        for u, v, w in edges:
            if dist[u] + w > dist[v]:
                return None
    return dist[:n]


def extract_timed_plan(steps: Sequence[int], task: GroundedTask):
    """Build the time-triggered plan for a snap-id sequence.

    Returns a TimedPlan or INCONSISTENT.  Unmatched Starts (open
    actions) are scheduled with their full duration.
    """
    snaps = [task.snaps[sid] for sid in steps]
    times = solve_stn(snaps, task)
    if times is None:
        return INCONSISTENT
    entries = []
    for i, snap in enumerate(snaps):
        if snap.kind is SnapKind.START:
            act = task.actions[snap.parent]
            entries.append(TimedEntry(times[i], act.index, act.duration))
    entries.sort(key=lambda e: (e.time, e.action))
    return TimedPlan(tuple(entries))


def is_schedulable(steps: Sequence[int], task: GroundedTask) -> bool:
    return solve_stn([task.snaps[sid] for sid in steps], task) is not None


# ---------------------------------------------------------------------------
# plan file round-trip

def parse_plan_text(text: str, task: GroundedTask) -> TimedPlan:
    """Parse the `t: (action args) [d]` textual plan format."""
    entries = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        time_part, rest = line.split(":", 1)
        rest = rest.strip()
        if not rest.endswith("]"):
            raise ValueError(f"malformed plan line: {raw!r}")
        sig, dur_part = rest.rsplit("[", 1)
        action = task.action_by_signature(sig.strip())
        t = Fraction(time_part.strip())
        entries.append(TimedEntry(t, action.index, action.duration))
    entries.sort(key=lambda e: (e.time, e.action))
    return TimedPlan(tuple(entries))


def plan_to_snap_sequence(plan: TimedPlan, task: GroundedTask) -> list[int]:
    """Order the plan's Start/End events by time.

    Ends sort before Starts at equal timestamps so an action's effects
    are visible to anything dispatched at the instant it finishes.
    """
    events = []
    for idx, e in enumerate(plan.entries):
        events.append((e.time, 1, idx, 2 * e.action))
        events.append((e.time + e.duration, 0, idx, 2 * e.action + 1))
    events.sort(key=lambda ev: (ev[0], ev[1], ev[2]))
    return [sid for _, _, _, sid in events]
