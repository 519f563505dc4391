import pytest
from hypothesis import given, settings, strategies as st

from conftest import snap, walk
from ctplan.grounding import ground
from ctplan.pddl import parse_domain, parse_problem
from ctplan.state import (PreconditionViolated, SnapKind, applicable, apply,
                          get_successors, goal_reached, initial_state,
                          no_run_actions, split_durative)


def test_split_move(delivery_task):
    task = delivery_task
    move = task.action_by_signature("(move r1 w1 w2)")
    start, end = split_durative(move)
    names = lambda ids: sorted(task.atom_name(a) for a in ids)
    assert names(start.adds) == ["(moving r1)"]
    assert names(start.dels) == ["(at r1 w1)"]
    assert names(end.adds) == ["(at r1 w2)"]
    assert names(end.dels) == ["(moving r1)"]
    assert start.kind is SnapKind.START and end.kind is SnapKind.END
    assert start.parent == end.parent == move.index


def test_split_empty_start_effects():
    domain = parse_domain("""
        (define (domain tiny)
          (:requirements :strips :durative-actions)
          (:predicates (a) (b))
          (:durative-action go
            :parameters ()
            :duration (= ?duration 1)
            :condition (and (at start (a)))
            :effect (and (at end (b)))))
    """)
    problem = parse_problem("""
        (define (problem t) (:domain tiny) (:objects) (:init (a)) (:goal (and (b))))
    """)
    task = ground(domain, problem)
    start, end = split_durative(task.actions[0])
    assert start.adds == frozenset() and start.dels == frozenset()
    assert len(end.adds) == 1


def test_split_distinct_parents(delivery_task):
    a = delivery_task.action_by_signature("(move r1 w1 w2)")
    b = delivery_task.action_by_signature("(move r1 w2 w3)")
    snaps = [*split_durative(a), *split_durative(b)]
    assert len({s.snap_id for s in snaps}) == 4
    assert {s.parent for s in snaps} == {a.index, b.index}


def test_applicable_start_at_init(delivery_task):
    s0 = initial_state(delivery_task.init)
    assert applicable(s0, snap(delivery_task, "(move r1 w1 w2)", "start"), delivery_task)


def test_end_without_start_not_applicable(delivery_task):
    s0 = initial_state(delivery_task.init)
    assert not applicable(s0, snap(delivery_task, "(move r1 w1 w2)", "end"), delivery_task)


def test_mutex_with_running_guard(fusebox_task):
    task = fusebox_task
    s = walk(task, initial_state(task.init),
             "(light-match m1)@start", "(mend-fuse f1 m1)@start")
    # ending the match would delete the fuse's over-all light condition
    assert not applicable(s, snap(task, "(light-match m1)", "end"), task)
    assert applicable(s, snap(task, "(mend-fuse f1 m1)", "end"), task)


def test_apply_start_end_pair(delivery_task):
    task = delivery_task
    s = walk(task, initial_state(task.init),
             "(move r1 w1 w2)@start", "(move r1 w1 w2)@end")
    assert task.atom_index["(at r1 w2)"] in s.fluents
    assert s.running == ()
    assert len(s.steps) == 2


def test_apply_existing_atom_keeps_cardinality(fusebox_task):
    task = fusebox_task
    s0 = initial_state(task.init)
    s1 = apply(s0, snap(task, "(light-match m1)", "start"), task)
    # light was added fresh; re-adding an atom never duplicates
    assert len(s1.fluents) == len(s0.fluents)  # del unused, add light


def test_delete_then_add_same_atom():
    domain = parse_domain("""
        (define (domain flip)
          (:requirements :strips :durative-actions)
          (:predicates (p) (q))
          (:durative-action touch
            :parameters ()
            :duration (= ?duration 1)
            :condition (and (at start (p)))
            :effect (and (at start (not (p))) (at start (p)) (at end (q)))))
    """)
    problem = parse_problem(
        "(define (problem f) (:domain flip) (:objects) (:init (p)) (:goal (and (q))))")
    task = ground(domain, problem)
    s = apply(initial_state(task.init), task.start_snap(0), task)
    assert task.atom_index["(p)"] in s.fluents  # deletes apply before adds


def test_apply_unguarded_raises(delivery_task):
    s0 = initial_state(delivery_task.init)
    with pytest.raises(PreconditionViolated) as err:
        apply(s0, snap(delivery_task, "(move r1 w2 w3)", "start"), delivery_task)
    assert "(at r1 w2)" in str(err.value)


def test_successors_at_init(delivery_task):
    s0 = initial_state(delivery_task.init)
    succs = get_successors(s0, delivery_task)
    last = [delivery_task.snaps[s.steps[-1]].signature(delivery_task) for s in succs]
    assert last == ["(load r1 b1 w1)@start", "(move r1 w1 w2)@start"]


def test_successors_nonempty_at_goal(delivery_task):
    task = delivery_task
    s = walk(task, initial_state(task.init),
             "(load r1 b1 w1)@start", "(load r1 b1 w1)@end",
             "(move r1 w1 w2)@start", "(move r1 w1 w2)@end",
             "(move r1 w2 w3)@start", "(move r1 w2 w3)@end",
             "(unload r1 b1 w3)@start", "(unload r1 b1 w3)@end")
    assert goal_reached(s, task.goal)
    assert get_successors(s, task)  # goal test is separate from expansion


def test_successors_empty_when_stuck(fusebox_task):
    task = fusebox_task
    s = walk(task, initial_state(task.init),
             "(light-match m1)@start", "(light-match m1)@end")
    # match burnt without mending: no unused match left, mend's guard can't hold
    assert get_successors(s, task) == []


def test_goal_reached_cases(delivery_task):
    task = delivery_task
    s0 = initial_state(task.init)
    assert not goal_reached(s0, task.goal)
    mid = walk(task, s0, "(load r1 b1 w1)@start")
    assert not goal_reached(mid, task.goal)
    assert no_run_actions(s0)
    assert not no_run_actions(mid)
    done = walk(task, mid, "(load r1 b1 w1)@end")
    assert no_run_actions(done)


# --- properties --------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=9), max_size=12))
def test_start_end_pairing_invariant(delivery_task, walk_choices):
    """|running| always equals #Starts minus #Ends along any legal walk."""
    task = delivery_task
    s = initial_state(task.init)
    for pick in walk_choices:
        succs = get_successors(s, task)
        if not succs:
            break
        s = succs[pick % len(succs)]
        starts = sum(1 for sid in s.steps if sid % 2 == 0)
        ends = len(s.steps) - starts
        assert len(s.running) == starts - ends >= 0


def test_applicable_apply_soundness_bfs(delivery_task):
    """applicable => apply never raises, on every state within 6 steps."""
    task = delivery_task
    frontier = [initial_state(task.init)]
    seen = {frontier[0].signature()}
    for _ in range(6):
        nxt = []
        for s in frontier:
            for action in task.actions:
                for sn in (task.start_snap(action.index), task.end_snap(action.index)):
                    if applicable(s, sn, task):
                        succ = apply(s, sn, task)  # strict: must not raise
                        if succ.signature() not in seen:
                            seen.add(succ.signature())
                            nxt.append(succ)
        frontier = nxt
    assert len(seen) > 10
