"""Grounding: instantiate action schemas over typed objects.

Atoms are interned to integer ids so states are cheap frozensets of
ints with a stable, hash-seed-independent iteration order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .pddl import DomainAst, Literal, ProblemAst, PddlValidationError


@dataclass(frozen=True)
class GroundAction:
    """A ground durative action; literal sets are split by (sign, time)."""

    index: int
    name: str  # schema name
    args: tuple[str, ...]
    duration: Fraction
    # condition atom id sets
    start_pos: frozenset[int]
    start_neg: frozenset[int]
    overall_pos: frozenset[int]
    overall_neg: frozenset[int]
    end_pos: frozenset[int]
    end_neg: frozenset[int]
    # effect atom id sets
    start_add: frozenset[int]
    start_del: frozenset[int]
    end_add: frozenset[int]
    end_del: frozenset[int]

    def signature(self) -> str:
        return f"({self.name}{''.join(' ' + a for a in self.args)})"


@dataclass(frozen=True)
class Goal:
    """Conjunction of ground literals over atom ids."""

    pos: frozenset[int]
    neg: frozenset[int]

    def satisfied_by(self, fluents: frozenset[int]) -> bool:
        return self.pos <= fluents and not (self.neg & fluents)

    @property
    def literal_count(self) -> int:
        return len(self.pos) + len(self.neg)


class GroundedTask:
    """Immutable planning task: atom universe, ground actions, init, goal."""

    def __init__(self, domain: DomainAst, atoms: list[str],
                 actions: list[GroundAction], init: frozenset[int], goal: Goal):
        self.domain = domain
        self.atoms = atoms  # id -> "(pred args...)"
        self.atom_index = {a: i for i, a in enumerate(atoms)}
        self.actions = actions
        self.init = init
        self.goal = goal
        from .state import split_durative  # cycle: state builds on grounding
        self.snaps = []
        for act in actions:
            start, end = split_durative(act)
            self.snaps.append(start)
            self.snaps.append(end)

    def atom_name(self, atom_id: int) -> str:
        return self.atoms[atom_id]

    def action_by_signature(self, sig: str) -> GroundAction:
        for a in self.actions:
            if a.signature() == sig:
                return a
        raise KeyError(sig)

    def start_snap(self, action_index: int):
        return self.snaps[2 * action_index]

    def end_snap(self, action_index: int):
        return self.snaps[2 * action_index + 1]


def _type_closure(types: dict[str, str]) -> dict[str, set[str]]:
    """Map each type to the set of types it subsumes (including itself)."""
    closure: dict[str, set[str]] = {"object": set(types) | {"object"}}
    for t in types:
        closure.setdefault(t, {t})
    for t in types:
        cur = types[t]
        while True:
            closure.setdefault(cur, {cur}).add(t)
            if cur == "object":
                break
            cur = types.get(cur, "object")
    return closure


def _atom_key(pred: str, args: tuple[str, ...]) -> str:
    return f"({pred}{''.join(' ' + a for a in args)})"


def ground(domain: DomainAst, problem: ProblemAst) -> GroundedTask:
    """Instantiate every type-consistent binding of every schema.

    Actions with a statically false positive condition are pruned: an
    atom of a predicate that no effect ever adds, absent from init, can
    never become true.
    """
    closure = _type_closure(domain.types)
    known_types = set(domain.types) | {"object"}
    for obj, typ in problem.objects:
        if typ not in known_types:
            raise PddlValidationError(f"object '{obj}' has undeclared type '{typ}'")

    objs_by_type: dict[str, list[str]] = {}
    for obj, typ in problem.objects:
        for super_t, subs in closure.items():
            if typ in subs:
                objs_by_type.setdefault(super_t, []).append(obj)
    for t in objs_by_type:
        objs_by_type[t].sort()

    pred_arity = {p.name: len(p.params) for p in domain.predicates}
    for lit in problem.init + problem.goal:
        if lit.pred not in pred_arity:
            raise PddlValidationError(f"unknown predicate '{lit.pred}' in problem")
        if len(lit.args) != pred_arity[lit.pred]:
            raise PddlValidationError(f"arity mismatch for {lit}")

    added_preds = set()
    for schema in domain.actions:
        for lit in schema.eff_start + schema.eff_end:
            if lit.positive:
                added_preds.add(lit.pred)

    init_keys = {_atom_key(l.pred, l.args) for l in problem.init}

    # atom interning: init and goal first (sorted), then effect/condition
    # atoms in grounding order so ids are reproducible
    atoms: list[str] = []
    index: dict[str, int] = {}

    def intern(pred: str, args: tuple[str, ...]) -> int:
        key = _atom_key(pred, args)
        if key not in index:
            index[key] = len(atoms)
            atoms.append(key)
        return index[key]

    for key in sorted(init_keys):
        if key not in index:
            index[key] = len(atoms)
            atoms.append(key)

    actions: list[GroundAction] = []
    schemas = sorted(domain.actions, key=lambda s: s.name)
    for schema in schemas:
        var_names = [v for v, _ in schema.params]
        domains = []
        for _, typ in schema.params:
            domains.append(objs_by_type.get(typ, []))
        for combo in itertools.product(*domains):
            binding = dict(zip(var_names, combo))

            def bind(lit: Literal) -> tuple[str, tuple[str, ...], bool]:
                args = tuple(binding.get(a, a) for a in lit.args)
                return lit.pred, args, lit.positive

            # static pruning on positive conditions
            statically_false = False
            for lit in schema.cond_start + schema.cond_overall + schema.cond_end:
                pred, args, positive = bind(lit)
                if positive and pred not in added_preds and _atom_key(pred, args) not in init_keys:
                    statically_false = True
                    break
            if statically_false:
                continue

            def id_sets(lits: tuple[Literal, ...]) -> tuple[frozenset[int], frozenset[int]]:
                pos, neg = set(), set()
                for lit in lits:
                    pred, args, positive = bind(lit)
                    aid = intern(pred, args)
                    (pos if positive else neg).add(aid)
                return frozenset(pos), frozenset(neg)

            sp, sn = id_sets(schema.cond_start)
            op, on = id_sets(schema.cond_overall)
            ep, en = id_sets(schema.cond_end)
            sa, sd = id_sets(schema.eff_start)
            ea, ed = id_sets(schema.eff_end)
            actions.append(GroundAction(
                index=len(actions), name=schema.name, args=combo,
                duration=schema.duration,
                start_pos=sp, start_neg=sn, overall_pos=op, overall_neg=on,
                end_pos=ep, end_neg=en,
                start_add=sa, start_del=sd, end_add=ea, end_del=ed,
            ))

    init_ids = frozenset(index[k] for k in sorted(init_keys))
    goal_pos, goal_neg = set(), set()
    for lit in problem.goal:
        aid = intern(lit.pred, lit.args)
        (goal_pos if lit.positive else goal_neg).add(aid)
    goal = Goal(frozenset(goal_pos), frozenset(goal_neg))
    return GroundedTask(domain, atoms, actions, init_ids, goal)
