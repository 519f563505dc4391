from __future__ import annotations

from pathlib import Path

import pytest

from ctplan.grounding import ground
from ctplan.pddl import parse_domain, parse_problem

ROOT = Path(__file__).resolve().parent.parent
PKG_FIXTURES = ROOT / "src" / "ctplan" / "fixtures"
TEST_FIXTURES = Path(__file__).resolve().parent / "fixtures"

DELIVERY_DOMAIN = PKG_FIXTURES / "delivery.pddl"
DELIVERY_P1 = PKG_FIXTURES / "delivery_p1.pddl"
FUSEBOX_DOMAIN = PKG_FIXTURES / "fusebox.pddl"
FUSEBOX_P1 = PKG_FIXTURES / "fusebox_p1.pddl"
SHORTCUT_DOMAIN = TEST_FIXTURES / "shortcut.pddl"
SHORTCUT_P1 = TEST_FIXTURES / "shortcut_p1.pddl"
COURIER_DOMAIN = TEST_FIXTURES / "courier.pddl"
COURIER_P1 = TEST_FIXTURES / "courier_p1.pddl"
DIAMOND_P = TEST_FIXTURES / "delivery_diamond.pddl"
UNSAT_P = TEST_FIXTURES / "delivery_unsat.pddl"


def load_task(domain_path: Path, problem_path: Path):
    domain = parse_domain(domain_path.read_text())
    problem = parse_problem(problem_path.read_text())
    return ground(domain, problem)


@pytest.fixture(scope="session")
def delivery_task():
    return load_task(DELIVERY_DOMAIN, DELIVERY_P1)


@pytest.fixture(scope="session")
def fusebox_task():
    return load_task(FUSEBOX_DOMAIN, FUSEBOX_P1)


@pytest.fixture(scope="session")
def shortcut_task():
    return load_task(SHORTCUT_DOMAIN, SHORTCUT_P1)


@pytest.fixture(scope="session")
def courier_task():
    return load_task(COURIER_DOMAIN, COURIER_P1)


@pytest.fixture(scope="session")
def diamond_task():
    return load_task(DELIVERY_DOMAIN, DIAMOND_P)


@pytest.fixture(scope="session")
def unsat_task():
    return load_task(DELIVERY_DOMAIN, UNSAT_P)


def snap(task, sig: str, kind: str):
    action = task.action_by_signature(sig)
    return task.start_snap(action.index) if kind == "start" else task.end_snap(action.index)


def walk(task, state, *moves):
    """Apply '(sig)@start' / '(sig)@end' step descriptions in order."""
    from ctplan.state import apply
    for move in moves:
        sig, _, kind = move.rpartition("@")
        state = apply(state, snap(task, sig, kind), task)
    return state
