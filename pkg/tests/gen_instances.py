"""Seeded random delivery instances for the acceptance suite."""

from __future__ import annotations

import random


def delivery_problem(seed: int) -> str:
    """A random linear-map delivery problem (<=4 waypoints, <=2 boxes)."""
    rng = random.Random(seed)
    n_wp = rng.randint(2, 4)
    n_boxes = rng.randint(1, 2)
    waypoints = [f"w{i}" for i in range(1, n_wp + 1)]
    boxes = [f"b{i}" for i in range(1, n_boxes + 1)]

    conn = []
    for a, b in zip(waypoints, waypoints[1:]):
        conn.append(f"(connected {a} {b})")
        conn.append(f"(connected {b} {a})")

    robot_at = rng.choice(waypoints)
    init = [f"(at r1 {robot_at})", "(free r1)"] + conn
    goals = []
    for box in boxes:
        start = rng.choice(waypoints)
        goal = rng.choice([w for w in waypoints if w != start])
        init.append(f"(at {box} {start})")
        goals.append(f"(at {box} {goal})")

    return "\n".join([
        f"(define (problem delivery-gen-{seed})",
        "  (:domain delivery)",
        f"  (:objects r1 - robot {' '.join(boxes)} - box {' '.join(waypoints)} - waypoint)",
        "  (:init " + " ".join(init) + ")",
        "  (:goal (and " + " ".join(goals) + "))",
        ")",
    ])
