"""Greedy navigation with trained networks and outcome statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .radio import linear_to_db
from .trainer import lookahead_decider
from .episode import run_case
from .world import OUTCOMES, AgentState, Scenario, World, lower_bound_time, spawn_training_case

__all__ = ["EvalReport", "navigate", "evaluate", "lower_bound_time", "coverage_map"]


@dataclass
class EvalReport:
    counts: dict
    amt: float | None
    records: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    def rate(self, outcome: str) -> float:
        return self.counts[outcome] / self.n if self.n else math.nan

    @property
    def sr(self):
        return self.rate("success")

    @property
    def cr(self):
        return self.rate("collision")

    @property
    def dr(self):
        return self.rate("disconnection")

    @property
    def stuck_rate(self):
        return self.rate("stuck")

    def summary(self) -> str:
        amt = "undefined" if self.amt is None else f"{self.amt:.3f} s"
        return (f"agents={self.n} SR={100 * self.sr:.1f}% CR={100 * self.cr:.1f}% "
                f"DR={100 * self.dr:.1f}% stuck={100 * self.stuck_rate:.1f}% AMT={amt}")


def extra_time(record, dt: float) -> float:
    """Arrival time minus the straight-line lower bound, in seconds."""
    return record.end_step * dt - record.lower_bound


def report_from(records: Sequence, dt: float) -> EvalReport:
    counts = {k: 0 for k in OUTCOMES}
    for r in records:
        counts[r.outcome] += 1
    extra = [extra_time(r, dt) for r in records if r.outcome == "success"]
    return EvalReport(counts, float(np.mean(extra)) if extra else None, list(records))


def navigate(nets, scenario: Scenario, agents: Sequence[AgentState], rng: np.random.Generator,
             mode: str = "sp"):
    """Greedy (epsilon = 0) control loop; no learning, no dataset writes."""
    world = World(scenario, agents)
    return run_case(world, lookahead_decider(scenario, nets, 0.0, rng, mode), rng)


def evaluate(nets, scenario: Scenario, n_cases: int, rng: np.random.Generator, n_agents: int = 2,
             mode: str = "sp") -> EvalReport:
    """Navigate ``n_cases`` random spawns and tally per-agent outcomes."""
    if n_cases < 1:
        raise ValueError("n_cases must be >= 1")
    records = []
    for _ in range(n_cases):
        agents = spawn_training_case(scenario, n_agents, rng)
        records += navigate(nets, scenario, agents, rng, mode)
    return report_from(records, scenario.dt)


def coverage_map(scenario: Scenario, nx: int = 50, ny: int = 50):
    """``(xs, ys, sinr_db, connected)`` on a regular grid using the closed-form SINR."""
    x0, x1, y0, y1 = scenario.bounds
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys)
    _, s = scenario.link_budget().best(np.c_[X.ravel(), Y.ravel()])
    s = s.reshape(ny, nx)
    with np.errstate(divide="ignore"):
        sdb = linear_to_db(s)
    return xs, ys, sdb, s >= scenario.radio.sinr_threshold
