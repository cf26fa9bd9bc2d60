"""The per-tick control loop shared by bootstrap, refinement and evaluation.

Every active agent decides on the same frozen snapshot, the world steps all
of them at once, then each agent measures its SINR, receives its reward and
is checked for a terminal outcome.  A decision rule is a callable
``decide(i, js, nbr_filtered_velocities, step) -> Action``.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import kernels
from .kinematics import Action
from .reward import min_separation_lookahead, reward_c, reward_s
from .world import EpisodeRecord, World, detect_outcome


def features_now(js) -> np.ndarray:
    """Transformed joint state at the current instant (fast path of ``transform_joint_state``)."""
    own = js.own
    vec = np.array([own.position[0], own.position[1], own.goal[0], own.goal[1], own.v_max, own.radius])
    f, _, _, _ = kernels.lookahead_features(
        vec, own.velocity.reshape(1, 2), np.array([own.heading]), js.nbr_pos, js.nbr_vel,
        js.nbr_radius, js.nbr_present.astype(np.uint8), js.gbs_pos, js.gbs_height,
        js.uav_height, js.meters_per_unit, js.sentinel, 0.0)
    return f[0]


class IntentFilter:
    """Per-agent exponential smoothing of observed velocities (shared, since velocities are public)."""

    def __init__(self, n: int, beta: float):
        self.beta = beta
        self.v = np.zeros((n, 2))
        self.seen = np.zeros(n, dtype=bool)

    def update(self, i: int, velocity):
        if self.seen[i]:
            self.v[i] = self.beta * np.asarray(velocity) + (1.0 - self.beta) * self.v[i]
        else:
            self.v[i] = velocity
            self.seen[i] = True


def run_case(world: World, decide: Callable, rng: np.random.Generator,
             measure: bool = True) -> list[EpisodeRecord]:
    """Run one case until every agent has an outcome; return one record per agent."""
    sc = world.scenario
    n = len(world.agents)
    n_obs = len(sc.obstacles)
    records = [EpisodeRecord(i, a.position.copy(), a.goal.copy(), a.v_max, a.radius)
               for i, a in enumerate(world.agents)]
    filt = IntentFilter(n, sc.filter_beta)

    def log_state(i, js):
        rec = records[i]
        f = features_now(js)
        rec.positions.append(world.agents[i].position.copy())
        rec.velocities.append(world.agents[i].velocity.copy())
        rec.features.append(f)
        rec.gbs_features.append(f[f.size - 3 * sc.max_observed_sites:])
        if measure:
            s = world.link.empirical(world.agents[i].position, rng)
            rec.sinr.append(s)
            rec.connected.append(s >= sc.radio.sinr_threshold)
        return rec

    snapshot = {}
    for i in range(n):
        js, idx = world.observe(i)
        snapshot[i] = (js, idx)
        log_state(i, js)
        filt.update(i, world.agents[i].velocity)

    step = 0
    while any(world.active):
        velocities = [np.zeros(2) for _ in range(n)]
        chosen: dict[int, Action] = {}
        for i in range(n):
            if not world.active[i]:
                continue
            js, idx = snapshot[i]
            # obstacles and absent slots have zero velocity
            nv = np.array([filt.v[j] if 0 <= j < n else np.zeros(2) for j in idx]).reshape(-1, 2)
            act = decide(i, js, nv, step)
            chosen[i] = act
            velocities[i] = act.velocity
        before = [a.copy() for a in world.agents]
        was_active = list(world.active)
        events = world.step(velocities)
        step += 1
        for i in range(n):
            if was_active[i]:
                filt.update(i, world.agents[i].velocity)
        snapshot = {}
        for i in range(n):
            if not was_active[i]:
                continue
            js, idx = world.observe(i)
            snapshot[i] = (js, idx)
            rec = log_state(i, js)
            others = [j for j in range(n) if j != i and was_active[j]]
            pos = [before[j].position for j in others] + [np.array(o.center) for o in sc.obstacles]
            vel = [velocities[j] for j in others] + [np.zeros(2)] * n_obs
            rad = [before[j].radius for j in others] + [o.radius for o in sc.obstacles]
            if events[i].collided:
                d, rs = 0.0, 1.0
            else:
                d, rs = min_separation_lookahead(before[i].position, velocities[i], before[i].radius,
                                                 pos, vel, rad, sc.dt)
            r = reward_c(events[i].arrived, d, rs, sc.reward) + sc.reward.step_penalty
            connected = rec.connected[-1] if measure else True
            if measure:
                r += reward_s(rec.sinr[-1], step, sc.n_t, sc.radio.sinr_threshold, sc.reward)
            rec.actions.append(chosen[i])
            rec.rewards.append(float(r))
            out = detect_outcome(rec, step, events[i], connected, sc)
            if out is not None:
                rec.set_outcome(out, step)
        for i in range(n):
            if was_active[i] and records[i].outcome is not None:
                world.deactivate(i)
    return records
