"""Reciprocal collision avoidance rollouts that seed the value network."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels_py, kernels
from .episode import run_case
from .kinematics import Action, action_space_for
from .radio import level_index, N_LEVELS
from .world import AgentState, Observable, Scenario, World, spawn_training_case

PERPENDICULAR_BIAS = 1e-4


class BootstrapFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class OrcaParams:
    time_horizon: float = 2.0
    neighbor_distance: float = 10.0
    bias: float = PERPENDICULAR_BIAS
    # planning radius inflation; covers the discretization gap of dt-long steps
    safety_margin: float = 0.05

    def check(self, dt: float):
        if self.time_horizon <= dt:
            raise ValueError("time_horizon must exceed dt")


def preferred_velocity(state: AgentState, dt: float, bias: float = PERPENDICULAR_BIAS) -> np.ndarray:
    """Toward the goal at ``v_max``, slowing to land on it; with a small left-hand bias."""
    e = state.goal - state.position
    d = math.hypot(e[0], e[1])
    if d < 1e-12:
        return np.zeros(2)
    speed = min(state.v_max, d / dt)
    u = e / d
    v = speed * u + bias * speed * np.array([-u[1], u[0]])
    n = math.hypot(v[0], v[1])
    return v * (speed / n)


def _near(state: AgentState, neighbors: Sequence[Observable], params: OrcaParams, static):
    """Neighbour arrays ``(pos, vel, radius, share)`` within the cutoff distance."""
    near = [k for k, o in enumerate(neighbors)
            if o.present and math.hypot(*(o.position - state.position)) <= params.neighbor_distance]
    static = [False] * len(neighbors) if static is None else list(static)
    pos = np.array([neighbors[k].position for k in near], dtype=float).reshape(-1, 2)
    vel = np.array([neighbors[k].velocity for k in near], dtype=float).reshape(-1, 2)
    rad = np.array([neighbors[k].radius for k in near], dtype=float) + params.safety_margin
    share = np.array([1.0 if static[k] else 0.5 for k in near])
    return pos, vel, rad, share


def orca_velocity(state: AgentState, neighbors: Sequence[Observable], params: OrcaParams, dt: float,
                  static: Sequence[bool] | None = None) -> np.ndarray:
    """Collision-free velocity closest to the preferred one.

    ``static`` marks neighbours that do not reciprocate (obstacles), which take
    the full avoidance share instead of half.
    """
    pref = preferred_velocity(state, dt, params.bias)
    pos, vel, rad, share = _near(state, neighbors, params, static)
    if len(rad) == 0:
        return pref
    return kernels.orca_velocity(state.position, state.velocity, pref, state.radius, state.v_max,
                                 pos, vel, rad, share, params.time_horizon, dt)


def project_to_actions(space, velocity, state: AgentState, neighbors: Sequence[Observable], params: OrcaParams,
                       dt: float, static: Sequence[bool] | None = None) -> int:
    """Nearest action that keeps every reciprocal half-plane; the least violating one if none does."""
    pos, vel, rad, share = _near(state, neighbors, params, static)
    lines = _kernels_py.orca_lines(state.position, state.velocity, state.radius, pos, vel, rad, share,
                                   params.time_horizon, dt)
    dist = np.sum((space.velocities - np.asarray(velocity, dtype=float)) ** 2, axis=1)
    if not lines:
        return int(np.argmin(dist))
    pts = np.array([p for p, _ in lines])
    dirs = np.array([d for _, d in lines])
    # det(dir, point - v) > 0 means v lies on the forbidden side
    rel = pts[None, :, :] - space.velocities[:, None, :]
    viol = np.max(dirs[None, :, 0] * rel[:, :, 1] - dirs[None, :, 1] * rel[:, :, 0], axis=1)
    viol = np.maximum(viol, 0.0)
    return int(np.lexsort((dist, np.round(viol, 12)))[0])


def _neighbors_of(world: World, i: int):
    sc = world.scenario
    obs, static = [], []
    for j, (a, act) in enumerate(zip(world.agents, world.active)):
        if j != i and act:
            obs.append(a.observable())
            static.append(False)
    for ob in sc.obstacles:
        obs.append(Observable(np.array(ob.center), np.zeros(2), ob.radius))
        static.append(True)
    return obs, static


def orca_decider(world: World, params: OrcaParams, project: bool = True):
    """Decision rule for ``run_case``; optionally snapped to the nearest feasible action."""
    sc = world.scenario

    def decide(i, js, nbr_vel, step):
        state = world.agents[i]
        obs, static = _neighbors_of(world, i)
        v = orca_velocity(state, obs, params, sc.dt, static)
        if not project:
            return Action(float(math.hypot(*v)), float(math.atan2(v[1], v[0])) if v.any() else state.heading)
        space = action_space_for(state, sc)
        return space[project_to_actions(space, v, state, obs, params, sc.dt, static)]

    return decide


def orca_rollout(scenario: Scenario, agents: Sequence[AgentState], rng: np.random.Generator,
                 params: OrcaParams = OrcaParams(), project: bool = True, measure: bool = True):
    world = World(scenario, agents)
    return run_case(world, orca_decider(world, params, project), rng, measure)


def value_labels(n_states: int, dt: float, gamma: float) -> np.ndarray:
    """``gamma ** ((T - t) dt)`` for states ``t = 0..T``."""
    steps_left = np.arange(n_states - 1, -1, -1, dtype=float)
    return gamma ** (steps_left * dt)


def generate_bootstrap_set(scenario: Scenario, n_trajectories: int, rng: np.random.Generator,
                           n_agents: int = 2, params: OrcaParams = OrcaParams()):
    """ORCA rollouts turned into ``(X, V)`` state-value pairs and ``(X_w, L_w)`` SINR pairs.

    Only successful agent trajectories contribute state-value pairs; every
    logged tick contributes a location-SINR pair.  Returns
    ``(X, V, X_w, L_w, records)`` with ``L_w`` the scaled level in ``[0, 1]``.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    params.check(scenario.dt)
    X, V, Xw, Lw, kept = [], [], [], [], []
    total = 0
    for _ in range(n_trajectories):
        agents = spawn_training_case(scenario, n_agents, rng)
        for rec in orca_rollout(scenario, agents, rng, params):
            total += 1
            Xw.extend(rec.gbs_features)
            Lw.extend(level_index(np.array(rec.sinr), scenario.radio) / (N_LEVELS - 1))
            if rec.outcome != "success":
                continue
            kept.append(rec)
            X.extend(rec.features)
            V.extend(value_labels(len(rec.features), scenario.dt, scenario.reward.gamma))
    if len(kept) < 0.1 * total:
        raise BootstrapFailure(f"bootstrap failure: {len(kept)} of {total} trajectories succeeded")
    return (np.array(X), np.array(V), np.array(Xw), np.array(Lw, dtype=float), kept)
