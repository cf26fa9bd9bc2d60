"""Action sampling, propagation, intent filtering and the agent-centric feature map."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .world import AgentState, JointState


@dataclass(frozen=True)
class Action:
    speed: float
    heading: float

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)])


class ActionSpace:
    """A deterministic, ordered set of candidate actions.

    Hover comes first; then speeds ascend and, within each speed, heading
    offsets ascend from ``-T_r dt`` to ``+T_r dt``.
    """

    def __init__(self, actions: Sequence[Action]):
        self.actions = tuple(actions)
        self.speeds = np.array([a.speed for a in self.actions])
        self.headings = np.array([a.heading for a in self.actions])
        self.velocities = np.column_stack([self.speeds * np.cos(self.headings),
                                           self.speeds * np.sin(self.headings)])

    def __len__(self):
        return len(self.actions)

    def __getitem__(self, i):
        return self.actions[i]

    def nearest(self, velocity) -> int:
        """Index of the action whose velocity is closest to ``velocity``."""
        d = np.sum((self.velocities - np.asarray(velocity, dtype=float)) ** 2, axis=1)
        return int(np.argmin(d))


def sample_action_space(speed: float, heading: float, v_max: float, turn_rate: float, dt: float,
                        n_speeds: int = 5, n_headings: int = 11) -> ActionSpace:
    """Speeds evenly spaced on ``[0, v_max]`` crossed with headings within one turn step.

    ``speed`` is accepted for interface symmetry; the speed set does not depend on it.
    The zero-speed entries collapse into a single hover action.
    """
    if v_max <= 0:
        raise ValueError("v_max must be > 0")
    if n_speeds < 2 or n_headings < 1:
        raise ValueError("need n_speeds >= 2 and n_headings >= 1")
    del speed
    speeds = np.linspace(0.0, v_max, n_speeds)
    offsets = np.linspace(-turn_rate * dt, turn_rate * dt, n_headings) if n_headings > 1 else np.zeros(1)
    actions = [Action(0.0, _wrap(heading))]
    for v in speeds[1:]:
        for off in offsets:
            actions.append(Action(float(v), _wrap(heading + off)))
    return ActionSpace(actions)


def action_space_for(state: AgentState, scenario) -> ActionSpace:
    speed = float(np.hypot(*state.velocity))
    return sample_action_space(speed, state.heading, state.v_max, scenario.turn_rate, scenario.dt,
                               scenario.n_speeds, scenario.n_headings)


def propagate(position, velocity, dt: float) -> np.ndarray:
    """Constant-velocity propagation of an observable position."""
    return np.asarray(position, dtype=float) + dt * np.asarray(velocity, dtype=float)


def filter_velocity(history: Sequence, beta: float = 0.7) -> np.ndarray:
    """Exponential moving average of observed velocities, oldest first.

    ``v_f = beta * v_new + (1 - beta) * v_f``; an empty history gives zero.
    """
    v = np.zeros(2)
    for i, h in enumerate(history):
        h = np.asarray(h, dtype=float)
        v = h.copy() if i == 0 else beta * h + (1.0 - beta) * v
    return v


def _wrap(a: float) -> float:
    """Angle in ``(-pi, pi]``."""
    return float(math.pi - (math.pi - a) % (2.0 * math.pi))


def transform_joint_state(js: JointState) -> np.ndarray:
    """Agent-centric feature vector of a joint state.

    The frame's x-axis points from the agent toward its goal (own heading when
    at the goal).  Layout: own ``[d_g, v_max, vx, vy, r, phi]``; per neighbour
    ``[px, py, vx, vy, r, d]``; per site ``[d (m), bearing, elevation]`` sorted by
    distance.  Absent neighbours read ``[S, 0, 0, 0, 0, S]``.
    """
    own = js.own
    e = own.goal - own.position
    dg = math.hypot(e[0], e[1])
    frame = math.atan2(e[1], e[0]) if dg > 1e-10 else own.heading
    c, s = math.cos(frame), math.sin(frame)

    def rot(x, y):
        return c * x + s * y, -s * x + c * y

    out = [dg, own.v_max, *rot(*own.velocity), own.radius, _wrap(own.heading - frame)]
    for j in range(len(js.nbr_radius)):
        if not js.nbr_present[j]:
            out += [js.sentinel, 0.0, 0.0, 0.0, 0.0, js.sentinel]
            continue
        rx, ry = js.nbr_pos[j] - own.position
        out += [*rot(rx, ry), *rot(*js.nbr_vel[j]), float(js.nbr_radius[j]), math.hypot(rx, ry)]
    rel = js.gbs_pos - own.position
    dist = np.hypot(rel[:, 0], rel[:, 1])
    for k in np.argsort(dist, kind="stable"):
        dm = float(dist[k]) * js.meters_per_unit
        out += [dm, _wrap(math.atan2(rel[k, 1], rel[k, 0]) - frame),
                math.atan2(js.gbs_height[k] - js.uav_height, dm)]
    return np.array(out, dtype=float)


def estimate_next_joint_state(js: JointState, action: Action, nbr_velocities, dt: float) -> JointState:
    """One-step estimate: the agent applies ``action``, neighbours keep their filtered velocity.

    Sites stay the same ``K_n`` held in ``js``; they are re-sorted by the feature map.
    """
    nxt = js.copy()
    v = action.velocity
    nxt.own.position = propagate(js.own.position, v, dt)
    nxt.own.velocity = v
    nxt.own.heading = action.heading
    nv = np.asarray(nbr_velocities, dtype=float).reshape(-1, 2)
    for j in range(len(js.nbr_radius)):
        if js.nbr_present[j]:
            nxt.nbr_pos[j] = propagate(js.nbr_pos[j], nv[j], dt)
            nxt.nbr_vel[j] = nv[j]
    return nxt


def lookahead(js: JointState, space: ActionSpace, nbr_velocities, dt: float):
    """Batched next-state features for every action in ``space``.

    Returns ``(features, sep, rsum, at_goal)`` from the selected kernel backend.
    """
    own = js.own
    vec = np.array([own.position[0], own.position[1], own.goal[0], own.goal[1], own.v_max, own.radius])
    nv = np.asarray(nbr_velocities, dtype=float).reshape(-1, 2)
    return kernels.lookahead_features(
        vec, space.velocities, space.headings, js.nbr_pos, nv, js.nbr_radius,
        js.nbr_present.astype(np.uint8), js.gbs_pos, js.gbs_height, js.uav_height,
        js.meters_per_unit, js.sentinel, dt)
