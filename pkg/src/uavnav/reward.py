"""Rewards (collision, connectivity, step) and the epsilon-greedy lookahead policy."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MODES = ("sp", "aw", "none")


@dataclass(frozen=True)
class RewardConfig:
    goal_reward: float = 2.0
    collision_penalty: float = -1.0
    proximity_band: float = 0.2
    disconnect_penalty: float = -1.0
    margin_penalty: float = -0.5
    margin_width: float = 0.1
    margin_in_db: bool = False
    step_penalty: float = -0.01
    gamma: float = 0.9

    def __post_init__(self):
        if self.goal_reward <= 0:
            raise ValueError("goal_reward must be > 0")
        for name in ("collision_penalty", "disconnect_penalty", "margin_penalty", "step_penalty"):
            if getattr(self, name) > 0:
                raise ValueError(f"{name} must be <= 0")
        if self.proximity_band <= 0 or self.margin_width < 0:
            raise ValueError("proximity_band must be > 0 and margin_width >= 0")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")

    def margin_upper(self, threshold: float) -> float:
        """Upper edge of the margin band above the linear threshold."""
        if self.margin_in_db:
            return threshold * 10.0 ** (self.margin_width / 10.0)
        return threshold + self.margin_width


def min_distance_linear(p, v, q, u, dt: float) -> float:
    """Closed-form minimum distance between two constant-velocity points over ``[0, dt]``."""
    w = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    rel = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    rr = float(rel @ rel)
    t = 0.0 if rr <= 1e-18 else min(max(-float(w @ rel) / rr, 0.0), dt)
    return float(math.hypot(*(w + t * rel)))


def min_separation_lookahead(position, velocity, radius: float, nbr_pos: Sequence, nbr_vel: Sequence,
                             nbr_radius: Sequence, dt: float) -> tuple[float, float]:
    """``(d_min, r_i + r_j)`` for the neighbour with the least clearance; ``(inf, 0)`` if none."""
    best_clear, out = math.inf, (math.inf, 0.0)
    for q, u, rj in zip(nbr_pos, nbr_vel, nbr_radius):
        d = min_distance_linear(position, velocity, q, u, dt)
        if d - radius - rj < best_clear:
            best_clear, out = d - radius - rj, (d, radius + float(rj))
    return out


def reward_c(arrived: bool, d_min: float, radius_sum: float, cfg: RewardConfig = RewardConfig()) -> float:
    if arrived:
        return cfg.goal_reward
    clear = d_min - radius_sum
    if clear <= 0:
        return cfg.collision_penalty
    if clear <= cfg.proximity_band:
        return cfg.collision_penalty * (1.0 - clear / cfg.proximity_band)
    return 0.0


def reward_c_batch(at_goal, sep, rsum, cfg: RewardConfig) -> np.ndarray:
    clear = np.asarray(sep) - np.asarray(rsum)
    band = cfg.collision_penalty * (1.0 - np.clip(clear, 0.0, None) / cfg.proximity_band)
    r = np.where(clear <= cfg.proximity_band, band, 0.0)
    r = np.where(clear <= 0, cfg.collision_penalty, r)
    return np.where(at_goal, cfg.goal_reward, r)


def reward_s(s, step: int, n_t: int, threshold: float, cfg: RewardConfig = RewardConfig()):
    """Connectivity reward; only non-zero at check ticks (``step`` divisible by ``n_t``)."""
    s = np.asarray(s, dtype=float)
    if step % n_t != 0:
        r = np.zeros_like(s)
    else:
        r = np.where(s < threshold, cfg.disconnect_penalty,
                     np.where(s < cfg.margin_upper(threshold), cfg.margin_penalty, 0.0))
    return float(r) if r.ndim == 0 else r


def total_reward(r_c: float, r_s: float, cfg: RewardConfig = RewardConfig()) -> float:
    return r_c + r_s + cfg.step_penalty


@dataclass
class PolicyContext:
    """Everything the lookahead needs besides the joint state and the networks."""

    dt: float
    n_t: int
    reward: RewardConfig
    radio: object
    mode: str = "sp"
    link: object = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "aw" and self.link is None:
            raise ValueError("mode 'aw' needs a link budget")


def lookahead_values(js, space, value_net, sinr_net, nbr_velocities, step: int, ctx: PolicyContext):
    """``V_p = R + gamma**dt * V(next)`` for every candidate; ``step`` is the current tick."""
    from .kinematics import lookahead
    from .radio import level_floor_sinr, scaled_to_index

    feats, sep, rsum, at_goal = lookahead(js, space, nbr_velocities, ctx.dt)
    r = reward_c_batch(at_goal, sep, rsum, ctx.reward) + ctx.reward.step_penalty
    next_step = step + 1
    if ctx.mode != "none" and next_step % ctx.n_t == 0:
        if ctx.mode == "sp":
            n_k = len(js.gbs_height)
            scaled = sinr_net.predict(feats[:, feats.shape[1] - 3 * n_k:])
            s_next = level_floor_sinr(scaled_to_index(scaled), ctx.radio)
        else:
            nxt = js.own.position + ctx.dt * space.velocities
            _, s_next = ctx.link.best(nxt)
        r = r + reward_s(s_next, next_step, ctx.n_t, ctx.radio.sinr_threshold, ctx.reward)
    return r + ctx.reward.gamma ** ctx.dt * value_net.predict(feats)


def choose_action_index(js, space, value_net, sinr_net, eps: float, rng: np.random.Generator,
                        nbr_velocities, step: int, ctx: PolicyContext) -> int:
    if len(space) == 0:
        raise ValueError("empty action space")
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(len(space)))
    v = lookahead_values(js, space, value_net, sinr_net, nbr_velocities, step, ctx)
    return int(np.argmax(v))


def choose_action(js, space, value_net, sinr_net, eps: float, rng: np.random.Generator,
                  nbr_velocities, step: int, ctx: PolicyContext):
    """Epsilon-greedy one-step lookahead; ties go to the first action in ``space``."""
    return space[choose_action_index(js, space, value_net, sinr_net, eps, rng, nbr_velocities, step, ctx)]
