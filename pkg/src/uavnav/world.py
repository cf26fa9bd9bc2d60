"""Discrete-time multi-agent world: scenario, agent bookkeeping and stepping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .radio import GbsSite, LinkBudget, RadioConfig
from .reward import RewardConfig

ARRIVAL_FRACTION = 0.5
OUTCOMES = ("success", "collision", "disconnection", "stuck")


class InfeasibleScenario(RuntimeError):
    pass


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if self.radius <= 0:
            raise ValueError("obstacle radius must be > 0")


@dataclass(frozen=True)
class Scenario:
    bounds: tuple[float, float, float, float] = (0.0, 10.0, 0.0, 10.0)
    sites: tuple[GbsSite, ...] = ()
    radio: RadioConfig = field(default_factory=RadioConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    obstacles: tuple[Obstacle, ...] = ()
    dt: float = 0.1
    n_t: int = 5
    turn_rate: float = math.pi
    max_observed_agents: int = 4
    max_observed_sites: int = 8
    stuck_factor: float = 4.0
    agent_radius: float = 0.3
    v_max: float = 1.0
    min_trip: float = 2.0
    swap_probability: float = 0.0
    n_speeds: int = 5
    n_headings: int = 11
    filter_beta: float = 0.7

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        x0, x1, y0, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError("bounds must satisfy xmin < xmax and ymin < ymax")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.n_t < 1:
            raise ValueError("n_t must be >= 1")
        if self.max_observed_agents < 0:
            raise ValueError("max_observed_agents must be >= 0")
        if self.max_observed_sites < 1:
            raise ValueError("max_observed_sites must be >= 1")
        if self.stuck_factor <= 1:
            raise ValueError("stuck_factor must be > 1")
        if self.agent_radius <= 0 or self.v_max <= 0:
            raise ValueError("agent_radius and v_max must be > 0")
        if self.n_speeds < 2 or self.n_headings < 3 or self.n_headings % 2 == 0:
            raise ValueError("need n_speeds >= 2 and an odd n_headings >= 3")
        if not 0 < self.filter_beta <= 1:
            raise ValueError("filter_beta must be in (0, 1]")
        if not 0 <= self.swap_probability <= 1:
            raise ValueError("swap_probability must be in [0, 1]")

    @property
    def check_period(self) -> float:
        """Maximum tolerated continuous disconnection time ``T_t``."""
        return self.n_t * self.dt

    @property
    def diagonal(self) -> float:
        x0, x1, y0, y1 = self.bounds
        return math.hypot(x1 - x0, y1 - y0)

    @property
    def sentinel_distance(self) -> float:
        return 10.0 * self.diagonal

    @property
    def value_input_width(self) -> int:
        return 6 + 6 * self.max_observed_agents + 3 * self.max_observed_sites

    @property
    def sinr_input_width(self) -> int:
        return 3 * self.max_observed_sites

    def link_budget(self) -> LinkBudget:
        return LinkBudget(self.sites, self.radio)

    def with_sites(self, sites: Sequence[GbsSite]) -> "Scenario":
        """Same scenario over another site layout; the observed-site count is kept."""
        return replace(self, sites=tuple(sites))

    def with_disabled_sites(self, indices: Sequence[int]) -> "Scenario":
        drop = set(indices)
        return self.with_sites([s for i, s in enumerate(self.sites) if i not in drop])

    def with_shifted_sites(self, dx: float, dy: float) -> "Scenario":
        return self.with_sites([replace(s, position=(s.position[0] + dx, s.position[1] + dy))
                                for s in self.sites])


@dataclass
class Observable:
    """What other agents can see: position, velocity, radius."""

    position: np.ndarray
    velocity: np.ndarray
    radius: float
    present: bool = True


@dataclass
class AgentState:
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    goal: np.ndarray
    v_max: float
    heading: float

    @classmethod
    def at_rest(cls, start, goal, radius: float, v_max: float) -> "AgentState":
        start = np.asarray(start, dtype=float)
        goal = np.asarray(goal, dtype=float)
        d = goal - start
        return cls(start.copy(), np.zeros(2), radius, goal.copy(), v_max, math.atan2(d[1], d[0]))

    def observable(self) -> Observable:
        return Observable(self.position.copy(), self.velocity.copy(), self.radius)

    def copy(self) -> "AgentState":
        return AgentState(self.position.copy(), self.velocity.copy(), self.radius,
                          self.goal.copy(), self.v_max, self.heading)


@dataclass
class JointState:
    """An agent's own full state plus what it observes of the world."""

    own: AgentState
    nbr_pos: np.ndarray
    nbr_vel: np.ndarray
    nbr_radius: np.ndarray
    nbr_present: np.ndarray
    gbs_pos: np.ndarray
    gbs_height: np.ndarray
    uav_height: float
    meters_per_unit: float
    sentinel: float

    def copy(self) -> "JointState":
        return JointState(self.own.copy(), self.nbr_pos.copy(), self.nbr_vel.copy(),
                          self.nbr_radius.copy(), self.nbr_present.copy(), self.gbs_pos.copy(),
                          self.gbs_height.copy(), self.uav_height, self.meters_per_unit, self.sentinel)


def sentinel_observable(origin, distance: float) -> Observable:
    return Observable(np.asarray(origin, dtype=float) + np.array([distance, 0.0]), np.zeros(2), 0.0, False)


def nearest_agents(self_index: int, others: Sequence[Observable | None], max_agents: int,
                   sentinel_distance: float) -> list[Observable]:
    """Up to ``max_agents`` nearest observables, padded with absent sentinels.

    ``others`` is indexed like the world's agent list; ``None`` entries (inactive
    agents) and ``self_index`` are skipped.  Ties go to the lower index.
    """
    me = others[self_index]
    if me is None:
        raise ValueError("self agent is inactive")
    cand = []
    for j, o in enumerate(others):
        if j == self_index or o is None:
            continue
        cand.append((float(np.hypot(*(o.position - me.position))), j, o))
    cand.sort(key=lambda t: (t[0], t[1]))
    out = [o for _, _, o in cand[:max_agents]]
    while len(out) < max_agents:
        out.append(sentinel_observable(me.position, sentinel_distance))
    return out


def nearest_gbs(position, sites: Sequence[GbsSite], k: int) -> np.ndarray:
    """Indices of the ``k`` nearest sites, ascending distance, lower index on ties."""
    if k > len(sites):
        raise ValueError(f"asked for {k} nearest sites but only {len(sites)} exist")
    pos = np.asarray(position, dtype=float)
    d = np.array([math.hypot(s.position[0] - pos[0], s.position[1] - pos[1]) for s in sites])
    return np.argsort(d, kind="stable")[:k]


def observed_sites(agent: AgentState, sites: Sequence[GbsSite], k: int, sentinel_distance: float):
    """Positions and heights of the ``k`` nearest sites.

    When fewer than ``k`` sites exist the rest are absent placeholders at
    ``sentinel_distance`` straight ahead in the agent frame (toward the goal),
    so a network trained with ``k`` inputs still runs on a thinner layout.
    """
    idx = nearest_gbs(agent.position, sites, min(k, len(sites)))
    pos = [sites[j].position for j in idx]
    h = [sites[j].height for j in idx]
    if len(idx) < k:
        e = agent.goal - agent.position
        d = math.hypot(e[0], e[1])
        ang = math.atan2(e[1], e[0]) if d > 1e-10 else agent.heading
        far = agent.position + sentinel_distance * np.array([math.cos(ang), math.sin(ang)])
        ref = float(np.mean(h)) if h else GbsSite((0.0, 0.0)).height
        pos += [far] * (k - len(idx))
        h += [ref] * (k - len(idx))
    return np.array(pos, dtype=float).reshape(-1, 2), np.array(h, dtype=float)


def segment_min_distance(p0, v0, q0, u0, dt: float) -> float:
    """Minimum distance between two points moving linearly over ``[0, dt]``."""
    w = np.asarray(q0, dtype=float) - np.asarray(p0, dtype=float)
    rel = np.asarray(u0, dtype=float) - np.asarray(v0, dtype=float)
    rr = float(rel @ rel)
    t = 0.0 if rr <= 1e-18 else min(max(-float(w @ rel) / rr, 0.0), dt)
    return float(np.hypot(*(w + t * rel)))


@dataclass
class StepEvents:
    arrived: bool = False
    collided: bool = False
    boundary: bool = False
    collided_with: list[int] = field(default_factory=list)


def step_world(states: Sequence[AgentState], velocities: Sequence, dt: float,
               active: Sequence[bool] | None = None, obstacles: Sequence[Obstacle] = (),
               bounds: tuple[float, float, float, float] | None = None):
    """Move every active agent simultaneously for ``dt``.

    Returns ``(new_states, events)``.  Inactive agents (arrived or terminated)
    are copied unchanged and never collide.  Collisions use the closest
    approach of the linear motion within the step, not just the endpoints.
    """
    n = len(states)
    active = [True] * n if active is None else list(active)
    vel = [np.asarray(v, dtype=float) for v in velocities]
    new = [s.copy() for s in states]
    events = [StepEvents() for _ in range(n)]
    for i in range(n):
        if not active[i]:
            continue
        new[i].position = states[i].position + dt * vel[i]
        new[i].velocity = vel[i].copy()
        speed = float(np.hypot(*vel[i]))
        if speed > 0:
            new[i].heading = math.atan2(vel[i][1], vel[i][0])
    for i in range(n):
        if not active[i]:
            continue
        for j in range(i + 1, n):
            if not active[j]:
                continue
            d = segment_min_distance(states[i].position, vel[i], states[j].position, vel[j], dt)
            if d <= states[i].radius + states[j].radius:
                events[i].collided = events[j].collided = True
                events[i].collided_with.append(j)
                events[j].collided_with.append(i)
        for k, ob in enumerate(obstacles):
            d = segment_min_distance(states[i].position, vel[i], ob.center, (0.0, 0.0), dt)
            if d <= states[i].radius + ob.radius:
                events[i].collided = True
                events[i].collided_with.append(-1 - k)
    for i in range(n):
        if not active[i]:
            continue
        if bounds is not None:
            x0, x1, y0, y1 = bounds
            p = new[i].position
            clamped = np.array([min(max(p[0], x0), x1), min(max(p[1], y0), y1)])
            if not np.array_equal(clamped, p):
                events[i].boundary = True
                new[i].position = clamped
        if np.hypot(*(new[i].position - new[i].goal)) <= ARRIVAL_FRACTION * new[i].radius:
            # snap onto the goal; the last applied velocity stays observable
            events[i].arrived = True
            new[i].position = new[i].goal.copy()
    return new, events


def lower_bound_time(start, goal, v_max: float) -> float:
    return float(np.hypot(*(np.asarray(goal, dtype=float) - np.asarray(start, dtype=float)))) / v_max


@dataclass
class EpisodeRecord:
    """Per-agent log of one navigation case.

    ``features[t]`` is the transformed joint state observed at tick ``t``;
    ``rewards[t]`` is the reward of the action taken at tick ``t``;
    ``sinr[t]`` is the empirical SINR measured at ``positions[t]``.
    """

    agent: int
    start: np.ndarray
    goal: np.ndarray
    v_max: float
    radius: float
    positions: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    features: list = field(default_factory=list)
    gbs_features: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    sinr: list = field(default_factory=list)
    connected: list = field(default_factory=list)
    outcome: str | None = None
    end_step: int | None = None
    last_connected_step: int = 0

    @property
    def lower_bound(self) -> float:
        return lower_bound_time(self.start, self.goal, self.v_max)

    def set_outcome(self, outcome: str, step: int):
        if self.outcome is not None:
            raise RuntimeError(f"agent {self.agent} already has outcome {self.outcome}")
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {outcome!r}")
        self.outcome = outcome
        self.end_step = step


def detect_outcome(record: EpisodeRecord, step: int, events: StepEvents, connected: bool,
                   scenario: Scenario) -> str | None:
    """Terminal outcome at ``step`` (ticks since start) or ``None``.

    Connectivity only counts at ticks divisible by ``n_t``; the agent is
    disconnected once the gap since the last connected check exceeds ``T_t``.
    Precedence is collision, disconnection, success, stuck.
    """
    check = step % scenario.n_t == 0
    if check and connected:
        record.last_connected_step = step
    if events.collided:
        return "collision"
    if check and step - record.last_connected_step > scenario.n_t:
        return "disconnection"
    if events.arrived:
        return "success"
    if step * scenario.dt > scenario.stuck_factor * record.lower_bound:
        return "stuck"
    return None


def _inside(p, bounds, margin):
    x0, x1, y0, y1 = bounds
    return x0 + margin <= p[0] <= x1 - margin and y0 + margin <= p[1] <= y1 - margin


def spawn_training_case(scenario: Scenario, n_agents: int, rng: np.random.Generator,
                        max_attempts: int = 10_000) -> list[AgentState]:
    """Random start/goal pairs: separated, connected, clear of obstacles.

    With probability ``scenario.swap_probability`` (and at least two agents) the
    first two agents swap start and destination.
    """
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    link = scenario.link_budget()
    r = scenario.agent_radius
    x0, x1, y0, y1 = scenario.bounds
    attempts = 0

    def ok_point(p, taken):
        if not _inside(p, scenario.bounds, r):
            return False
        for ob in scenario.obstacles:
            if math.hypot(p[0] - ob.center[0], p[1] - ob.center[1]) <= ob.radius + 2 * r:
                return False
        for q in taken:
            if math.hypot(p[0] - q[0], p[1] - q[1]) <= 2 * r + 1e-9:
                return False
        _, s = link.best([p])
        return s[0] >= scenario.radio.sinr_threshold

    def draw(taken):
        nonlocal attempts
        while True:
            attempts += 1
            if attempts > max_attempts:
                raise InfeasibleScenario("infeasible scenario")
            p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
            if ok_point(p, taken):
                return p

    starts, goals = [], []
    swap = n_agents >= 2 and rng.random() < scenario.swap_probability
    for i in range(n_agents):
        if swap and i == 1:
            starts.append(goals[0].copy())
            goals.append(starts[0].copy())
            continue
        while True:
            s = draw(starts)
            g = draw(goals)
            if math.hypot(*(g - s)) >= scenario.min_trip:
                break
        starts.append(s)
        goals.append(g)
    return [AgentState.at_rest(s, g, r, scenario.v_max) for s, g in zip(starts, goals)]


class World:
    """Mutable world state for one navigation case."""

    def __init__(self, scenario: Scenario, agents: Sequence[AgentState]):
        self.scenario = scenario
        self.agents = [a.copy() for a in agents]
        self.active = [True] * len(self.agents)
        self.step_count = 0
        self.link = scenario.link_budget()
        self.history: list[list[np.ndarray]] = [[] for _ in self.agents]

    def _observables(self) -> list[Observable | None]:
        obs = [a.observable() if act else None for a, act in zip(self.agents, self.active)]
        for ob in self.scenario.obstacles:
            obs.append(Observable(np.array(ob.center), np.zeros(2), ob.radius))
        return obs

    def observe(self, i: int) -> tuple[JointState, list[int]]:
        """Joint state of agent ``i`` and the world indices of the observed neighbours.

        Neighbour index ``-1`` marks an absent sentinel; indices ``>= n_agents``
        are obstacles.
        """
        sc = self.scenario
        obs = self._observables()
        me = obs[i]
        cand = []
        for j, o in enumerate(obs):
            if j == i or o is None:
                continue
            cand.append((float(np.hypot(*(o.position - me.position))), j))
        cand.sort()
        chosen = [j for _, j in cand[:sc.max_observed_agents]]
        nb = nearest_agents(i, obs, sc.max_observed_agents, sc.sentinel_distance)
        idx = chosen + [-1] * (sc.max_observed_agents - len(chosen))
        gbs_pos, gbs_h = observed_sites(self.agents[i], sc.sites, sc.max_observed_sites, sc.sentinel_distance)
        js = JointState(
            own=self.agents[i].copy(),
            nbr_pos=np.array([o.position for o in nb]).reshape(-1, 2),
            nbr_vel=np.array([o.velocity for o in nb]).reshape(-1, 2),
            nbr_radius=np.array([o.radius for o in nb], dtype=float),
            nbr_present=np.array([o.present for o in nb], dtype=bool),
            gbs_pos=gbs_pos,
            gbs_height=gbs_h,
            uav_height=sc.radio.uav_height,
            meters_per_unit=sc.radio.meters_per_unit,
            sentinel=sc.sentinel_distance,
        )
        return js, idx

    def step(self, velocities: Sequence) -> list[StepEvents]:
        new, events = step_world(self.agents, velocities, self.scenario.dt, self.active,
                                 self.scenario.obstacles, self.scenario.bounds)
        self.agents = new
        self.step_count += 1
        return events

    def deactivate(self, i: int):
        self.active[i] = False
