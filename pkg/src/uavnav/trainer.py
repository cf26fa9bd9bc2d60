"""Value/SINR network initialization and episodic epsilon-greedy refinement."""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .episode import run_case
from .kinematics import action_space_for
from .nn import Adam, DenseNetwork, DivergenceError, ReplayMemory, fit_standardizer, train_minibatch
from .radio import N_LEVELS, level_index, scaled_to_index
from .reward import PolicyContext, choose_action
from .world import Scenario, World, spawn_training_case


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; carries the last good networks and the log so far."""

    def __init__(self, nets, log, episode):
        super().__init__(f"divergence at episode {episode}")
        self.nets, self.log, self.episode = nets, log, episode


@dataclass
class TrainConfig:
    episodes: int = 200
    cases_per_episode: int = 30
    n_agents: int = 2
    eps_start: float = 0.5
    eps_end: float = 0.1
    updates_per_episode: int = 100
    value_capacity: int | None = None
    sinr_capacity: int = 30_000
    batch_size: int = 200
    lr: float = 0.01
    l2: float = 1e-4
    bootstrap_cases: int = 300
    init_max_updates: int = 3000
    probe_states: int = 200
    accuracy_grid: int = 25
    validation_cases: int = 10
    mode: str = "sp"
    pretrain_sinr: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1):
            raise ValueError("epsilon schedule must stay within [0, 1]")
        if self.value_capacity is None:
            self.value_capacity = 30_000 if self.n_agents <= 2 else 100_000

    def epsilon(self, episode: int) -> float:
        """Linear decay from ``eps_start`` (first episode) to ``eps_end`` (last)."""
        if self.episodes == 1:
            return self.eps_start
        frac = (episode - 1) / (self.episodes - 1)
        return self.eps_start + (self.eps_end - self.eps_start) * min(max(frac, 0.0), 1.0)


@dataclass
class Networks:
    value: DenseNetwork
    sinr: DenseNetwork
    value_opt: Adam
    sinr_opt: Adam

    def copy(self) -> "Networks":
        v, s = self.value.copy(), self.sinr.copy()
        vo, so = Adam(v.params, self.value_opt.lr), Adam(s.params, self.sinr_opt.lr)
        for src, dst in ((self.value_opt, vo), (self.sinr_opt, so)):
            dst.m = [m.copy() for m in src.m]
            dst.v = [x.copy() for x in src.v]
            dst.t = src.t
        return Networks(v, s, vo, so)


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict)

    COLUMNS = ("episode", "epsilon", "probe_value", "sinr_accuracy", "value_loss", "sinr_loss",
               "sr", "cr", "dr", "d_size", "dw_size")

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in self.COLUMNS))
        return "\n".join(lines) + "\n"


def _supervised(net: DenseNetwork, opt: Adam, X, y, rng, max_updates: int, batch: int, l2: float):
    """Minibatch training with a 10% held-out split; stops when held-out loss plateaus."""
    n = len(y)
    perm = rng.permutation(n)
    n_hold = max(1, n // 10) if n >= 10 else 0
    hold, tr = perm[:n_hold], perm[n_hold:]
    Xt, yt = X[tr], y[tr]

    def held():
        if n_hold == 0:
            return float("nan")
        return float(np.mean((net.predict(X[hold]) - y[hold]) ** 2))

    before = held()
    best, stale, done = math.inf, 0, 0
    while done < max_updates:
        for _ in range(100):
            idx = rng.choice(len(yt), size=min(batch, len(yt)), replace=len(yt) < batch)
            train_minibatch(net, opt, Xt[idx], yt[idx], l2)
        done += 100
        h = held() if n_hold else float(np.mean((net.predict(Xt) - yt) ** 2))
        if h < best * 0.99:
            best, stale = h, 0
        else:
            stale += 1
            if stale >= 3:
                break
    return before, held(), done


def initialize_networks(X, V, Xw=None, Lw=None, cfg: TrainConfig = TrainConfig(),
                        rng: np.random.Generator | None = None, n_sites: int | None = None):
    """Supervised value net on ``(X, V)``; SINR net on ``(Xw, Lw)`` if given, else random.

    Both standardizers are fit here and then frozen.  Returns ``(Networks, info)``.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if len(V) == 0:
        raise ValueError("empty bootstrap dataset")
    value = DenseNetwork.value_net(X.shape[1], rng)
    value.set_standardizer(*fit_standardizer(X))
    vopt = Adam(value.params, cfg.lr)
    info = {}
    info["value_before"], info["value_after"], info["value_updates"] = _supervised(
        value, vopt, X, V, rng, cfg.init_max_updates, cfg.batch_size, cfg.l2)
    if Xw is not None and len(Xw):
        Xw = np.asarray(Xw, dtype=float)
        width = Xw.shape[1]
    else:
        if n_sites is None:
            raise ValueError("n_sites is needed to size the SINR net without D_w")
        width = 3 * n_sites
    sinr = DenseNetwork.sinr_net(width, rng)
    sopt = Adam(sinr.params, cfg.lr)
    if Xw is not None and len(Xw):
        sinr.set_standardizer(*fit_standardizer(Xw))
        info["sinr_before"], info["sinr_after"], info["sinr_updates"] = _supervised(
            sinr, sopt, Xw, np.asarray(Lw, dtype=float), rng, cfg.init_max_updates, cfg.batch_size, cfg.l2)
    else:
        sinr.set_standardizer(*fit_standardizer(X[:, X.shape[1] - width:]))
    return Networks(value, sinr, vopt, sopt), info


def lookahead_decider(scenario: Scenario, nets, eps: float, rng: np.random.Generator, mode: str = "sp"):
    ctx = PolicyContext(scenario.dt, scenario.n_t, scenario.reward, scenario.radio, mode,
                        scenario.link_budget() if mode == "aw" else None)
    value, sinr = (nets.value, nets.sinr) if isinstance(nets, Networks) else nets

    def decide(i, js, nbr_vel, step):
        space = action_space_for(js.own, scenario)
        return choose_action(js, space, value, sinr, eps, rng, nbr_vel, step, ctx)

    return decide


def run_training_case(world: World, nets, eps: float, rng: np.random.Generator, mode: str = "sp"):
    """One case with every agent following the same epsilon-greedy lookahead policy."""
    return run_case(world, lookahead_decider(world.scenario, nets, eps, rng, mode), rng)


def compute_value_targets(record, value_net: DenseNetwork, dt: float, gamma: float):
    """``V_t = R_t + gamma**dt * V(s_{t+1})`` for non-final decisions; the final one is ``R_T``."""
    n = len(record.rewards)
    X = np.array(record.features[:n])
    r = np.array(record.rewards, dtype=float)
    y = r.copy()
    if n > 1:
        y[:-1] += gamma ** dt * value_net.predict(np.array(record.features[1:n]))
    return X, y


def harvest_sinr_pairs(record, radio):
    """Every logged tick as (GBS feature block, scaled level of the measured SINR)."""
    Xw = np.array(record.gbs_features)
    return Xw, level_index(np.array(record.sinr), radio) / (N_LEVELS - 1)


def sinr_accuracy(net: DenseNetwork, Xw, true_index) -> float:
    pred = scaled_to_index(net.predict(Xw))
    return float(np.mean(pred == np.asarray(true_index)))


def harvest_orca_sinr_pairs(scenario: Scenario, min_pairs: int, rng: np.random.Generator,
                            cases_per_round: int = 50, n_agents: int = 2):
    """Location-SINR pairs from ORCA rollouts until at least ``min_pairs`` are collected."""
    from .orca import generate_bootstrap_set

    Xs, Ls = [], []
    while sum(len(L) for L in Ls) < min_pairs:
        _, _, Xw, Lw, _ = generate_bootstrap_set(scenario, cases_per_round, rng, n_agents)
        Xs.append(Xw)
        Ls.append(Lw)
    return np.concatenate(Xs), np.concatenate(Ls)


def fit_sinr_predictor(Xw, Lw, rng: np.random.Generator, stages=((10_000, 0.01), (5_000, 0.001)),
                       batch_size: int = 1000, l2: float = 1e-4) -> DenseNetwork:
    """Standalone SINR-level regression on a fixed dataset, Adam with a stepped learning rate."""
    Xw = np.asarray(Xw, dtype=float)
    Lw = np.asarray(Lw, dtype=float)
    net = DenseNetwork.sinr_net(Xw.shape[1], rng)
    net.set_standardizer(*fit_standardizer(Xw))
    opt = Adam(net.params)
    for n_updates, lr in stages:
        opt.lr = lr
        for _ in range(n_updates):
            idx = rng.choice(len(Lw), size=min(batch_size, len(Lw)), replace=False)
            train_minibatch(net, opt, Xw[idx], Lw[idx], l2)
    return net


def accuracy_grid(scenario: Scenario, n: int, rng: np.random.Generator, draws: int = 20000):
    """Held-out uniform grid of GBS feature blocks and their levels.

    The level is taken from a long empirical average (``draws`` fading
    snapshots), i.e. the expectation the net regresses toward.  Frame
    orientations are random.
    """
    from dataclasses import replace

    from .kinematics import transform_joint_state
    from .world import AgentState, JointState, observed_sites

    x0, x1, y0, y1 = scenario.bounds
    xs = np.linspace(x0, x1, n + 2)[1:-1]
    ys = np.linspace(y0, y1, n + 2)[1:-1]
    link = replace(scenario, radio=replace(scenario.radio, measurements_per_check=draws)).link_budget()
    K = scenario.max_observed_sites
    feats, levels = [], []
    for x in xs:
        for y in ys:
            p = np.array([x, y])
            ang = rng.uniform(-np.pi, np.pi)
            own = AgentState(p, np.zeros(2), scenario.agent_radius, p + np.array([np.cos(ang), np.sin(ang)]),
                             scenario.v_max, ang)
            gpos, gh = observed_sites(own, scenario.sites, K, scenario.sentinel_distance)
            js = JointState(own, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=bool),
                            gpos, gh,
                            scenario.radio.uav_height, scenario.radio.meters_per_unit, scenario.sentinel_distance)
            feats.append(transform_joint_state(js)[6:])
            levels.append(int(level_index(link.empirical(p, rng), scenario.radio)))
    return np.array(feats), np.array(levels)


def probe_states(scenario: Scenario, n: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed random transformed joint states (from fresh spawns) for the value curve."""
    out = []
    while len(out) < n:
        agents = spawn_training_case(scenario, 2, rng)
        w = World(scenario, agents)
        from .episode import features_now
        for i in range(len(agents)):
            out.append(features_now(w.observe(i)[0]))
    return np.array(out[:n])


def outcome_rates(records) -> dict:
    n = len(records)
    return {k: sum(r.outcome == k for r in records) / n for k in ("success", "collision", "disconnection", "stuck")}


def train(scenario: Scenario, cfg: TrainConfig = TrainConfig(), bootstrap=None, out_dir: str | None = None,
          keep_checkpoints: tuple = (0,), progress=None):
    """Run the full refinement loop.

    ``bootstrap`` is ``(X, V, Xw, Lw)``; when omitted it is generated with ORCA.
    Returns ``(Networks, TrainLog)``.  Checkpoints for the episodes listed in
    ``keep_checkpoints`` (plus the last) are kept in memory; every episode is
    written to ``out_dir`` when one is given.
    """
    from . import io as uio
    from .orca import generate_bootstrap_set

    root = np.random.SeedSequence(cfg.seed)
    boot_ss, init_ss, probe_ss, loop_ss = root.spawn(4)
    if bootstrap is None:
        X, V, Xw, Lw, _ = generate_bootstrap_set(scenario, cfg.bootstrap_cases, np.random.default_rng(boot_ss),
                                                 cfg.n_agents)
    else:
        X, V, Xw, Lw = bootstrap
    if not cfg.pretrain_sinr:
        Xw = Lw = None
    nets, _ = initialize_networks(X, V, Xw, Lw, cfg, np.random.default_rng(init_ss),
                                  n_sites=scenario.max_observed_sites)
    D = ReplayMemory(cfg.value_capacity, X.shape[1])
    D.push_many(X[-cfg.value_capacity:], V[-cfg.value_capacity:])
    Dw = ReplayMemory(cfg.sinr_capacity, scenario.sinr_input_width)
    if Xw is not None:
        Dw.push_many(Xw[-cfg.sinr_capacity:], Lw[-cfg.sinr_capacity:])
    prng = np.random.default_rng(probe_ss)
    probes = probe_states(scenario, cfg.probe_states, prng)
    grid_X, grid_L = accuracy_grid(scenario, cfg.accuracy_grid, prng)
    log = TrainLog()
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    def record(ep, eps, vloss, sloss, rates):
        row = {"episode": ep, "epsilon": eps, "probe_value": float(np.mean(nets.value.predict(probes))),
               "sinr_accuracy": sinr_accuracy(nets.sinr, grid_X, grid_L), "value_loss": vloss,
               "sinr_loss": sloss, "sr": rates["success"], "cr": rates["collision"],
               "dr": rates["disconnection"], "d_size": len(D), "dw_size": len(Dw)}
        log.rows.append(row)
        if ep in keep_checkpoints or ep == cfg.episodes:
            log.checkpoints[ep] = nets.copy()
        if out_dir:
            uio.save_checkpoint(os.path.join(out_dir, f"checkpoint_{ep:04d}.bin"), nets)
            with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
                fh.write(log.to_csv())
        if progress:
            progress(row)

    def validate(ep):
        if cfg.validation_cases <= 0:
            return {"success": float("nan"), "collision": float("nan"), "disconnection": float("nan")}
        vrng = np.random.default_rng([cfg.seed, ep, 1])
        recs = []
        for _ in range(cfg.validation_cases):
            agents = spawn_training_case(scenario, cfg.n_agents, vrng)
            recs += run_training_case(World(scenario, agents), nets, 0.0, vrng, cfg.mode)
        return outcome_rates(recs)

    record(0, float("nan"), float("nan"), float("nan"), validate(0))
    loop_seed = loop_ss.generate_state(1)[0]
    for ep in range(1, cfg.episodes + 1):
        eps = cfg.epsilon(ep)
        for c in range(cfg.cases_per_episode):
            rng = np.random.default_rng([loop_seed, ep, c])
            agents = spawn_training_case(scenario, cfg.n_agents, rng)
            for rec in run_training_case(World(scenario, agents), nets, eps, rng, cfg.mode):
                Xv, yv = compute_value_targets(rec, nets.value, scenario.dt, scenario.reward.gamma)
                D.push_many(Xv, yv)
                Dw.push_many(*harvest_sinr_pairs(rec, scenario.radio))
        urng = np.random.default_rng([loop_seed, ep, cfg.cases_per_episode])
        vl, sl = [], []
        last_good = nets.copy()
        try:
            for _ in range(cfg.updates_per_episode):
                vl.append(train_minibatch(nets.value, nets.value_opt, *D.sample(cfg.batch_size, urng), cfg.l2))
                sl.append(train_minibatch(nets.sinr, nets.sinr_opt, *Dw.sample(cfg.batch_size, urng), cfg.l2))
        except DivergenceError as exc:
            raise TrainingDiverged(last_good, log, ep) from exc
        record(ep, eps, float(np.mean(vl)), float(np.mean(sl)), validate(ep))
    return nets, log
