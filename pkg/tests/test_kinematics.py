import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavnav import _kernels_py, kernels
from uavnav.episode import features_now
from uavnav.kinematics import (
    Action,
    action_space_for,
    estimate_next_joint_state,
    filter_velocity,
    lookahead,
    propagate,
    sample_action_space,
    transform_joint_state,
)
from uavnav.radio import GbsSite, RadioConfig
from uavnav.world import AgentState, JointState, Scenario, World, spawn_training_case

SITES = [GbsSite.from_dbw((x, y)) for x in (2.0, 5.0) for y in (2.0, 5.0)]
DESK = Scenario(bounds=(0, 7, 0, 7), sites=SITES, radio=RadioConfig(meters_per_unit=20.0), dt=0.5, n_t=2,
                max_observed_sites=4)


def random_joint_state(rng, n_nbr=4, n_gbs=4, absent=1):
    own = AgentState(rng.uniform(-5, 5, 2), rng.uniform(-1, 1, 2), 0.3, rng.uniform(-5, 5, 2),
                     1.0, rng.uniform(-math.pi, math.pi))
    present = np.ones(n_nbr, dtype=bool)
    present[n_nbr - absent:] = False
    sent = 99.0
    nbr_pos = rng.uniform(-5, 5, (n_nbr, 2))
    nbr_vel = rng.uniform(-1, 1, (n_nbr, 2))
    for j in np.flatnonzero(~present):
        nbr_pos[j] = own.position + [sent, 0.0]
        nbr_vel[j] = 0.0
    return JointState(own, nbr_pos, nbr_vel, np.where(present, 0.3, 0.0), present,
                      rng.uniform(-8, 8, (n_gbs, 2)), rng.uniform(20, 40, n_gbs), 50.0, 20.0, sent)


def rigid(js, theta, t):
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    out = js.copy()
    out.own.position = R @ js.own.position + t
    out.own.goal = R @ js.own.goal + t
    out.own.velocity = R @ js.own.velocity
    out.own.heading = js.own.heading + theta
    out.nbr_pos = js.nbr_pos @ R.T + t
    out.nbr_vel = js.nbr_vel @ R.T
    out.gbs_pos = js.gbs_pos @ R.T + t
    return out


def test_action_space_layout():
    space = sample_action_space(0.3, 0.2, 1.0, math.pi, 0.5)
    assert len(space) == 4 * 11 + 1
    assert space[0].speed == 0.0 and space[0].heading == pytest.approx(0.2)
    assert space[1].speed == pytest.approx(0.25)
    assert space[1].heading == pytest.approx(0.2 - math.pi / 2)
    assert space[-1].speed == 1.0 and space[-1].heading == pytest.approx(0.2 + math.pi / 2)


def test_small_action_space_deduplicates_hover():
    space = sample_action_space(0.0, 0.0, 2.0, 1.0, 0.1, n_speeds=2, n_headings=3)
    pairs = {(round(a.speed, 12), round(a.heading, 12)) for a in space}
    assert len(space) == len(pairs) == 4
    assert sum(a.speed == 0.0 for a in space) == 1


def test_heading_wraps_at_pi():
    space = sample_action_space(1.0, math.pi, 1.0, 1.0, 0.5)
    for a in space:
        assert -math.pi < a.heading <= math.pi
    assert space[1].heading == pytest.approx(math.pi - 0.5)
    assert space[11].heading == pytest.approx(-math.pi + 0.5)


@settings(max_examples=100)
@given(st.floats(-10, 10), st.floats(0.1, 5), st.floats(0.1, 2 * math.pi), st.floats(0.01, 1.0))
def test_actions_feasible(phi, v_max, turn_rate, dt):
    space = sample_action_space(0.0, phi, v_max, turn_rate, dt)
    for a in space.actions[1:]:
        assert 0 <= a.speed <= v_max + 1e-12
        diff = (a.heading - phi + math.pi) % (2 * math.pi) - math.pi
        assert abs(diff) <= turn_rate * dt + 1e-9
        assert -math.pi < a.heading <= math.pi


def test_nearest_action():
    space = sample_action_space(0.0, 0.0, 1.0, math.pi, 0.5)
    assert space.nearest([0.0, 0.0]) == 0
    assert space[space.nearest([1.0, 0.0])].velocity == pytest.approx([1.0, 0.0])


def test_propagate():
    p = np.array([1.0, 2.0])
    assert np.array_equal(propagate(p, [0, 0], 0.3), p)
    assert propagate(p, [1, 0], 0.1)[0] == pytest.approx(1.1)
    v = np.array([0.3, -0.7])
    assert propagate(propagate(p, v, 0.4), -v, 0.4) == pytest.approx(p)


def test_filter_velocity():
    assert np.array_equal(filter_velocity([]), [0.0, 0.0])
    assert filter_velocity([[0.5, 0.2]] * 6) == pytest.approx([0.5, 0.2])
    assert filter_velocity([[0, 0], [1, 0]], 0.7) == pytest.approx([0.7, 0.0])


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=10))
def test_filter_never_exceeds_history(hist):
    out = filter_velocity(hist)
    assert np.hypot(*out) <= max(math.hypot(*h) for h in hist) + 1e-12


def test_frame_definition():
    own = AgentState(np.array([1.0, 1.0]), np.array([0.0, 0.8]), 0.3, np.array([1.0, 9.0]), 1.0, math.pi / 2)
    js = JointState(own, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=bool),
                    np.array([[1.0, 1.9]]), np.array([32.0]), 50.0, 20.0, 99.0)
    f = transform_joint_state(js)
    assert f[0] == pytest.approx(8.0)
    assert f[2:4] == pytest.approx([0.8, 0.0])
    assert f[5] == pytest.approx(0.0)
    # a site 0.9 units (18 m) ahead, 18 m below the UAV
    assert f[6:9] == pytest.approx([18.0, 0.0, -math.pi / 4])


def test_frame_falls_back_to_heading_at_goal():
    own = AgentState(np.array([1.0, 1.0]), np.zeros(2), 0.3, np.array([1.0, 1.0]), 1.0, 0.7)
    js = JointState(own, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=bool),
                    np.array([[1.0 + math.cos(0.7), 1.0 + math.sin(0.7)]]), np.array([32.0]), 50.0, 1.0, 99.0)
    f = transform_joint_state(js)
    assert f[0] == 0.0 and f[5] == 0.0 and f[7] == pytest.approx(0.0, abs=1e-12)


def test_absent_neighbour_block():
    js = random_joint_state(np.random.default_rng(0), n_nbr=2, absent=1)
    f = transform_joint_state(js)
    assert f[12:18].tolist() == [99.0, 0.0, 0.0, 0.0, 0.0, 99.0]


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(-math.pi, math.pi), st.floats(-50, 50), st.floats(-50, 50))
def test_frame_invariance(seed, theta, tx, ty):
    js = random_joint_state(np.random.default_rng(seed))
    a = transform_joint_state(js)
    b = transform_joint_state(rigid(js, theta, np.array([tx, ty])))
    ang = np.zeros(a.size, dtype=bool)
    ang[5] = True
    ang[6 + 6 * 4 + 1::3] = True
    np.testing.assert_allclose(a[~ang], b[~ang], atol=1e-9)
    # angles compared on the circle
    d = np.angle(np.exp(1j * (a[ang] - b[ang])))
    np.testing.assert_allclose(d, 0.0, atol=1e-9)


def test_estimate_next_matches_manual_composition():
    rng = np.random.default_rng(1)
    js = random_joint_state(rng)
    act = Action(0.8, 0.3)
    nv = rng.uniform(-1, 1, (4, 2))
    nxt = estimate_next_joint_state(js, act, nv, 0.5)
    assert nxt.own.position == pytest.approx(propagate(js.own.position, act.velocity, 0.5))
    for j in range(3):
        assert nxt.nbr_pos[j] == pytest.approx(propagate(js.nbr_pos[j], nv[j], 0.5))
    # the absent slot stays a sentinel
    assert np.array_equal(nxt.nbr_pos[3], js.nbr_pos[3]) and not nxt.nbr_present[3]


def test_estimate_next_zero_velocity_keeps_positions():
    js = random_joint_state(np.random.default_rng(2))
    nxt = estimate_next_joint_state(js, Action(0.0, js.own.heading), np.zeros((4, 2)), 0.5)
    assert np.array_equal(nxt.own.position, js.own.position)
    assert np.array_equal(nxt.nbr_pos, js.nbr_pos)


def test_batched_lookahead_matches_reference():
    rng = np.random.default_rng(3)
    for _ in range(20):
        js = random_joint_state(rng, absent=int(rng.integers(0, 4)))
        space = sample_action_space(0.0, js.own.heading, 1.0, math.pi, 0.5)
        nv = rng.uniform(-1, 1, (4, 2))
        feats, _, _, _ = lookahead(js, space, nv, 0.5)
        for i in (0, 7, 30, len(space) - 1):
            ref = transform_joint_state(estimate_next_joint_state(js, space[i], nv, 0.5))
            np.testing.assert_allclose(feats[i], ref, atol=1e-9)


def test_features_now_matches_reference():
    w = World(DESK, spawn_training_case(DESK, 3, np.random.default_rng(4)))
    for i in range(3):
        js, _ = w.observe(i)
        np.testing.assert_allclose(features_now(js), transform_joint_state(js), atol=1e-9)


needs_compiled = pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled extension not built")


@needs_compiled
def test_backends_agree_on_lookahead():
    rng = np.random.default_rng(5)
    cy = kernels.compiled_backend
    for _ in range(30):
        js = random_joint_state(rng, absent=int(rng.integers(0, 4)))
        space = sample_action_space(0.0, js.own.heading, 1.0, math.pi, 0.5)
        own = np.array([*js.own.position, *js.own.goal, js.own.v_max, js.own.radius])
        args = (own, space.velocities, space.headings, js.nbr_pos, rng.uniform(-1, 1, (4, 2)), js.nbr_radius,
                js.nbr_present.astype(np.uint8), js.gbs_pos, js.gbs_height, 50.0, 20.0, js.sentinel, 0.5)
        for a, b in zip(cy.lookahead_features(*args), _kernels_py.lookahead_features(*args)):
            np.testing.assert_allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=1e-12)


@needs_compiled
def test_backends_agree_on_received_power():
    rng = np.random.default_rng(6)
    k = 7
    args = (rng.uniform(0, 10, 50), rng.uniform(0, 10, 50), rng.uniform(0, 10, k), rng.uniform(0, 10, k),
            rng.uniform(20, 40, k), rng.uniform(0.5, 2, k), rng.uniform(0, 15, k), rng.uniform(5, 25, k),
            np.full(k, 20.0), 50.0, 2.5, 20.0)
    np.testing.assert_allclose(kernels.compiled_backend.received_power(*args),
                               _kernels_py.received_power(*args), rtol=1e-13)


@needs_compiled
def test_backends_agree_on_orca():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(0, 5))
        args = (rng.uniform(-3, 3, 2), rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2), 0.3, 1.0,
                rng.uniform(-3, 3, (n, 2)), rng.uniform(-1, 1, (n, 2)), np.full(n, 0.35),
                rng.choice([0.5, 1.0], n), 2.0, 0.5)
        np.testing.assert_allclose(kernels.compiled_backend.orca_velocity(*args),
                                   _kernels_py.orca_velocity(*args), atol=1e-12)


def test_action_space_for_uses_scenario_limits():
    a = AgentState.at_rest((1, 1), (5, 5), 0.3, 1.0)
    space = action_space_for(a, DESK)
    assert len(space) == (DESK.n_speeds - 1) * DESK.n_headings + 1
    assert np.max(space.speeds) == pytest.approx(1.0)
