import math
import os
import struct
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavnav import io as uio
from uavnav.radio import db_to_linear, linear_to_db
from uavnav.trainer import TrainConfig, initialize_networks


def small_nets():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 6 + 6 * 2 + 3 * 2))
    nets, _ = initialize_networks(X, rng.uniform(size=40), cfg=TrainConfig(init_max_updates=100), n_sites=2)
    return nets


def test_db_conversion():
    assert float(db_to_linear(-3.0)) == pytest.approx(0.501187, abs=1e-6)
    assert float(db_to_linear(1.0)) == pytest.approx(1.258925, abs=1e-6)
    assert float(linear_to_db(db_to_linear(-7.25))) == pytest.approx(-7.25, abs=1e-12)


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(17, 5)), rng.normal(size=17)
    p = tmp_path / "d.bin"
    uio.save_dataset(p, X, y, "sinr")
    X2, y2 = uio.load_dataset(p, "sinr")
    np.testing.assert_array_equal(X, X2)
    np.testing.assert_array_equal(y, y2)
    with pytest.raises(uio.FormatError, match="expected a 'dataset/value'"):
        uio.load_dataset(p, "value")


def test_checkpoint_round_trip(tmp_path):
    nets = small_nets()
    p = tmp_path / "c.bin"
    uio.save_checkpoint(p, nets)
    back = uio.load_checkpoint(p, 24, 6)
    X = np.random.default_rng(2).normal(size=(9, 24))
    np.testing.assert_array_equal(nets.value.predict(X), back.value.predict(X))
    np.testing.assert_array_equal(nets.sinr.predict(X[:, -6:]), back.sinr.predict(X[:, -6:]))
    assert back.value_opt.t == nets.value_opt.t
    for a, b in zip(nets.value_opt.m, back.value_opt.m):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(uio.FormatError, match="input width"):
        uio.load_checkpoint(p, 30, 6)


def test_wrong_version_and_magic(tmp_path):
    p = tmp_path / "d.bin"
    uio.save_dataset(p, np.zeros((2, 2)), np.zeros(2))
    blob = bytearray(p.read_bytes())
    blob[4:8] = struct.pack("<I", 99)
    p.write_bytes(bytes(blob))
    with pytest.raises(uio.FormatError, match="unsupported version 99"):
        uio.load_dataset(p)
    p.write_bytes(b"NOPE" + bytes(blob[4:]))
    with pytest.raises(uio.FormatError, match="not a uavnav"):
        uio.load_dataset(p)


def test_truncation_always_detected(tmp_path):
    p = tmp_path / "d.bin"
    uio.save_dataset(p, np.arange(12.0).reshape(4, 3), np.arange(4.0))
    blob = p.read_bytes()
    for cut in range(len(blob)):
        p.write_bytes(blob[:cut])
        with pytest.raises(uio.FormatError):
            uio.load_dataset(p)
    p.write_bytes(blob + b"\0")
    with pytest.raises(uio.FormatError):
        uio.load_dataset(p)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_corruption_never_crashes(seed):
    rng = np.random.default_rng(seed)
    good = tempfile.NamedTemporaryFile(delete=False, suffix=".bin")
    good.close()
    uio.save_dataset(good.name, rng.normal(size=(3, 2)), rng.normal(size=3))
    blob = bytearray(open(good.name, "rb").read())
    for _ in range(3):
        blob[int(rng.integers(len(blob)))] = int(rng.integers(256))
    open(good.name, "wb").write(bytes(blob))
    try:
        uio.load_dataset(good.name)
    except uio.FormatError:
        pass
    finally:
        os.unlink(good.name)


def test_scenario_defaults():
    sc = uio.default_scenario()
    assert sc.bounds == (0.0, 240.0, 0.0, 180.0)
    assert len(sc.sites) == 12 and sc.max_observed_sites == 8
    assert sc.sites[0].position == (30.0, 30.0) and sc.sites[11].position == (210.0, 150.0)
    assert sc.radio.sinr_threshold == pytest.approx(float(db_to_linear(-3.0)))
    assert sc.sites[0].tx_power == pytest.approx(float(db_to_linear(1.0)))
    assert sc.reward.gamma == 0.9


def test_scenario_round_trip():
    for name in uio.bundled_scenarios():
        sc = uio.resolve_scenario(name)
        assert uio.parse_scenario(uio.dump_scenario(sc)) == sc


def test_unknown_key_reports_line():
    text = "world:\n  dt: 0.1\n  speeed: 3\n"
    with pytest.raises(uio.ScenarioError, match=r"line 3: world\.speeed: unknown key"):
        uio.parse_scenario(text, "bad.yaml")


def test_invalid_values_reported():
    with pytest.raises(uio.ScenarioError, match="expected a number"):
        uio.parse_scenario("world:\n  dt: fast\n")
    with pytest.raises(uio.ScenarioError, match=r"line 1: world: dt must be > 0"):
        uio.parse_scenario("world:\n  dt: -1\n")
    with pytest.raises(uio.ScenarioError, match="no such scenario"):
        uio.resolve_scenario("nowhere")


def test_sites_and_threshold_from_yaml():
    sc = uio.parse_scenario("radio:\n  sinr_threshold_db: -5\nsites:\n  - position: [10, 20]\n"
                            "    tx_power_dbw: 0\n  - position: [50, 20]\n")
    assert sc.radio.sinr_threshold == pytest.approx(10 ** -0.5)
    assert sc.sites[0].tx_power == pytest.approx(1.0)
    assert sc.sites[1].tx_power == pytest.approx(10 ** 0.1)
    assert sc.max_observed_sites == 2


def test_coverage_export(tmp_path):
    p = tmp_path / "c.csv"
    uio.write_coverage_map(p, np.array([0.0, 1.0]), np.array([2.0]), np.array([[-1.0, math.inf]]),
                           np.array([[False, True]]))
    assert p.read_text().splitlines() == ["x,y,sinr_db,connected", "0.0,2.0,-1.0,0", "1.0,2.0,inf,1"]
