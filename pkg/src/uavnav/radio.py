"""Cellular link model: antenna gains, path loss, SINR, measurement and levels.

Positions are horizontal world coordinates; ``RadioConfig.meters_per_unit``
converts horizontal separations to meters before any radio quantity is
computed.  Powers are stored in watts and thresholds as linear ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

N_LEVELS = 21
LEVEL_SPAN_DB = 10.0


class GeometryError(ValueError):
    """Raised when a link has zero 3D length or an undefined elevation."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class GbsSite:
    """One ground base station."""

    position: tuple[float, float]
    height: float = 32.0
    tx_power: float = 10.0 ** 0.1
    tilt: float = 10.0
    beamwidth: float = 15.0
    max_attenuation: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if self.height <= 0:
            raise ValueError(f"site height must be > 0, got {self.height}")
        if self.tx_power <= 0:
            raise ValueError(f"site tx_power must be > 0, got {self.tx_power}")
        if self.beamwidth <= 0:
            raise ValueError(f"site beamwidth must be > 0, got {self.beamwidth}")
        if self.max_attenuation <= 0:
            raise ValueError(f"site max_attenuation must be > 0, got {self.max_attenuation}")

    @classmethod
    def from_dbw(cls, position, tx_power_dbw: float = 1.0, **kw) -> "GbsSite":
        return cls(position, tx_power=float(db_to_linear(tx_power_dbw)), **kw)


@dataclass(frozen=True)
class RadioConfig:
    uav_height: float = 50.0
    path_loss_exponent: float = 2.5
    noise_power: float = 1e-6
    sinr_threshold: float = 10.0 ** -0.3
    measurements_per_check: int = 100
    fading: str = "rayleigh_unit_mean"
    meters_per_unit: float = 1.0

    def __post_init__(self):
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be > 0")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be > 0")
        if self.sinr_threshold <= 0:
            raise ValueError("sinr_threshold must be > 0")
        if self.measurements_per_check < 1:
            raise ValueError("measurements_per_check must be >= 1")
        if self.fading not in ("none", "rayleigh_unit_mean"):
            raise ValueError(f"unknown fading model {self.fading!r}")
        if self.meters_per_unit <= 0:
            raise ValueError("meters_per_unit must be > 0")

    @property
    def threshold_db(self) -> float:
        return float(linear_to_db(self.sinr_threshold))


@dataclass(frozen=True)
class SinrLevel:
    index: int
    scaled: float


def gbs_antenna_gain(d: float, site: GbsSite, uav_height: float) -> float:
    """Linear vertical-pattern gain of a down-tilted GBS antenna (horizontal gain 0 dB).

    ``d`` is the horizontal distance in meters.
    """
    if d < 0:
        raise ValueError("horizontal distance must be >= 0")
    elev = math.degrees(math.atan2(site.height - uav_height, d))
    att = min(12.0 * ((elev - site.tilt) / site.beamwidth) ** 2, site.max_attenuation)
    return 10.0 ** (-att / 10.0)


def uav_antenna_gain(d: float, uav_height: float, gbs_height: float) -> float:
    """Sine of the elevation angle seen by a horizontally mounted UAV antenna."""
    dh = uav_height - gbs_height
    if d == 0 and dh == 0:
        raise GeometryError("undefined elevation")
    return dh / math.sqrt(d * d + dh * dh)


def path_loss(d: float, alpha: float, gbs_height: float, uav_height: float) -> float:
    r2 = d * d + (gbs_height - uav_height) ** 2
    if r2 == 0:
        raise GeometryError("coincident positions")
    return r2 ** (alpha / 2.0)


def _site_arrays(sites: Sequence[GbsSite]):
    if not sites:
        raise ValueError("at least one site is required")
    return (
        np.array([s.position[0] for s in sites]),
        np.array([s.position[1] for s in sites]),
        np.array([s.height for s in sites]),
        np.array([s.tx_power for s in sites]),
        np.array([s.tilt for s in sites]),
        np.array([s.beamwidth for s in sites]),
        np.array([s.max_attenuation for s in sites]),
    )


class LinkBudget:
    """Pre-packed site arrays so repeated SINR queries skip Python overhead."""

    def __init__(self, sites: Sequence[GbsSite], cfg: RadioConfig):
        self.sites = tuple(sites)
        self.cfg = cfg
        self._arrays = _site_arrays(self.sites)

    def received(self, positions) -> np.ndarray:
        """``(N, K)`` received powers for world positions of shape ``(N, 2)``."""
        p = np.asarray(positions, dtype=float).reshape(-1, 2)
        cfg = self.cfg
        return kernels.received_power(p[:, 0], p[:, 1], *self._arrays, cfg.uav_height,
                                      cfg.path_loss_exponent, cfg.meters_per_unit)

    def sinr_all(self, positions) -> np.ndarray:
        """SINR for every (position, serving site) pair."""
        r = self.received(positions)
        return r / (self.cfg.noise_power + r.sum(axis=1, keepdims=True) - r)

    def best(self, positions):
        """Best serving index and its SINR for each position."""
        r = self.received(positions)
        idx = np.argmax(r, axis=1)
        rows = np.arange(r.shape[0])
        own = r[rows, idx]
        return idx, own / (self.cfg.noise_power + r.sum(axis=1) - own)

    def empirical(self, position, rng: np.random.Generator, serving: int | None = None) -> float:
        r = self.received(position)[0]
        if serving is None:
            serving = int(np.argmax(r))
        cfg = self.cfg
        if cfg.fading == "none":
            return float(r[serving] / (cfg.noise_power + r.sum() - r[serving]))
        h = rng.exponential(1.0, size=(cfg.measurements_per_check, r.size))
        inst = h * r
        own = inst[:, serving]
        return float(np.mean(own / (cfg.noise_power + inst.sum(axis=1) - own)))


def _check_geometry(pos, sites, cfg):
    for s in sites:
        if s.height == cfg.uav_height and s.position == (float(pos[0]), float(pos[1])):
            raise GeometryError("coincident positions")


def sinr(uav_pos, serving: int, sites: Sequence[GbsSite], cfg: RadioConfig) -> float:
    if not 0 <= serving < len(sites):
        raise IndexError(f"serving index {serving} out of range for {len(sites)} sites")
    _check_geometry(uav_pos, sites, cfg)
    return float(LinkBudget(sites, cfg).sinr_all([uav_pos])[0, serving])


def best_association(uav_pos, sites: Sequence[GbsSite], cfg: RadioConfig) -> tuple[int, float]:
    _check_geometry(uav_pos, sites, cfg)
    idx, s = LinkBudget(sites, cfg).best([uav_pos])
    return int(idx[0]), float(s[0])


def empirical_sinr(uav_pos, sites: Sequence[GbsSite], cfg: RadioConfig,
                   rng: np.random.Generator, serving: int | None = None) -> float:
    """Average of ``N_m`` faded SINR snapshots, serving the best-on-average site."""
    _check_geometry(uav_pos, sites, cfg)
    return LinkBudget(sites, cfg).empirical(uav_pos, rng, serving)


def is_connected(s: float, cfg: RadioConfig) -> bool:
    return s >= cfg.sinr_threshold


def level_index(s, cfg: RadioConfig):
    """Quantize linear SINR into 21 one-dB bins; bin 10 starts at the threshold."""
    t_db = cfg.threshold_db
    x = np.clip(linear_to_db(np.maximum(s, 1e-300)) - t_db, -LEVEL_SPAN_DB, LEVEL_SPAN_DB)
    return np.minimum(np.floor(x + LEVEL_SPAN_DB), N_LEVELS - 1).astype(int)


def sinr_level(s: float, cfg: RadioConfig) -> SinrLevel:
    if s <= 0:
        raise ValueError("SINR must be > 0")
    idx = int(level_index(s, cfg))
    return SinrLevel(idx, idx / (N_LEVELS - 1))


def level_floor_sinr(index, cfg: RadioConfig):
    """Linear SINR at the lower edge of a level (the value used for decisions)."""
    return cfg.sinr_threshold * db_to_linear(np.asarray(index, dtype=float) - LEVEL_SPAN_DB)


def scaled_to_index(scaled):
    return np.clip(np.rint(np.asarray(scaled) * (N_LEVELS - 1)), 0, N_LEVELS - 1).astype(int)
