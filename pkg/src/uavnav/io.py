"""Scenario files (YAML), binary datasets/checkpoints and delimited exports.

Binary layout (little endian)::

    b"UAVN"            4 bytes magic
    version            uint32
    header length      uint32
    header             UTF-8 JSON: {"kind", "meta", "arrays": [{"name", "shape"}]}
    payload            float64 arrays in header order, C order

Loading checks magic, version, kind and that the payload length matches the
header exactly.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
import struct
from importlib import resources

import numpy as np
import yaml

from .nn import Adam, DenseNetwork
from .radio import GbsSite, RadioConfig, db_to_linear, linear_to_db
from .reward import RewardConfig
from .world import Obstacle, Scenario

MAGIC = b"UAVN"
VERSION = 1


class FormatError(ValueError):
    pass


class ScenarioError(ValueError):
    pass


# --------------------------------------------------------------------------- binary

def save_arrays(path, kind: str, arrays: dict, meta: dict | None = None):
    arrays = {k: np.ascontiguousarray(v, dtype="<f8") for k, v in arrays.items()}
    header = json.dumps({"kind": kind, "meta": meta or {},
                         "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for v in arrays.values():
            fh.write(v.tobytes())


def load_arrays(path, kind: str | None = None):
    """Returns ``(arrays, meta)``; raises ``FormatError`` on any mismatch."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a uavnav binary file")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} (expected {VERSION})")
    if len(blob) < 12 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    try:
        specs = [(str(a["name"]), [int(n) for n in a["shape"]]) for a in header["arrays"]]
        meta = dict(header["meta"])
        found = header["kind"]
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"{path}: malformed header") from exc
    if kind is not None and found != kind:
        raise FormatError(f"{path}: expected a {kind!r} file, found {found!r}")
    if any(n < 0 for _, shape in specs for n in shape):
        raise FormatError(f"{path}: malformed header")
    sizes = [int(np.prod(shape, dtype=np.int64)) for _, shape in specs]
    expected = 12 + hlen + 8 * sum(sizes)
    if len(blob) != expected:
        raise FormatError(f"{path}: length {len(blob)} does not match header ({expected} bytes)")
    out, off = {}, 12 + hlen
    for (name, shape), n in zip(specs, sizes):
        out[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
    return out, meta


def save_dataset(path, X, y, kind: str = "value"):
    """``kind`` is ``"value"`` (memory D) or ``"sinr"`` (memory D_w)."""
    X = np.asarray(X, dtype=float)
    save_arrays(path, f"dataset/{kind}", {"X": X.reshape(len(X), -1), "y": np.asarray(y, dtype=float)})


def load_dataset(path, kind: str = "value"):
    arrays, _ = load_arrays(path, f"dataset/{kind}")
    if "X" not in arrays or "y" not in arrays:
        raise FormatError(f"{path}: dataset needs arrays X and y")
    X, y = arrays["X"], arrays["y"]
    if len(X) != len(y):
        raise FormatError(f"{path}: {len(X)} features vs {len(y)} targets")
    return X, y


def _net_arrays(prefix, net: DenseNetwork, opt: Adam):
    out = {f"{prefix}.mean": net.mean, f"{prefix}.std": net.std}
    for i, p in enumerate(net.params):
        out[f"{prefix}.p{i}"] = p
        out[f"{prefix}.m{i}"] = opt.m[i]
        out[f"{prefix}.v{i}"] = opt.v[i]
    return out


def save_checkpoint(path, nets):
    arrays = {**_net_arrays("value", nets.value, nets.value_opt), **_net_arrays("sinr", nets.sinr, nets.sinr_opt)}
    meta = {"value_widths": list(nets.value.widths), "sinr_widths": list(nets.sinr.widths),
            "value_step": nets.value_opt.t, "sinr_step": nets.sinr_opt.t, "lr": nets.value_opt.lr}
    save_arrays(path, "checkpoint", arrays, meta)


def _restore(prefix, arrays, widths, step, lr):
    net = DenseNetwork(widths)
    net.set_standardizer(arrays[f"{prefix}.mean"], arrays[f"{prefix}.std"])
    opt = Adam(net.params, lr)
    for i, p in enumerate(net.params):
        src = arrays[f"{prefix}.p{i}"]
        if src.shape != p.shape:
            raise FormatError(f"{prefix} parameter {i} has shape {src.shape}, expected {p.shape}")
        p[...] = src
        opt.m[i][...] = arrays[f"{prefix}.m{i}"]
        opt.v[i][...] = arrays[f"{prefix}.v{i}"]
    opt.t = step
    return net, opt


def load_checkpoint(path, value_width: int | None = None, sinr_width: int | None = None):
    """Load networks and optimizer state; input widths are checked when given."""
    from .trainer import Networks

    arrays, meta = load_arrays(path, "checkpoint")
    try:
        vw, sw = tuple(meta["value_widths"]), tuple(meta["sinr_widths"])
        if value_width is not None and vw[0] != value_width:
            raise FormatError(f"value net input width {vw[0]} does not match scenario width {value_width}")
        if sinr_width is not None and sw[0] != sinr_width:
            raise FormatError(f"SINR net input width {sw[0]} does not match scenario width {sinr_width}")
        v, vo = _restore("value", arrays, vw, meta["value_step"], meta["lr"])
        s, so = _restore("sinr", arrays, sw, meta["sinr_step"], meta["lr"])
    except (KeyError, IndexError, TypeError) as exc:
        raise FormatError(f"{path}: incomplete checkpoint ({exc})") from exc
    return Networks(v, s, vo, so)


# --------------------------------------------------------------------------- scenarios

WORLD_KEYS = ("bounds", "dt", "n_t", "turn_rate", "max_observed_agents", "max_observed_sites",
              "stuck_factor", "agent_radius", "v_max", "min_trip", "swap_probability", "n_speeds",
              "n_headings", "filter_beta")
RADIO_KEYS = ("uav_height", "path_loss_exponent", "noise_power", "sinr_threshold_db",
              "measurements_per_check", "fading", "meters_per_unit")
SITE_KEYS = ("position", "height", "tx_power_dbw", "tilt", "beamwidth", "max_attenuation")
REWARD_KEYS = tuple(f.name for f in dataclasses.fields(RewardConfig))
TOP_KEYS = ("world", "radio", "site_defaults", "sites", "obstacles", "reward")

DEFAULT_BOUNDS = (0.0, 240.0, 0.0, 180.0)


def default_sites(**site_kw) -> list[GbsSite]:
    """Twelve sites on a 4 x 3 grid with 60 m spacing; ``site_kw`` go to ``GbsSite``."""
    site_kw.setdefault("tx_power", float(db_to_linear(1.0)))
    return [GbsSite((30.0 + 60.0 * i, 30.0 + 60.0 * j), **site_kw) for j in range(3) for i in range(4)]


def default_scenario() -> Scenario:
    return scenario_from_dict({})


def _line_of(node, path):
    """Best-effort ``mapping path -> line number`` lookup in a composed YAML tree."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v if key != path[-1] else k
                    break
            if nxt is None:
                return node.start_mark.line + 1
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return node.start_mark.line + 1


class _Ctx:
    def __init__(self, root_node, source):
        self.root = root_node
        self.source = source

    def fail(self, path, msg):
        where = self.source
        if self.root is not None:
            where += f", line {_line_of(self.root, path)}"
        dotted = ".".join(str(p) for p in path) or "<root>"
        raise ScenarioError(f"{where}: {dotted}: {msg}")


def _mapping(ctx, d, path, allowed):
    if d is None:
        return {}
    if not isinstance(d, dict):
        ctx.fail(path, "expected a mapping")
    for k in d:
        if k not in allowed:
            ctx.fail(list(path) + [k], f"unknown key (allowed: {', '.join(allowed)})")
    return d


def _number(ctx, v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(path, f"expected a number, got {v!r}")
    return float(v)


def _build(ctx, fn, path):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        ctx.fail(path, str(exc))


def scenario_from_dict(d: dict, ctx: _Ctx | None = None) -> Scenario:
    ctx = ctx or _Ctx(None, "<dict>")
    d = _mapping(ctx, d, [], TOP_KEYS)
    world = _mapping(ctx, d.get("world"), ["world"], WORLD_KEYS)
    radio = _mapping(ctx, d.get("radio"), ["radio"], RADIO_KEYS)
    sdef = _mapping(ctx, d.get("site_defaults"), ["site_defaults"], SITE_KEYS[1:])
    reward = _mapping(ctx, d.get("reward"), ["reward"], REWARD_KEYS)

    rkw = {}
    for k, v in radio.items():
        if k == "fading":
            rkw[k] = v
        elif k == "sinr_threshold_db":
            rkw["sinr_threshold"] = float(db_to_linear(_number(ctx, v, ["radio", k])))
        elif k == "measurements_per_check":
            rkw[k] = int(_number(ctx, v, ["radio", k]))
        else:
            rkw[k] = _number(ctx, v, ["radio", k])
    rkw.setdefault("sinr_threshold", float(db_to_linear(-3.0)))
    radio_cfg = _build(ctx, lambda: RadioConfig(**rkw), ["radio"])

    def site_kw(src, path):
        kw = {}
        for k, v in src.items():
            if k == "position":
                continue
            kw[k] = _number(ctx, v, path + [k])
        if "tx_power_dbw" in kw:
            kw["tx_power"] = float(db_to_linear(kw.pop("tx_power_dbw")))
        return kw

    base = site_kw(sdef, ["site_defaults"])
    if d.get("sites") is None:
        sites = _build(ctx, lambda: default_sites(**base), ["site_defaults"])
    else:
        if not isinstance(d["sites"], list) or not d["sites"]:
            ctx.fail(["sites"], "expected a non-empty list")
        sites = []
        for i, s in enumerate(d["sites"]):
            p = ["sites", i]
            s = _mapping(ctx, s, p, SITE_KEYS)
            pos = s.get("position")
            if not isinstance(pos, list) or len(pos) != 2:
                ctx.fail(p + ["position"], "expected [x, y]")
            kw = {**base, **site_kw(s, p)}
            if "tx_power" not in kw:
                kw["tx_power"] = float(db_to_linear(1.0))
            xy = (_number(ctx, pos[0], p + ["position"]), _number(ctx, pos[1], p + ["position"]))
            sites.append(_build(ctx, lambda: GbsSite(xy, **kw), p))

    obstacles = []
    for i, o in enumerate(d.get("obstacles") or []):
        p = ["obstacles", i]
        o = _mapping(ctx, o, p, ("center", "radius"))
        c = o.get("center")
        if not isinstance(c, list) or len(c) != 2:
            ctx.fail(p + ["center"], "expected [x, y]")
        obstacles.append(_build(ctx, lambda: Obstacle((_number(ctx, c[0], p), _number(ctx, c[1], p)),
                                                      _number(ctx, o.get("radius"), p + ["radius"])), p))

    rwk = {}
    for k, v in reward.items():
        rwk[k] = bool(v) if k == "margin_in_db" else _number(ctx, v, ["reward", k])
    reward_cfg = _build(ctx, lambda: RewardConfig(**rwk), ["reward"])

    wkw = {}
    for k, v in world.items():
        if k == "bounds":
            if not isinstance(v, list) or len(v) != 4:
                ctx.fail(["world", k], "expected [xmin, xmax, ymin, ymax]")
            wkw[k] = tuple(_number(ctx, b, ["world", k]) for b in v)
        elif k in ("n_t", "max_observed_agents", "max_observed_sites", "n_speeds", "n_headings"):
            x = _number(ctx, v, ["world", k])
            if x != int(x):
                ctx.fail(["world", k], "expected an integer")
            wkw[k] = int(x)
        else:
            wkw[k] = _number(ctx, v, ["world", k])
    if "sites" not in d and "bounds" not in wkw:
        wkw["bounds"] = DEFAULT_BOUNDS
    wkw.setdefault("max_observed_sites", min(8, len(sites)))
    return _build(ctx, lambda: Scenario(sites=tuple(sites), radio=radio_cfg, reward=reward_cfg,
                                        obstacles=tuple(obstacles), **wkw), ["world"])


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        text = fh.read()
    return parse_scenario(text, str(path))


def bundled_scenarios() -> list[str]:
    """Names of the scenario files shipped with the package."""
    root = resources.files("uavnav") / "scenarios"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".yaml"))


def resolve_scenario(spec) -> Scenario:
    """Load ``spec`` as a file path, or as the name of a bundled scenario."""
    if spec is None:
        return default_scenario()
    if os.path.exists(spec):
        return load_scenario(spec)
    if spec in bundled_scenarios():
        res = resources.files("uavnav") / "scenarios" / f"{spec}.yaml"
        return parse_scenario(res.read_text(), f"{spec}.yaml")
    raise ScenarioError(f"{spec}: no such scenario file or bundled scenario "
                        f"(bundled: {', '.join(bundled_scenarios())})")


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    return scenario_from_dict(data or {}, _Ctx(node, source))


def scenario_to_dict(sc: Scenario) -> dict:
    """Fully resolved, loadable form (every default expanded)."""
    world = {k: getattr(sc, k) for k in WORLD_KEYS}
    world["bounds"] = list(sc.bounds)
    r = sc.radio
    radio = {"uav_height": r.uav_height, "path_loss_exponent": r.path_loss_exponent,
             "noise_power": r.noise_power, "sinr_threshold_db": r.threshold_db,
             "measurements_per_check": r.measurements_per_check, "fading": r.fading,
             "meters_per_unit": r.meters_per_unit}
    sites = [{"position": list(s.position), "height": s.height,
              "tx_power_dbw": float(linear_to_db(s.tx_power)), "tilt": s.tilt,
              "beamwidth": s.beamwidth, "max_attenuation": s.max_attenuation} for s in sc.sites]
    return {"world": world, "radio": radio, "sites": sites,
            "obstacles": [{"center": list(o.center), "radius": o.radius} for o in sc.obstacles],
            "reward": dataclasses.asdict(sc.reward)}


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)


def save_scenario(path, sc: Scenario):
    with open(path, "w") as fh:
        fh.write(dump_scenario(sc))


# --------------------------------------------------------------------------- exports

def write_trajectories(path, records):
    """One row per agent per tick: agent, step, x, y, vx, vy, sinr_db, connected."""
    with open(path, "w") as fh:
        fh.write("agent,step,x,y,vx,vy,sinr_db,connected\n")
        for rec in records:
            for t, (p, v) in enumerate(zip(rec.positions, rec.velocities)):
                s = rec.sinr[t] if t < len(rec.sinr) else math.nan
                c = int(rec.connected[t]) if t < len(rec.connected) else ""
                sdb = float(linear_to_db(s)) if s > 0 else math.nan
                row = (float(p[0]), float(p[1]), float(v[0]), float(v[1]), sdb)
                fh.write(f"{rec.agent},{t}," + ",".join(map(repr, row)) + f",{c}\n")


def write_coverage_map(path, xs, ys, sinr_db, connected):
    """Raster rows: x, y, sinr_db, connected."""
    with open(path, "w") as fh:
        fh.write("x,y,sinr_db,connected\n")
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                fh.write(f"{float(x)!r},{float(y)!r},{float(sinr_db[j, i])!r},{int(connected[j, i])}\n")
