"""Scenario definition, strict parsing, and experiment orchestration.

The config format is line oriented: ``[section]`` headers, ``key = value``
pairs, ``#`` comments, UTF-8. Points are ``x,y``, rectangles ``x0,y0,x1,y1``,
lists comma separated. Parsing is strict: unknown sections or keys are
errors, reported with their line number, so golden fixtures cannot drift
silently.

``run_experiment`` builds a world from the config, runs the kernel, and
writes the experiment's report files (CSV tables, PGM maps, PNG figures,
and a ``summary.txt`` with run metadata).
"""

from __future__ import annotations

import enum
import logging
import math
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__, figures, reports
from .formation import (
    ObservationArea,
    PathFollower,
    Priority,
    SeparationController,
    SeparationPolicy,
    WaypointPath,
    assign_areas,
)
from .link import DisruptionWindow, LinkManager, LinkParams, MessageBus
from .qlearn import BroadcastLearner, QTable, RewardWeights
from .radio import (
    AccuracyRow,
    ChannelParams,
    RadioSampler,
    RssiInterval,
    accumulate_interval_stats,
    noiseless_rssi,
)
from .slam import LaserSpec, OccupancyGrid, SlamUnit, write_pgm
from .world import Environment, Rect, UavState, World, derive_seed

logger = logging.getLogger(__name__)


class ExperimentKind(enum.Enum):
    RECONNECT = "reconnect"
    RSSI_ACCURACY = "rssi_accuracy"
    SLAM_MOVING = "slam_moving"
    SLAM_STATIC = "slam_static"
    FREE = "free"


class ScenarioError(ValueError):
    """Parse or validation failure; one message per offending line."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass
class UavSpec:
    id: int
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    v_max: float = 0.2
    a_max: float = 0.1
    energy: float = 1000.0
    broadcast_rate: float = 1.0


@dataclass
class PathSpec:
    id: int
    uav: int
    waypoints: list[tuple[float, float]] = field(default_factory=list)
    closed: bool = False
    cruise_speed: float = 0.2
    capture_radius: float = 0.05


@dataclass
class AreaSpec:
    id: int
    rect: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    priority: str = "major"


@dataclass
class DisruptionSpec:
    id: int
    pair: tuple[int, int] = (1, 2)
    start: float = 0.0
    end: float = 0.0


@dataclass
class LearnSpec:
    rates: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0])
    energy_buckets: int = 4
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.1
    period: int = 20
    w_delivered: float = 1.0
    w_lost: float = 1.0
    w_energy: float = 0.1
    energy_per_msg: float = 0.1


@dataclass
class SlamSettings:
    grid_side: int = 400
    grid_resolution: float = 0.05
    grid_origin: tuple[float, float] = (0.0, 0.0)
    hole_width: float = 0.6
    quality: int = 50
    search_iterations: int = 400
    search_sigma: tuple[float, float, float] = (0.05, 0.05, 0.015)
    odom_sigma_xy: float = 0.004
    odom_sigma_theta: float = 0.002


@dataclass
class ExperimentSpec:
    kind: ExperimentKind = ExperimentKind.FREE
    runs: int = 5
    distances: list[float] = field(default_factory=list)
    intervals: list[tuple[float, float, float]] = field(default_factory=list)
    samples_per_row: int = 512
    settle_ticks: int = 500
    slam: SlamSettings = field(default_factory=SlamSettings)


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 42
    dt: float = 0.05
    duration: float = 10.0
    bounds: tuple[float, float, float, float] = (-50.0, -50.0, 50.0, 50.0)
    obstacles: list[tuple[float, float, float, float]] = field(default_factory=list)
    uavs: list[UavSpec] = field(default_factory=list)
    channel: ChannelParams | None = None
    link: LinkParams | None = None
    separation: SeparationPolicy | None = None
    use_true_distance: bool = False
    learn: LearnSpec | None = None
    laser: LaserSpec | None = None
    paths: list[PathSpec] = field(default_factory=list)
    areas: list[AreaSpec] = field(default_factory=list)
    disruptions: list[DisruptionSpec] = field(default_factory=list)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)

    def ticks(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))

    def remainder(self) -> float:
        return self.duration - self.ticks() * self.dt

    def uav_ids(self) -> list[int]:
        return [u.id for u in self.uavs]


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_SCALAR_SECTIONS = {
    "sim": {"name": "str", "seed": "int", "dt": "float", "duration": "float"},
    "env": {"bounds": "rect"},
    "channel": {"rssi0": "float", "d0": "float", "path_loss_exponent": "float",
                "noise_sigma": "float"},
    "link": {"comm_range": "float", "heartbeat_period": "int", "miss_threshold": "int",
             "beacon_period": "int", "handshake_timeout": "int", "latency": "int"},
    "separation": {"d_min": "float", "d_max": "float", "hysteresis": "float",
                   "speed": "float", "use_true_distance": "bool"},
    "learn": {"rates": "floats", "energy_buckets": "int", "alpha": "float",
              "gamma": "float", "epsilon": "float", "period": "int",
              "w_delivered": "float", "w_lost": "float", "w_energy": "float",
              "energy_per_msg": "float"},
    "laser": {"max_range": "float", "fov_deg": "float", "beam_count": "int",
              "scan_rate_hz": "float"},
    "experiment": {"kind": "str", "runs": "int", "distances": "floats",
                   "samples_per_row": "int", "settle_ticks": "int",
                   "grid_side": "int", "grid_resolution": "float",
                   "grid_origin": "point", "hole_width": "float", "quality": "int",
                   "search_iterations": "int", "search_sigma": "floats",
                   "odom_sigma_xy": "float", "odom_sigma_theta": "float"},
}

_INDEXED_SECTIONS = {
    "uav": {"x": "float", "y": "float", "heading": "float", "v_max": "float",
            "a_max": "float", "energy": "float", "broadcast_rate": "float"},
    "path": {"uav": "int", "closed": "bool", "cruise_speed": "float",
             "capture_radius": "float"},
    "area": {"rect": "rect", "priority": "str"},
    "disruption": {"pair": "pair", "start": "float", "end": "float"},
}

# numbered keys: obstacleN in [env], waypointN in [path.N], intervalN in [experiment]
_NUMBERED_KEYS = {"env": ("obstacle", "rect"), "path": ("waypoint", "point"),
                  "experiment": ("interval", "floats")}


def _convert(kind: str, raw: str):
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    parts = [p.strip() for p in raw.split(",") if p.strip() != ""]
    if kind == "floats":
        return [float(p) for p in parts]
    if kind == "point":
        if len(parts) != 2:
            raise ValueError(f"expected x,y: {raw!r}")
        return (float(parts[0]), float(parts[1]))
    if kind == "rect":
        if len(parts) != 4:
            raise ValueError(f"expected x0,y0,x1,y1: {raw!r}")
        return tuple(float(p) for p in parts)
    if kind == "pair":
        if len(parts) != 2:
            raise ValueError(f"expected id,id: {raw!r}")
        return (int(parts[0]), int(parts[1]))
    raise AssertionError(kind)


def _numbered_index(prefix: str, key: str) -> int | None:
    if key.startswith(prefix) and key[len(prefix):].isdigit():
        return int(key[len(prefix):])
    return None


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a scenario document; raise ScenarioError with line numbers."""
    problems: list[str] = []
    # section -> {key: (value, line)}; indexed sections keyed (name, index)
    scalars: dict[str, dict] = {}
    indexed: dict[tuple[str, int], dict] = {}
    numbered: dict[tuple, dict[int, object]] = {}
    current: tuple | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if "." in name:
                base, _, idx = name.partition(".")
                if base not in _INDEXED_SECTIONS or not idx.isdigit():
                    problems.append(f"line {lineno}: unknown section [{name}]")
                    current = None
                    continue
                current = (base, int(idx))
                indexed.setdefault(current, {})
            else:
                if name not in _SCALAR_SECTIONS:
                    problems.append(f"line {lineno}: unknown section [{name}]")
                    current = None
                    continue
                current = (name,)
                scalars.setdefault(name, {})
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key = value, got {line!r}")
            continue
        if current is None:
            problems.append(f"line {lineno}: key outside any section")
            continue
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        base = current[0]
        schema = _SCALAR_SECTIONS.get(base) if len(current) == 1 else _INDEXED_SECTIONS.get(base)
        num = _NUMBERED_KEYS.get(base)
        idx = _numbered_index(num[0], key) if num else None
        try:
            if idx is not None:
                store = numbered.setdefault(current, {})
                if idx in store:
                    problems.append(f"line {lineno}: duplicate key {key!r}")
                store[idx] = _convert(num[1], raw_value)
            elif key in schema:
                store = scalars[base] if len(current) == 1 else indexed[current]
                if key in store:
                    problems.append(f"line {lineno}: duplicate key {key!r}")
                store[key] = _convert(schema[key], raw_value)
            else:
                problems.append(f"line {lineno}: unknown key {key!r} in [{'.'.join(map(str, current))}]")
        except ValueError as exc:
            problems.append(f"line {lineno}: bad value for {key!r}: {exc}")

    if problems:
        raise ScenarioError(problems)
    return _assemble(scalars, indexed, numbered)


def _assemble(scalars, indexed, numbered) -> ScenarioConfig:
    problems: list[str] = []
    cfg = ScenarioConfig()

    sim = scalars.get("sim")
    if sim is None:
        problems.append("missing required section [sim]")
        sim = {}
    cfg.name = sim.get("name", cfg.name)
    cfg.seed = sim.get("seed", cfg.seed)
    cfg.dt = sim.get("dt", cfg.dt)
    cfg.duration = sim.get("duration", cfg.duration)

    env = scalars.get("env")
    if env is None:
        problems.append("missing required section [env]")
    else:
        cfg.bounds = env.get("bounds", cfg.bounds)
    cfg.obstacles = [numbered.get(("env",), {})[i]
                     for i in sorted(numbered.get(("env",), {}))]

    for (base, idx), data in sorted(indexed.items()):
        if base == "uav":
            cfg.uavs.append(UavSpec(id=idx, **data))
        elif base == "path":
            pts = numbered.get((base, idx), {})
            if "uav" not in data:
                problems.append(f"[path.{idx}]: missing uav")
                continue
            cfg.paths.append(PathSpec(
                id=idx, uav=data["uav"],
                waypoints=[pts[i] for i in sorted(pts)],
                closed=data.get("closed", False),
                cruise_speed=data.get("cruise_speed", 0.2),
                capture_radius=data.get("capture_radius", 0.05)))
        elif base == "area":
            cfg.areas.append(AreaSpec(id=idx, rect=data.get("rect", (0, 0, 1, 1)),
                                      priority=data.get("priority", "major")))
        elif base == "disruption":
            if "pair" not in data:
                problems.append(f"[disruption.{idx}]: missing pair")
                continue
            cfg.disruptions.append(DisruptionSpec(
                id=idx, pair=data["pair"], start=data.get("start", 0.0),
                end=data.get("end", 0.0)))

    if "channel" in scalars:
        cfg.channel = ChannelParams(
            rssi0=scalars["channel"].get("rssi0", 10.0),
            d0=scalars["channel"].get("d0", 1.0),
            path_loss_exponent=scalars["channel"].get("path_loss_exponent", 2.5),
            noise_sigma=scalars["channel"].get("noise_sigma", 3.7))
    if "link" in scalars:
        cfg.link = LinkParams(**scalars["link"])
    if "separation" in scalars:
        sep = dict(scalars["separation"])
        cfg.use_true_distance = sep.pop("use_true_distance", False)
        cfg.separation = SeparationPolicy(**sep)
    if "learn" in scalars:
        cfg.learn = LearnSpec(**scalars["learn"])
    if "laser" in scalars:
        cfg.laser = LaserSpec(**scalars["laser"])

    exp = scalars.get("experiment")
    if exp is None:
        problems.append("missing required section [experiment]")
    else:
        exp = dict(exp)
        kind_raw = exp.pop("kind", "free")
        try:
            kind = ExperimentKind(kind_raw)
        except ValueError:
            problems.append(f"[experiment]: unknown kind {kind_raw!r}")
            kind = ExperimentKind.FREE
        slam_kw = {}
        for key in ("grid_side", "grid_resolution", "grid_origin", "hole_width",
                    "quality", "search_iterations", "odom_sigma_xy", "odom_sigma_theta"):
            if key in exp:
                slam_kw[key] = exp.pop(key)
        if "search_sigma" in exp:
            sig = exp.pop("search_sigma")
            if len(sig) != 3:
                problems.append("[experiment]: search_sigma needs 3 values")
            else:
                slam_kw["search_sigma"] = tuple(sig)
        intervals = []
        for i in sorted(numbered.get(("experiment",), {})):
            vals = numbered[("experiment",)][i]
            if len(vals) != 3:
                problems.append(f"[experiment]: interval{i} needs distance,low,high")
            else:
                intervals.append((vals[0], vals[1], vals[2]))
        cfg.experiment = ExperimentSpec(
            kind=kind, runs=exp.pop("runs", 5), distances=exp.pop("distances", []),
            intervals=intervals, samples_per_row=exp.pop("samples_per_row", 512),
            settle_ticks=exp.pop("settle_ticks", 500),
            slam=SlamSettings(**slam_kw))

    problems.extend(validate_config(cfg))
    if problems:
        raise ScenarioError(problems)
    return cfg


def validate_config(cfg: ScenarioConfig) -> list[str]:
    """Invariant checks shared by parse and the validate subcommand."""
    problems = []
    if cfg.dt <= 0:
        problems.append("[sim]: dt must be positive")
    if cfg.duration <= 0:
        problems.append("[sim]: duration must be positive")
    x0, y0, x1, y1 = cfg.bounds
    if x1 <= x0 or y1 <= y0:
        problems.append("[env]: degenerate bounds")
    for i, obs in enumerate(cfg.obstacles, start=1):
        if not (x0 <= obs[0] <= obs[2] <= x1 and y0 <= obs[1] <= obs[3] <= y1):
            problems.append(f"[env]: obstacle{i} {obs} outside bounds or degenerate")
    ids = cfg.uav_ids()
    if len(ids) != len(set(ids)):
        problems.append("duplicate uav id")
    for u in cfg.uavs:
        if not (x0 <= u.x <= x1 and y0 <= u.y <= y1):
            problems.append(f"[uav.{u.id}]: starts outside bounds")
    for p in cfg.paths:
        if p.uav not in ids:
            problems.append(f"[path.{p.id}]: unknown uav {p.uav}")
        if not p.waypoints:
            problems.append(f"[path.{p.id}]: needs at least one waypoint")
    for d in cfg.disruptions:
        if d.pair[0] not in ids or d.pair[1] not in ids:
            problems.append(f"[disruption.{d.id}]: unknown pair {d.pair}")
        if not (0 <= d.start < d.end <= cfg.duration):
            problems.append(f"[disruption.{d.id}]: window [{d.start}, {d.end}] "
                            f"outside 0..{cfg.duration}")
    for a in cfg.areas:
        r = a.rect
        if not (x0 <= r[0] <= r[2] <= x1 and y0 <= r[1] <= r[3] <= y1):
            problems.append(f"[area.{a.id}]: rect outside bounds")
        if a.priority not in ("major", "minor"):
            problems.append(f"[area.{a.id}]: priority must be major or minor")

    kind = cfg.experiment.kind
    if kind is ExperimentKind.RECONNECT:
        if cfg.link is None:
            problems.append("[experiment]: reconnect requires [link]")
        if len(cfg.uavs) < 2:
            problems.append("[experiment]: reconnect requires at least 2 uavs")
    elif kind is ExperimentKind.RSSI_ACCURACY:
        if cfg.channel is None:
            problems.append("[experiment]: rssi_accuracy requires [channel]")
        if len(cfg.uavs) != 2:
            problems.append("[experiment]: rssi_accuracy requires exactly 2 uavs")
        for dist, low, high in cfg.experiment.intervals:
            if low > high:
                problems.append(f"[experiment]: interval for {dist} m has low > high")
            if cfg.experiment.distances and dist not in cfg.experiment.distances:
                problems.append(f"[experiment]: interval distance {dist} not in distances")
    elif kind in (ExperimentKind.SLAM_MOVING, ExperimentKind.SLAM_STATIC):
        if cfg.laser is None:
            problems.append(f"[experiment]: {kind.value} requires [laser]")
        if len(cfg.uavs) < 1:
            problems.append(f"[experiment]: {kind.value} requires a uav")
        if kind is ExperimentKind.SLAM_MOVING and not cfg.paths:
            problems.append("[experiment]: slam_moving requires a [path.N]")
    return problems


def _num(v) -> str:
    """Shortest exact decimal for a float (repr round-trips in Python 3)."""
    return repr(float(v))


def serialize_scenario(cfg: ScenarioConfig) -> str:
    """Canonical text form; parse(serialize(parse(text))) is stable."""
    out = []

    def section(name, pairs):
        out.append(f"[{name}]")
        for k, v in pairs:
            out.append(f"{k} = {v}")
        out.append("")

    def nums(values):
        return ",".join(_num(v) for v in values)

    section("sim", [("name", cfg.name), ("seed", cfg.seed), ("dt", _num(cfg.dt)),
                    ("duration", _num(cfg.duration))])
    env_pairs = [("bounds", nums(cfg.bounds))]
    env_pairs += [(f"obstacle{i}", nums(o)) for i, o in enumerate(cfg.obstacles, 1)]
    section("env", env_pairs)
    for u in sorted(cfg.uavs, key=lambda u: u.id):
        section(f"uav.{u.id}", [
            ("x", _num(u.x)), ("y", _num(u.y)), ("heading", _num(u.heading)),
            ("v_max", _num(u.v_max)), ("a_max", _num(u.a_max)),
            ("energy", _num(u.energy)), ("broadcast_rate", _num(u.broadcast_rate))])
    if cfg.channel:
        c = cfg.channel
        section("channel", [("rssi0", _num(c.rssi0)), ("d0", _num(c.d0)),
                            ("path_loss_exponent", _num(c.path_loss_exponent)),
                            ("noise_sigma", _num(c.noise_sigma))])
    if cfg.link:
        ln = cfg.link
        section("link", [("comm_range", _num(ln.comm_range)),
                         ("heartbeat_period", ln.heartbeat_period),
                         ("miss_threshold", ln.miss_threshold),
                         ("beacon_period", ln.beacon_period),
                         ("handshake_timeout", ln.handshake_timeout),
                         ("latency", ln.latency)])
    if cfg.separation:
        s = cfg.separation
        section("separation", [("d_min", _num(s.d_min)), ("d_max", _num(s.d_max)),
                               ("hysteresis", _num(s.hysteresis)),
                               ("speed", _num(s.speed)),
                               ("use_true_distance", str(cfg.use_true_distance).lower())])
    if cfg.learn:
        le = cfg.learn
        section("learn", [("rates", nums(le.rates)), ("energy_buckets", le.energy_buckets),
                          ("alpha", _num(le.alpha)), ("gamma", _num(le.gamma)),
                          ("epsilon", _num(le.epsilon)), ("period", le.period),
                          ("w_delivered", _num(le.w_delivered)),
                          ("w_lost", _num(le.w_lost)), ("w_energy", _num(le.w_energy)),
                          ("energy_per_msg", _num(le.energy_per_msg))])
    if cfg.laser:
        la = cfg.laser
        section("laser", [("max_range", _num(la.max_range)), ("fov_deg", _num(la.fov_deg)),
                          ("beam_count", la.beam_count), ("scan_rate_hz", _num(la.scan_rate_hz))])
    for p in sorted(cfg.paths, key=lambda p: p.id):
        pairs = [("uav", p.uav), ("closed", str(p.closed).lower()),
                 ("cruise_speed", _num(p.cruise_speed)),
                 ("capture_radius", _num(p.capture_radius))]
        pairs += [(f"waypoint{i}", nums(w)) for i, w in enumerate(p.waypoints, 1)]
        section(f"path.{p.id}", pairs)
    for a in sorted(cfg.areas, key=lambda a: a.id):
        section(f"area.{a.id}", [("rect", nums(a.rect)), ("priority", a.priority)])
    for d in sorted(cfg.disruptions, key=lambda d: d.id):
        section(f"disruption.{d.id}", [("pair", f"{d.pair[0]},{d.pair[1]}"),
                                       ("start", _num(d.start)), ("end", _num(d.end))])
    e = cfg.experiment
    pairs = [("kind", e.kind.value), ("runs", e.runs)]
    if e.distances:
        pairs.append(("distances", nums(e.distances)))
    pairs += [(f"interval{i}", nums(iv)) for i, iv in enumerate(e.intervals, 1)]
    pairs += [("samples_per_row", e.samples_per_row), ("settle_ticks", e.settle_ticks)]
    if e.kind in (ExperimentKind.SLAM_MOVING, ExperimentKind.SLAM_STATIC):
        s = e.slam
        pairs += [("grid_side", s.grid_side), ("grid_resolution", _num(s.grid_resolution)),
                  ("grid_origin", nums(s.grid_origin)), ("hole_width", _num(s.hole_width)),
                  ("quality", s.quality), ("search_iterations", s.search_iterations),
                  ("search_sigma", nums(s.search_sigma)),
                  ("odom_sigma_xy", _num(s.odom_sigma_xy)),
                  ("odom_sigma_theta", _num(s.odom_sigma_theta))]
    section("experiment", pairs)
    return "\n".join(out)


# ---------------------------------------------------------------------------
# world assembly and experiment runners
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    kind: ExperimentKind
    name: str
    status: str = "ok"
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.status != "ok"


def build_world(cfg: ScenarioConfig, seed: int | None = None,
                collect_rssi: bool = False, trace: bool = False) -> World:
    env = Environment(Rect(*cfg.bounds), [Rect(*o) for o in cfg.obstacles])
    w = World(env, dt=cfg.dt, seed=cfg.seed if seed is None else seed,
              trace_enabled=trace)
    for u in sorted(cfg.uavs, key=lambda u: u.id):
        w.add_uav(UavState(id=u.id, x=u.x, y=u.y, heading=u.heading,
                           v_max=u.v_max, a_max=u.a_max,
                           residual_energy=u.energy,
                           broadcast_rate=u.broadcast_rate))

    chain = chain_pairs(cfg)
    if cfg.link is not None:
        w.bus = MessageBus(cfg.link)
        for d in cfg.disruptions:
            w.bus.add_disruption(DisruptionWindow(
                d.pair, int(round(d.start / cfg.dt)), int(round(d.end / cfg.dt))))
        if chain:
            w.links = LinkManager(w.bus, chain, cfg.link)

    if cfg.channel is not None and len(cfg.uavs) >= 2:
        pairs = [(i, j) for i in w.uavs for j in w.uavs if i != j]
        w.radio = RadioSampler(cfg.channel, pairs, seed=w.seed, collect=collect_rssi)

    for p in cfg.paths:
        w.followers[p.uav] = PathFollower(
            WaypointPath(tuple(p.waypoints), closed=p.closed),
            cruise_speed=p.cruise_speed, capture_radius=p.capture_radius)

    if cfg.separation is not None:
        w.separation = SeparationController(cfg.separation, chain,
                                            use_true_distance=cfg.use_true_distance)

    if cfg.learn is not None and len(cfg.uavs) >= 2:
        le = cfg.learn
        weights = RewardWeights(le.w_delivered, le.w_lost, le.w_energy)
        for u in cfg.uavs:
            partner = nearest_partner(cfg, u.id)
            q = QTable(len(le.rates), le.energy_buckets, alpha=le.alpha,
                       gamma=le.gamma, epsilon=le.epsilon)
            w.learners[u.id] = BroadcastLearner(
                u.id, partner, le.rates, q, seed=w.seed, period=le.period,
                energy_per_msg=le.energy_per_msg, initial_energy=u.energy,
                weights=weights)

    if cfg.laser is not None and cfg.experiment.kind in (
            ExperimentKind.SLAM_MOVING, ExperimentKind.SLAM_STATIC):
        s = cfg.experiment.slam
        for u in cfg.uavs:
            grid = OccupancyGrid(side=s.grid_side, resolution=s.grid_resolution,
                                 origin=s.grid_origin)
            w.slam_units[u.id] = SlamUnit(
                u.id, cfg.laser, grid, seed=w.seed, dt=cfg.dt,
                iterations=s.search_iterations, sigma=s.search_sigma,
                quality=s.quality, hole_width=s.hole_width,
                odom_sigma_xy=s.odom_sigma_xy, odom_sigma_theta=s.odom_sigma_theta)
    return w


def chain_pairs(cfg: ScenarioConfig) -> list[tuple[int, int]]:
    ids = sorted(cfg.uav_ids())
    return [(a, b) for a, b in zip(ids, ids[1:])]


def nearest_partner(cfg: ScenarioConfig, uid: int) -> int:
    me = next(u for u in cfg.uavs if u.id == uid)
    others = [u for u in cfg.uavs if u.id != uid]
    return min(others, key=lambda o: (math.hypot(o.x - me.x, o.y - me.y), o.id)).id


def base_summary(cfg: ScenarioConfig, report: ExperimentReport) -> dict:
    return {
        "scenario": cfg.name,
        "kind": cfg.experiment.kind.value,
        "version": __version__,
        "seed": cfg.seed,
        "dt": f"{cfg.dt:g}",
        "duration_s": f"{cfg.duration:g}",
        "tick_count": cfg.ticks(),
        "status": report.status,
    }


def run_experiment(cfg: ScenarioConfig, out_dir=None) -> ExperimentReport:
    """Run one scenario end to end and (optionally) write its report files."""
    if cfg.remainder() > 1e-9:
        logger.warning("duration %.6g not divisible by dt %.6g: remainder %.6g s discarded",
                       cfg.duration, cfg.dt, cfg.remainder())
    kind = cfg.experiment.kind
    runner = {
        ExperimentKind.RECONNECT: _run_reconnect,
        ExperimentKind.RSSI_ACCURACY: _run_rssi_accuracy,
        ExperimentKind.SLAM_MOVING: _run_slam,
        ExperimentKind.SLAM_STATIC: _run_slam,
        ExperimentKind.FREE: _run_free,
    }[kind]
    out = reports.ensure_dir(out_dir) if out_dir is not None else None
    report = runner(cfg, out)
    if out is not None:
        path = reports.write_summary(out / "summary.txt",
                                     {**base_summary(cfg, report), **report.metrics})
        report.files.append(path)
    logger.info("experiment %s finished: %s", cfg.name, report.status)
    return report


def _run_free(cfg: ScenarioConfig, out) -> ExperimentReport:
    report = ExperimentReport(ExperimentKind.FREE, cfg.name)
    w = build_world(cfg)
    w.run_ticks(cfg.ticks())
    report.metrics["uav_count"] = len(w.uavs)
    if out is not None and w.learners:
        rows = [r for uid in sorted(w.learners) for r in w.learners[uid].trace]
        report.files.append(reports.write_learning_trace_csv(out / "learning_trace.csv", rows))
    if out is not None and cfg.areas:
        areas = [ObservationArea(a.id, *a.rect,
                                 Priority.MAJOR if a.priority == "major" else Priority.MINOR)
                 for a in cfg.areas]
        assigned = assign_areas(areas, list(w.uavs.values()))
        report.files.append(reports.write_assignment_csv(out / "assignment.csv", assigned))
    return report


def _run_reconnect(cfg: ScenarioConfig, out) -> ExperimentReport:
    from .link import measure_reestablishment

    report = ExperimentReport(ExperimentKind.RECONNECT, cfg.name)
    ids = sorted(cfg.uav_ids())
    spacing = 0.0
    if len(ids) >= 2:
        a = next(u for u in cfg.uavs if u.id == ids[0])
        b = next(u for u in cfg.uavs if u.id == ids[1])
        spacing = math.hypot(a.x - b.x, a.y - b.y)

    runs = []
    unrecovered = 0
    for run_index in range(cfg.experiment.runs):
        w = build_world(cfg, seed=derive_seed(cfg.seed, f"run/{run_index}"))
        w.run_ticks(cfg.ticks())
        for row in measure_reestablishment(w.links.records.values(), cfg.dt):
            runs.append({"distance_m": spacing, "pair": row["pair"],
                         "run_index": run_index, "elapsed_s": row["elapsed_s"],
                         "recovered": row["recovered"]})
            if not row["recovered"]:
                unrecovered += 1

    means = []
    for pair in sorted({r["pair"] for r in runs}):
        vals = [r["elapsed_s"] for r in runs if r["pair"] == pair and r["recovered"]]
        if vals:
            means.append({"distance_m": spacing, "pair": pair,
                          "mean_elapsed_s": statistics.mean(vals)})
    report.tables["runs"] = runs
    report.tables["means"] = means
    report.metrics["disruptions"] = len(cfg.disruptions) * cfg.experiment.runs
    report.metrics["unrecovered"] = unrecovered
    if unrecovered:
        report.status = "failed: unrecovered link"
    if out is not None:
        report.files.append(reports.write_reconnect_runs_csv(out / "reconnect_runs.csv", runs))
        report.files.append(reports.write_reconnect_mean_csv(out / "reconnect_mean.csv", means))
        report.files.append(reports.write_reconnect_table(out / "reconnect_table.csv", means))
        if means:
            figures.fig_reconnect(means, out / "reconnect.png")
            report.files.append(out / "reconnect.png")
    return report


def _rssi_interval_rows(cfg: ScenarioConfig, device: int, partner: int):
    """Static sampling mode: one kernel run per configured distance, the
    sample count fixed by samples_per_row. Each distance runs under its own
    sub-seed so the rows are statistically independent, as a fresh log per
    spacing would be."""
    rows = []
    for distance in cfg.experiment.distances:
        placed = replace(cfg)
        placed.uavs = sorted((replace(u) for u in cfg.uavs), key=lambda u: u.id)
        placed.uavs[0].x, placed.uavs[0].y = 0.0, 0.0
        placed.uavs[1].x, placed.uavs[1].y = distance, 0.0
        w = build_world(placed, seed=derive_seed(cfg.seed, f"distance/{distance:g}"),
                        collect_rssi=True)
        w.run_ticks(cfg.experiment.samples_per_row)
        samples = w.radio.samples[(device, partner)]
        for d, low, high in cfg.experiment.intervals:
            if d == distance:
                rows.append(accumulate_interval_stats(samples, RssiInterval(low, high)))
    return rows


def _run_rssi_accuracy(cfg: ScenarioConfig, out) -> ExperimentReport:
    report = ExperimentReport(ExperimentKind.RSSI_ACCURACY, cfg.name)
    ids = sorted(cfg.uav_ids())
    dev1, dev2 = ids[0], ids[1]

    rows_by_device: dict[int, list] = {}
    events = []
    distance_series = []
    if cfg.experiment.distances:
        for device, partner in ((dev1, dev2), (dev2, dev1)):
            rows_by_device[device] = _rssi_interval_rows(cfg, device, partner)
    else:
        # closed-loop separation mode: fly the configured scenario and rate
        # the post-settle estimates against the policy-derived interval
        w = build_world(cfg, collect_rssi=True, trace=False)
        series = []

        def track(world, now):
            true_d = world.distance(dev1, dev2)
            est = world.radio.last_estimate.get((dev1, dev2)) if world.radio else None
            series.append((now, true_d, est))

        w.metrics_hooks.append(track)
        w.run_ticks(cfg.ticks())
        distance_series = series
        if w.separation is not None:
            events = w.separation.events
        if cfg.separation is not None and cfg.channel is not None:
            # distance in [d_min, d_max] maps onto this dB window exactly
            interval = RssiInterval(
                noiseless_rssi(cfg.channel, cfg.separation.d_max),
                noiseless_rssi(cfg.channel, cfg.separation.d_min))
            settle = cfg.experiment.settle_ticks
            for device, partner in ((dev1, dev2), (dev2, dev1)):
                samples = [s for s in w.radio.samples[(device, partner)]
                           if s.tick >= settle]
                row = accumulate_interval_stats([s.rssi for s in samples], interval)
                dist = (statistics.mean(s.true_distance for s in samples)
                        if samples else 0.0)
                rows_by_device[device] = [AccuracyRow(
                    distance=dist, interval=interval,
                    successes=row.successes, failures=row.failures)]
            dists = [d for t, d, _ in series if t >= settle]
            report.metrics["settled_distance_m"] = reports.fmt(statistics.mean(dists)) if dists else ""
            report.metrics["dead_band_messages_after_settle"] = sum(
                1 for e in events if e.tick >= settle)

    accuracies = [row.accuracy for rows in rows_by_device.values()
                  for row in rows if row.accuracy is not None]
    best = max(accuracies, default=None)
    report.tables["rows_by_device"] = rows_by_device
    report.metrics["best_accuracy_pct"] = (
        f"{100 * best:.2f}".replace(".", ",") + "%" if best is not None else "")
    meets = best is not None and best >= 0.80
    report.metrics["meets_80pct_requirement"] = "pass" if meets else "fail"
    if out is not None:
        report.files.append(reports.write_accuracy_csv(out / "accuracy.csv", rows_by_device))
        if rows_by_device:
            figures.fig_rssi_accuracy(rows_by_device, out / "accuracy.png")
            report.files.append(out / "accuracy.png")
        if events or cfg.separation is not None:
            report.files.append(reports.write_separation_events_csv(
                out / "separation_events.csv", events))
        if distance_series and cfg.separation is not None:
            figures.fig_separation(distance_series, cfg.separation.d_min,
                                   cfg.separation.d_max, out / "separation.png")
            report.files.append(out / "separation.png")
    return report


def _run_slam(cfg: ScenarioConfig, out) -> ExperimentReport:
    report = ExperimentReport(cfg.experiment.kind, cfg.name)
    w = build_world(cfg, trace=True)
    w.run_ticks(cfg.ticks())
    uid = sorted(w.slam_units)[0]
    unit = w.slam_units[uid]
    trace = unit.trace
    report.tables["trace"] = trace
    report.metrics["scan_count"] = len(trace)

    final = trace[-1] if trace else None
    if final is not None:
        err = math.hypot(final.x - final.true_x, final.y - final.true_y)
        report.metrics["final_pose_error_m"] = reports.fmt(err)
        report.metrics["final_pose_error_cells"] = reports.fmt(
            err / unit.grid.resolution, 2)

    follower = w.followers.get(uid)
    if follower is not None and follower.lap_marks:
        # loop closure: estimated-vs-true divergence at the lap completion
        lap_tick = (follower.lap_marks[0] - 1)
        lap_rows = [r for r in trace if r.tick <= lap_tick]
        if lap_rows:
            row = lap_rows[-1]
            err = math.hypot(row.x - row.true_x, row.y - row.true_y)
            report.metrics["laps_completed"] = follower.laps_completed
            report.metrics["loop_closure_error_m"] = reports.fmt(err)
            report.metrics["loop_closure_error_cells"] = reports.fmt(
                err / unit.grid.resolution, 2)

    # link phase must stay silent in a pure mapping scenario
    report.metrics["link_transitions"] = (
        len(w.links.transitions) if w.links is not None else 0)

    if out is not None:
        report.files.append(reports.write_pose_trace_csv(out / "pose_trace.csv", trace))
        report.files.append(reports.write_true_pose_csv(out / "true_pose_trace.csv", trace))
        write_pgm(unit.grid, out / "map.pgm")
        report.files.append(out / "map.pgm")
        figures.fig_slam_map(unit.grid, trace, out / "map.png", env=w.env)
        report.files.append(out / "map.png")
    report.tables["grid"] = unit.grid
    report.tables["world"] = w
    return report


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

SWEEPABLE = ("distance", "noise_sigma", "interval")


def apply_sweep_value(cfg: ScenarioConfig, parameter: str, value) -> ScenarioConfig:
    out = replace(cfg)
    out.uavs = [replace(u) for u in cfg.uavs]
    out.experiment = replace(cfg.experiment)
    if parameter == "distance":
        spacing = float(value)
        for k, u in enumerate(sorted(out.uavs, key=lambda u: u.id)):
            u.x, u.y = k * spacing, 0.0
        if out.experiment.distances:
            out.experiment.distances = [spacing]
            out.experiment.intervals = [
                (spacing, lo, hi) for _, lo, hi in cfg.experiment.intervals]
    elif parameter == "noise_sigma":
        if out.channel is None:
            raise ScenarioError(["sweep noise_sigma requires [channel]"])
        out.channel = ChannelParams(out.channel.rssi0, out.channel.d0,
                                    out.channel.path_loss_exponent, float(value))
    elif parameter == "interval":
        low, _, high = str(value).partition(":")
        lo, hi = float(low), float(high)
        out.experiment.intervals = [(d, lo, hi) for d in (out.experiment.distances or [0.0])]
    else:
        raise ScenarioError([f"unknown sweep parameter {parameter!r}; "
                             f"expected one of {SWEEPABLE}"])
    return out


def sweep_value_config(cfg: ScenarioConfig, parameter: str, value,
                       index: int) -> ScenarioConfig:
    """The exact config a sweep runs for one value: shared base seed, a
    per-value stream label baked into the derived sub-seed."""
    sub = apply_sweep_value(cfg, parameter, value)
    sub.name = f"{cfg.name}__{parameter}_{value}"
    sub.seed = derive_seed(cfg.seed, f"sweep/{index}")
    return sub


def sweep(cfg: ScenarioConfig, parameter: str, values, out_dir=None) -> list[ExperimentReport]:
    """One report per value, merged deterministically by value index."""
    out = reports.ensure_dir(out_dir) if out_dir is not None else None
    results = []
    for k, value in enumerate(values):
        sub = sweep_value_config(cfg, parameter, value, k)
        sub_dir = out / f"{parameter}_{value}" if out is not None else None
        results.append(run_experiment(sub, sub_dir))
    if out is not None and cfg.experiment.kind is ExperimentKind.RECONNECT:
        merged = [m for r in results for m in r.tables.get("means", [])]
        reports.write_reconnect_table(out / "reconnect_table.csv", merged)
    return results
