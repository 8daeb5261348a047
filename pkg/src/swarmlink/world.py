"""Discrete-time simulation kernel: clock, seeded randomness, UAV kinematics,
rectangular obstacle geometry, and the fixed per-tick phase loop.

Time is always derived as ``tick * dt`` so long runs accumulate no float
drift. Every source of randomness is an explicit, labelled stream derived
from the run seed, which makes whole runs bit-reproducible.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

# Fixed per-tick phase order. Kinematics applies the commands computed on the
# previous tick; metrics always observes the finished tick.
PHASES = ("kinematics", "radio", "link", "formation", "learning", "metrics")


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    theta = math.fmod(theta, 2.0 * math.pi)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    elif theta > math.pi:
        theta -= 2.0 * math.pi
    return theta


def derive_seed(seed: int, label: str) -> int:
    """Stable 63-bit sub-seed for an independent run or sweep value."""
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class RngStream:
    """Independent random stream identified by (seed, label).

    Identical (seed, label) pairs always produce identical sequences; the
    label is hashed with sha256 so stream independence does not depend on
    Python's per-process string hashing.
    """

    def __init__(self, seed: int, label: str):
        self.seed = int(seed)
        self.label = label
        entropy = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")
        self._gen = np.random.default_rng(np.random.SeedSequence([self.seed, entropy]))

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)


@dataclass
class SimClock:
    """Tick counter plus the tick length in seconds."""

    dt: float
    tick: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def time(self) -> float:
        return self.tick * self.dt


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in meters."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))


@dataclass
class Environment:
    """World bounds plus static rectangular obstacles."""

    bounds: Rect
    obstacles: list[Rect] = field(default_factory=list)

    def __post_init__(self):
        for obs in self.obstacles:
            if not (
                self.bounds.x0 <= obs.x0
                and obs.x1 <= self.bounds.x1
                and self.bounds.y0 <= obs.y0
                and obs.y1 <= self.bounds.y1
            ):
                raise ValueError(f"obstacle {obs} outside bounds {self.bounds}")

    def inside_obstacle(self, x: float, y: float) -> bool:
        return any(o.contains(x, y) for o in self.obstacles)


@dataclass
class UavState:
    """Pose, velocity and radio state of one UAV."""

    id: int
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0
    v_max: float = 0.2
    a_max: float = 0.1
    residual_energy: float = 1000.0
    broadcast_rate: float = 1.0

    def __post_init__(self):
        self.heading = normalize_angle(self.heading)
        if not (0.0 <= self.speed <= self.v_max):
            raise ValueError(f"speed {self.speed} outside [0, {self.v_max}]")
        if self.residual_energy < 0 or self.broadcast_rate < 0:
            raise ValueError("residual_energy and broadcast_rate must be >= 0")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Command:
    """Velocity/heading command consumed by the kinematics phase."""

    speed: float
    heading: float


def step_kinematics(state: UavState, command: Command | None, dt: float,
                    bounds: Rect | None = None) -> UavState:
    """Advance one UAV by one tick.

    The commanded speed is approached at most ``a_max * dt`` per tick and
    clamped to [0, v_max]; the heading is applied instantly (turn-in-place
    platform). Position advances by the new speed along the new heading and
    is clamped to the world bounds.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if command is None:
        command = Command(state.speed, state.heading)

    target = min(max(command.speed, 0.0), state.v_max)
    dv = target - state.speed
    max_dv = state.a_max * dt
    if dv > max_dv:
        dv = max_dv
    elif dv < -max_dv:
        dv = -max_dv
    speed = min(max(state.speed + dv, 0.0), state.v_max)

    heading = normalize_angle(command.heading)
    x = state.x + speed * dt * math.cos(heading)
    y = state.y + speed * dt * math.sin(heading)
    if bounds is not None:
        x = min(max(x, bounds.x0), bounds.x1)
        y = min(max(y, bounds.y0), bounds.y1)
    return replace(state, x=x, y=y, heading=heading, speed=speed)


def segment_hits_obstacle(a: tuple[float, float], b: tuple[float, float],
                          env: Environment) -> tuple[float, float] | None:
    """Intersect segment a->b with the environment's obstacles.

    Returns the hit point nearest to ``a``, or None if the segment stays in
    free space. A start point inside an obstacle hits immediately at ``a``.
    """
    ax, ay = a
    bx, by = b
    if env.inside_obstacle(ax, ay):
        return (ax, ay)

    dx = bx - ax
    dy = by - ay
    best_t = None
    for rect in env.obstacles:
        t = _ray_aabb_entry(ax, ay, dx, dy, rect)
        if t is not None and (best_t is None or t < best_t):
            best_t = t
    if best_t is None:
        return None
    return (ax + best_t * dx, ay + best_t * dy)


def _ray_aabb_entry(ax, ay, dx, dy, rect: Rect) -> float | None:
    """Slab-method entry parameter of segment (a, a+d) into rect, or None."""
    tmin, tmax = 0.0, 1.0
    for p, d, lo, hi in ((ax, dx, rect.x0, rect.x1), (ay, dy, rect.y0, rect.y1)):
        if d == 0.0:
            if p < lo or p > hi:
                return None
        else:
            t1 = (lo - p) / d
            t2 = (hi - p) / d
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
            if tmin > tmax:
                return None
    return tmin


class World:
    """Owner of all per-run simulation state.

    The tick loop invokes the :data:`PHASES` in fixed order; scenario
    assembly attaches the optional subsystems (message bus, link manager,
    radio sampler, path followers, separation controller, learners, SLAM
    units). Subsystems not attached are skipped but their phase still runs,
    which keeps the event trace shape identical across experiment kinds.
    """

    def __init__(self, env: Environment, dt: float, seed: int, trace_enabled: bool = False):
        self.env = env
        self.clock = SimClock(dt=dt)
        self.seed = int(seed)
        self.uavs: dict[int, UavState] = {}
        self.commands: dict[int, Command] = {}
        self.trace_enabled = trace_enabled
        self.trace: list[tuple[int, str]] = []

        # optional subsystems, attached during scenario assembly
        self.bus = None
        self.links = None
        self.radio = None
        self.followers: dict[int, object] = {}
        self.separation = None
        self.learners: dict[int, object] = {}
        self.slam_units: dict[int, object] = {}
        self.metrics_hooks: list = []
        # non-protocol messages delivered this tick, keyed by receiver
        self.inbox: dict[int, list] = {}

    # -- setup ------------------------------------------------------------

    def add_uav(self, state: UavState) -> None:
        if state.id in self.uavs:
            raise ValueError(f"duplicate uav id {state.id}")
        if not self.env.bounds.contains(state.x, state.y):
            raise ValueError(f"uav {state.id} starts outside bounds")
        self.uavs[state.id] = state

    def stream(self, label: str) -> RngStream:
        return RngStream(self.seed, label)

    def distance(self, i: int, j: int) -> float:
        a, b = self.uavs[i], self.uavs[j]
        return math.hypot(a.x - b.x, a.y - b.y)

    # -- tick loop ---------------------------------------------------------

    def run_ticks(self, n: int) -> "World":
        for _ in range(n):
            self._tick()
        return self

    def _tick(self) -> None:
        now = self.clock.tick
        self._enter_phase(now, "kinematics")
        for uid in sorted(self.uavs):
            self.uavs[uid] = step_kinematics(
                self.uavs[uid], self.commands.get(uid), self.clock.dt, self.env.bounds
            )

        self._enter_phase(now, "radio")
        if self.radio is not None:
            self.radio.sample(self, now)
        for uid in sorted(self.slam_units):
            self.slam_units[uid].step(self, now)

        self._enter_phase(now, "link")
        self.inbox = {}
        if self.bus is not None:
            from .link import LINK_KINDS

            for msg in self.bus.due(now):
                if msg.kind in LINK_KINDS and self.links is not None:
                    self.links.inbox.append(msg)
                else:
                    self.inbox.setdefault(msg.receiver, []).append(msg)
        if self.links is not None:
            self.links.tick(self, now)

        self._enter_phase(now, "formation")
        for uid in sorted(self.followers):
            cmd = self.followers[uid].follow_path(self.uavs[uid], self.clock.dt)
            self.commands[uid] = cmd
        if self.separation is not None:
            self.separation.tick(self, now)

        self._enter_phase(now, "learning")
        for uid in sorted(self.learners):
            self.learners[uid].tick(self, now)

        self._enter_phase(now, "metrics")
        for hook in self.metrics_hooks:
            hook(self, now)

        self.clock.tick += 1

    def _enter_phase(self, tick: int, name: str) -> None:
        if self.trace_enabled:
            self.trace.append((tick, name))
