"""Observation-area assignment, RSSI-driven separation control, and waypoint
path following with in-place turns.

The path follower keeps the scanner facing the motion direction: it never
translates and rotates at the same time. Separation decisions are made on
estimated (RSSI-derived) distances; the geometry of the avoidance vector
uses the known relative positions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .link import MessageKind, SwarmMessage
from .world import Command, UavState, World, normalize_angle


class Priority(enum.Enum):
    MAJOR = "major"
    MINOR = "minor"


@dataclass
class ObservationArea:
    id: int
    x0: float
    y0: float
    x1: float
    y1: float
    priority: Priority = Priority.MAJOR
    assigned_uav: int | None = None

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))


@dataclass(frozen=True)
class SeparationPolicy:
    d_min: float
    d_max: float
    hysteresis: float = 0.0
    speed: float = 0.2

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise ValueError("need 0 < d_min < d_max")
        if not (0 <= self.hysteresis < (self.d_max - self.d_min) / 2):
            raise ValueError("hysteresis must be < (d_max - d_min)/2")


@dataclass(frozen=True)
class WaypointPath:
    waypoints: tuple[tuple[float, float], ...]
    closed: bool = False

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("path needs at least one waypoint")
        pts = list(self.waypoints)
        if self.closed:
            pts = pts + [pts[0]]
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ValueError("consecutive waypoints must be distinct")


@dataclass(frozen=True)
class NeighborEstimate:
    """One neighbor as seen through the radio: estimated range plus the
    last known relative position for steering geometry."""

    uav_id: int
    position: tuple[float, float]
    estimated_m: float
    true_m: float = 0.0
    chain_neighbor: bool = False


def assign_areas(areas: list[ObservationArea], uavs: list[UavState]) -> list[ObservationArea]:
    """Greedy nearest-idle-UAV assignment, major-priority areas first.

    Canonical sorting makes the result independent of input order; ties go
    to the lowest (area id, uav id). With more areas than UAVs the
    lowest-priority areas stay unassigned.
    """
    if not uavs:
        raise ValueError("need at least one uav")
    order = sorted(areas, key=lambda a: (a.priority is not Priority.MAJOR, a.id))
    idle = {u.id: u for u in uavs}
    out = []
    for area in order:
        area = ObservationArea(area.id, area.x0, area.y0, area.x1, area.y1,
                               area.priority, None)
        if idle:
            cx, cy = area.center
            best = min(idle.values(),
                       key=lambda u: (math.hypot(u.x - cx, u.y - cy), u.id))
            area.assigned_uav = best.id
            del idle[best.id]
        out.append(area)
    return sorted(out, key=lambda a: a.id)


def separation_control(self_state: UavState, neighbors: list[NeighborEstimate],
                       policy: SeparationPolicy,
                       active: dict[int, str] | None = None,
                       ) -> tuple[Command | None, list[SwarmMessage]]:
    """Dead-band separation controller with hysteresis.

    A neighbor estimated closer than d_min - hysteresis trips the too-close
    state (move directly away, message the neighbor) and the state only
    releases once the estimate clears d_min + hysteresis; too-far works
    symmetrically for chain neighbors against d_max. ``active`` carries the
    per-neighbor trip state between calls.
    """
    if active is None:
        active = {}
    command = None
    outbox: list[SwarmMessage] = []
    for nb in sorted(neighbors, key=lambda n: n.uav_id):
        state = active.get(nb.uav_id)
        est = nb.estimated_m
        if state == "close":
            if est >= policy.d_min + policy.hysteresis:
                del active[nb.uav_id]
                state = None
        elif state == "far":
            if est <= policy.d_max - policy.hysteresis:
                del active[nb.uav_id]
                state = None
        if state is None:
            if est < policy.d_min - policy.hysteresis:
                state = "close"
                active[nb.uav_id] = state
            elif nb.chain_neighbor and est > policy.d_max + policy.hysteresis:
                state = "far"
                active[nb.uav_id] = state

        if state == "close":
            outbox.append(SwarmMessage(MessageKind.TOO_CLOSE, self_state.id, nb.uav_id))
            if command is None:
                command = Command(policy.speed, _bearing(nb.position, self_state.position))
        elif state == "far":
            outbox.append(SwarmMessage(MessageKind.TOO_FAR, self_state.id, nb.uav_id))
            if command is None:
                command = Command(policy.speed, _bearing(self_state.position, nb.position))
    return command, outbox


def _bearing(frm: tuple[float, float], to: tuple[float, float]) -> float:
    return math.atan2(to[1] - frm[1], to[0] - frm[0])


class PathFollower:
    """Drives a UAV along a waypoint path, stopping to turn in place.

    Phases: cruise along the current segment; once inside the capture radius
    of the segment end, brake to zero; then snap the heading to the next
    segment and resume. While translating, the commanded heading always
    equals the segment direction. Lap completions on closed paths are
    recorded with their tick-equivalent call index.
    """

    def __init__(self, path: WaypointPath, cruise_speed: float,
                 capture_radius: float = 0.05):
        self.path = path
        self.cruise_speed = cruise_speed
        self.capture_radius = capture_radius
        self.target_idx = self._first_target()
        self.phase = "cruise"
        self.laps_completed = 0
        self.lap_marks: list[int] = []   # call index at each lap completion
        self._calls = 0

    def _first_target(self) -> int:
        return 1 if len(self.path.waypoints) > 1 else 0

    def _target(self) -> tuple[float, float]:
        return self.path.waypoints[self.target_idx]

    def _segment_heading(self, state: UavState) -> float:
        tx, ty = self._target()
        return math.atan2(ty - state.y, tx - state.x)

    def _advance_target(self) -> bool:
        """Move to the next waypoint; True while the path continues."""
        n = len(self.path.waypoints)
        if self.path.closed:
            nxt = (self.target_idx + 1) % n
            if nxt == self._first_target():
                self.laps_completed += 1
                self.lap_marks.append(self._calls)
            self.target_idx = nxt
            return True
        if self.target_idx + 1 < n:
            self.target_idx += 1
            return True
        return False

    def follow_path(self, state: UavState, dt: float) -> Command:
        self._calls += 1
        tx, ty = self._target()
        dist = math.hypot(tx - state.x, ty - state.y)

        if len(self.path.waypoints) == 1 and dist <= self.capture_radius:
            return Command(0.0, state.heading)

        if self.phase == "cruise" and dist <= self.capture_radius:
            self.phase = "stop"

        if self.phase == "stop":
            if state.speed > 0.0:
                return Command(0.0, state.heading)
            if not self._advance_target():
                return Command(0.0, state.heading)
            self.phase = "turn"

        if self.phase == "turn":
            heading = self._segment_heading(state)
            if abs(normalize_angle(state.heading - heading)) > 1e-9:
                return Command(0.0, heading)
            self.phase = "cruise"

        # brake so the waypoint is reached near zero speed: v = sqrt(2*a*d),
        # floored at one acceleration quantum so the capture zone is entered
        heading = self._segment_heading(state)
        margin = max(dist - self.capture_radius, 0.0)
        brake = math.sqrt(2.0 * state.a_max * margin) + state.a_max * dt
        return Command(min(self.cruise_speed, state.v_max, brake), heading)


def follow_path(follower: PathFollower, state: UavState, dt: float) -> Command:
    """Functional wrapper over :meth:`PathFollower.follow_path`."""
    return follower.follow_path(state, dt)


@dataclass
class SeparationEvent:
    tick: int
    sender: int
    receiver: int
    kind: str
    estimated_m: float
    true_m: float


class SeparationController:
    """Kernel formation phase: applies separation control to every UAV using
    the radio sampler's latest estimates (or true distances when configured
    for oracle runs)."""

    def __init__(self, policy: SeparationPolicy, chain_pairs, use_true_distance: bool = False):
        self.policy = policy
        self.chain = {tuple(sorted(p)) for p in chain_pairs}
        self.use_true_distance = use_true_distance
        self.active: dict[int, dict[int, str]] = {}
        self.events: list[SeparationEvent] = []

    def _neighbors_of(self, world: World, uid: int) -> list[NeighborEstimate]:
        out = []
        for other in sorted(world.uavs):
            if other == uid:
                continue
            true_d = world.distance(uid, other)
            est = true_d
            if not self.use_true_distance and world.radio is not None:
                est = world.radio.last_estimate.get((uid, other), est)
            out.append(NeighborEstimate(
                uav_id=other,
                position=world.uavs[other].position,
                estimated_m=est,
                true_m=true_d,
                chain_neighbor=tuple(sorted((uid, other))) in self.chain,
            ))
        return out

    def tick(self, world: World, now: int) -> None:
        for uid in sorted(world.uavs):
            neighbors = self._neighbors_of(world, uid)
            cmd, outbox = separation_control(
                world.uavs[uid], neighbors, self.policy,
                self.active.setdefault(uid, {}),
            )
            est_by_id = {n.uav_id: n for n in neighbors}
            for msg in outbox:
                nb = est_by_id[msg.receiver]
                self.events.append(SeparationEvent(
                    now, msg.sender, msg.receiver, msg.kind.value,
                    nb.estimated_m, nb.true_m,
                ))
                if world.bus is not None:
                    world.bus.send(world, msg, now)
            if cmd is None:
                # a received too-close/too-far also steers, cooperatively
                me = world.uavs[uid]
                for msg in world.inbox.get(uid, []):
                    sender = world.uavs[msg.sender].position
                    if msg.kind is MessageKind.TOO_CLOSE:
                        cmd = Command(self.policy.speed, _bearing(sender, me.position))
                        break
                    if msg.kind is MessageKind.TOO_FAR:
                        cmd = Command(self.policy.speed, _bearing(me.position, sender))
                        break
            if cmd is not None:
                world.commands[uid] = cmd
            elif self.active[uid] == {} and uid not in world.followers:
                # released from avoidance and not path-driven: coast to a stop
                world.commands[uid] = Command(0.0, world.uavs[uid].heading)
