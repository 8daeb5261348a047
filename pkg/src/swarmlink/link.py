"""Per-pair link protocol: heartbeat loss detection, beacon + two-message
reconnection handshake, and reestablishment-time measurement.

Messages are tick-synchronous: a message sent at tick t is delivered at
t + latency, and the drop decision (range, occlusion, scripted disruption)
is made at send time. Each pair owns one LinkRecord; records never interact,
so disrupting one pair cannot disturb another.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .world import World, segment_hits_obstacle


class MessageKind(enum.Enum):
    HEARTBEAT = "heartbeat"
    BEACON = "beacon"
    HANDSHAKE_REQ = "handshake_req"
    HANDSHAKE_ACK = "handshake_ack"
    TOO_CLOSE = "too_close"
    TOO_FAR = "too_far"
    SENSOR_DATA = "sensor_data"


LINK_KINDS = frozenset({
    MessageKind.HEARTBEAT,
    MessageKind.BEACON,
    MessageKind.HANDSHAKE_REQ,
    MessageKind.HANDSHAKE_ACK,
})


class LinkState(enum.Enum):
    CONNECTED = "connected"
    LOST = "lost"
    REESTABLISHING = "reestablishing"


# The only legal transitions; everything else is a bug.
ALLOWED_TRANSITIONS = {
    (LinkState.CONNECTED, LinkState.LOST),
    (LinkState.LOST, LinkState.REESTABLISHING),
    (LinkState.REESTABLISHING, LinkState.CONNECTED),
    (LinkState.REESTABLISHING, LinkState.LOST),
}


@dataclass(frozen=True)
class SwarmMessage:
    kind: MessageKind
    sender: int
    receiver: int
    payload: bytes = b""

    def __post_init__(self):
        if self.sender == self.receiver:
            raise ValueError("message sender and receiver must differ")


@dataclass
class DisruptionWindow:
    """Scripted channel outage for one pair, active on ticks [start, end)."""

    pair: tuple[int, int]
    start_tick: int
    end_tick: int

    def active(self, tick: int) -> bool:
        return self.start_tick <= tick < self.end_tick


@dataclass
class LinkRecord:
    pair: tuple[int, int]
    state: LinkState = LinkState.CONNECTED
    last_heartbeat_tick: int = 0
    disruption_tick: int | None = None
    reconnect_tick: int | None = None
    lost_since: int | None = None
    reestablishing_since: int | None = None
    completed: list[tuple[int, int]] = field(default_factory=list)  # (disruption, reconnect)


@dataclass(frozen=True)
class LinkParams:
    comm_range: float = 20.0
    heartbeat_period: int = 1          # ticks between heartbeats
    miss_threshold: int = 5            # silent ticks before a link is declared lost
    beacon_period: int = 2             # ticks between beacons while lost
    handshake_timeout: int = 20        # ticks in reestablishing before retry
    latency: int = 1                   # ticks from send to delivery

    def __post_init__(self):
        if min(self.heartbeat_period, self.beacon_period, self.latency) < 1:
            raise ValueError("periods and latency must be >= 1 tick")
        if self.miss_threshold < 1 or self.handshake_timeout < 1:
            raise ValueError("thresholds must be >= 1 tick")


class MessageBus:
    """Distance/occlusion/disruption-gated message transport.

    ``send`` decides the drop immediately and returns 'delivered' or
    'dropped'; accepted messages surface from ``due`` after the configured
    latency, sorted deterministically.
    """

    def __init__(self, params: LinkParams):
        self.params = params
        self.disruptions: list[DisruptionWindow] = []
        self._in_flight: list[tuple[int, SwarmMessage]] = []
        self.sent = 0
        self.dropped = 0

    def add_disruption(self, window: DisruptionWindow) -> None:
        self.disruptions.append(window)

    def disrupted(self, pair: tuple[int, int], tick: int) -> bool:
        key = tuple(sorted(pair))
        return any(tuple(sorted(w.pair)) == key and w.active(tick) for w in self.disruptions)

    def send(self, world: World, msg: SwarmMessage, now: int) -> str:
        if msg.sender not in world.uavs or msg.receiver not in world.uavs:
            raise KeyError(f"unknown uav in message {msg}")
        self.sent += 1
        if self.disrupted((msg.sender, msg.receiver), now):
            self.dropped += 1
            return "dropped"
        if world.distance(msg.sender, msg.receiver) > self.params.comm_range:
            self.dropped += 1
            return "dropped"
        a = world.uavs[msg.sender].position
        b = world.uavs[msg.receiver].position
        if segment_hits_obstacle(a, b, world.env) is not None:
            self.dropped += 1
            return "dropped"
        self._in_flight.append((now + self.params.latency, msg))
        return "delivered"

    def due(self, now: int) -> list[SwarmMessage]:
        ready = [m for t, m in self._in_flight if t <= now]
        self._in_flight = [(t, m) for t, m in self._in_flight if t > now]
        ready.sort(key=lambda m: (m.kind.value, m.sender, m.receiver))
        return ready


def deliver(world: World, bus: MessageBus, msg: SwarmMessage, now: int) -> str:
    """Send one message through the channel; 'delivered' means it will appear
    in the receiver's inbox after the bus latency."""
    return bus.send(world, msg, now)


def heartbeat_tick(rec: LinkRecord, now: int, params: LinkParams, log=None) -> LinkRecord:
    """Failure detector: declare the link lost after miss_threshold silent ticks.

    On the Connected -> Lost transition the disruption timestamp is pinned to
    the first silent tick; staying silent afterwards is a no-op.
    """
    if rec.state is LinkState.CONNECTED and now - rec.last_heartbeat_tick > params.miss_threshold:
        if log is not None:
            log(now, rec.pair, rec.state, LinkState.LOST)
        rec.state = LinkState.LOST
        rec.lost_since = now
        rec.disruption_tick = rec.last_heartbeat_tick + 1
        rec.reconnect_tick = None
    return rec


def reestablish_tick(rec: LinkRecord, inbox, now: int, params: LinkParams,
                     log=None) -> list[SwarmMessage]:
    """Advance a non-connected record one tick; returns messages to send.

    Lost records emit a beacon every beacon_period; a heard beacon starts the
    handshake (request, then acknowledge); the acknowledge completes the
    reconnection and stamps reconnect_tick. A stalled handshake times out
    back to Lost and retries from the beacon stage.
    """
    if rec.state is LinkState.CONNECTED:
        raise ValueError("reestablish_tick requires a non-connected record")

    def transition(new: LinkState) -> None:
        if log is not None:
            log(now, rec.pair, rec.state, new)
        rec.state = new

    outbox: list[SwarmMessage] = []
    for msg in inbox:
        if msg.kind is MessageKind.BEACON and rec.state is LinkState.LOST:
            transition(LinkState.REESTABLISHING)
            rec.reestablishing_since = now
            outbox.append(SwarmMessage(MessageKind.HANDSHAKE_REQ, msg.receiver, msg.sender))
        elif msg.kind is MessageKind.HANDSHAKE_REQ:
            outbox.append(SwarmMessage(MessageKind.HANDSHAKE_ACK, msg.receiver, msg.sender))
        elif msg.kind is MessageKind.HANDSHAKE_ACK and rec.state is LinkState.REESTABLISHING:
            transition(LinkState.CONNECTED)
            rec.reconnect_tick = now
            rec.last_heartbeat_tick = now
            if rec.disruption_tick is not None:
                rec.completed.append((rec.disruption_tick, now))
            return outbox

    if rec.state is LinkState.REESTABLISHING:
        if now - rec.reestablishing_since > params.handshake_timeout:
            transition(LinkState.LOST)
            rec.lost_since = now

    if rec.state is LinkState.LOST:
        since = rec.lost_since if rec.lost_since is not None else now
        if (now - since) % params.beacon_period == 0:
            i, j = rec.pair
            outbox.append(SwarmMessage(MessageKind.BEACON, i, j))
            outbox.append(SwarmMessage(MessageKind.BEACON, j, i))
    return outbox


class LinkManager:
    """Kernel link phase: runs the failure detector and reconnection FSM for
    every registered pair over the shared message bus."""

    def __init__(self, bus: MessageBus, pairs, params: LinkParams):
        self.bus = bus
        self.params = params
        self.records = {tuple(sorted(p)): LinkRecord(pair=tuple(sorted(p))) for p in pairs}
        self.transitions: list[tuple[int, tuple[int, int], LinkState, LinkState]] = []
        self.inbox: list[SwarmMessage] = []

    def record(self, pair) -> LinkRecord:
        return self.records[tuple(sorted(pair))]

    def _log(self, now: int, pair, old: LinkState, new: LinkState) -> None:
        self.transitions.append((now, pair, old, new))

    def tick(self, world: World, now: int) -> None:
        by_pair: dict[tuple[int, int], list[SwarmMessage]] = {}
        for msg in self.inbox:
            by_pair.setdefault(tuple(sorted((msg.sender, msg.receiver))), []).append(msg)
        self.inbox.clear()

        for pair in sorted(self.records):
            rec = self.records[pair]
            msgs = by_pair.get(pair, [])
            for msg in msgs:
                if msg.kind is MessageKind.HEARTBEAT:
                    rec.last_heartbeat_tick = max(rec.last_heartbeat_tick, now)
            heartbeat_tick(rec, now, self.params, log=self._log)
            if rec.state is LinkState.CONNECTED:
                if now % self.params.heartbeat_period == 0:
                    i, j = pair
                    self.bus.send(world, SwarmMessage(MessageKind.HEARTBEAT, i, j), now)
                    self.bus.send(world, SwarmMessage(MessageKind.HEARTBEAT, j, i), now)
            else:
                protocol = [m for m in msgs if m.kind is not MessageKind.HEARTBEAT]
                for out in reestablish_tick(rec, protocol, now, self.params, log=self._log):
                    self.bus.send(world, out, now)


def measure_reestablishment(records, dt: float) -> list[dict]:
    """Convert completed (disruption, reconnect) tick pairs to seconds.

    A record stuck in a non-connected state is flagged unrecovered with a
    None elapsed value.
    """
    out = []
    for rec in sorted(records, key=lambda r: r.pair):
        for disruption, reconnect in rec.completed:
            out.append({
                "pair": rec.pair,
                "disruption_tick": disruption,
                "reconnect_tick": reconnect,
                "elapsed_s": (reconnect - disruption) * dt,
                "recovered": True,
            })
        if rec.state is not LinkState.CONNECTED and rec.disruption_tick is not None:
            out.append({
                "pair": rec.pair,
                "disruption_tick": rec.disruption_tick,
                "reconnect_tick": None,
                "elapsed_s": None,
                "recovered": False,
            })
    return out


def pair_label(pair: tuple[int, int]) -> str:
    return f"Device {pair[0]} and Device {pair[1]}"
