"""Tabular Q-learning for broadcast-rate adaptation.

State is the (rate bucket, energy bucket) pair; the three actions move the
rate bucket up, down, or hold it. Boundary moves act as hold: raising the
rate at the top bucket or lowering it at the bottom changes nothing, so
those action pairs are value-equivalent by construction.

``value_iteration_oracle`` solves small explicit MDPs exactly and exists to
cross-check the learner in tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .world import RngStream, World


class LearnAction(enum.IntEnum):
    RATE_UP = 0
    RATE_DOWN = 1
    HOLD = 2


@dataclass(frozen=True)
class LearnState:
    rate_bucket: int
    energy_bucket: int


@dataclass(frozen=True)
class RewardWeights:
    delivered: float = 1.0
    lost: float = 1.0
    energy: float = 0.1

    def __post_init__(self):
        if min(self.delivered, self.lost, self.energy) < 0:
            raise ValueError("reward weights must be nonnegative")


def reward(delivered: int, lost: int, energy_spent: float,
           weights: RewardWeights = RewardWeights()) -> float:
    """Weighted delivery-vs-loss-vs-energy balance."""
    if delivered < 0 or lost < 0 or energy_spent < 0:
        raise ValueError("counts must be nonnegative")
    return (weights.delivered * delivered
            - weights.lost * lost
            - weights.energy * energy_spent)


class QTable:
    """Action-value table over rate x energy buckets x 3 actions."""

    def __init__(self, rate_buckets: int, energy_buckets: int,
                 alpha: float = 0.1, gamma: float = 0.9, epsilon: float = 0.1):
        if not (0 < alpha <= 1):
            raise ValueError("alpha must be in (0, 1]")
        if not (0 <= gamma < 1):
            raise ValueError("gamma must be in [0, 1)")
        if not (0 <= epsilon <= 1):
            raise ValueError("epsilon must be in [0, 1]")
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon = epsilon
        self.values = np.zeros((rate_buckets, energy_buckets, len(LearnAction)))
        self.visits = np.zeros_like(self.values, dtype=np.int64)

    def q(self, s: LearnState, a: LearnAction) -> float:
        return float(self.values[s.rate_bucket, s.energy_bucket, a])

    def best_value(self, s: LearnState) -> float:
        return float(self.values[s.rate_bucket, s.energy_bucket].max())

    def greedy_action(self, s: LearnState) -> LearnAction:
        """Argmax with ties broken toward the lowest action index."""
        return LearnAction(int(np.argmax(self.values[s.rate_bucket, s.energy_bucket])))


def q_update(q: QTable, s: LearnState, a: LearnAction, r: float,
             s_next: LearnState, alpha: float | None = None) -> QTable:
    """One temporal-difference backup; touches exactly the (s, a) cell."""
    if alpha is None:
        alpha = q.alpha
    old = q.q(s, a)
    target = r + q.gamma * q.best_value(s_next)
    q.values[s.rate_bucket, s.energy_bucket, a] = (1.0 - alpha) * old + alpha * target
    q.visits[s.rate_bucket, s.energy_bucket, a] += 1
    return q


def select_action(q: QTable, s: LearnState, rng: RngStream) -> LearnAction:
    """Epsilon-greedy: explore uniformly with probability epsilon."""
    if q.epsilon > 0 and float(rng.random()) < q.epsilon:
        return LearnAction(int(rng.integers(0, len(LearnAction))))
    return q.greedy_action(s)


@dataclass(frozen=True)
class ExplicitMdp:
    """Small deterministic-transition MDP given by explicit tables.

    next_state[s, a] and rewards[s, a] are dense arrays over state indices.
    """

    n_states: int
    n_actions: int
    next_state: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        if self.n_states > 30:
            raise ValueError("oracle is for small MDPs (<= 30 states)")


def value_iteration_oracle(mdp: ExplicitMdp, tol: float = 1e-10,
                           max_sweeps: int = 1_000_000) -> np.ndarray:
    """Classic value iteration to fixed point; returns the optimal Q table.

    Iterates Q(s,a) = r(s,a) + gamma * max_a' Q(s',a') until the sweep
    residual drops below tol.
    """
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_sweeps):
        v_next = q.max(axis=1)[mdp.next_state]
        q_new = mdp.rewards + mdp.gamma * v_next
        residual = np.abs(q_new - q).max()
        q = q_new
        if residual < tol:
            return q
    raise RuntimeError("value iteration did not converge")


def bellman_residual(mdp: ExplicitMdp, q: np.ndarray) -> float:
    v_next = q.max(axis=1)[mdp.next_state]
    return float(np.abs(mdp.rewards + mdp.gamma * v_next - q).max())


def rate_energy_mdp(rate_buckets: int = 3, energy_buckets: int = 3,
                    weights: RewardWeights = RewardWeights(),
                    gamma: float = 0.9) -> ExplicitMdp:
    """Deterministic rate/energy MDP mirroring the live adaptation loop.

    High rate drains the energy bucket, the lowest rate recharges it; an
    empty bucket turns would-be deliveries into losses. State index is
    rate * energy_buckets + energy.
    """
    n_states = rate_buckets * energy_buckets
    n_actions = len(LearnAction)
    nxt = np.zeros((n_states, n_actions), dtype=np.int64)
    rew = np.zeros((n_states, n_actions))
    for r_b in range(rate_buckets):
        for e_b in range(energy_buckets):
            s = r_b * energy_buckets + e_b
            for a in LearnAction:
                delta = {LearnAction.RATE_UP: 1, LearnAction.RATE_DOWN: -1,
                         LearnAction.HOLD: 0}[a]
                r2 = min(max(r_b + delta, 0), rate_buckets - 1)
                if r2 == rate_buckets - 1:
                    e2 = max(e_b - 1, 0)
                elif r2 == 0:
                    e2 = min(e_b + 1, energy_buckets - 1)
                else:
                    e2 = e_b
                delivered = (r2 + 1) if e2 > 0 else 0
                lost = r2 + 1 if e2 == 0 else 0
                nxt[s, a] = r2 * energy_buckets + e2
                rew[s, a] = reward(delivered, lost, float(r2), weights)
    return ExplicitMdp(n_states, n_actions, nxt, rew, gamma)


def effective_action(a: LearnAction, rate_bucket: int, rate_buckets: int) -> LearnAction:
    """Boundary moves act as hold (the declared action equivalence)."""
    if a is LearnAction.RATE_UP and rate_bucket == rate_buckets - 1:
        return LearnAction.HOLD
    if a is LearnAction.RATE_DOWN and rate_bucket == 0:
        return LearnAction.HOLD
    return a


@dataclass
class LearnTraceRow:
    tick: int
    uav_id: int
    rate_bucket: int
    energy_bucket: int
    action: str
    reward: float
    q_value: float


class BroadcastLearner:
    """Kernel learning phase: adapts one UAV's broadcast rate online.

    Between decisions the UAV broadcasts sensor data to its nearest chain
    partner at the current rate; each send costs energy and is counted
    delivered or lost by the bus. Every ``period`` ticks the learner turns
    the counts into a reward, backs up the Q table, and picks the next rate.
    """

    def __init__(self, uav_id: int, partner_id: int, rates, q: QTable,
                 seed: int, period: int = 20, energy_per_msg: float = 0.1,
                 initial_energy: float | None = None,
                 weights: RewardWeights = RewardWeights(),
                 alpha_decay: bool = False):
        self.uav_id = uav_id
        self.partner_id = partner_id
        self.rates = list(rates)
        self.q = q
        self.period = period
        self.energy_per_msg = energy_per_msg
        self.weights = weights
        self.alpha_decay = alpha_decay
        self.rng = RngStream(seed, f"learn/{uav_id}")
        self.initial_energy = initial_energy
        self.rate_bucket = 0
        self._accum = 0.0
        self._delivered = 0
        self._lost = 0
        self._energy_spent = 0.0
        self._last_state: LearnState | None = None
        self._last_action: LearnAction | None = None
        self.trace: list[LearnTraceRow] = []

    def energy_bucket(self, world: World, buckets: int = 4) -> int:
        uav = world.uavs[self.uav_id]
        initial = self.initial_energy or 1.0
        frac = uav.residual_energy / initial if initial > 0 else 0.0
        return min(max(int(frac * buckets), 0), buckets - 1)

    def _broadcast(self, world: World, now: int) -> None:
        from .link import MessageKind, SwarmMessage

        uav = world.uavs[self.uav_id]
        if self.initial_energy is None:
            self.initial_energy = uav.residual_energy
        self._accum += uav.broadcast_rate * world.clock.dt
        while self._accum >= 1.0:
            self._accum -= 1.0
            if uav.residual_energy < self.energy_per_msg:
                self._lost += 1
                continue
            uav.residual_energy -= self.energy_per_msg
            self._energy_spent += self.energy_per_msg
            if world.bus is not None:
                msg = SwarmMessage(MessageKind.SENSOR_DATA, self.uav_id, self.partner_id)
                if world.bus.send(world, msg, now) == "delivered":
                    self._delivered += 1
                else:
                    self._lost += 1
            else:
                self._delivered += 1

    def tick(self, world: World, now: int) -> None:
        self._broadcast(world, now)
        if now % self.period != self.period - 1:
            return
        state = LearnState(self.rate_bucket, self.energy_bucket(world,
                           self.q.values.shape[1]))
        if self._last_state is not None:
            r = reward(self._delivered, self._lost, self._energy_spent, self.weights)
            alpha = None
            if self.alpha_decay:
                visits = self.q.visits[self._last_state.rate_bucket,
                                       self._last_state.energy_bucket,
                                       self._last_action]
                alpha = 1.0 / (visits + 1)
            q_update(self.q, self._last_state, self._last_action, r, state, alpha)
            self.trace.append(LearnTraceRow(
                now, self.uav_id, state.rate_bucket, state.energy_bucket,
                self._last_action.name.lower(), r,
                self.q.q(self._last_state, self._last_action)))
        action = select_action(self.q, state, self.rng)
        applied = effective_action(action, self.rate_bucket, self.q.values.shape[0])
        if applied is LearnAction.RATE_UP:
            self.rate_bucket += 1
        elif applied is LearnAction.RATE_DOWN:
            self.rate_bucket -= 1
        world.uavs[self.uav_id].broadcast_rate = self.rates[self.rate_bucket]
        self._last_state = state
        self._last_action = action
        self._delivered = 0
        self._lost = 0
        self._energy_spent = 0.0
