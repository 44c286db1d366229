"""Deterministic policy-gradient trainers for the scheduling problem.

The update scheme keeps two copies of each network.  The slow pair (actor,
critic) acts in the environment and supplies Bellman targets; SGD runs on
the fast pair (actor_copy, critic_copy); after every iteration the slow pair
is Polyak-averaged toward the fast one.  This inverts the usual "target
network" bookkeeping but is followed here deliberately: targets come from
the slow nets, optimization happens on the fast ones.

Knowledge hooks are independent flags on the config: multi-head critic (one
value head per user), potential shaping of the reward (applied in the
environment), and prioritized replay with importance correction.  With all
three off, the loop is plain DDPG on the summed reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import MODE_TDRL, RngBundle, SystemConfig
from .env import SchedulerEnv
from .metrics import WindowMetrics
from .nn import (MlpGrads, MlpParams, OUT_LINEAR, OUT_UNIT_TANH, backward,
                 forward, sgd_step, soft_update)
from .replay import ReplayMemory, Transition, bias_weight

METRICS_EVERY_EPISODES = 5


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries episode/slot context."""


@dataclass
class Networks:
    actor: MlpParams        # slow: acts, supplies targets
    critic: MlpParams
    actor_copy: MlpParams   # fast: receives SGD
    critic_copy: MlpParams

    @property
    def heads(self) -> int:
        return self.critic.dims[-1]


def build_networks(num_users: int, multi_head: bool, rng: np.random.Generator) -> Networks:
    """Standard sizes: actor 2K-20K-20K-K squashed, critic 3K-30K-30K-H linear."""
    k = num_users
    actor = MlpParams.init([2 * k, 20 * k, 20 * k, k], OUT_UNIT_TANH, rng)
    heads = k if multi_head else 1
    critic = MlpParams.init([3 * k, 30 * k, 30 * k, heads], OUT_LINEAR, rng)
    return Networks(actor, critic, actor.copy(), critic.copy())


# --- losses -------------------------------------------------------------------

@dataclass
class LossBundle:
    critic_loss: float
    actor_loss: float
    critic_grads: MlpGrads   # w.r.t. the fast critic
    actor_grads: MlpGrads    # w.r.t. the fast actor
    td_errors: np.ndarray    # (batch, heads), target minus prediction


def kddpg_losses(nets: Networks, s: np.ndarray, a: np.ndarray, r: np.ndarray,
                 s2: np.ndarray, u: np.ndarray, gamma: float) -> LossBundle:
    """Importance-weighted multi-head losses and their analytic gradients.

    Critic loss: mean_i u_i * sum_h (y_ih - Q_h(s_i, a_i))^2 with targets
    y = r + gamma * Q_slow(s', actor_slow(s')).  Actor loss:
    -mean_i u_i * sum_h Q_h(s_i, actor(s_i)), differentiated through the
    fast critic's action input.
    """
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    s2 = np.atleast_2d(np.asarray(s2, dtype=np.float64))
    u = np.asarray(u, dtype=np.float64).reshape(-1, 1)
    batch = s.shape[0]

    a2 = forward(nets.actor, s2)
    y = r + gamma * forward(nets.critic, np.hstack([s2, a2]))

    sa = np.hstack([s, a])
    q = forward(nets.critic_copy, sa)
    e = y - q
    critic_loss = float(np.mean(u * np.sum(e * e, axis=1, keepdims=True)))
    dq = -(2.0 / batch) * u * e
    critic_grads, _ = backward(nets.critic_copy, sa, dq)

    a_pi = forward(nets.actor_copy, s)
    sa_pi = np.hstack([s, a_pi])
    q_pi = forward(nets.critic_copy, sa_pi)
    actor_loss = float(-np.mean(u * np.sum(q_pi, axis=1, keepdims=True)))
    dq_pi = np.broadcast_to(-u / batch, q_pi.shape)
    _, d_input = backward(nets.critic_copy, sa_pi, dq_pi)
    da = d_input[:, s.shape[1]:]
    actor_grads, _ = backward(nets.actor_copy, s, da)

    return LossBundle(critic_loss, actor_loss, critic_grads, actor_grads, e)


def ddpg_losses(nets: Networks, s: np.ndarray, a: np.ndarray, r: np.ndarray,
                s2: np.ndarray, gamma: float) -> LossBundle:
    """Plain single-head case: uniform replay, no importance correction."""
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    return kddpg_losses(nets, s, a, r, s2, np.ones(r.shape[0]), gamma)


# --- exploration and action mapping ---------------------------------------------

class ExplorationNoise:
    """Per-user random-walk noise, reset at every episode boundary.

    Each call adds delta * N(0, sigma^2) to the running walk, so the first
    draw after a reset has variance delta^2 * sigma^2 and the variance grows
    linearly with the slot index.
    """

    def __init__(self, num_users: int, sigma: float, delta: float):
        self.sigma = sigma
        self.delta = delta
        self.value = np.zeros(num_users)

    def reset(self) -> None:
        self.value[:] = 0.0

    def step(self, rng: np.random.Generator) -> np.ndarray:
        self.value += self.delta * rng.normal(0.0, self.sigma, size=self.value.shape)
        return self.value.copy()


def to_discrete_action(actor_out: np.ndarray, mode: str, n_total: int) -> np.ndarray:
    """Map the clamped continuous action to the environment's action space.

    tdrl: per-user threshold at 0.5 (ties round up), which is the nearest
    binary vector in l2 distance.  straightforward: nearest integer RB count
    to out * n_total, half-up.
    """
    out = np.asarray(actor_out, dtype=np.float64)
    if mode == MODE_TDRL:
        return (out >= 0.5).astype(np.int64)
    return np.clip(np.floor(out * n_total + 0.5).astype(np.int64), 0, n_total)


def greedy_policy(actor: MlpParams, cfg: SystemConfig):
    """Noise-free policy callable (state, env) -> action, for evaluation."""

    def fn(state, env):
        return to_discrete_action(forward(actor, state.flattened()),
                                  cfg.mode, cfg.num_rbs)

    return fn


# --- training loop ----------------------------------------------------------------

@dataclass
class TrainResult:
    nets: Networks
    metrics: list[WindowMetrics]


class MetricsTracker:
    """Accumulates per-user rewards and loss/arrival deltas over a window."""

    def __init__(self, env: SchedulerEnv):
        self.env = env
        self.window = 0
        self._reset_window()

    def _reset_window(self):
        self.reward_sum = np.zeros(self.env.cfg.num_users)
        self.slots = 0
        self.arrived0 = self.env.arrived_total.copy()
        self.lost0 = self.env.lost_total.copy()
        self.deadline_misses = 0

    def record(self, reward: np.ndarray) -> None:
        self.reward_sum += reward
        self.slots += 1

    def snapshot(self) -> WindowMetrics:
        arrived = self.env.arrived_total - self.arrived0
        lost = self.env.lost_total - self.lost0
        # no arrivals means nothing could be lost; report 0 by convention
        loss_prob = np.where(arrived > 0, lost / np.maximum(arrived, 1), 0.0)
        avg = self.reward_sum / max(self.slots, 1)
        m = WindowMetrics(
            window=self.window,
            loss_prob=[float(v) for v in loss_prob],
            avg_reward=[float(v) for v in avg],
            worst_reward=float(avg.min()),
            deadline_misses=self.deadline_misses,
        )
        self.window += 1
        self._reset_window()
        return m


def training_reward(res, cfg: SystemConfig) -> np.ndarray:
    """Reward vector stored in replay: per-user when multi-head, else summed."""
    r = res.shaped_reward if cfg.reward_shaping else res.reward
    return r.copy() if cfg.multi_head else np.array([r.sum()])


def train_step(nets: Networks, memory: ReplayMemory, cfg: SystemConfig,
               rng: np.random.Generator) -> LossBundle:
    """One optimization iteration: sample, descend the copies, track the slow nets."""
    idx, batch, p = memory.sample(cfg.batch_size, cfg.importance_sampling, rng)
    s = np.stack([tr.state for tr in batch])
    a = np.stack([tr.action for tr in batch])
    r = np.stack([tr.reward for tr in batch])
    s2 = np.stack([tr.next_state for tr in batch])
    u = bias_weight(p, len(memory)) if cfg.importance_sampling else np.ones(len(batch))

    out = kddpg_losses(nets, s, a, r, s2, u, cfg.gamma)
    if cfg.importance_sampling:
        for row, i in enumerate(idx):
            memory.update_weight(int(i), out.td_errors[row], batch[row].loss_flags)
    sgd_step(nets.critic_copy, out.critic_grads, cfg.critic_lr)
    sgd_step(nets.actor_copy, out.actor_grads, cfg.actor_lr)
    soft_update(nets.critic, nets.critic_copy, cfg.tau)
    soft_update(nets.actor, nets.actor_copy, cfg.tau)
    return out


def train(cfg: SystemConfig, rngs: RngBundle | None = None) -> TrainResult:
    """Run the full off-line loop and return networks plus windowed metrics.

    Raises TrainingDiverged as soon as either loss stops being finite.
    """
    cfg.validate()
    rngs = rngs or RngBundle(cfg.seed)
    env = SchedulerEnv(cfg, rngs)
    nets = build_networks(cfg.num_users, cfg.multi_head, rngs.init)
    memory = ReplayMemory(cfg.replay_size)
    noise = ExplorationNoise(cfg.num_users, cfg.sigma, cfg.delta)
    tracker = MetricsTracker(env)
    metrics: list[WindowMetrics] = []

    for ep in range(cfg.episodes):
        state = env.reset()
        noise.reset()
        for t in range(cfg.slots_per_episode):
            flat = state.flattened()
            a_cont = np.clip(forward(nets.actor, flat) + noise.step(rngs.exploration),
                             0.0, 1.0)
            action = to_discrete_action(a_cont, cfg.mode, cfg.num_rbs)
            res = env.step(action)
            memory.push(Transition(flat, a_cont, training_reward(res, cfg),
                                   res.next_state.flattened(), res.loss_flags.copy(),
                                   env.slot))
            out = train_step(nets, memory, cfg, rngs.sampling)
            if not (math.isfinite(out.critic_loss) and math.isfinite(out.actor_loss)):
                raise TrainingDiverged(
                    f"non-finite loss at episode {ep} slot {t}: "
                    f"critic={out.critic_loss} actor={out.actor_loss}")
            tracker.record(res.reward)
            state = res.next_state
        if (ep + 1) % METRICS_EVERY_EPISODES == 0:
            metrics.append(tracker.snapshot())
    return TrainResult(nets, metrics)
