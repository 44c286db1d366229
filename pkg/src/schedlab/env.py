"""Scheduling environment: slot-by-slot interaction of queues, links, actions.

Two action formulations share the same physics:

* straightforward: the agent picks a resource-block count per user directly;
  the reward is the sampled 0/1 delivery outcome.
* tdrl: the agent picks a binary serve/skip flag per user; the minimum-RB
  computation and the error expression absorb the link physics, the reward is
  the log of the expected delivery outcome, and an optional potential on HoL
  delay shapes it without changing the optimal policy.

State vectors are 2K long: normalized HoL delays first, then either
normalized log-SNRs (straightforward) or normalized minimum-RB counts (tdrl).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import MODE_STRAIGHTFORWARD, MODE_TDRL, RngBundle, SystemConfig
from .fblcomms import LinkParams, decoding_error, min_rbs
from .radio import UserChannel, UserQueue


# --- resource allocation ------------------------------------------------------

def allocate_rbs(x, n_star, n_total: int) -> np.ndarray:
    """Split the RB budget among the users picked for service.

    Demands are x_k * n_star_k.  Within budget they are granted as-is; over
    budget each user gets floor(demand * n_total / total_demand), which keeps
    the sum within n_total and can drive a user to zero blocks (that user is
    then effectively unserved this slot).
    """
    x = np.asarray(x, dtype=np.int64)
    n_star = np.asarray(n_star, dtype=np.int64)
    if x.shape != n_star.shape:
        raise ValueError("x and n_star must have matching shapes")
    if np.any((x != 0) & (x != 1)):
        raise ValueError("x entries must be binary")
    if np.any(n_star < 0):
        raise ValueError("n_star entries must be >= 0")
    demand = x * n_star
    total = int(demand.sum())
    if total <= n_total:
        return demand
    return (demand * n_total) // total


# --- rewards and shaping --------------------------------------------------------

def user_reward_straightforward(d: int, scheduled: bool, decode_ok: bool,
                                d_min: int, d_max: int) -> float:
    """Sampled delivery indicator: 1 iff served in the window and decoded."""
    return 1.0 if scheduled and decode_ok and d_min <= d <= d_max else 0.0


def user_reward_tdrl(d: int, scheduled: bool, eps: float, d_min: int, d_max: int) -> float:
    """Log-sensitivity reward -ln(1 - r) with r the expected delivery outcome.

    For a user served inside the window, r = 1 - eps and the reward reduces
    to -ln(eps), computed directly from eps so tiny error probabilities do
    not round away through 1 - (1 - eps).  Everyone else gets 0.
    """
    if not scheduled or not d_min <= d <= d_max:
        return 0.0
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    return -math.log(eps)


def potential(d: int, d_min: int, psi_min: float, psi_max: float) -> float:
    """HoL-delay potential: rises linearly to psi_max at d_min, flat after."""
    return psi_min + (psi_max - psi_min) * min(d, d_min) / d_min


def shape_reward(r_hat: float, d_now: int, d_next: int, gamma: float,
                 d_min: int, psi_min: float, psi_max: float) -> float:
    """Potential-based shaping: r_hat - psi(d_now) + gamma * psi(d_next)."""
    return (r_hat - potential(d_now, d_min, psi_min, psi_max)
            + gamma * potential(d_next, d_min, psi_min, psi_max))


# --- state --------------------------------------------------------------------

@dataclass
class NetworkState:
    """Observation handed to the agent; see module docstring for layout."""

    mode: str
    hol_norm: np.ndarray
    second_half: np.ndarray

    def flattened(self) -> np.ndarray:
        return np.concatenate([self.hol_norm, self.second_half])


@dataclass
class StepResult:
    next_state: NetworkState
    reward: np.ndarray          # per-user, unshaped
    shaped_reward: np.ndarray   # equals reward when shaping is off
    losses: np.ndarray          # packets lost this slot, per user
    loss_flags: np.ndarray      # scheduling-induced loss markers (replay weighting)
    scheduled: np.ndarray       # effective service flags after masking/allocation
    n_alloc: np.ndarray
    eps: np.ndarray             # decoding error of served users, NaN elsewhere
    masked: int                 # service requests dropped for empty queues
    hol_before: np.ndarray
    hol_after: np.ndarray


class SchedulerEnv:
    """Cell-scale simulator driven one slot at a time.

    Episode boundaries redraw user positions and headings and clear the
    queues; slot and loss/arrival counters run monotonically across episodes
    so windowed metrics are simple deltas.
    """

    def __init__(self, cfg: SystemConfig, rngs: RngBundle):
        cfg.validate()
        self.cfg = cfg
        self.rngs = rngs
        # a zero-RB cell still needs a well-formed link for min-RB lookups;
        # nothing is ever granted because the budget stays 0
        self.link = LinkParams(
            packet_bits=cfg.packet_bits,
            symbols_per_rb=cfg.tti_seconds * cfg.rb_bandwidth_hz,
            n_total=max(cfg.num_rbs, 1),
            eps_max=cfg.eps_max,
        )
        self.channels: list[UserChannel] = []
        self.queues = [
            UserQueue(arrival_prob=cfg.arrival_prob, d_min=cfg.d_min, d_max=cfg.d_max)
            for _ in range(cfg.num_users)
        ]
        self.n_star = np.ones(cfg.num_users, dtype=np.int64)
        self.feasible = np.zeros(cfg.num_users, dtype=bool)
        self.arrived_total = np.zeros(cfg.num_users, dtype=np.int64)
        self.lost_total = np.zeros(cfg.num_users, dtype=np.int64)
        self.slot = 0
        self.reset()

    # -- lifecycle --

    def reset(self) -> NetworkState:
        self.channels = [UserChannel.spawn(self.cfg, self.rngs.channel)
                         for _ in range(self.cfg.num_users)]
        for q in self.queues:
            q.packets.clear()
        return self.observe()

    def hol_delays(self) -> np.ndarray:
        return np.array([q.hol_delay() for q in self.queues], dtype=np.int64)

    def observe(self) -> NetworkState:
        cfg = self.cfg
        d = self.hol_delays()
        hol_norm = d / cfg.d_max
        for k, ch in enumerate(self.channels):
            self.n_star[k], self.feasible[k] = min_rbs(self.link, ch.snr)
        if cfg.mode == MODE_TDRL:
            second = self.n_star / max(cfg.num_rbs, 1)
        else:
            second = np.array([cfg.log_phi(ch.snr) for ch in self.channels])
            second = second / cfg.log_phi_max
        return NetworkState(cfg.mode, hol_norm, second)

    # -- dynamics --

    def step(self, action) -> StepResult:
        cfg = self.cfg
        action = np.asarray(action, dtype=np.int64)
        if action.shape != (cfg.num_users,):
            raise ValueError(f"action must have shape ({cfg.num_users},)")
        d_before = self.hol_delays()
        nonempty = d_before > 0

        if cfg.mode == MODE_TDRL:
            if np.any((action != 0) & (action != 1)):
                raise ValueError("tdrl actions must be binary")
            requested = action == 1
            x_eff = requested & nonempty
            n_alloc = allocate_rbs(x_eff.astype(np.int64), self.n_star, cfg.num_rbs)
        else:
            if np.any(action < 0) or np.any(action > cfg.num_rbs):
                raise ValueError(f"straightforward actions must lie in [0, {cfg.num_rbs}]")
            requested = action > 0
            n_req = np.where(nonempty, action, 0)
            n_alloc = allocate_rbs((n_req > 0).astype(np.int64), n_req, cfg.num_rbs)

        masked = int(np.count_nonzero(requested & ~nonempty))
        served = (n_alloc >= 1) & nonempty

        eps = np.full(cfg.num_users, np.nan)
        decode_ok = np.zeros(cfg.num_users, dtype=bool)
        for k in range(cfg.num_users):
            if served[k]:
                eps[k] = decoding_error(self.link, int(n_alloc[k]), self.channels[k].snr)
                decode_ok[k] = self.rngs.channel.random() >= eps[k]

        reward = np.zeros(cfg.num_users)
        for k in range(cfg.num_users):
            if cfg.mode == MODE_TDRL:
                reward[k] = user_reward_tdrl(
                    int(d_before[k]), bool(served[k]),
                    float(eps[k]) if served[k] else 1.0, cfg.d_min, cfg.d_max)
            else:
                reward[k] = user_reward_straightforward(
                    int(d_before[k]), bool(served[k]), bool(decode_ok[k]),
                    cfg.d_min, cfg.d_max)

        in_window = (d_before >= cfg.d_min) & (d_before <= cfg.d_max)
        loss_flags = (~served & (d_before == cfg.d_max)) | (served & ~in_window)

        losses = np.zeros(cfg.num_users, dtype=np.int64)
        for k, q in enumerate(self.queues):
            before_arr = q.arrived_total
            losses[k] = q.step(bool(served[k]), bool(decode_ok[k]), self.rngs.arrivals)
            self.arrived_total[k] += q.arrived_total - before_arr
        self.lost_total += losses

        d_after = self.hol_delays()
        if cfg.reward_shaping:
            shaped = np.array([
                shape_reward(reward[k], int(d_before[k]), int(d_after[k]),
                             cfg.gamma, cfg.d_min, cfg.psi_min, cfg.psi_max)
                for k in range(cfg.num_users)
            ])
        else:
            shaped = reward.copy()

        for ch in self.channels:
            ch.step(cfg, self.rngs.channel)
        self.slot += 1

        return StepResult(
            next_state=self.observe(),
            reward=reward,
            shaped_reward=shaped,
            losses=losses,
            loss_flags=loss_flags,
            scheduled=served,
            n_alloc=n_alloc,
            eps=eps,
            masked=masked,
            hol_before=d_before,
            hol_after=d_after,
        )
