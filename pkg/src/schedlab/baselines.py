"""Classical schedulers for comparison, and the shared evaluation loop.

All three policies admit whole users against the RB budget using the
per-user minimum-RB counts; a user whose requirement does not fit is
skipped and the scan continues down the order.  Queues showing zero HoL
delay are empty and never admitted.

* rr: fixed cyclic order with a persistent cursor.
* edf: most urgent first (largest HoL delay).  Deliberately ignores the
  lower edge of the delivery window, as the classic discipline does.
* mt: cheapest first (smallest minimum-RB count), a max-throughput greedy.
"""

from __future__ import annotations

import numpy as np

from .config import MODE_STRAIGHTFORWARD
from .env import SchedulerEnv
from .metrics import WindowMetrics


class RoundRobin:
    name = "rr"

    def __init__(self, num_users: int):
        self.num_users = num_users
        self.cursor = 0

    def decide(self, d: np.ndarray, n_star: np.ndarray, n_total: int) -> np.ndarray:
        x = np.zeros(self.num_users, dtype=np.int64)
        remaining = n_total
        last_admitted = None
        for off in range(self.num_users):
            k = (self.cursor + off) % self.num_users
            if d[k] >= 1 and n_star[k] <= remaining:
                x[k] = 1
                remaining -= int(n_star[k])
                last_admitted = k
        if last_admitted is not None:
            self.cursor = (last_admitted + 1) % self.num_users
        return x


class _GreedyOrder:
    def __init__(self, num_users: int):
        self.num_users = num_users

    def order(self, d: np.ndarray, n_star: np.ndarray) -> list[int]:
        raise NotImplementedError

    def decide(self, d: np.ndarray, n_star: np.ndarray, n_total: int) -> np.ndarray:
        x = np.zeros(self.num_users, dtype=np.int64)
        remaining = n_total
        for k in self.order(d, n_star):
            if n_star[k] <= remaining:
                x[k] = 1
                remaining -= int(n_star[k])
        return x


class EarliestDeadlineFirst(_GreedyOrder):
    name = "edf"

    def order(self, d, n_star):
        ks = [k for k in range(self.num_users) if d[k] >= 1]
        return sorted(ks, key=lambda k: (-int(d[k]), k))


class MaxThroughput(_GreedyOrder):
    name = "mt"

    def order(self, d, n_star):
        ks = [k for k in range(self.num_users) if d[k] >= 1]
        return sorted(ks, key=lambda k: (int(n_star[k]), k))


POLICIES = {
    "rr": RoundRobin,
    "edf": EarliestDeadlineFirst,
    "mt": MaxThroughput,
}


def make_policy(name: str, num_users: int):
    """Policy callable (state, env) -> action for the evaluation loop."""
    try:
        impl = POLICIES[name](num_users)
    except KeyError:
        raise ValueError(f"unknown policy '{name}' (known: {', '.join(POLICIES)})")

    def fn(state, env: SchedulerEnv):
        x = impl.decide(env.hol_delays(), env.n_star, env.cfg.num_rbs)
        if env.cfg.mode == MODE_STRAIGHTFORWARD:
            # that action space wants explicit RB counts, not admit bits
            return x * np.asarray(env.n_star, dtype=np.int64)
        return x

    return fn


def evaluate(policy, env: SchedulerEnv, episodes: int, window: int = 0) -> WindowMetrics:
    """Run a frozen policy and aggregate losses and rewards over all episodes.

    Loss probability is lost/arrived per user over the whole run (0 when a
    user saw no arrivals); avg_reward is the per-slot mean of the unshaped
    reward; worst_reward is the minimum of those means across users.
    """
    arrived0 = env.arrived_total.copy()
    lost0 = env.lost_total.copy()
    reward_sum = np.zeros(env.cfg.num_users)
    slots = 0
    for _ in range(episodes):
        state = env.reset()
        for _ in range(env.cfg.slots_per_episode):
            res = env.step(policy(state, env))
            reward_sum += res.reward
            slots += 1
            state = res.next_state
    arrived = env.arrived_total - arrived0
    lost = env.lost_total - lost0
    loss_prob = np.where(arrived > 0, lost / np.maximum(arrived, 1), 0.0)
    avg = reward_sum / max(slots, 1)
    return WindowMetrics(
        window=window,
        loss_prob=[float(v) for v in loss_prob],
        avg_reward=[float(v) for v in avg],
        worst_reward=float(avg.min()),
    )
