"""Tabular value iteration on the single-user HoL-delay MDP.

Independent reference for two things: that potential shaping leaves the
greedy policy untouched while shifting Q by exactly the potential, and what
the optimal serve/wait policy looks like for a fixed decoding error.

States are HoL delays 0..d_max; action 1 (serve) is valid only when d >= 1.
"""

import numpy as np

from schedlab.env import potential, user_reward_tdrl
from schedlab.radio import hol_transition_prob

INVALID = -np.inf


def value_iteration(p, d_max, d_min, eps, gamma, psi_min=0.0, psi_max=1.0,
                    shaped=False, tol=1e-13, max_iter=200_000):
    """Returns (q, v, policy) arrays; q is (d_max+1, 2) with -inf where invalid."""
    n = d_max + 1
    trans = np.zeros((n, 2, n))
    reward = np.full((n, 2), INVALID)
    for d in range(n):
        for a in (0, 1):
            if a == 1 and d == 0:
                continue
            for j in range(n):
                trans[d, a, j] = hol_transition_prob(d, j, a == 1, p, d_max)
            r = user_reward_tdrl(d, a == 1, eps, d_min, d_max)
            if shaped:
                psi_next = sum(trans[d, a, j] * potential(j, d_min, psi_min, psi_max)
                               for j in range(n))
                r = r - potential(d, d_min, psi_min, psi_max) + gamma * psi_next
            reward[d, a] = r

    v = np.zeros(n)
    for _ in range(max_iter):
        q = reward + gamma * trans @ v
        q[0, 1] = INVALID
        v_new = q.max(axis=1)
        if np.abs(v_new - v).max() < tol:
            v = v_new
            break
        v = v_new
    q = reward + gamma * trans @ v
    q[0, 1] = INVALID
    policy = q.argmax(axis=1)  # ties resolve to wait (argmax takes first)
    return q, v, policy
