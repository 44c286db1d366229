"""Independent cross-checks for the load-bearing math.

Each suite re-derives a quantity by a different route than the production
code (exhaustive scan vs bisection, Monte-Carlo vs closed form, finite
differences vs analytic backprop) and reports agreement.  The CLI exposes
them so a run of the lab can self-verify on the target machine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fblcomms, nn, radio
from .fblcomms import LinkParams, decoding_error


# --- finite-blocklength suite ----------------------------------------------

def min_rbs_scan(link: LinkParams, phi: float) -> tuple[int, bool]:
    """min_rbs by exhaustive linear scan; the reference the bisection must match."""
    for n in range(1, link.n_total + 1):
        if decoding_error(link, n, phi) <= link.eps_max:
            return n, True
    return link.n_total, False


def draw_link(rng: np.random.Generator) -> tuple[LinkParams, float]:
    """Random but physically sane link draw for the scan-vs-bisection check."""
    link = LinkParams(
        packet_bits=int(rng.integers(64, 513)),
        symbols_per_rb=float(rng.uniform(2.0, 100.0)),
        n_total=int(rng.integers(4, 65)),
        eps_max=float(10.0 ** rng.uniform(-8, -0.4)),
    )
    phi = float(math.exp(rng.uniform(-2.0, 5.0)))
    return link, phi


@dataclass
class OracleReport:
    name: str
    checked: int
    failures: int
    worst: float  # largest deviation seen, in the suite's own units

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.name}: {self.checked} checks, "
                f"{self.failures} failures, worst deviation {self.worst:.3g}")


def run_fbl_suite(draws: int = 1000, seed: int = 0) -> OracleReport:
    """Bisection vs exhaustive scan, plus monotonicity in n and phi."""
    rng = np.random.default_rng(seed)
    failures = 0
    checked = 0
    for _ in range(draws):
        link, phi = draw_link(rng)
        checked += 1
        if fblcomms.min_rbs(link, phi) != min_rbs_scan(link, phi):
            failures += 1
        # strict decrease in n except where the clamp floor/ceiling flattens it
        prev = decoding_error(link, 1, phi)
        for n in range(2, link.n_total + 1):
            cur = decoding_error(link, n, phi)
            clamped = (prev <= fblcomms.Q_FLOOR or prev >= fblcomms.Q_CEIL)
            if not (cur < prev or (clamped and cur <= prev)):
                failures += 1
            prev = cur
        # strict decrease in phi at fixed n, same clamp carve-out
        n_mid = max(1, link.n_total // 2)
        e1 = decoding_error(link, n_mid, phi)
        e2 = decoding_error(link, n_mid, phi * 1.25)
        if not (e2 < e1 or e1 <= fblcomms.Q_FLOOR or e1 >= fblcomms.Q_CEIL):
            failures += 1
    return OracleReport("fbl min-RB scan + monotonicity", checked, failures, 0.0)


# --- HoL-delay Markov suite -------------------------------------------------

def simulate_transition_row(i: int, scheduled: bool, p: float, d_max: int,
                            trials: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical next-HoL distribution from `trials` single-slot queue runs.

    Each trial rebuilds a queue whose head-of-line delay is i, with the
    packets behind the head drawn from the conditional arrival process, then
    advances one slot through UserQueue.step.  Only the second packet can
    become the head within one slot, so the rebuild stops there.
    """
    counts = np.zeros(d_max + 2, dtype=np.int64)
    now = d_max + 1  # any slot index >= i works; keep stamps non-negative
    # gap from head to the next arrival behind it, geometric on {1, 2, ...}
    gaps = rng.geometric(p, size=trials) if i > 1 else None
    for t in range(trials):
        q = radio.UserQueue(arrival_prob=p, d_min=1, d_max=d_max, slot=now)
        if i > 0:
            q.packets.append(now - i)
            if i > 1 and gaps[t] <= i - 1:
                q.packets.append(now - i + int(gaps[t]))
        q.step(scheduled=scheduled, tx_success=True, rng=rng)
        counts[q.hol_delay()] += 1
    return counts[: d_max + 1] / trials


def run_markov_suite(p: float = 0.1, d_max: int = 7, trials: int = 1_000_000,
                     seed: int = 0, tol: float = 0.005) -> OracleReport:
    """Closed-form HoL transition law vs queue-stepping Monte Carlo."""
    rng = np.random.default_rng(seed)
    failures = 0
    checked = 0
    worst = 0.0
    rows = [(i, False) for i in range(d_max + 1)] + [(i, True) for i in range(1, d_max + 1)]
    for i, scheduled in rows:
        closed = np.array([radio.hol_transition_prob(i, j, scheduled, p, d_max)
                           for j in range(d_max + 1)])
        if abs(closed.sum() - 1.0) > 1e-12:
            failures += 1
        emp = simulate_transition_row(i, scheduled, p, d_max, trials, rng)
        dev = float(np.abs(emp - closed).max())
        worst = max(worst, dev)
        checked += d_max + 1
        if dev > tol:
            failures += 1
    return OracleReport("HoL Markov closed form vs Monte Carlo", checked, failures, worst)


# --- gradient suite ---------------------------------------------------------

def finite_diff_grads(loss_fn, params: "nn.MlpParams", step: float = 1e-5):
    """Central finite differences of a scalar loss over every parameter.

    Returns per-tensor gradient arrays shaped like params.weights/biases.
    """
    gw, gb = [], []
    for arrs, grads in ((params.weights, gw), (params.biases, gb)):
        for a in arrs:
            g = np.zeros_like(a)
            flat_a = a.ravel()
            flat_g = g.ravel()
            for idx in range(flat_a.size):
                orig = flat_a[idx]
                flat_a[idx] = orig + step
                up = loss_fn()
                flat_a[idx] = orig - step
                down = loss_fn()
                flat_a[idx] = orig
                flat_g[idx] = (up - down) / (2.0 * step)
            grads.append(g)
    return gw, gb


def tensor_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-30)
    return float(np.linalg.norm(analytic - numeric)) / denom


def run_gradcheck_suite(num_users: int = 3, batch: int = 4, seed: int = 0,
                        tol: float = 1e-4) -> OracleReport:
    """Analytic critic/actor loss gradients vs central finite differences."""
    from . import drl  # deferred: drl imports this module's sibling types

    rng = np.random.default_rng(seed)
    nets = drl.build_networks(num_users, multi_head=True, rng=rng)
    s = rng.uniform(0.05, 0.95, size=(batch, 2 * num_users))
    a = rng.uniform(0.05, 0.95, size=(batch, num_users))
    r = rng.uniform(0.0, 2.0, size=(batch, num_users))
    s2 = rng.uniform(0.05, 0.95, size=(batch, 2 * num_users))
    u = rng.uniform(0.5, 1.5, size=batch)
    gamma = 0.9

    out = drl.kddpg_losses(nets, s, a, r, s2, u, gamma)

    failures = 0
    worst = 0.0
    checked = 0

    def critic_loss():
        return drl.kddpg_losses(nets, s, a, r, s2, u, gamma).critic_loss

    fd_w, fd_b = finite_diff_grads(critic_loss, nets.critic_copy)
    for an, num in zip(out.critic_grads.weights + out.critic_grads.biases, fd_w + fd_b):
        err = tensor_rel_err(an, num)
        worst = max(worst, err)
        checked += 1
        if err > tol:
            failures += 1

    def actor_loss():
        return drl.kddpg_losses(nets, s, a, r, s2, u, gamma).actor_loss

    fd_w, fd_b = finite_diff_grads(actor_loss, nets.actor_copy)
    for an, num in zip(out.actor_grads.weights + out.actor_grads.biases, fd_w + fd_b):
        err = tensor_rel_err(an, num)
        worst = max(worst, err)
        checked += 1
        if err > tol:
            failures += 1

    return OracleReport("loss gradients vs finite differences", checked, failures, worst)
