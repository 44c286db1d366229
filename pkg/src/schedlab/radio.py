"""Radio and traffic layer: mobility, fading, SNR, and per-user HoL queues.

One user = one channel (position, small-scale gain, SNR) plus one FIFO of
packet arrival stamps.  Head-of-line (HoL) delay is measured in whole slots;
a packet that arrives during slot t is stamped t and first becomes visible
at slot t+1, so the smallest delay a served packet can have is 1 and an
observed delay of 0 means the queue is empty.

The queue's one-slot behaviour is a small Markov chain over HoL delays with
a closed form (hol_transition_prob); the Monte-Carlo oracle in
schedlab.oracles checks UserQueue.step against it entry by entry.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig


# --- fading and path loss ---------------------------------------------------

def rician_gain(rng: np.random.Generator, k_factor: float) -> float:
    """Small-scale power gain with a line-of-sight component.

    k_factor is the linear LoS/NLoS power ratio; the mean power gain is
    normalized to 1 so SNR scaling lives entirely in the path loss.
    """
    if k_factor <= 0:
        raise ValueError(f"k_factor must be > 0, got {k_factor}")
    los = math.sqrt(k_factor / (1.0 + k_factor))
    sigma = math.sqrt(0.5 / (1.0 + k_factor))  # per-component NLoS std
    re = los + sigma * rng.standard_normal()
    im = sigma * rng.standard_normal()
    return re * re + im * im


def path_loss_db(cfg: SystemConfig, distance_m: float) -> float:
    """Log-distance path loss; distance is clamped below to keep it finite."""
    d = max(distance_m, cfg.min_distance_m)
    return cfg.pathloss_const_db + cfg.pathloss_slope_db * math.log10(d)


def snr_linear(cfg: SystemConfig, distance_m: float, gain: float) -> float:
    """Linear SNR from transmit/noise PSDs, path loss, and small-scale gain."""
    db = (cfg.tx_psd_dbm_hz - cfg.noise_psd_dbm_hz + cfg.snr_offset_db
          - path_loss_db(cfg, distance_m))
    return 10.0 ** (db / 10.0) * gain


# --- mobility ----------------------------------------------------------------

@dataclass
class UserChannel:
    """Channel state of one user: where they are, how they move, what they see."""

    position: np.ndarray
    velocity: np.ndarray
    small_scale_gain: float
    snr: float

    @classmethod
    def spawn(cls, cfg: SystemConfig, rng: np.random.Generator) -> "UserChannel":
        """Fresh user: uniform position in the cell, random heading, fresh fade."""
        r = cfg.cell_radius_m * math.sqrt(rng.random())
        ang = rng.random() * 2.0 * math.pi
        position = np.array([r * math.cos(ang), r * math.sin(ang)])
        heading = rng.random() * 2.0 * math.pi
        velocity = cfg.user_speed_mps * np.array([math.cos(heading), math.sin(heading)])
        gain = rician_gain(rng, cfg.rician_k)
        ch = cls(position, velocity, gain, 0.0)
        ch._refresh_snr(cfg)
        return ch

    def _refresh_snr(self, cfg: SystemConfig) -> None:
        self.snr = snr_linear(cfg, float(np.linalg.norm(self.position)), self.small_scale_gain)

    def step(self, cfg: SystemConfig, rng: np.random.Generator) -> None:
        """Advance one slot: straight-line motion with specular wall bounce,
        then keep-or-redraw fading, then SNR refresh."""
        self.position = self.position + self.velocity * cfg.tti_seconds
        dist = float(np.linalg.norm(self.position))
        if dist > cfg.cell_radius_m:
            normal = self.position / dist
            self.velocity = self.velocity - 2.0 * float(self.velocity @ normal) * normal
            # mirror the overshoot back inside; per-slot travel is tiny so the
            # flat-wall approximation of the arc is exact to first order
            self.position = self.position - 2.0 * (dist - cfg.cell_radius_m) * normal
        if rng.random() >= cfg.gain_hold_prob:
            self.small_scale_gain = rician_gain(rng, cfg.rician_k)
        self._refresh_snr(cfg)


# --- queueing ----------------------------------------------------------------

@dataclass
class UserQueue:
    """FIFO of packet arrival stamps with deadline-window bookkeeping.

    arrival_prob: Bernoulli arrival probability per slot.
    d_min, d_max: delivery window in slots; serving outside it, or failing to
        decode, loses the packet; an unserved head at d_max is dropped.
    slot: current slot index; packets hold their arrival stamps.
    """

    arrival_prob: float
    d_min: int
    d_max: int
    slot: int = 0
    packets: deque = field(default_factory=deque)
    arrived_total: int = 0
    lost_total: int = 0

    def hol_delay(self) -> int:
        """Delay of the head packet in slots; 0 means empty."""
        return self.slot - self.packets[0] if self.packets else 0

    def __len__(self) -> int:
        return len(self.packets)

    def step(self, scheduled: bool, tx_success: bool, rng: np.random.Generator) -> int:
        """One slot of queue evolution: serve, drop, then admit.

        Args:
            scheduled: whether the head packet is transmitted this slot.
            tx_success: decode outcome of that transmission (ignored when not
                scheduled).

        Returns:
            Packets lost this slot (0 or 1): a served packet outside
            [d_min, d_max] or failing to decode, or an unserved head at d_max.
        """
        d = self.hol_delay()
        lost = 0
        if scheduled:
            if not self.packets:
                raise ValueError("cannot schedule an empty queue")
            self.packets.popleft()
            if not (self.d_min <= d <= self.d_max) or not tx_success:
                lost = 1
        elif self.packets and d == self.d_max:
            self.packets.popleft()
            lost = 1
        if rng.random() < self.arrival_prob:
            self.packets.append(self.slot)
            self.arrived_total += 1
        self.lost_total += lost
        self.slot += 1
        return lost


def hol_transition_prob(i: int, j: int, scheduled: bool, p: float, d_max: int) -> float:
    """Closed-form one-slot HoL transition probability P(d' = j | d = i, action).

    Derived from the Bernoulli arrival process: after the head departs, the
    next head is the earliest arrival behind it, whose position is geometric.
    """
    if not 0 < p < 1:
        raise ValueError(f"arrival probability must be in (0, 1), got {p}")
    if d_max < 1:
        raise ValueError(f"d_max must be >= 1, got {d_max}")
    if not (0 <= i <= d_max and 0 <= j <= d_max):
        raise ValueError(f"delays must be in [0, {d_max}], got i={i}, j={j}")
    if scheduled:
        if i == 0:
            raise ValueError("cannot schedule with an empty queue (i = 0)")
        if j == 0:
            return (1.0 - p) ** i
        if j <= i:
            return p * (1.0 - p) ** (i - j)
        return 0.0
    if i == 0:
        if j == 0:
            return 1.0 - p
        return p if j == 1 else 0.0
    if i < d_max:
        return 1.0 if j == i + 1 else 0.0
    # unserved head at the deadline is dropped; same renewal as a departure
    if j == 0:
        return (1.0 - p) ** d_max
    return p * (1.0 - p) ** (d_max - j)
