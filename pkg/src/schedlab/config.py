"""Run configuration and seed management.

Every tunable of the lab lives in one flat dataclass so a run is fully
described by a single JSON object.  Field names follow the system-parameter
table of the study this lab reproduces, in snake_case.  Physics constants
(cell geometry, path loss, fading) ride along so the radio layer has no
hidden knobs.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

MODE_STRAIGHTFORWARD = "straightforward"
MODE_TDRL = "tdrl"

FLAG_MULTI_HEAD = "mh"
FLAG_REWARD_SHAPING = "rs"
FLAG_IMPORTANCE_SAMPLING = "is"

_KNOWN_FLAGS = (FLAG_MULTI_HEAD, FLAG_REWARD_SHAPING, FLAG_IMPORTANCE_SAMPLING)


class ConfigError(ValueError):
    """Raised when a configuration fails validation; message names the field."""


@dataclass
class SystemConfig:
    # --- scenario size ---
    num_users: int = 5
    num_rbs: int = 20
    # --- link / traffic parameters ---
    tx_psd_dbm_hz: float = 20.0
    noise_psd_dbm_hz: float = -90.0
    tti_seconds: float = 125e-6
    rb_bandwidth_hz: float = 180e3
    packet_size_bytes: int = 32
    arrival_prob: float = 0.1
    eps_max: float = 1e-5
    d_min: int = 5
    d_max: int = 7
    log_phi_max: float = 3.8
    phi_log_base: str = "e"  # "e" or "10"; base used to read log_phi_max
    # --- radio geometry and fading ---
    cell_radius_m: float = 100.0
    user_speed_mps: float = 5.0
    pathloss_const_db: float = 45.0
    pathloss_slope_db: float = 30.0
    min_distance_m: float = 1.0
    rician_k: float = 0.6
    gain_hold_prob: float = 0.8
    snr_offset_db: float = 0.0
    # --- learning parameters ---
    sigma: float = 1.0
    delta: float = 0.4
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    tau: float = 1e-3
    gamma: float = 0.9
    replay_size: int = 10000
    batch_size: int = 20
    slots_per_episode: int = 200
    episodes: int = 300  # desk-scale budget where the assisted trainer leads
    psi_min: float = 0.0
    psi_max: float = 1.0
    # --- run shape ---
    mode: str = MODE_TDRL
    flags: list[str] = field(default_factory=lambda: list(_KNOWN_FLAGS))
    seed: int = 0
    # --- online fine-tuning ---
    param_noise_std: float = 0.1
    param_noise_decay: float = 5e4
    deadline_budget_s: float = math.inf

    # Derived quantities -------------------------------------------------

    @property
    def packet_bits(self) -> int:
        return 8 * self.packet_size_bytes

    @property
    def phi_max(self) -> float:
        base = math.e if self.phi_log_base == "e" else 10.0
        return base ** self.log_phi_max

    def log_phi(self, phi: float) -> float:
        if self.phi_log_base == "e":
            return math.log(phi)
        return math.log10(phi)

    @property
    def multi_head(self) -> bool:
        return FLAG_MULTI_HEAD in self.flags

    @property
    def reward_shaping(self) -> bool:
        return FLAG_REWARD_SHAPING in self.flags

    @property
    def importance_sampling(self) -> bool:
        return FLAG_IMPORTANCE_SAMPLING in self.flags

    # Validation ----------------------------------------------------------

    def validate(self) -> "SystemConfig":
        def bad(name, why):
            raise ConfigError(f"config field '{name}': {why}")

        if self.num_users < 1:
            bad("num_users", "must be >= 1")
        if self.num_rbs < 0:
            bad("num_rbs", "must be >= 0")
        for name in ("tti_seconds", "rb_bandwidth_hz", "cell_radius_m",
                     "rician_k", "sigma", "actor_lr", "critic_lr"):
            if getattr(self, name) <= 0:
                bad(name, "must be > 0")
        if self.packet_size_bytes < 1:
            bad("packet_size_bytes", "must be >= 1")
        if not 0.0 < self.arrival_prob < 1.0:
            bad("arrival_prob", "must be in (0, 1)")
        if not 0.0 < self.eps_max < 0.5:
            bad("eps_max", "must be in (0, 0.5)")
        if self.d_min < 1:
            bad("d_min", "must be >= 1")
        if self.d_max < self.d_min:
            bad("d_max", "must be >= d_min")
        if self.phi_log_base not in ("e", "10"):
            bad("phi_log_base", "must be 'e' or '10'")
        if self.log_phi_max <= 0:
            bad("log_phi_max", "must be > 0")
        if self.tti_seconds * self.rb_bandwidth_hz <= 1.0:
            bad("rb_bandwidth_hz", "symbols per RB (tti_seconds * rb_bandwidth_hz) must exceed 1")
        if self.user_speed_mps < 0:
            bad("user_speed_mps", "must be >= 0")
        if self.min_distance_m <= 0:
            bad("min_distance_m", "must be > 0")
        if not 0.0 <= self.gain_hold_prob <= 1.0:
            bad("gain_hold_prob", "must be in [0, 1]")
        if self.delta < 0:
            bad("delta", "must be >= 0")
        if not 0.0 <= self.tau <= 1.0:
            bad("tau", "must be in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            bad("gamma", "must be in [0, 1)")
        if self.replay_size < 1:
            bad("replay_size", "must be >= 1")
        if self.batch_size < 1:
            bad("batch_size", "must be >= 1")
        if self.slots_per_episode < 1:
            bad("slots_per_episode", "must be >= 1")
        if self.episodes < 1:
            bad("episodes", "must be >= 1")
        if self.psi_max < self.psi_min:
            bad("psi_max", "must be >= psi_min")
        if self.mode not in (MODE_STRAIGHTFORWARD, MODE_TDRL):
            bad("mode", f"must be '{MODE_STRAIGHTFORWARD}' or '{MODE_TDRL}'")
        for f in self.flags:
            if f not in _KNOWN_FLAGS:
                bad("flags", f"unknown flag '{f}' (known: {', '.join(_KNOWN_FLAGS)})")
        if len(set(self.flags)) != len(self.flags):
            bad("flags", "duplicate flag")
        if self.mode == MODE_STRAIGHTFORWARD and FLAG_REWARD_SHAPING in self.flags:
            bad("flags", "reward shaping ('rs') requires tdrl mode")
        if not 0 <= self.seed < 2 ** 64:
            bad("seed", "must fit in an unsigned 64-bit integer")
        if self.param_noise_std < 0:
            bad("param_noise_std", "must be >= 0")
        if self.param_noise_decay < 0:
            bad("param_noise_decay", "must be >= 0")
        if not (self.deadline_budget_s >= 0):
            bad("deadline_budget_s", "must be >= 0")
        return self

    # JSON round trip ------------------------------------------------------

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        if d["deadline_budget_s"] == math.inf:
            d["deadline_budget_s"] = "inf"
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SystemConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config JSON must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"config field '{sorted(unknown)[0]}': unknown field")
        if raw.get("deadline_budget_s") == "inf":
            raw["deadline_budget_s"] = math.inf
        cfg = cls(**raw)
        return cfg.validate()


# Seed fan-out --------------------------------------------------------------

_STREAMS = ("channel", "arrivals", "init", "exploration", "sampling")


class RngBundle:
    """Named random streams derived from one master seed.

    Fan-out is by fixed spawn order so a master seed pins the whole run:
    channel fading/positions, packet arrivals, network init, exploration
    noise, and replay sampling each draw from their own generator.
    """

    def __init__(self, master_seed: int):
        self.master_seed = master_seed
        children = np.random.SeedSequence(master_seed).spawn(len(_STREAMS))
        for name, child in zip(_STREAMS, children):
            setattr(self, name, np.random.default_rng(child))

    channel: np.random.Generator
    arrivals: np.random.Generator
    init: np.random.Generator
    exploration: np.random.Generator
    sampling: np.random.Generator
