"""On-line fine-tuning split across a base station and an edge server.

The BS side runs the per-slot loop: observe, act within a hard inference
deadline (falling back to the previous slot's cached action on a miss),
execute, and queue the transition for upload.  The server side owns replay
and training, and pushes back a noised, version-stamped actor after each
iteration.  The per-slot step consults only local snapshots; all messaging
happens between slots.

Framing: tag byte, u32 LE payload length, payload.  Parameter payloads are
exactly the nn codec bytes, so a pushed actor round-trips bit-for-bit.  The
default engine runs both roles in-process in lockstep (deterministic); the
same message flow also runs over a loopback TCP socket.
"""

from __future__ import annotations

import json
import math
import socket
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .config import RngBundle, SystemConfig
from .drl import (MetricsTracker, Networks, TrainingDiverged, build_networks,
                  to_discrete_action, train_step, training_reward)
from .env import SchedulerEnv
from .metrics import MetricsJson, WindowMetrics
from .replay import ReplayMemory, Transition

MSG_TRANSITIONS = 0x01
MSG_ACTOR_PARAMS = 0x02
MSG_ACK = 0x03
MSG_METRICS = 0x04

MAX_BATCH_PER_MESSAGE = 32

_FRAME = struct.Struct("<BI")
_TB_HEADER = struct.Struct("<IIII")  # count, state_dim, action_dim, reward_dim
_SLOT = struct.Struct("<Q")


class ProtocolError(ValueError):
    """Malformed frame or payload."""


# --- framing ------------------------------------------------------------------

def frame(tag: int, payload: bytes) -> bytes:
    return _FRAME.pack(tag, len(payload)) + payload


class FrameReader:
    """Incremental splitter of a byte stream into (tag, payload) messages."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def next(self) -> tuple[int, bytes] | None:
        if len(self._buf) < _FRAME.size:
            return None
        tag, length = _FRAME.unpack_from(self._buf, 0)
        if tag not in (MSG_TRANSITIONS, MSG_ACTOR_PARAMS, MSG_ACK, MSG_METRICS):
            raise ProtocolError(f"unknown message tag 0x{tag:02x}")
        if len(self._buf) < _FRAME.size + length:
            return None
        payload = bytes(self._buf[_FRAME.size:_FRAME.size + length])
        del self._buf[:_FRAME.size + length]
        return tag, payload


# --- payload codecs --------------------------------------------------------------

def encode_transitions(transitions: list[Transition]) -> bytes:
    if not transitions:
        raise ProtocolError("refusing to encode an empty transition batch")
    if len(transitions) > MAX_BATCH_PER_MESSAGE:
        raise ProtocolError(f"batch exceeds {MAX_BATCH_PER_MESSAGE} transitions")
    t0 = transitions[0]
    sd, ad, rd = t0.state.size, t0.action.size, t0.reward.size
    chunks = [_TB_HEADER.pack(len(transitions), sd, ad, rd)]
    for tr in transitions:
        if tr.state.size != sd or tr.action.size != ad or tr.reward.size != rd:
            raise ProtocolError("ragged transition batch")
        chunks.append(_SLOT.pack(tr.slot))
        chunks.append(np.ascontiguousarray(tr.state, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(tr.action, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(tr.reward, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(tr.next_state, dtype="<f8").tobytes())
        chunks.append(np.asarray(tr.loss_flags, dtype=np.uint8).tobytes())
    return b"".join(chunks)


def decode_transitions(payload: bytes) -> list[Transition]:
    if len(payload) < _TB_HEADER.size:
        raise ProtocolError("transition batch too short for header")
    count, sd, ad, rd = _TB_HEADER.unpack_from(payload, 0)
    if not 1 <= count <= MAX_BATCH_PER_MESSAGE:
        raise ProtocolError(f"bad transition count {count}")
    per = _SLOT.size + 8 * (2 * sd + ad + rd) + ad
    if len(payload) != _TB_HEADER.size + count * per:
        raise ProtocolError("transition batch length mismatch")
    out = []
    off = _TB_HEADER.size
    for _ in range(count):
        slot = _SLOT.unpack_from(payload, off)[0]
        off += _SLOT.size

        def take(n, dtype):
            nonlocal off
            width = 8 if dtype == "<f8" else 1
            arr = np.frombuffer(payload, dtype=dtype, count=n, offset=off).copy()
            off += n * width
            return arr

        state = take(sd, "<f8")
        action = take(ad, "<f8")
        reward = take(rd, "<f8")
        next_state = take(sd, "<f8")
        flags = take(ad, np.uint8).astype(bool)
        out.append(Transition(state, action, reward, next_state, flags, int(slot)))
    return out


def encode_metrics(m: WindowMetrics) -> bytes:
    return json.dumps(MetricsJson.window_dict(m), sort_keys=True).encode()


def decode_metrics(payload: bytes) -> WindowMetrics:
    try:
        return MetricsJson.window_from_dict(json.loads(payload.decode()))
    except (ValueError, KeyError) as e:
        raise ProtocolError(f"bad metrics payload: {e}") from e


# --- BS-side agent -----------------------------------------------------------------

class BsAgent:
    """Deadline-budgeted inference with a one-slot action cache.

    A fresh action is always computed and cached; when computing it blew the
    budget, the previously cached action is the one executed.  With no
    parameters received yet, the cache starts all-zeros (serve nobody).
    """

    def __init__(self, cfg: SystemConfig, time_fn=time.perf_counter):
        self.cfg = cfg
        self.time_fn = time_fn
        self.actor: nn.MlpParams | None = None
        self.version = -1
        self.cached_action = np.zeros(cfg.num_users)
        self.deadline_misses = 0

    def receive_params(self, params: nn.MlpParams) -> None:
        """Adopt a pushed actor unless it is stale (version not increasing)."""
        if params.version > self.version:
            self.actor = params
            self.version = params.version

    def step(self, state_vec: np.ndarray) -> tuple[np.ndarray, bool]:
        """Continuous action for this slot and whether the cache was used."""
        if self.actor is None:
            return self.cached_action.copy(), True
        t0 = self.time_fn()
        fresh = nn.forward(self.actor, state_vec)
        elapsed = self.time_fn() - t0
        if elapsed <= self.cfg.deadline_budget_s:
            act, used_cache = fresh, False
        else:
            act, used_cache = self.cached_action.copy(), True
            self.deadline_misses += 1
        self.cached_action = fresh
        return act, used_cache


# --- server-side trainer --------------------------------------------------------

def apply_param_noise(params: nn.MlpParams, std: float, decay: float,
                      t_slots: int, tti: float, rng: np.random.Generator) -> None:
    """Multiplicative exploration noise on every parameter, decaying in time.

    Each element is scaled by 1 + N(0, std^2) * exp(-decay * t * tti); at
    t = 0 the relative perturbation has std exactly `std`, and with the
    default rates it falls below 1% of that within the first slot.
    """
    scale = math.exp(-decay * t_slots * tti)
    for arrs in (params.weights, params.biases):
        for a in arrs:
            a *= 1.0 + rng.normal(0.0, std, size=a.shape) * scale


class EdgeServer:
    """Replay plus one training iteration per received batch flush."""

    def __init__(self, cfg: SystemConfig, nets: Networks, rngs: RngBundle):
        self.cfg = cfg
        self.nets = nets
        self.rngs = rngs
        self.memory = ReplayMemory(cfg.replay_size)
        self.version = nets.actor.version
        self.iterations = 0

    def consume(self, transitions: list[Transition]) -> None:
        for tr in transitions:
            self.memory.push(tr)

    def iterate(self) -> nn.MlpParams | None:
        """One optimization step; returns the actor to push, or None to idle."""
        if len(self.memory) == 0:
            return None
        out = train_step(self.nets, self.memory, self.cfg, self.rngs.sampling)
        if not (math.isfinite(out.critic_loss) and math.isfinite(out.actor_loss)):
            raise TrainingDiverged(
                f"non-finite loss at online iteration {self.iterations}")
        self.version += 1
        push = self.nets.actor.copy()
        push.version = self.version
        apply_param_noise(push, self.cfg.param_noise_std, self.cfg.param_noise_decay,
                          self.iterations, self.cfg.tti_seconds, self.rngs.exploration)
        self.iterations += 1
        return push

    def handle(self, tag: int, payload: bytes) -> tuple[int, bytes]:
        """Protocol dispatch: returns the (tag, payload) to send back."""
        if tag == MSG_TRANSITIONS:
            self.consume(decode_transitions(payload))
            push = self.iterate()
            if push is None:
                return MSG_ACK, b""
            return MSG_ACTOR_PARAMS, nn.serialize(push)
        if tag == MSG_METRICS:
            decode_metrics(payload)  # validated, then dropped: BS keeps the CSV
            return MSG_ACK, b""
        if tag == MSG_ACK:
            return MSG_ACK, b""
        raise ProtocolError(f"server cannot handle tag 0x{tag:02x}")


# --- orchestration -----------------------------------------------------------------

@dataclass
class OnlineResult:
    metrics: list[WindowMetrics]
    deadline_misses: int
    final_actor: nn.MlpParams
    param_pushes: int = 0


class _Loopback:
    """In-process transport: encoded frames out, decoded messages back."""

    def __init__(self, server: EdgeServer):
        self.server = server
        self.reader = FrameReader()
        self.pushes = 0

    def exchange(self, tag: int, payload: bytes) -> tuple[int, bytes]:
        self.reader.feed(frame(tag, payload))
        msg = self.reader.next()
        if msg is None:
            raise ProtocolError("incomplete frame in loopback")
        reply_tag, reply_payload = self.server.handle(*msg)
        if reply_tag == MSG_ACTOR_PARAMS:
            self.pushes += 1
        return reply_tag, reply_payload


class _SocketLink:
    """Client side of the lockstep exchange over a stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.rfile = sock.makefile("rb")
        self.pushes = 0

    def exchange(self, tag: int, payload: bytes) -> tuple[int, bytes]:
        self.sock.sendall(frame(tag, payload))
        header = self.rfile.read(_FRAME.size)
        if len(header) != _FRAME.size:
            raise ProtocolError("connection closed mid-frame")
        rtag, length = _FRAME.unpack(header)
        body = self.rfile.read(length)
        if len(body) != length:
            raise ProtocolError("connection closed mid-payload")
        if rtag == MSG_ACTOR_PARAMS:
            self.pushes += 1
        return rtag, body


def bs_loop(cfg: SystemConfig, link, env: SchedulerEnv, agent: BsAgent,
            episodes: int) -> tuple[list[WindowMetrics], BsAgent]:
    """The BS TTI loop against any lockstep link (in-process or socket)."""
    from .drl import METRICS_EVERY_EPISODES

    tracker = MetricsTracker(env)
    metrics: list[WindowMetrics] = []
    misses0 = agent.deadline_misses
    for ep in range(episodes):
        state = env.reset()
        for _ in range(cfg.slots_per_episode):
            flat = state.flattened()
            a_cont, _ = agent.step(flat)
            action = to_discrete_action(a_cont, cfg.mode, cfg.num_rbs)
            res = env.step(action)
            tr = Transition(flat, a_cont, training_reward(res, cfg),
                            res.next_state.flattened(), res.loss_flags.copy(),
                            env.slot)
            rtag, rpayload = link.exchange(MSG_TRANSITIONS, encode_transitions([tr]))
            if rtag == MSG_ACTOR_PARAMS:
                agent.receive_params(nn.deserialize(rpayload))
            tracker.record(res.reward)
            state = res.next_state
        if (ep + 1) % METRICS_EVERY_EPISODES == 0:
            tracker.deadline_misses = agent.deadline_misses - misses0
            misses0 = agent.deadline_misses
            m = tracker.snapshot()
            metrics.append(m)
            link.exchange(MSG_METRICS, encode_metrics(m))
    return metrics, agent


def _adopt_init(nets, actor_init: nn.MlpParams | None,
                critic_init: nn.MlpParams | None) -> None:
    """Overwrite freshly built networks with a warm start, copies included."""
    if actor_init is not None:
        nets.actor = actor_init.copy()
        nets.actor_copy = actor_init.copy()
    if critic_init is not None:
        if critic_init.dims != nets.critic.dims:
            raise ValueError(
                f"critic init dims {critic_init.dims} do not match "
                f"configured critic {nets.critic.dims}")
        nets.critic = critic_init.copy()
        nets.critic_copy = critic_init.copy()


def run_online(cfg: SystemConfig, actor_init: nn.MlpParams | None,
               episodes: int, rngs: RngBundle | None = None,
               critic_init: nn.MlpParams | None = None) -> OnlineResult:
    """Deterministic in-process fine-tuning run.

    actor_init seeds both the served actor and the trainer's fast copy; None
    starts from a fresh random actor.  critic_init warm-starts the trainer's
    value estimate the same way — without it the actor is pulled along the
    gradients of an untrained critic, which can unlearn a good warm start.
    The channel between BS and server is a real codec round trip, just
    without the socket underneath.
    """
    cfg.validate()
    rngs = rngs or RngBundle(cfg.seed)
    env = SchedulerEnv(cfg, rngs)
    nets = build_networks(cfg.num_users, cfg.multi_head, rngs.init)
    _adopt_init(nets, actor_init, critic_init)
    server = EdgeServer(cfg, nets, rngs)
    agent = BsAgent(cfg)
    # hand the BS its starting parameters through the codec, version as-is
    agent.receive_params(nn.deserialize(nn.serialize(nets.actor)))
    link = _Loopback(server)
    metrics, agent = bs_loop(cfg, link, env, agent, episodes)
    return OnlineResult(metrics, agent.deadline_misses, server.nets.actor.copy(),
                        link.pushes)


def serve(cfg: SystemConfig, host: str, port: int,
          rngs: RngBundle | None = None, ready=None,
          actor_init: nn.MlpParams | None = None,
          critic_init: nn.MlpParams | None = None) -> int:
    """Socket server role: one connection, lockstep replies until EOF.

    Survives a malformed client by closing that connection; returns the
    number of parameter pushes sent.
    """
    cfg.validate()
    rngs = rngs or RngBundle(cfg.seed)
    nets = build_networks(cfg.num_users, cfg.multi_head, rngs.init)
    _adopt_init(nets, actor_init, critic_init)
    server = EdgeServer(cfg, nets, rngs)
    pushes = 0
    with socket.create_server((host, port)) as listener:
        if ready is not None:
            ready.set()
        conn, _ = listener.accept()
        with conn:
            rfile = conn.makefile("rb")
            while True:
                header = rfile.read(_FRAME.size)
                if len(header) < _FRAME.size:
                    break
                tag, length = _FRAME.unpack(header)
                payload = rfile.read(length)
                if len(payload) != length:
                    break
                try:
                    rtag, rpayload = server.handle(tag, payload)
                except ProtocolError:
                    break
                if rtag == MSG_ACTOR_PARAMS:
                    pushes += 1
                conn.sendall(frame(rtag, rpayload))
    return pushes


def connect_and_run(cfg: SystemConfig, host: str, port: int,
                    actor_init: nn.MlpParams | None, episodes: int,
                    rngs: RngBundle | None = None) -> OnlineResult:
    """Socket BS role: same loop as run_online but across a real connection."""
    cfg.validate()
    rngs = rngs or RngBundle(cfg.seed)
    env = SchedulerEnv(cfg, rngs)
    agent = BsAgent(cfg)
    if actor_init is not None:
        agent.receive_params(nn.deserialize(nn.serialize(actor_init)))
    with socket.create_connection((host, port)) as sock:
        link = _SocketLink(sock)
        metrics, agent = bs_loop(cfg, link, env, agent, episodes)
        pushes = link.pushes
    final = agent.actor if agent.actor is not None else nn.MlpParams([1, 1], [np.zeros((1, 1))], [np.zeros(1)])
    return OnlineResult(metrics, agent.deadline_misses, final, pushes)
