"""Split BS/server loop: wire codecs, deadline cache, parameter pushes."""

import threading
import socket
import time

import numpy as np
import pytest

from schedlab import nn
from schedlab.config import RngBundle, SystemConfig
from schedlab.drl import build_networks
from schedlab.metrics import WindowMetrics
from schedlab.online import (
    MSG_ACK,
    MSG_ACTOR_PARAMS,
    MSG_METRICS,
    MSG_TRANSITIONS,
    BsAgent,
    EdgeServer,
    FrameReader,
    ProtocolError,
    apply_param_noise,
    connect_and_run,
    decode_metrics,
    decode_transitions,
    encode_metrics,
    encode_transitions,
    frame,
    run_online,
    serve,
)
from schedlab.replay import Transition


def make_transition(slot=7, sd=4, ad=2):
    rng = np.random.default_rng(slot)
    return Transition(
        state=rng.normal(size=sd),
        action=rng.uniform(size=ad),
        reward=rng.normal(size=ad),
        next_state=rng.normal(size=sd),
        loss_flags=rng.uniform(size=ad) > 0.5,
        slot=slot,
    )


def tiny_cfg(**over):
    base = dict(num_users=2, num_rbs=4, episodes=5, slots_per_episode=20,
                replay_size=256, batch_size=4, seed=3)
    base.update(over)
    return SystemConfig(**base)


class TestFraming:
    def test_frame_layout(self):
        f = frame(MSG_ACK, b"xy")
        assert f == bytes([MSG_ACK]) + (2).to_bytes(4, "little") + b"xy"

    def test_reader_handles_byte_dribble(self):
        f = frame(MSG_METRICS, b"abc") + frame(MSG_ACK, b"")
        reader = FrameReader()
        got = []
        for i in range(len(f)):
            reader.feed(f[i:i + 1])
            msg = reader.next()
            if msg:
                got.append(msg)
        assert got == [(MSG_METRICS, b"abc"), (MSG_ACK, b"")]

    def test_unknown_tag_rejected(self):
        reader = FrameReader()
        reader.feed(frame(MSG_ACK, b"")[:0] + bytes([0x7F]) + b"\x00\x00\x00\x00")
        with pytest.raises(ProtocolError):
            reader.next()


class TestTransitionCodec:
    def test_round_trip_bit_exact(self):
        batch = [make_transition(slot) for slot in range(5)]
        back = decode_transitions(encode_transitions(batch))
        for a, b in zip(batch, back):
            assert np.array_equal(a.state, b.state)
            assert np.array_equal(a.action, b.action)
            assert np.array_equal(a.reward, b.reward)
            assert np.array_equal(a.next_state, b.next_state)
            assert np.array_equal(a.loss_flags, b.loss_flags)
            assert a.slot == b.slot

    def test_empty_batch_rejected(self):
        with pytest.raises(ProtocolError):
            encode_transitions([])

    def test_oversize_batch_rejected(self):
        with pytest.raises(ProtocolError):
            encode_transitions([make_transition(s) for s in range(33)])

    def test_ragged_batch_rejected(self):
        with pytest.raises(ProtocolError):
            encode_transitions([make_transition(0, sd=4), make_transition(1, sd=5)])

    def test_truncated_payload_rejected(self):
        blob = encode_transitions([make_transition(0)])
        for cut in (0, 3, len(blob) - 1):
            with pytest.raises(ProtocolError):
                decode_transitions(blob[:cut])
        with pytest.raises(ProtocolError):
            decode_transitions(blob + b"\x00")


class TestMetricsCodec:
    def test_round_trip(self):
        m = WindowMetrics(window=3, loss_prob=[0.5, 0.25],
                          avg_reward=[1.5, 2.0], worst_reward=1.5,
                          deadline_misses=4)
        assert decode_metrics(encode_metrics(m)) == m

    def test_garbage_rejected(self):
        with pytest.raises(ProtocolError):
            decode_metrics(b"{not json")


class FakeClock:
    """Deterministic perf counter advancing a fixed step per call."""

    def __init__(self, step):
        self.step = step
        self.now = 0.0

    def __call__(self):
        self.now += self.step
        return self.now


class TestBsAgent:
    def make_actor(self, version=0):
        actor = nn.MlpParams.init([4, 6, 2], nn.OUT_UNIT_TANH,
                                  np.random.default_rng(0))
        actor.version = version
        return actor

    def test_no_params_serves_nobody(self):
        agent = BsAgent(tiny_cfg())
        act, cached = agent.step(np.zeros(4))
        assert np.array_equal(act, np.zeros(2)) and cached

    def test_within_budget_uses_fresh_action(self):
        agent = BsAgent(tiny_cfg(), time_fn=FakeClock(1e-9))
        agent.receive_params(self.make_actor())
        act, cached = agent.step(np.zeros(4))
        assert not cached
        assert agent.deadline_misses == 0
        assert np.allclose(act, nn.forward(agent.actor, np.zeros(4)))

    def test_over_budget_falls_back_to_cache(self):
        cfg = tiny_cfg(deadline_budget_s=1e-6)
        agent = BsAgent(cfg, time_fn=FakeClock(1.0))
        agent.receive_params(self.make_actor())
        first, cached = agent.step(np.zeros(4))
        assert cached and np.array_equal(first, np.zeros(2))
        assert agent.deadline_misses == 1
        # the fresh action was still cached for the next slot
        second, cached = agent.step(np.ones(4))
        assert cached
        assert np.allclose(second, nn.forward(agent.actor, np.zeros(4)))

    def test_stale_version_ignored(self):
        agent = BsAgent(tiny_cfg())
        agent.receive_params(self.make_actor(version=5))
        newer = self.make_actor(version=5)
        newer.weights[0][:] = 99.0
        agent.receive_params(newer)
        assert agent.actor.weights[0][0, 0] != 99.0
        newer.version = 6
        agent.receive_params(newer)
        assert agent.version == 6


class TestParamNoise:
    def test_initial_relative_std(self):
        params = nn.MlpParams([1, 1], [np.full((1, 1), 1.0)], [np.zeros(1)],
                              nn.OUT_LINEAR)
        big = nn.MlpParams([1000, 200], [np.full((200, 1000), 2.0)],
                           [np.zeros(200)], nn.OUT_LINEAR)
        apply_param_noise(big, std=0.1, decay=5e4, t_slots=0, tti=125e-6,
                          rng=np.random.default_rng(0))
        rel = big.weights[0] / 2.0 - 1.0
        assert rel.std() == pytest.approx(0.1, rel=0.02)

    def test_decays_below_one_percent_within_a_slot(self):
        w = np.full((200, 200), 1.0)
        params = nn.MlpParams([200, 200], [w], [np.zeros(200)], nn.OUT_LINEAR)
        apply_param_noise(params, std=0.1, decay=5e4, t_slots=1, tti=125e-6,
                          rng=np.random.default_rng(1))
        rel = params.weights[0] - 1.0
        assert rel.std() < 0.001  # 1% of the t=0 level

    def test_zero_std_is_identity(self):
        w = np.arange(6.0).reshape(2, 3)
        params = nn.MlpParams([3, 2], [w.copy()], [np.ones(2)], nn.OUT_LINEAR)
        apply_param_noise(params, std=0.0, decay=5e4, t_slots=0, tti=125e-6,
                          rng=np.random.default_rng(2))
        assert np.array_equal(params.weights[0], w)


class TestEdgeServer:
    def make_server(self, cfg=None):
        cfg = cfg or tiny_cfg()
        rngs = RngBundle(cfg.seed)
        nets = build_networks(cfg.num_users, cfg.multi_head, rngs.init)
        return EdgeServer(cfg, nets, rngs)

    def test_idles_without_transitions(self):
        assert self.make_server().iterate() is None

    def test_versions_increase_per_iteration(self):
        server = self.make_server()
        batch = [make_transition(s, sd=4, ad=2) for s in range(4)]
        tag, payload = server.handle(MSG_TRANSITIONS, encode_transitions(batch))
        assert tag == MSG_ACTOR_PARAMS
        first = nn.deserialize(payload).version
        tag, payload = server.handle(MSG_TRANSITIONS, encode_transitions(batch))
        assert nn.deserialize(payload).version == first + 1

    def test_metrics_message_acked(self):
        server = self.make_server()
        m = WindowMetrics(0, [0.0, 0.0], [0.0, 0.0], 0.0)
        assert server.handle(MSG_METRICS, encode_metrics(m)) == (MSG_ACK, b"")


class TestInferenceTiming:
    def test_p99_under_one_tti(self):
        actor = nn.MlpParams.init([6, 60, 60, 3], nn.OUT_UNIT_TANH,
                                  np.random.default_rng(0))
        x = np.random.default_rng(1).uniform(size=6)
        nn.forward(actor, x)  # warm up
        times = []
        for _ in range(1000):
            t0 = time.perf_counter()
            nn.forward(actor, x)
            times.append(time.perf_counter() - t0)
        assert np.percentile(times, 99) < 125e-6


class TestOnlineLoop:
    def test_in_process_run_shape(self):
        res = run_online(tiny_cfg(), actor_init=None, episodes=5)
        assert len(res.metrics) == 1
        assert res.param_pushes == 5 * 20
        assert res.final_actor.version >= 0
        assert res.deadline_misses == 0  # infinite budget by default

    def test_same_seed_reproduces(self):
        a = run_online(tiny_cfg(), None, episodes=5)
        b = run_online(tiny_cfg(), None, episodes=5)
        assert a.metrics == b.metrics
        assert np.array_equal(a.final_actor.weights[0], b.final_actor.weights[0])

    def test_offline_actor_is_adopted(self):
        actor = nn.MlpParams.init([4, 40, 40, 2], nn.OUT_UNIT_TANH,
                                  np.random.default_rng(9))
        actor.version = 0
        res = run_online(tiny_cfg(episodes=5), actor_init=actor, episodes=5)
        assert len(res.metrics) == 1

    def test_offline_critic_changes_training_path(self):
        cfg = tiny_cfg()  # all assist flags on: multi-head critic, 2 heads
        critic = nn.MlpParams.init([6, 60, 60, 2], nn.OUT_LINEAR,
                                   np.random.default_rng(11))
        warm = run_online(cfg, None, episodes=5, critic_init=critic)
        cold = run_online(cfg, None, episodes=5)
        assert not np.array_equal(warm.final_actor.weights[0],
                                  cold.final_actor.weights[0])

    def test_offline_critic_shape_mismatch_rejected(self):
        bad = nn.MlpParams.init([4, 8, 8, 1], nn.OUT_LINEAR,
                                np.random.default_rng(11))
        with pytest.raises(ValueError, match="dims"):
            run_online(tiny_cfg(), None, episodes=1, critic_init=bad)

    def test_socket_round_trip(self):
        cfg = tiny_cfg(episodes=3)
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        ready = threading.Event()
        pushes_box = {}

        def server_main():
            pushes_box["n"] = serve(cfg, "127.0.0.1", port, ready=ready)

        th = threading.Thread(target=server_main, daemon=True)
        th.start()
        assert ready.wait(5.0)
        res = connect_and_run(cfg, "127.0.0.1", port, actor_init=None, episodes=3)
        th.join(10.0)
        assert not th.is_alive()
        assert res.param_pushes == 3 * 20
        assert pushes_box["n"] == res.param_pushes
        assert len(res.metrics) == 0  # below the 5-episode window boundary
