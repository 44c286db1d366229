"""Radio layer: path loss, fading, mobility, queue mechanics, transition law."""

import math
from collections import deque

import numpy as np
import pytest
from scipy.special import hyp1f1

from schedlab.config import SystemConfig
from schedlab.oracles import simulate_transition_row
from schedlab.radio import (UserChannel, UserQueue, hol_transition_prob,
                            path_loss_db, rician_gain, snr_linear)

CFG = SystemConfig()


class TestPathLossAndSnr:
    def test_known_distances(self):
        assert path_loss_db(CFG, 100.0) == pytest.approx(105.0)
        assert path_loss_db(CFG, 10.0) == pytest.approx(75.0)

    def test_clamped_near_base_station(self):
        assert path_loss_db(CFG, 0.01) == path_loss_db(CFG, CFG.min_distance_m)
        assert math.isfinite(path_loss_db(CFG, 0.0))

    def test_snr_positive_and_monotone_in_distance(self):
        s_near = snr_linear(CFG, 10.0, 1.0)
        s_far = snr_linear(CFG, 90.0, 1.0)
        assert s_near > s_far > 0.0

    def test_offset_scales_linearly(self):
        cfg = SystemConfig(snr_offset_db=-3.0)
        ratio = snr_linear(cfg, 50.0, 1.0) / snr_linear(CFG, 50.0, 1.0)
        assert ratio == pytest.approx(10.0 ** -0.3, rel=1e-12)

    def test_gain_multiplies(self):
        assert snr_linear(CFG, 50.0, 2.0) == pytest.approx(
            2.0 * snr_linear(CFG, 50.0, 1.0), rel=1e-12)


class TestRicianGain:
    def test_moments_match_closed_form(self):
        # power normalized to mean 1; amplitude mean from the Rice formula
        # sigma*sqrt(pi/2)*L_{1/2}(-K) with L the Laguerre function
        k = CFG.rician_k
        rng = np.random.default_rng(42)
        gains = np.array([rician_gain(rng, k) for _ in range(1_000_000)])
        assert gains.mean() == pytest.approx(1.0, rel=0.01)
        sigma = math.sqrt(0.5 / (1.0 + k))
        amp_mean = sigma * math.sqrt(math.pi / 2.0) * float(hyp1f1(-0.5, 1.0, -k))
        assert np.sqrt(gains).mean() == pytest.approx(amp_mean, rel=0.01)

    def test_positive(self):
        rng = np.random.default_rng(1)
        assert all(rician_gain(rng, 0.6) > 0.0 for _ in range(1000))

    def test_rejects_bad_k(self):
        with pytest.raises(ValueError):
            rician_gain(np.random.default_rng(0), 0.0)


class TestMobility:
    def test_spawn_inside_cell_with_speed(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            ch = UserChannel.spawn(CFG, rng)
            assert np.linalg.norm(ch.position) <= CFG.cell_radius_m
            assert np.linalg.norm(ch.velocity) == pytest.approx(CFG.user_speed_mps)
            assert ch.snr > 0.0

    def test_reflection_keeps_user_inside_and_speed_constant(self):
        # long slots + a user aimed at the wall force many bounces
        cfg = SystemConfig(tti_seconds=0.9, rb_bandwidth_hz=10.0, cell_radius_m=10.0,
                           user_speed_mps=5.0, gain_hold_prob=1.0)
        rng = np.random.default_rng(4)
        ch = UserChannel.spawn(cfg, rng)
        speed0 = np.linalg.norm(ch.velocity)
        for _ in range(500):
            ch.step(cfg, rng)
            assert np.linalg.norm(ch.position) <= cfg.cell_radius_m + 1e-9
            assert np.linalg.norm(ch.velocity) == pytest.approx(speed0)

    def test_gain_persistence_probability(self):
        rng = np.random.default_rng(5)
        ch = UserChannel.spawn(CFG, rng)
        held = 0
        trials = 20000
        for _ in range(trials):
            g = ch.small_scale_gain
            ch.step(CFG, rng)
            held += ch.small_scale_gain == g
        assert held / trials == pytest.approx(CFG.gain_hold_prob, abs=0.01)


def make_queue(p=0.1, d_min=5, d_max=7, slot=0):
    return UserQueue(arrival_prob=p, d_min=d_min, d_max=d_max, slot=slot)


class TestUserQueue:
    def test_empty_queue_has_zero_delay(self):
        assert make_queue().hol_delay() == 0

    def test_unscheduled_delay_increments(self):
        q = make_queue(p=0.0, slot=3)
        q.packets.append(0)
        assert q.hol_delay() == 3
        q.step(scheduled=False, tx_success=True, rng=np.random.default_rng(0))
        assert q.hol_delay() == 4

    def test_head_dropped_at_deadline(self):
        q = make_queue(p=0.0, slot=7)
        q.packets.append(0)
        lost = q.step(scheduled=False, tx_success=True, rng=np.random.default_rng(0))
        assert lost == 1 and len(q) == 0 and q.lost_total == 1

    def test_served_in_window_no_loss(self):
        q = make_queue(p=0.0, slot=6)
        q.packets.append(0)
        lost = q.step(scheduled=True, tx_success=True, rng=np.random.default_rng(0))
        assert lost == 0 and len(q) == 0

    def test_served_out_of_window_is_lost(self):
        q = make_queue(p=0.0, slot=2)
        q.packets.append(0)
        assert q.step(scheduled=True, tx_success=True, rng=np.random.default_rng(0)) == 1

    def test_served_decode_failure_is_lost(self):
        q = make_queue(p=0.0, slot=6)
        q.packets.append(0)
        assert q.step(scheduled=True, tx_success=False, rng=np.random.default_rng(0)) == 1

    def test_cannot_serve_empty(self):
        with pytest.raises(ValueError):
            make_queue().step(scheduled=True, tx_success=True,
                              rng=np.random.default_rng(0))

    def test_arrival_stamps_strictly_increase(self):
        q = make_queue(p=0.7)
        rng = np.random.default_rng(9)
        for _ in range(300):
            sched = len(q) > 0 and q.hol_delay() >= 1 and rng.random() < 0.5
            q.step(scheduled=sched, tx_success=True, rng=rng)
        stamps = list(q.packets)
        assert stamps == sorted(set(stamps))

    def test_observed_delay_never_exceeds_deadline(self):
        q = make_queue(p=0.9, d_max=4)
        rng = np.random.default_rng(10)
        for _ in range(2000):
            assert 0 <= q.hol_delay() <= 4
            q.step(scheduled=False, tx_success=True, rng=rng)

    def test_arrival_counter(self):
        q = make_queue(p=1.0)
        rng = np.random.default_rng(0)
        for _ in range(5):
            q.step(scheduled=False, tx_success=True, rng=rng)
        assert q.arrived_total == 5


class TestTransitionLaw:
    def test_served_examples(self):
        assert hol_transition_prob(3, 2, True, 0.1, 7) == pytest.approx(0.09)
        assert hol_transition_prob(3, 5, True, 0.1, 7) == 0.0
        assert hol_transition_prob(3, 0, True, 0.1, 7) == pytest.approx(0.729)

    def test_unserved_examples(self):
        assert hol_transition_prob(3, 4, False, 0.1, 7) == 1.0
        assert hol_transition_prob(3, 3, False, 0.1, 7) == 0.0
        assert hol_transition_prob(0, 1, False, 0.1, 7) == pytest.approx(0.1)
        assert hol_transition_prob(0, 0, False, 0.1, 7) == pytest.approx(0.9)
        assert hol_transition_prob(7, 7, False, 0.1, 7) == pytest.approx(0.1)
        assert hol_transition_prob(7, 0, False, 0.1, 7) == pytest.approx(0.9 ** 7)

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    @pytest.mark.parametrize("scheduled", [False, True])
    def test_rows_sum_to_one(self, p, scheduled):
        d_max = 7
        for i in range(0 if not scheduled else 1, d_max + 1):
            total = sum(hol_transition_prob(i, j, scheduled, p, d_max)
                        for j in range(d_max + 1))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            hol_transition_prob(0, 1, True, 0.1, 7)   # cannot serve empty
        with pytest.raises(ValueError):
            hol_transition_prob(8, 0, False, 0.1, 7)
        with pytest.raises(ValueError):
            hol_transition_prob(1, 0, False, 0.0, 7)

    def test_empirical_frequencies_match(self):
        # reduced-size version of the acceptance check (which runs 1e6/row)
        p, d_max, trials = 0.1, 7, 60_000
        rng = np.random.default_rng(21)
        rows = [(i, False) for i in range(d_max + 1)] + \
               [(i, True) for i in range(1, d_max + 1)]
        for i, scheduled in rows:
            emp = simulate_transition_row(i, scheduled, p, d_max, trials, rng)
            closed = np.array([hol_transition_prob(i, j, scheduled, p, d_max)
                               for j in range(d_max + 1)])
            assert np.abs(emp - closed).max() < 0.01
