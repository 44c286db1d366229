"""Rendering: determinism, structure, gap handling, input immutability."""

import xml.etree.ElementTree as ET

import pytest

from schedlab_plots.render import FIGURE_KINDS, render

HEADER = "window,user,loss_prob,avg_reward,worst_reward\n"

TWO_USER_CURVE = (
    HEADER +
    "0,0,0.9,0.1,0.05\n"
    "0,1,0.8,0.2,0.05\n"
    "1,0,0.7,0.5,0.3\n"
    "1,1,0.6,0.8,0.3\n"
    "2,0,0.5,1.0,0.9\n"
    "2,1,0.4,1.2,0.9\n"
)

TWO_POLICY_EVAL = (
    HEADER +
    "0,0,0.95,0.0,0.0\n"
    "0,1,0.9,0.1,0.0\n"
    "1,0,0.4,1.5,1.2\n"
    "1,1,0.3,1.8,1.2\n"
)

GAPPY = (
    HEADER +
    "0,0,0.9,0.1,0.1\n"
    "1,0,0.8,0.2,0.2\n"
    "3,0,0.6,0.4,0.4\n"   # window 2 missing: line must break, not bridge
)


def write(tmp_path, text):
    p = tmp_path / "in.csv"
    p.write_text(text)
    return p


class TestDeterminism:
    @pytest.mark.parametrize("kind", sorted(FIGURE_KINDS))
    def test_same_csv_gives_identical_bytes(self, tmp_path, kind):
        src = write(tmp_path, TWO_USER_CURVE)
        a = render(src, kind, tmp_path / "a.svg")
        b = render(src, kind, tmp_path / "b.svg")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes().startswith(b"<svg")

    @pytest.mark.parametrize("kind", sorted(FIGURE_KINDS))
    def test_output_is_well_formed_xml(self, tmp_path, kind):
        src = write(tmp_path, TWO_USER_CURVE)
        out = render(src, kind, tmp_path / "fig.svg")
        root = ET.fromstring(out.read_text())
        assert root.tag.endswith("svg")

    def test_identical_content_from_different_paths(self, tmp_path):
        # byte-stability must depend on CSV content, not on file location
        d1, d2 = tmp_path / "d1", tmp_path / "d2"
        d1.mkdir(), d2.mkdir()
        a = render(write(d1, TWO_USER_CURVE), "loss_curve", d1 / "o.svg")
        b = render(write(d2, TWO_USER_CURVE), "loss_curve", d2 / "o.svg")
        assert a.read_bytes() == b.read_bytes()

    def test_input_never_mutated(self, tmp_path):
        src = write(tmp_path, TWO_USER_CURVE)
        before = src.read_bytes()
        render(src, "reward_ablation", tmp_path / "o.svg")
        assert src.read_bytes() == before


class TestStructure:
    def test_two_policy_csv_gives_two_bar_groups(self, tmp_path):
        src = write(tmp_path, TWO_POLICY_EVAL)
        out = render(src, "loss_bars", tmp_path / "bars.svg")
        assert out.read_text().count('class="bar-group"') == 2

    def test_bar_group_holds_one_bar_per_user(self, tmp_path):
        src = write(tmp_path, TWO_POLICY_EVAL)
        text = render(src, "loss_bars", tmp_path / "bars.svg").read_text()
        # 2 windows x 2 users = 4 data bars (plus the white background rect)
        assert text.count("<rect") == 1 + 4

    def test_curve_draws_one_polyline_per_user(self, tmp_path):
        src = write(tmp_path, TWO_USER_CURVE)
        text = render(src, "loss_curve", tmp_path / "c.svg").read_text()
        assert text.count("<polyline") == 2

    def test_window_gaps_break_the_line(self, tmp_path):
        src = write(tmp_path, GAPPY)
        text = render(src, "loss_curve", tmp_path / "g.svg").read_text()
        # windows 0-1 form one segment; window 3 is isolated -> drawn as a dot
        assert text.count("<polyline") == 1
        assert text.count("<circle") == 1

    def test_cdf_is_monotone_step(self, tmp_path):
        src = write(tmp_path, TWO_USER_CURVE)
        text = render(src, "latency_cdf", tmp_path / "cdf.svg").read_text()
        line = next(l for l in text.splitlines() if "<polyline" in l)
        pts = line.split('points="')[1].split('"')[0].split()
        xs = [float(p.split(",")[0]) for p in pts]
        ys = [float(p.split(",")[1]) for p in pts]
        assert xs == sorted(xs)
        assert ys == sorted(ys, reverse=True)  # pixel y falls as CDF rises

    def test_unknown_kind_rejected(self, tmp_path):
        src = write(tmp_path, TWO_USER_CURVE)
        with pytest.raises(ValueError, match="unknown figure kind"):
            render(src, "pie", tmp_path / "p.svg")
