"""The four figure kinds, all consuming the one metrics CSV schema.

Windows missing from a series split its line into separate segments — gaps
are drawn as breaks, never interpolated across.
"""

from __future__ import annotations

from pathlib import Path

from .frame import MetricsFrame
from .svg import Canvas, Scale, color, fmt, plot_box


def _segments(series: list[tuple[int, float]]) -> list[list[tuple[int, float]]]:
    """Split a window-sorted series wherever window indices are not consecutive."""
    out: list[list[tuple[int, float]]] = []
    for w, v in series:
        if out and w == out[-1][-1][0] + 1:
            out[-1].append((w, v))
        else:
            out.append([(w, v)])
    return out


def _draw_series(canvas: Canvas, series, x_scale, y_scale, stroke, dash=None):
    for seg in _segments(series):
        if len(seg) == 1:
            w, v = seg[0]
            canvas.circle(x_scale(w), y_scale(v), 2.5, stroke)
        else:
            canvas.polyline([(x_scale(w), y_scale(v)) for w, v in seg],
                            stroke, dash=dash)


def _window_scales(frame: MetricsFrame, y_lo: float, y_hi: float):
    x_lo, x_hi, y_pix_lo, y_pix_hi = plot_box()
    windows = frame.windows()
    xs = Scale(windows[0], windows[-1], x_lo, x_hi)
    ys = Scale(y_lo, y_hi, y_pix_lo, y_pix_hi)
    return xs, ys


def loss_curve(frame: MetricsFrame) -> str:
    canvas = Canvas("packet loss per training window")
    xs, ys = _window_scales(frame, 0.0, 1.0)
    canvas.axes(xs, ys, "window", "loss")
    entries = []
    for user in frame.users():
        col = color(user)
        _draw_series(canvas, frame.series(user, "loss_prob"), xs, ys, col)
        entries.append((f"user {user}", col))
    canvas.legend(entries)
    return canvas.render()


def reward_ablation(frame: MetricsFrame) -> str:
    canvas = Canvas("per-user and worst-case reward")
    values = frame.column("avg_reward") + frame.column("worst_reward")
    xs, ys = _window_scales(frame, min(0.0, min(values)), max(values))
    canvas.axes(xs, ys, "window", "reward")
    entries = []
    for user in frame.users():
        col = color(user)
        _draw_series(canvas, frame.series(user, "avg_reward"), xs, ys, col)
        entries.append((f"user {user}", col))
    # worst-case curve: one value per window (repeated on each row)
    worst = sorted({(r.window, r.worst_reward) for r in frame.rows})
    _draw_series(canvas, worst, xs, ys, "black", dash="5,3")
    entries.append(("worst case", "black"))
    canvas.legend(entries)
    return canvas.render()


def loss_bars(frame: MetricsFrame) -> str:
    canvas = Canvas("packet loss by policy window")
    x_lo, x_hi, y_pix_lo, y_pix_hi = plot_box()
    windows = frame.windows()
    users = frame.users()
    ys = Scale(0.0, 1.0, y_pix_lo, y_pix_hi)
    canvas.axes(Scale(0, len(windows), x_lo, x_hi), ys, "window group", "loss")
    group_width = (x_hi - x_lo) / len(windows)
    bar_width = group_width * 0.8 / max(len(users), 1)
    for gi, window in enumerate(windows):
        canvas.open_group("bar-group")
        base = x_lo + gi * group_width + group_width * 0.1
        for ui, user in enumerate(users):
            vals = [r.loss_prob for r in frame.rows
                    if r.window == window and r.user == user]
            if not vals:
                continue
            top = ys(vals[0])
            canvas.rect(base + ui * bar_width, top, bar_width * 0.92,
                        y_pix_lo - top, color(user))
        canvas.text(base + group_width * 0.4, y_pix_lo + 16, str(window))
        canvas.close_group()
    canvas.legend([(f"user {u}", color(u)) for u in users])
    return canvas.render()


def latency_cdf(frame: MetricsFrame) -> str:
    """Empirical CDF over all (window, user) loss probabilities."""
    canvas = Canvas("empirical CDF of per-window loss")
    x_lo, x_hi, y_pix_lo, y_pix_hi = plot_box()
    values = sorted(frame.column("loss_prob"))
    xs = Scale(0.0, 1.0, x_lo, x_hi)
    ys = Scale(0.0, 1.0, y_pix_lo, y_pix_hi)
    canvas.axes(xs, ys, "loss_prob", "fraction of rows")
    n = len(values)
    points = [(xs(0.0), ys(0.0))]
    for i, v in enumerate(values):
        points.append((xs(v), ys(i / n)))        # step up at each sample
        points.append((xs(v), ys((i + 1) / n)))
    points.append((xs(1.0), ys(1.0)))
    canvas.polyline(points, color(0))
    canvas.text((x_lo + x_hi) / 2, y_pix_hi + 14, f"n = {n}")
    return canvas.render()


FIGURE_KINDS = {
    "loss_curve": loss_curve,
    "reward_ablation": reward_ablation,
    "loss_bars": loss_bars,
    "latency_cdf": latency_cdf,
}


def render(csv_path: str | Path, figure_kind: str, out_path: str | Path) -> Path:
    """Read a metrics CSV and write the requested figure as an SVG file."""
    if figure_kind not in FIGURE_KINDS:
        raise ValueError(
            f"unknown figure kind '{figure_kind}'; "
            f"choose from {sorted(FIGURE_KINDS)}")
    frame = MetricsFrame.read(csv_path)
    out = Path(out_path)
    out.write_text(FIGURE_KINDS[figure_kind](frame))
    return out
