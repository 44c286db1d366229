"""Windowed run metrics and their CSV form.

One window summarizes five episodes (or one evaluation run).  The CSV schema
is the stable interchange surface consumed by the plotting package:

    window,user,loss_prob,avg_reward,worst_reward

one row per (window, user), floats via repr so identical runs produce
identical bytes.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

CSV_HEADER = "window,user,loss_prob,avg_reward,worst_reward"


@dataclass
class WindowMetrics:
    window: int
    loss_prob: list[float]
    avg_reward: list[float]
    worst_reward: float
    deadline_misses: int = 0

    def __post_init__(self):
        if len(self.loss_prob) != len(self.avg_reward):
            raise ValueError("per-user metric lengths differ")


def to_csv(metrics: list[WindowMetrics]) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for m in metrics:
        for user, (lp, ar) in enumerate(zip(m.loss_prob, m.avg_reward)):
            out.write(f"{m.window},{user},{lp!r},{ar!r},{m.worst_reward!r}\n")
    return out.getvalue()


def write_csv(path, metrics: list[WindowMetrics]) -> None:
    with open(path, "w") as fh:
        fh.write(to_csv(metrics))


@dataclass
class MetricsJson:
    """Full-fidelity run record: config echo plus windows, JSON-serializable."""

    config: dict
    windows: list[dict] = field(default_factory=list)

    @staticmethod
    def window_dict(m: WindowMetrics) -> dict:
        return {
            "window": m.window,
            "loss_prob": list(m.loss_prob),
            "avg_reward": list(m.avg_reward),
            "worst_reward": m.worst_reward,
            "deadline_misses": m.deadline_misses,
        }

    @staticmethod
    def window_from_dict(d: dict) -> WindowMetrics:
        return WindowMetrics(
            window=int(d["window"]),
            loss_prob=[float(v) for v in d["loss_prob"]],
            avg_reward=[float(v) for v in d["avg_reward"]],
            worst_reward=float(d["worst_reward"]),
            deadline_misses=int(d.get("deadline_misses", 0)),
        )
