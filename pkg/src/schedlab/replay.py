"""Prioritized experience replay.

A fixed-capacity ring of transitions, each carrying a scalar priority
weight.  Sampling draws with replacement proportionally to weight (or
uniformly), and the importance weight u = 1 / (p * size) corrects the bias
so weighted expectations stay unbiased estimates of uniform ones.

New experience inherits the current maximum weight so it is sampled soon;
weights are recomputed from critic residuals after each use, with losses at
the deadline window doubling their share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INITIAL_WEIGHT = 1e-3  # first push into an empty memory
WEIGHT_FLOOR = 1e-8    # keeps every stored transition sampleable


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray       # training reward, one entry per critic head
    next_state: np.ndarray
    loss_flags: np.ndarray   # per-user scheduling-loss markers for reweighting
    slot: int


def priority_weight(td_errors: np.ndarray, loss_flags: np.ndarray) -> float:
    """Squared residual sum with lost-packet heads counted twice, floored.

    With a single critic head the flags still apply head-wise only when
    shapes match; a scalar residual against K flags doubles on any loss.
    """
    e2 = np.square(np.asarray(td_errors, dtype=np.float64)).ravel()
    flags = np.asarray(loss_flags, dtype=bool).ravel()
    if e2.shape == flags.shape:
        w = float(np.sum(e2 * (1.0 + flags)))
    else:
        w = float(np.sum(e2) * (2.0 if flags.any() else 1.0))
    return max(w, WEIGHT_FLOOR)


class ReplayMemory:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._weights = np.zeros(capacity, dtype=np.float64)
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    @property
    def weights(self) -> np.ndarray:
        """View of the live weights (length == len(self))."""
        return self._weights[: len(self._items)]

    def max_weight(self) -> float:
        return float(self.weights.max()) if self._items else INITIAL_WEIGHT

    def push(self, tr: Transition) -> None:
        """Insert with the current max weight, evicting the oldest when full."""
        w = self.max_weight()
        if len(self._items) < self.capacity:
            self._items.append(tr)
            self._weights[len(self._items) - 1] = w
        else:
            self._items[self._next] = tr
            self._weights[self._next] = w
        self._next = (self._next + 1) % self.capacity

    def sample(self, n: int, prioritized: bool,
               rng: np.random.Generator) -> tuple[np.ndarray, list[Transition], np.ndarray]:
        """Draw n transitions with replacement.

        Returns (indices, transitions, p) where p[i] is the selection
        probability of draw i under the sampling distribution.
        """
        size = len(self._items)
        if size == 0:
            raise ValueError("cannot sample from an empty memory")
        if prioritized:
            probs = self.weights / self.weights.sum()
        else:
            probs = np.full(size, 1.0 / size)
        idx = rng.choice(size, size=n, replace=True, p=probs)
        return idx, [self._items[i] for i in idx], probs[idx]

    def update_weight(self, index: int, td_errors: np.ndarray,
                      loss_flags: np.ndarray) -> float:
        """Re-derive one transition's weight from fresh critic residuals."""
        if not 0 <= index < len(self._items):
            raise IndexError(f"index {index} out of range")
        w = priority_weight(td_errors, loss_flags)
        self._weights[index] = w
        return w


def bias_weight(p: np.ndarray, size: int) -> np.ndarray:
    """Importance correction u = 1 / (p * size); 1 under uniform sampling."""
    return 1.0 / (np.asarray(p, dtype=np.float64) * size)
