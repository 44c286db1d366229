"""Short-blocklength link reliability.

Decoding error probability of a packet sent over a handful of resource
blocks, in the regime where the law-of-large-numbers capacity argument does
not hold.  The normal approximation gives

    eps = Q( (-L ln2 + S n ln(1+phi)) / sqrt(S n V) ),   V = 1 - 1/(1+phi)^2

with L the packet size in bits, S the symbols carried by one resource block,
n the number of resource blocks, and phi the linear SNR.  All logs natural.

Everything here is scalar double-precision math; the hot caller is the
per-slot minimum-RB search, so the error expression stays free of array
overhead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Q(x) underflows below ~1e-308 near x = 38.  Results are clamped into
# (Q_FLOOR, Q_CEIL) so downstream -ln(eps) style rewards stay finite.
Q_FLOOR = 1e-300
Q_CEIL = math.nextafter(1.0, 0.0)

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_LN2 = math.log(2.0)


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x) = P(N(0,1) > x), clamped to (0, 1)."""
    v = 0.5 * math.erfc(x * _INV_SQRT2)
    if v < Q_FLOOR:
        return Q_FLOOR
    if v > Q_CEIL:
        return Q_CEIL
    return v


def channel_dispersion(phi: float) -> float:
    """Channel dispersion V(phi) = 1 - 1/(1+phi)^2 for linear SNR phi > 0.

    Evaluated as phi*(2+phi)/(1+phi)^2, which is the same expression without
    the cancellation that rounds it to exactly 0 for phi below 2^-53.
    """
    if phi <= 0.0:
        raise ValueError(f"snr must be > 0, got {phi}")
    return phi * (2.0 + phi) / ((1.0 + phi) * (1.0 + phi))


@dataclass(frozen=True)
class LinkParams:
    """Static link description for the reliability computations.

    packet_bits: payload size L in bits.
    symbols_per_rb: time-bandwidth product of one resource block (tti * rb
        bandwidth); must exceed 1 symbol.
    n_total: resource blocks available in one slot.
    eps_max: reliability target, in (0, 0.5).
    """

    packet_bits: int
    symbols_per_rb: float
    n_total: int
    eps_max: float

    def __post_init__(self):
        if self.packet_bits < 1:
            raise ValueError(f"packet_bits must be >= 1, got {self.packet_bits}")
        if self.symbols_per_rb <= 1.0:
            raise ValueError(
                f"symbols_per_rb must exceed 1, got {self.symbols_per_rb}")
        if self.n_total < 1:
            raise ValueError(f"n_total must be >= 1, got {self.n_total}")
        if not 0.0 < self.eps_max < 0.5:
            raise ValueError(f"eps_max must be in (0, 0.5), got {self.eps_max}")


def decoding_error(link: LinkParams, n_rb: int, phi: float) -> float:
    """Decoding error probability on n_rb resource blocks at linear SNR phi.

    Args:
        link: static link parameters.
        n_rb: resource blocks spent on the packet, 1..n_total.
        phi: linear SNR, > 0.

    Returns:
        Error probability in (0, 1); exact zeros and ones are clamped away so
        log-based rewards never diverge.
    """
    if not 1 <= n_rb <= link.n_total:
        raise ValueError(f"n_rb must be in [1, {link.n_total}], got {n_rb}")
    symbols = link.symbols_per_rb * n_rb
    v = channel_dispersion(phi)
    arg = (-link.packet_bits * _LN2 + symbols * math.log1p(phi)) / math.sqrt(symbols * v)
    return q_function(arg)


def min_rbs(link: LinkParams, phi: float) -> tuple[int, bool]:
    """Smallest RB count meeting the reliability target, by binary search.

    decoding_error is strictly decreasing in n_rb, so the predicate
    eps(n) <= eps_max is monotone and bisection over [1, n_total] finds the
    threshold in O(log n_total) error evaluations.

    Returns:
        (n_star, feasible).  When even n_total misses the target, returns
        (n_total, False).
    """
    if decoding_error(link, link.n_total, phi) > link.eps_max:
        return link.n_total, False
    lo, hi = 1, link.n_total  # invariant: eps(hi) <= eps_max
    while lo < hi:
        mid = (lo + hi) // 2
        if decoding_error(link, mid, phi) <= link.eps_max:
            hi = mid
        else:
            lo = mid + 1
    return hi, True
