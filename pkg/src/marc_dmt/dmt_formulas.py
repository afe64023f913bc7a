"""Closed-form diversity exponents for DDF, MAF and HDAF on the two-user MARC.

All rates are symmetric: each user sends ``r/2 log(rho)`` bits per symbol.
``f = m/M`` is the fraction of the block the relay spends listening.
"""

import math
from dataclasses import dataclass
from functools import partial

from ._validation import (
    check_decision_index,
    check_even_slots,
    check_positive_int,
    check_unit_interval,
)
from .piecewise import INF, DmtCurve, ext_add, pointwise_min

__all__ = [
    "SlotConfig",
    "d_relay_decision",
    "d_dest_single",
    "d_dest_sum",
    "d_dest_outage",
    "d_dest_outage_direct",
    "d_out",
    "d_ddf_infinite",
    "d_maf",
    "d_hdaf",
    "d_hdaf_modified",
    "relay_decision_curve",
    "dest_outage_curve",
    "out_curve",
    "ddf_infinite_curve",
    "maf_curve",
    "hdaf_curve",
    "hdaf_modified_curve",
]


@dataclass(frozen=True)
class SlotConfig:
    """A codeword of ``M`` slots with ``T`` symbols each."""

    M: int
    T: int = 1

    def __post_init__(self):
        check_positive_int(self.M, "M")
        check_positive_int(self.T, "T")

    @property
    def block_length(self):
        return self.M * self.T


def d_relay_decision(m, M, r):
    """Exponent of P(decision time = m).

    For ``m < M`` the relay cannot have decoded by slot ``m`` once
    ``r > m/M``, giving an infinite exponent.  For ``m = M`` the event
    includes "relay stays silent", which is never exponentially rare, so
    the infinite branch is dropped.
    """
    m, M = check_decision_index(m, M)
    return _relay_exp(m, M, check_unit_interval(r))


def _relay_exp(m, M, r):
    if m < M and r > m / M:
        return INF
    k = m - 1
    if k == 0:
        return 0.0
    if r < 2 * k / (3 * M):
        return 1 - M * r / (2 * k)
    if r < k / M:
        return 2 * (1 - M * r / k)
    return 0.0


def d_dest_single(f, r):
    """Exponent of the single-user destination outage event at listen fraction ``f``."""
    f = check_unit_interval(f, "f")
    r = check_unit_interval(r)
    if f < 0.5:
        return 2 - r
    if f < 1 - r / 2:
        return 2 - r / (2 * (1 - f))
    return (2 - r) / (2 * f)


def d_dest_sum(f, r):
    """Exponent of the sum-rate destination outage event."""
    f = check_unit_interval(f, "f")
    r = check_unit_interval(r)
    if f < 2 / 3:
        return 3 * (1 - r)
    if r < 1 / 3 and f < 1 - r:
        return 3 - r / (1 - f)
    return 2 * (1 - r) / f


def d_dest_outage_direct(f, r):
    """Destination outage exponent as the plain minimum over the three events."""
    return min(d_dest_single(f, r), d_dest_sum(f, r))


def _dest_collected(f, r):
    # four r-regimes; the f-thresholds move with r
    if r < 0.5:
        if f < 0.5:
            return 2 - r
        if f < 1 - r / 2:
            return 2 - r / (2 * (1 - f))
        return (2 - r) / (2 * f)
    if r < 2 / 3:
        t = (5 * r - 2) / (2 * (3 * r - 1))
        if f < t:
            return 3 * (1 - r)
        if r >= 16 / 25:
            s = math.sqrt(r * (25 * r / 16 - 1))
            lo = (2 - 5 * r / 4 - s) / 2
            hi = (2 - 5 * r / 4 + s) / 2
            if lo <= f < hi:
                return 2 * (1 - r) / f
        if f < 1 - r / 2:
            return 2 - r / (2 * (1 - f))
        return (2 - r) / (2 * f)
    if f < 2 / 3:
        return 3 * (1 - r)
    return 2 * (1 - r) / f


def d_dest_outage(m, M, r):
    """Exponent of destination outage given the relay decided at slot ``m``."""
    m, M = check_decision_index(m, M)
    r = check_unit_interval(r)
    return _dest_collected(m / M, r)


def d_out(M, r):
    """Finite-M DDF exponent: the worst decision time dominates."""
    M = check_positive_int(M, "M")
    r = check_unit_interval(r)
    return min(ext_add(_relay_exp(m, M, r), _dest_collected(m / M, r)) for m in range(1, M + 1))


def d_ddf_infinite(r):
    """DDF exponent in the limit of infinitely many decision times."""
    r = check_unit_interval(r)
    if r < 0.5:
        return 2 - r
    if r < 2 / 3:
        return 3 * (1 - r)
    return 2 * (1 - r) / r


def d_maf(r):
    r = check_unit_interval(r)
    if r <= 2 / 3:
        return 2 - 1.5 * r
    return 3 * (1 - r)


def d_hdaf(M, r):
    """Hybrid protocol: MAF above 2/3, DDF in (1/2, 2/3], DDF-then-MAF below."""
    M = check_even_slots(M)
    r = check_unit_interval(r)
    if r <= 0.5:
        return 2 - r
    if r <= 2 / 3:
        return d_out(M, r)
    return 3 * (1 - r)


def d_hdaf_modified(M, r):
    """Hybrid protocol where the relay never transmits before slot M/2.

    Decoding at ``M/2`` is charged a zero exponent: the probability of the
    relay being ready by then is bounded by one.
    """
    M = check_even_slots(M)
    r = check_unit_interval(r)
    half = M // 2
    if r <= 0.5:
        # decode at M/2, else amplify-and-forward; the fallback is worth 2 - r
        return min(d_dest_outage(half, M, r), 2 - r)
    if r <= 2 / 3:
        terms = [d_dest_outage(half, M, r)]
        terms += [
            ext_add(d_relay_decision(m, M, r), d_dest_outage(m, M, r))
            for m in range(half + 1, M + 1)
        ]
        return min(terms)
    return 3 * (1 - r)


# -- curves -----------------------------------------------------------------


def _inside(points):
    return tuple(sorted({p for p in points if 0.0 < p < 1.0}))


def _relay_breakpoints(m, M):
    k = m - 1
    return _inside([2 * k / (3 * M), k / M] + ([m / M] if m < M else []))


def _dest_breakpoints(f):
    pts = [1 / 3, 0.5, 16 / 25, 2 / 3, 1 - f, 2 * (1 - f)]
    if 5 - 6 * f != 0:
        pts.append((2 - 2 * f) / (5 - 6 * f))
    if 4 - 5 * f > 0:
        pts.append(4 * (1 - f) ** 2 / (4 - 5 * f))
    return _inside(pts)


def relay_decision_curve(m, M):
    check_decision_index(m, M)
    return DmtCurve(
        partial(d_relay_decision, m, M), _relay_breakpoints(m, M), f"d_R(m={m},M={M})"
    )


def dest_outage_curve(m, M):
    check_decision_index(m, M)
    return DmtCurve(
        partial(d_dest_outage, m, M), _dest_breakpoints(m / M), f"d_D(m={m},M={M})"
    )


def _member_curve(m, M):
    m, M = check_decision_index(m, M)
    f = m / M

    def func(r):
        r = check_unit_interval(r)
        return ext_add(_relay_exp(m, M, r), _dest_collected(f, r))

    bps = sorted(set(_relay_breakpoints(m, M)) | set(_dest_breakpoints(m / M)))
    return DmtCurve(func, tuple(bps), f"d_R+d_D(m={m},M={M})")


def out_curve(M):
    """``d_out`` for ``M`` slots, with its crossing points as breakpoints."""
    M = check_positive_int(M, "M")
    env = pointwise_min([_member_curve(m, M) for m in range(1, M + 1)])
    return DmtCurve(partial(d_out, M), env.breakpoints, f"d_out(M={M})")


def ddf_infinite_curve():
    return DmtCurve(d_ddf_infinite, (0.5, 2 / 3), "d_ddf_infinite")


def maf_curve():
    return DmtCurve(d_maf, (2 / 3,), "d_maf")


def _hdaf_breakpoints(M):
    mid = [b for b in out_curve(M).breakpoints if 0.5 < b < 2 / 3]
    return tuple(sorted({0.5, 2 / 3, *mid}))


def hdaf_curve(M):
    M = check_even_slots(M)
    return DmtCurve(partial(d_hdaf, M), _hdaf_breakpoints(M), f"d_hdaf(M={M})")


def hdaf_modified_curve(M):
    M = check_even_slots(M)
    return DmtCurve(
        partial(d_hdaf_modified, M), _hdaf_breakpoints(M), f"d_hdaf_modified(M={M})"
    )
