"""Extended-real exponent values and piecewise curves over r in [0, 1].

Exponents live in [0, +inf].  Infinity is IEEE ``inf``: it is a distinct
tagged value rather than a large float, so ``INF + x == INF`` and
``min(INF, x) == x`` hold exactly.
"""

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

INF = math.inf

# argmin ties closer than this are resolved to the lower curve index
_TIE_TOL = 1e-12
_BISECT_TOL = 1e-9
_SAMPLES_PER_PIECE = 64


class DomainError(ValueError):
    """Raised when a curve is evaluated outside [0, 1]."""


def ext(x) -> float:
    """Validate and return ``x`` as a nonnegative extended real."""
    x = float(x)
    if math.isnan(x) or x < 0:
        raise ValueError(f"not a nonnegative extended real: {x!r}")
    return x


def is_inf(x) -> bool:
    return x == INF


def ext_add(*values) -> float:
    return ext(math.fsum(values)) if INF not in values else INF


def ext_min(*values) -> float:
    return min(values)


def format_ext(x) -> str:
    """Six significant digits, ``INF`` for infinity."""
    if x == INF:
        return "INF"
    return f"{x:.6g}"


@dataclass(frozen=True)
class DmtCurve:
    """An exponent as a function of the multiplexing gain.

    ``func`` is assumed continuous on every open interval between
    consecutive ``breakpoints``.  Breakpoint conventions (which side wins)
    are the business of ``func``; see :meth:`from_segments`.
    """

    func: Callable[[float], float]
    breakpoints: tuple = ()
    label: str = ""

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        for b in bps:
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"breakpoint {b} outside [0, 1]")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bps)

    def __call__(self, r):
        return eval_curve(self, r)

    @classmethod
    def constant(cls, value, label=""):
        value = ext(value)
        return cls(lambda r: value, (), label or format_ext(value))

    @classmethod
    def from_segments(cls, segments, label=""):
        """Build a curve from ``[(start, fn), ...]`` with ``segments[0]`` at 0.

        Segment ``k`` covers ``[start_k, start_{k+1})`` and the last one runs
        through ``r = 1``.  At an interior start the right segment is used,
        unless it is infinite there while the left one is finite: infinity is
        only returned strictly inside an infinite interval.
        """
        segments = sorted(segments, key=lambda s: s[0])
        starts = [float(s) for s, _ in segments]
        if not starts or starts[0] != 0.0:
            raise ValueError("first segment must start at r = 0")
        fns = [fn for _, fn in segments]

        def func(r):
            k = int(np.searchsorted(starts, r, side="right")) - 1
            value = fns[k](r)
            if k > 0 and r == starts[k] and value == INF:
                left = fns[k - 1](r)
                if left != INF:
                    return left
            return value

        return cls(func, tuple(starts[1:]), label)


def eval_curve(curve: DmtCurve, r) -> float:
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise DomainError(f"multiplexing gain {r} outside [0, 1]")
    return ext(curve.func(r))


def _argmin(values) -> int:
    """Lowest index within the tie tolerance of the minimum; -1 if all INF."""
    best = min(values)
    if best == INF:
        return -1
    for i, v in enumerate(values):
        if v <= best + _TIE_TOL:
            return i
    return -1  # pragma: no cover


def pointwise_min(curves: Sequence[DmtCurve], label="") -> DmtCurve:
    """Lower envelope of ``curves``.

    The result evaluates the minimum of the members exactly.  Its breakpoints
    are the union of the members' breakpoints plus every point where the
    minimizing member changes, located by bisection to 1e-9 in r.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("pointwise_min needs at least one curve")

    def evals(r):
        return [eval_curve(c, r) for c in curves]

    def func(r):
        return min(evals(r))

    knots = sorted({0.0, 1.0, *(b for c in curves for b in c.breakpoints)})
    crossings = []

    def refine(p, q, ip, iq):
        if ip == iq:
            return
        if q - p < _BISECT_TOL:
            crossings.append(0.5 * (p + q))
            return
        mid = 0.5 * (p + q)
        im = _argmin(evals(mid))
        refine(p, mid, ip, im)
        refine(mid, q, im, iq)

    for a, b in zip(knots, knots[1:]):
        # stay off the knots themselves: members may jump there
        pad = min(1e-10, (b - a) / 4)
        xs = np.linspace(a + pad, b - pad, _SAMPLES_PER_PIECE + 1)
        idx = [_argmin(evals(x)) for x in xs]
        for k in range(len(xs) - 1):
            refine(xs[k], xs[k + 1], idx[k], idx[k + 1])

    bps = sorted(set(knots[1:-1]) | set(crossings))
    merged = []
    for b in bps:
        if not merged or b - merged[-1] > _BISECT_TOL:
            merged.append(b)
    if not label:
        label = "min(" + ", ".join(c.label for c in curves) + ")"
    return DmtCurve(func, tuple(merged), label)


def sample_to_table(curve: DmtCurve, n: int):
    """``n`` uniform samples on [0, 1] plus every breakpoint, sorted."""
    if n < 2:
        raise ValueError("sample_to_table needs n >= 2")
    rs = sorted({*np.linspace(0.0, 1.0, n).tolist(), *curve.breakpoints})
    out = []
    for r in rs:
        if out and r - out[-1][0] <= 1e-12:
            continue
        out.append((r, eval_curve(curve, r)))
    return out
