"""Brute-force infima over channel-exponent space.

A channel gain ``|h|^2 = rho^(-a)`` is described by its exponent ``a >= 0``
and a Rayleigh event ``{a in S}`` has probability ``rho^(-inf_S sum a)``.
Every closed form in :mod:`marc_dmt.dmt_formulas` can therefore be
re-derived by minimizing coordinate sums over the outage sets written in
exponent form, ``log(1 + |h|^2 rho) ~ (1 - a)^+ log(rho)``.

Sets are closed (``<=`` and ``>=``), so boundary cases of the strict
inequalities resolve to the limiting exponent.  Every search is over the
grid ``{0, step, 2 step, ...} ∩ [0, box]`` in each active coordinate and is
exact on that grid.
"""

import itertools
import math
from dataclasses import dataclass, fields
from typing import Callable, NamedTuple

import numpy as np

from ._validation import check_decision_index, check_positive_int, check_unit_interval
from .piecewise import INF

COORDS = ("alpha1", "alpha2", "beta1", "beta2", "beta_r")

# closure slack for grid points that sit on a threshold up to rounding
EPS = 1e-9
_BLOCK = 2_000_000


@dataclass(frozen=True)
class ExponentPoint:
    """Exponents of the five links; fields may be scalars or broadcastable arrays."""

    alpha1: object = 0.0
    alpha2: object = 0.0
    beta1: object = 0.0
    beta2: object = 0.0
    beta_r: object = 0.0

    def __post_init__(self):
        for f in fields(self):
            if np.any(np.asarray(getattr(self, f.name)) < 0):
                raise ValueError(f"{f.name} must be nonnegative")

    def as_tuple(self):
        return tuple(getattr(self, c) for c in COORDS)


@dataclass(frozen=True)
class ConstraintSet:
    """A subset of exponent space.

    ``predicate`` must be vectorized: it receives an :class:`ExponentPoint`
    whose fields are arrays and returns a boolean array.  ``dims`` lists the
    coordinates it actually reads.
    """

    predicate: Callable
    label: str = ""
    dims: tuple = COORDS

    def __call__(self, point):
        return self.predicate(point)

    def __and__(self, other):
        return ConstraintSet(
            lambda p: np.logical_and(self(p), other(p)),
            f"({self.label} & {other.label})",
            _union_dims(self.dims, other.dims),
        )

    def __or__(self, other):
        return ConstraintSet(
            lambda p: np.logical_or(self(p), other(p)),
            f"({self.label} | {other.label})",
            _union_dims(self.dims, other.dims),
        )


@dataclass(frozen=True)
class Objective:
    fn: Callable
    label: str = ""
    dims: tuple = COORDS

    def __call__(self, point):
        return self.fn(point)


def _union_dims(*groups):
    wanted = set().union(*groups)
    return tuple(c for c in COORDS if c in wanted)


def everything():
    return ConstraintSet(lambda p: np.bool_(True), "all", ())


def nothing():
    return ConstraintSet(lambda p: np.bool_(False), "empty", ())


def coordinate_sum(*names):
    return Objective(lambda p: sum(getattr(p, n) for n in names), "+".join(names), names)


def pos(x):
    """``(x)^+`` elementwise."""
    return np.maximum(x, 0.0)


def gain(a):
    """Exponent of ``log(1 + rho^(1-a))`` in units of ``log rho``."""
    return np.maximum(1.0 - a, 0.0)


class GridResult(NamedTuple):
    value: float
    point: object  # ExponentPoint of the minimizer, None when infeasible


def grid_axis(step, box):
    n = int(math.floor(box / step + 1e-9)) + 1
    return np.round(np.arange(n) * step, 12)


def _check_grid(step, box):
    if not 0 < step <= 0.1:
        raise ValueError(f"step must lie in (0, 0.1], got {step}")
    if box < 1 + step:
        raise ValueError(f"box must be at least 1 + step, got {box}")


def grid_search(objective, constraint, step=0.02, box=3.0, dims=None):
    """Minimize ``objective`` over the grid points satisfying ``constraint``.

    Coordinates outside ``dims`` are pinned to 0; by default ``dims`` is the
    union of what the objective and the constraint read, which leaves the
    minimum unchanged.  Ties go to the lowest grid index, so the minimizer is
    deterministic.
    """
    _check_grid(step, box)
    if dims is None:
        dims = _union_dims(getattr(objective, "dims", COORDS), constraint.dims)
    dims = tuple(dims)
    axis = grid_axis(step, box)
    n = len(axis)

    # iterate over leading coordinates, vectorize over the rest
    n_lead = 0
    while n_lead < len(dims) and n ** (len(dims) - n_lead) > _BLOCK:
        n_lead += 1
    tail = dims[n_lead:]
    tail_grids = np.meshgrid(*([axis] * len(tail)), indexing="ij", sparse=True)

    best, best_at = INF, None
    for lead in itertools.product(range(n), repeat=n_lead):
        coords = {c: 0.0 for c in COORDS}
        coords.update({d: axis[i] for d, i in zip(dims, lead)})
        coords.update(dict(zip(tail, tail_grids)))
        p = ExponentPoint(**coords)
        ok = np.broadcast_to(constraint(p), _shape(len(tail), n))
        if not ok.any():
            continue
        vals = np.where(ok, np.broadcast_to(objective(p), ok.shape), INF)
        k = int(np.argmin(vals))
        if vals.flat[k] < best:
            best = float(vals.flat[k])
            idx = np.unravel_index(k, vals.shape) if tail else ()
            point = {c: 0.0 for c in COORDS}
            point.update({d: float(axis[i]) for d, i in zip(dims, lead)})
            point.update({d: float(axis[i]) for d, i in zip(tail, idx)})
            best_at = ExponentPoint(**point)
    return GridResult(best, best_at)


def _shape(k, n):
    return (n,) * k


def grid_infimum(objective, constraint, step=0.02, box=3.0, dims=None):
    """Grid minimum of ``objective`` over ``constraint``; INF if infeasible."""
    return grid_search(objective, constraint, step, box, dims).value


# -- grouped exact search -----------------------------------------------------


@dataclass(frozen=True)
class _Group:
    """A block of coordinates that talks to the rest only through ``feature``."""

    dims: tuple
    feature: Callable  # point -> tuple of arrays
    cost: Callable  # point -> array, additive part of the objective
    feasible: Callable = None  # point -> bool array, constraint local to the block


def _group_table(group, axis):
    grids = np.meshgrid(*([axis] * len(group.dims)), indexing="ij")
    coords = {c: 0.0 for c in COORDS}
    coords.update({d: g.ravel() for d, g in zip(group.dims, grids)})
    p = ExponentPoint(**coords)
    npts = grids[0].size
    feats = np.stack([np.broadcast_to(f, (npts,)) for f in group.feature(p)], axis=1)
    cost = np.broadcast_to(group.cost(p), (npts,)).astype(float)
    if group.feasible is not None:
        ok = np.broadcast_to(group.feasible(p), (npts,))
        feats, cost = feats[ok], cost[ok]
        grids = [g.ravel()[ok] for g in grids]
    else:
        grids = [g.ravel() for g in grids]
    if cost.size == 0:
        return None
    keys, inv = np.unique(np.round(feats, 9), axis=0, return_inverse=True)
    inv = inv.ravel()
    # per key: the cheapest point, lowest index on ties
    order = np.lexsort((np.arange(cost.size), cost, inv))
    first = order[np.r_[True, inv[order][1:] != inv[order][:-1]]]
    where = {d: g[first] for d, g in zip(group.dims, grids)}
    return keys, cost[first], where


def grouped_search(groups, coupling, step, box, coupled_feasible=None):
    """Exact grid minimum of ``sum(group costs) + coupling(features)``.

    Equivalent to the dense search over the product grid: within a group
    only the cheapest point per feature value can be optimal.
    """
    _check_grid(step, box)
    axis = grid_axis(step, box)
    tables = [_group_table(g, axis) for g in groups]
    if any(t is None for t in tables):
        return GridResult(INF, None)
    sizes = [len(t[1]) for t in tables]
    idx = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij", sparse=True)
    feats = []
    total = 0.0
    for t, ix in zip(tables, idx):
        keys, cost, _ = t
        feats.append(tuple(keys[:, j][ix] for j in range(keys.shape[1])))
        total = total + cost[ix]
    total = total + coupling(*feats)
    if coupled_feasible is not None:
        total = np.where(coupled_feasible(*feats), total, INF)
    total = np.broadcast_to(total, tuple(sizes))
    k = int(np.argmin(total))
    best = float(total.flat[k])
    if best == INF:
        return GridResult(INF, None)
    pick = np.unravel_index(k, total.shape)
    point = {c: 0.0 for c in COORDS}
    for t, g, i in zip(tables, groups, pick):
        for d in g.dims:
            point[d] = float(t[2][d][i])
    return GridResult(best, ExponentPoint(**point))


# -- outage sets in exponent form ---------------------------------------------


def relay_outage_set(k, M, r, which="any"):
    """Relay still in outage after ``k`` slots for users ``which``.

    ``which`` is ``1``, ``2``, ``(1, 2)`` or ``"any"`` (the union).  After
    zero slots the relay is in outage for every event; the union after
    ``M`` slots is empty by convention since the relay stops listening.
    """
    if k == 0:
        return everything()
    if which == "any" and k == M:
        return nothing()
    t1 = r * M / (2 * k)
    t12 = r * M / k
    if which == 1:
        return ConstraintSet(lambda p: gain(p.alpha1) <= t1 + EPS, f"O1R^{k}", ("alpha1",))
    if which == 2:
        return ConstraintSet(lambda p: gain(p.alpha2) <= t1 + EPS, f"O2R^{k}", ("alpha2",))
    if which == (1, 2):
        return ConstraintSet(
            lambda p: gain(np.minimum(p.alpha1, p.alpha2)) <= t12 + EPS,
            f"O12R^{k}",
            ("alpha1", "alpha2"),
        )
    if which == "any":
        return relay_outage_set(k, M, r, 1) | relay_outage_set(k, M, r, 2) | relay_outage_set(k, M, r, (1, 2))
    raise ValueError(f"unknown user subset {which!r}")


def relay_decodable_set(k, M, r):
    """Closure of the complement of the union relay outage after ``k`` slots."""
    if k == 0:
        return nothing()
    if k == M:
        return everything()
    t1 = r * M / (2 * k)
    t12 = r * M / k

    def pred(p):
        u1, u2 = gain(p.alpha1), gain(p.alpha2)
        return (u1 >= t1 - EPS) & (u2 >= t1 - EPS) & (np.maximum(u1, u2) >= t12 - EPS)

    return ConstraintSet(pred, f"notOR^{k}", ("alpha1", "alpha2"))


def dest_outage_set(f, r, which):
    """Destination outage when the relay helps for the last ``1 - f`` of the block."""
    if which in (1, 2):
        b = "beta1" if which == 1 else "beta2"

        def pred(p):
            g = getattr(p, b)
            mi = f * gain(g) + (1 - f) * gain(np.minimum(g, p.beta_r))
            return mi <= r / 2 + EPS

        return ConstraintSet(pred, f"O{which}D(f={f:g})", (b, "beta_r"))
    if which == (1, 2):

        def pred(p):
            b12 = np.minimum(p.beta1, p.beta2)
            mi = f * gain(b12) + (1 - f) * gain(np.minimum(b12, p.beta_r))
            return mi <= r + EPS

        return ConstraintSet(pred, f"O12D(f={f:g})", ("beta1", "beta2", "beta_r"))
    raise ValueError(f"unknown user subset {which!r}")


# -- Appendix A: re-derivation of the closed forms ----------------------------


def relay_exponent_oracle(m, M, r, step=0.02, box=3.0):
    """Exponent of P(decision time = m) by grid search over (alpha1, alpha2)."""
    m, M = check_decision_index(m, M)
    r = check_unit_interval(r)
    decodable = relay_decodable_set(m, M, r)
    obj = coordinate_sum("alpha1", "alpha2")
    return min(
        grid_infimum(obj, relay_outage_set(m - 1, M, r, which) & decodable, step, box)
        for which in (1, 2, (1, 2))
    )


def dest_exponent_oracle(m, M, r, step=0.02, box=3.0):
    """Exponent of destination outage given decision time ``m``, by grid search."""
    m, M = check_decision_index(m, M)
    r = check_unit_interval(r)
    f = m / M
    return min(
        grid_infimum(coordinate_sum("beta1", "beta_r"), dest_outage_set(f, r, 1), step, box),
        grid_infimum(coordinate_sum("beta2", "beta_r"), dest_outage_set(f, r, 2), step, box),
        grid_infimum(
            coordinate_sum("beta1", "beta2", "beta_r"), dest_outage_set(f, r, (1, 2)), step, box
        ),
    )


# -- Appendix B: correlated relay/destination term ----------------------------


def correlated_penalty(m, M, r, s):
    """The bracketed rate-slack term multiplying ``T`` in the correlated bound.

    ``s = 0`` is the both-users-wrong case, ``s = 2`` the user-1-only case.
    Returned as a vectorized function of an :class:`ExponentPoint`.
    """
    if s == 0:

        def f(p):
            a = np.maximum(gain(p.alpha1), gain(p.alpha2))
            b = np.maximum(gain(p.beta1), gain(p.beta2))
            return (m - 1) * np.maximum(a, b) + b + (M - m) * np.maximum(b, gain(p.beta_r)) - r * M

    elif s == 2:

        def f(p):
            b = gain(p.beta1)
            return (
                (m - 1) * np.maximum(gain(p.alpha1), b)
                + b
                + (M - m) * np.maximum(b, gain(p.beta_r))
                - r * M / 2
            )

    else:
        raise ValueError(f"s must be 0 or 2, got {s}")
    return f


def appendix_b_objective(m, M, r, T, s):
    """Plain 5-D form of the correlated-term objective, for dense checks."""
    pen = correlated_penalty(m, M, r, s)
    if s == 0:
        names = COORDS
    else:
        names = ("alpha1", "beta1", "beta_r")
    return Objective(lambda p: sum(getattr(p, n) for n in names) + T * pos(pen(p)), f"corr(s={s})")


def _check_corr_args(m, M, r, T, s):
    m, M = check_decision_index(m, M)
    r = check_unit_interval(r)
    T = check_positive_int(T, "T")
    if T < 4:
        raise ValueError("the correlated-term bound needs T >= 4")
    if m < 2:
        raise ValueError("the correlated term exists only for m >= 2")
    if s not in (0, 2):
        raise ValueError(f"s must be 0 or 2, got {s}")
    return m, M, r, T


def appendix_b_search(m, M, r, T=4, s=0, step=0.05, box=3.0):
    """Grouped exact grid search of the correlated exponent; returns a GridResult."""
    m, M, r, T = _check_corr_args(m, M, r, T, s)
    decodable = relay_decodable_set(m - 1, M, r)
    if s == 0:
        groups = [
            _Group(
                ("alpha1", "alpha2"),
                lambda p: (np.maximum(gain(p.alpha1), gain(p.alpha2)),),
                lambda p: p.alpha1 + p.alpha2,
                decodable,
            ),
            _Group(
                ("beta1", "beta2"),
                lambda p: (np.maximum(gain(p.beta1), gain(p.beta2)),),
                lambda p: p.beta1 + p.beta2,
            ),
            _Group(("beta_r",), lambda p: (gain(p.beta_r),), lambda p: p.beta_r),
        ]

        def coupling(fa, fb, fr):
            (a,), (b,), (u,) = fa, fb, fr
            pen = (m - 1) * np.maximum(a, b) + b + (M - m) * np.maximum(b, u) - r * M
            return T * pos(pen)

    else:
        groups = [
            _Group(
                ("alpha1", "alpha2"),
                lambda p: (gain(p.alpha1),),
                lambda p: p.alpha1,
                decodable,
            ),
            _Group(("beta1",), lambda p: (gain(p.beta1),), lambda p: p.beta1),
            _Group(("beta_r",), lambda p: (gain(p.beta_r),), lambda p: p.beta_r),
        ]

        def coupling(fa, fb, fr):
            (a,), (b,), (u,) = fa, fb, fr
            pen = (m - 1) * np.maximum(a, b) + b + (M - m) * np.maximum(b, u) - r * M / 2
            return T * pos(pen)

    return grouped_search(groups, coupling, step, box)


def appendixB_correlated_exponent(m, M, r, T=4, s=0, step=0.05, box=3.0):
    """Exponent of the correlated relay-error/destination-error term.

    Minimizes the coordinate sum plus ``T`` times the floored rate slack
    over channels where the relay could already decode at slot ``m - 1``.
    The result should dominate ``d_relay_decision + d_dest_outage``.
    """
    return appendix_b_search(m, M, r, T, s, step, box).value


# -- Appendix C: hybrid protocol fallback terms -------------------------------


def hybrid_relay_outage(r):
    """Relay outage at the half-block in the exponent form used for the hybrid analysis."""
    o1 = ConstraintSet(lambda p: gain(p.alpha1) <= r / 2 + EPS, "O1R^half", ("alpha1",))
    o2 = ConstraintSet(lambda p: gain(p.alpha2) <= r / 2 + EPS, "O2R^half", ("alpha2",))
    o12 = ConstraintSet(
        lambda p: gain(np.minimum(p.alpha1, p.alpha2)) <= r + EPS,
        "O12R^half",
        ("alpha1", "alpha2"),
    )
    return o1 | o2 | o12


def hybrid_relay_decodable(r):
    def pred(p):
        u1, u2 = gain(p.alpha1), gain(p.alpha2)
        return (u1 >= r / 2 - EPS) & (u2 >= r / 2 - EPS) & (np.maximum(u1, u2) >= r - EPS)

    return ConstraintSet(pred, "notOR^half", ("alpha1", "alpha2"))


def maf_user1_rate(beta1, beta_r, alpha1):
    """Per-user-1 MAF mutual-information exponent, before the positive part."""
    return np.maximum(2 * (1 - beta1), 1 - (beta_r + alpha1))


def conditional_sum_error_exponent(alpha1, alpha2, r):
    """Sum-error exponent of MAF given the source-relay exponents."""
    amin = np.minimum(alpha1, alpha2)
    cut = max(1 - r, 0.0)
    return np.where(amin > cut, 2 * cut, pos(3 * (1 - r) - amin))


class AppendixCExponents(NamedTuple):
    d_pe1: float
    d_pe12: float
    d_k: float


def appendix_c_searches(r, T=4, step=0.05, box=3.0):
    r = check_unit_interval(r)
    T = check_positive_int(T, "T")
    if step > 0.05:
        raise ValueError("Appendix C searches need step <= 0.05")
    outage = hybrid_relay_outage(r)

    # user-1 error while the relay is in outage at M/2 and MAF is in outage
    pe1 = grouped_search(
        [
            _Group(
                ("alpha1", "alpha2", "beta_r"),
                lambda p: (p.alpha1 + p.beta_r,),
                lambda p: p.alpha1 + p.alpha2 + p.beta_r,
                outage,
            ),
            _Group(("beta1",), lambda p: (p.beta1,), lambda p: p.beta1),
        ],
        lambda fa, fb: 0.0,
        step,
        box,
        coupled_feasible=lambda fa, fb: pos(np.maximum(2 * (1 - fb[0]), 1 - fa[0])) <= r + EPS,
    )

    pe12 = grid_search(
        Objective(
            lambda p: p.alpha1 + p.alpha2 + conditional_sum_error_exponent(p.alpha1, p.alpha2, r),
            "a1+a2+d12|h",
            ("alpha1", "alpha2"),
        ),
        outage,
        step,
        box,
    )

    # MAF not in outage, relay decodable at M/2, yet the relay's sphere test failed
    dk = grouped_search(
        [
            _Group(
                ("alpha1", "alpha2", "beta_r"),
                lambda p: (p.alpha1, p.alpha1 + p.beta_r),
                lambda p: p.alpha1 + p.alpha2 + p.beta_r,
                hybrid_relay_decodable(r),
            ),
            _Group(("beta1",), lambda p: (p.beta1,), lambda p: p.beta1),
        ],
        lambda fa, fb: T * pos(
            np.maximum(np.maximum(2 * (1 - fb[0]), 1 - fa[1]), 2 - (fa[0] + fb[0])) - r
        ),
        step,
        box,
        coupled_feasible=lambda fa, fb: pos(np.maximum(2 * (1 - fb[0]), 1 - fa[1])) >= r - EPS,
    )
    return pe1, pe12, dk


def appendixC_exponents(r, T=4, step=0.05, box=3.0):
    pe1, pe12, dk = appendix_c_searches(r, T, step, box)
    return AppendixCExponents(pe1.value, pe12.value, dk.value)
