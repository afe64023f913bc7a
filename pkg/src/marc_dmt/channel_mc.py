"""Monte Carlo outage probability of finite-M DDF over i.i.d. Rayleigh links.

Rates are tied to SNR as ``R = base_rate + r log2(rho)`` (sum rate, bits per
symbol, split evenly between the users).  ``T`` cancels out of every outage
test, so only ``M`` appears here.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import check_positive, check_positive_int, check_unit_interval
from .piecewise import format_ext

BLOCK_SIZE = 1 << 16


class InsufficientDataError(ValueError):
    """Too few usable outage estimates to fit a slope."""


def __getattr__(name):
    if name == "DiversityRegressor":
        from .estimators import DiversityRegressor

        return DiversityRegressor
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


@dataclass(frozen=True)
class ChannelDraw:
    """Fading coefficients of the five links (scalars or equal-length arrays)."""

    h1: complex
    h2: complex
    g1: complex
    g2: complex
    gr: complex

    @classmethod
    def sample(cls, rng, n=None):
        """Unit-variance circularly-symmetric Gaussian draws."""
        shape = (5,) if n is None else (n, 5)
        z = rng.standard_normal(shape + (2,))
        c = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2)
        cols = [c[..., k] for k in range(5)]
        if n is None:
            cols = [complex(x) for x in cols]
        return cls(*cols)


@dataclass(frozen=True)
class McConfig:
    M: int
    r: float
    snr_db_list: tuple
    trials_per_snr: int
    seed: int = 0
    snr_relay_offset_db: float = 0.0
    # fixed extra sum rate in bits; keeps r = 0 from meaning "rate zero"
    base_rate: float = 0.0

    def __post_init__(self):
        check_positive_int(self.M, "M")
        check_unit_interval(self.r)
        check_positive_int(self.trials_per_snr, "trials_per_snr")
        snrs = tuple(float(s) for s in self.snr_db_list)
        if not snrs:
            raise ValueError("snr_db_list is empty")
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError("snr_db_list must be strictly increasing")
        object.__setattr__(self, "snr_db_list", snrs)
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.base_rate < 0:
            raise ValueError("base_rate must be nonnegative")


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def sum_rate(r, snr, base_rate=0.0):
    """Target sum rate in bits per symbol at SNR ``snr`` (linear)."""
    return base_rate + r * np.log2(snr)


def decision_time(h1, h2, M, r, snr_relay, snr=None, base_rate=0.0):
    """Slot after which the relay can decode both messages, or ``M`` if never.

    The rate is anchored to the destination SNR ``snr`` (defaults to
    ``snr_relay``).  Inequalities are strict.  Accepts arrays.
    """
    M = check_positive_int(M, "M")
    snr_relay = check_positive(snr_relay, "snr_relay")
    snr = snr_relay if snr is None else check_positive(snr, "snr")
    R = sum_rate(r, snr, base_rate)
    a1 = np.abs(h1) ** 2
    a2 = np.abs(h2) ** 2
    c1 = np.log2(1 + a1 * snr_relay)
    c2 = np.log2(1 + a2 * snr_relay)
    c12 = np.log2(1 + (a1 + a2) * snr_relay)
    m_dec = np.full(np.shape(a1), M, dtype=np.int64)
    pending = np.ones(np.shape(a1), dtype=bool)
    for m in range(1, M):
        ok = pending & (M * R / 2 < m * c1) & (M * R / 2 < m * c2) & (M * R < m * c12)
        m_dec[ok] = m
        pending &= ~ok
    return int(m_dec) if m_dec.ndim == 0 else m_dec


def dest_outage(g1, g2, gr, m, M, r, snr, base_rate=0.0):
    """Whether the destination is in outage given decision time ``m``.

    True if either single-user or the sum mutual information, accumulated
    over ``m`` direct-only slots and ``M - m`` relay-assisted slots, fails to
    carry the target rate (non-strict).
    """
    M = check_positive_int(M, "M")
    snr = check_positive(snr, "snr")
    R = sum_rate(r, snr, base_rate)
    b1, b2, br = np.abs(g1) ** 2, np.abs(g2) ** 2, np.abs(gr) ** 2
    m = np.asarray(m)
    rest = M - m

    def acc(direct, relayed):
        return m * np.log2(1 + direct * snr) + rest * np.log2(1 + relayed * snr)

    out = (
        (acc(b1, b1 + br) <= M * R / 2)
        | (acc(b2, b2 + br) <= M * R / 2)
        | (acc(b1 + b2, b1 + b2 + br) <= M * R)
    )
    return bool(out) if np.ndim(out) == 0 else out


class OutageRow(NamedTuple):
    snr_db: float
    p_out: float
    stderr: float
    n_trials: int
    m_hist: tuple


def _block_rng(seed, j, b):
    # counter-based stream per (sweep point, block): partitioning cannot matter
    ss = np.random.SeedSequence(int(seed), spawn_key=(j, b))
    return np.random.Generator(np.random.Philox(ss))


def _run_block(config, j, b, n):
    snr = float(db_to_linear(config.snr_db_list[j]))
    snr_relay = snr * float(db_to_linear(config.snr_relay_offset_db))
    ch = ChannelDraw.sample(_block_rng(config.seed, j, b), n)
    m = decision_time(ch.h1, ch.h2, config.M, config.r, snr_relay, snr, config.base_rate)
    out = dest_outage(ch.g1, ch.g2, ch.gr, m, config.M, config.r, snr, config.base_rate)
    hist = np.bincount(m - 1, minlength=config.M)
    return int(out.sum()), hist


def estimate_pout(config, n_jobs=1):
    """Outage probability per SNR, with decision time and outage sampled jointly."""
    tasks = []
    for j in range(len(config.snr_db_list)):
        n = config.trials_per_snr
        for b in range(-(-n // BLOCK_SIZE)):
            tasks.append((j, b, min(BLOCK_SIZE, n - b * BLOCK_SIZE)))

    if n_jobs == 1:
        results = [_run_block(config, *t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda t: _run_block(config, *t), tasks))

    rows = []
    n = config.trials_per_snr
    for j, snr_db in enumerate(config.snr_db_list):
        outages = 0
        hist = np.zeros(config.M, dtype=np.int64)
        for (tj, _, _), (o, h) in zip(tasks, results):
            if tj == j:
                outages += o
                hist += h
        p = outages / n
        rows.append(
            OutageRow(snr_db, p, math.sqrt(p * (1 - p) / n), n, tuple(int(x) for x in hist))
        )
    return rows


def outage_csv_lines(rows, M):
    header = ["snr_db", "p_out", "stderr", "n_trials"] + [f"m_hist_{k}" for k in range(1, M + 1)]
    yield ",".join(header)
    for row in rows:
        cells = [format_ext(row.snr_db), format_ext(row.p_out), format_ext(row.stderr), str(row.n_trials)]
        cells += [str(c) for c in row.m_hist]
        yield ",".join(cells)


class DiversityFit(NamedTuple):
    slope: float
    intercept: float
    residual: float


def fit_diversity(table, window=(10.0, 25.0)):
    """Slope of ``-log10 p_out`` against ``log10 rho`` over rows inside ``window`` (dB)."""
    lo, hi = window
    rows = [row for row in table if lo <= row.snr_db <= hi]
    if len(rows) < 3:
        raise InsufficientDataError(f"need 3 rows in window {window}, got {len(rows)}")
    from .estimators import DiversityRegressor  # scikit-learn is slow to import

    X = np.array([[row.snr_db] for row in rows])
    y = np.array([row.p_out for row in rows])
    est = DiversityRegressor().fit(X, y)
    return DiversityFit(est.slope_, est.intercept_, est.residual_)
