"""Codeword-level simulation of DDF, MAF and the hybrid protocols at desk scale.

Gaussian random codebooks, a bounded-distance (sphere) decoder at the relay
and a GLRT decoder at the destination that jointly guesses the messages and
the slot at which the relay started forwarding.

Noise variances are 1 at both receivers, so the per-symbol power equals the
SNR.  Messages are 0-based; the relay codebook is indexed by the pair
``(w1, w2)`` in row-major order, ``w = w1 * n + w2``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_even_slots, check_positive, check_positive_int, check_unit_interval
from .channel_mc import ChannelDraw
from .piecewise import format_ext

MAX_BLOCK = 64
MAX_RELAY_BOOK = 256
NOISE_VAR = 1.0


class ProtocolMode(str, Enum):
    DDF = "ddf"
    MAF = "maf"
    HDAF = "hdaf"
    HDAF_MODIFIED = "hdaf_modified"


@dataclass(frozen=True)
class Codebook:
    entries: np.ndarray
    power: float

    def __post_init__(self):
        if self.entries.ndim != 2:
            raise ValueError("codebook entries must be a 2-D array")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, w):
        return self.entries[w]


@dataclass(frozen=True)
class Codebooks:
    user1: Codebook
    user2: Codebook
    relay: Codebook
    M: int
    T: int

    @property
    def n_msgs(self):
        return len(self.user1)

    def scaled(self, power):
        """Same codewords at a different per-symbol power."""
        k = math.sqrt(power / self.user1.power)
        return Codebooks(
            *(Codebook(b.entries * k, power) for b in (self.user1, self.user2, self.relay)),
            self.M,
            self.T,
        )


def _cn(rng, shape, var=1.0):
    z = rng.standard_normal(tuple(shape) + (2,))
    return math.sqrt(var / 2) * (z[..., 0] + 1j * z[..., 1])


def generate_codebooks(seed, M, T, n_msgs_per_user, power=1.0):
    """I.i.d. CN(0, power) codebooks for both users and the relay."""
    M = check_positive_int(M, "M")
    T = check_positive_int(T, "T")
    n = check_positive_int(n_msgs_per_user, "n_msgs_per_user", minimum=2)
    power = check_positive(power, "power")
    if M * T > MAX_BLOCK:
        raise ValueError(f"block length M*T={M * T} exceeds {MAX_BLOCK}")
    if n * n > MAX_RELAY_BOOK:
        raise ValueError(f"relay codebook size {n * n} exceeds {MAX_RELAY_BOOK}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(0,))))
    L = M * T
    books = [Codebook(_cn(rng, (k, L), power), power) for k in (n, n, n * n)]
    return Codebooks(*books, M, T)


# -- relay ----------------------------------------------------------------------


def sphere_distances(y_r, h1, h2, books, m):
    """Squared distance from ``y_r`` to every superposition over the first ``m`` slots."""
    L = m * books.T
    x1 = books.user1.entries[:, :L]
    x2 = books.user2.entries[:, :L]
    s = h1 * x1[:, None, :] + h2 * x2[None, :, :]
    return np.sum(np.abs(y_r[None, None, :L] - s) ** 2, axis=-1)


def sphere_radius(m, T, delta, noise_var=NOISE_VAR):
    return m * T * (1 + delta) * noise_var


def relay_outage_free(h1, h2, m, M, T, n_msgs, snr_relay):
    """Whether slot ``m`` clears the per-user and sum-rate tests at the codebook rate."""
    bits = math.log2(n_msgs)  # per user, per block
    a1, a2 = abs(h1) ** 2, abs(h2) ** 2
    mT = m * T
    return (
        bits < mT * math.log2(1 + a1 * snr_relay)
        and bits < mT * math.log2(1 + a2 * snr_relay)
        and 2 * bits < mT * math.log2(1 + (a1 + a2) * snr_relay)
    )


def relay_decode_bounded(y_r, h1, h2, books, m, delta, noise_var=NOISE_VAR, outage_free=True):
    """Bounded-distance decision at the end of slot ``m``.

    Returns ``(w1, w2)`` only if the channel gate is open and exactly one
    message pair lies within squared radius ``mT(1 + delta) noise_var`` of
    the received vector; otherwise ``None`` and the relay keeps listening.
    """
    if not 1 <= m < books.M:
        raise ValueError(f"relay decisions happen at slots 1..M-1, got m={m}")
    if len(y_r) < m * books.T:
        raise ValueError("received vector shorter than m*T")
    if not outage_free:
        return None
    inside = sphere_distances(y_r, h1, h2, books, m) <= sphere_radius(m, books.T, delta, noise_var)
    if np.count_nonzero(inside) != 1:
        return None
    w1, w2 = np.argwhere(inside)[0]
    return int(w1), int(w2)


# -- destination ----------------------------------------------------------------


def ddf_signals(g1, g2, gr, books, m):
    """Noiseless destination signal for every pair when the relay forwards after slot ``m``."""
    n, T, M = books.n_msgs, books.T, books.M
    s = g1 * books.user1.entries[:, None, :] + g2 * books.user2.entries[None, :, :]
    if m < M:
        xr = books.relay.entries.reshape(n, n, M * T)
        s = s.copy()
        s[..., m * T :] += gr * xr[..., m * T :]
    return s


def glrt_residuals(y_d, g1, g2, gr, books, candidate_m):
    """``{m: residual[w1, w2]}`` of squared errors under each decision-time hypothesis."""
    return {
        m: np.sum(np.abs(y_d - ddf_signals(g1, g2, gr, books, m)) ** 2, axis=-1)
        for m in candidate_m
    }


def _pick(scores):
    """Minimize over ``{hyp: array[w1, w2]}``; hypotheses earlier in the dict win ties."""
    best = None
    for hyp, arr in scores.items():
        k = int(np.argmin(arr))
        val = arr.flat[k]
        if best is None or val < best[0]:
            best = (val, hyp, np.unravel_index(k, arr.shape))
    _, hyp, (w1, w2) = best
    return (int(w1), int(w2)), hyp


def glrt_decode(y_d, g1, g2, gr, books, candidate_m):
    """Joint ML guess of the message pair and the relay decision time.

    Ties prefer the larger decision time, then the lexicographically
    smaller pair.
    """
    cands = sorted({int(m) for m in candidate_m}, reverse=True)
    if not cands:
        raise ValueError("candidate_m is empty")
    if any(not 1 <= m <= books.M for m in cands):
        raise ValueError("candidate decision times must lie in 1..M")
    return _pick(glrt_residuals(y_d, g1, g2, gr, books, cands))


def maf_gain(h1, h2, power, noise_var=NOISE_VAR):
    """Amplification that keeps the relay's transmit power at ``power``."""
    return math.sqrt(power / ((abs(h1) ** 2 + abs(h2) ** 2) * power + noise_var))


def maf_nll(y_d, g1, g2, gr, h1, h2, b, books, noise_var_relay=NOISE_VAR, noise_var_dest=NOISE_VAR):
    """Negative log-likelihood of every pair under amplify-and-forward from the half-block.

    Scaled so that it is comparable with ``residual / noise_var_dest`` of a
    decode-and-forward hypothesis.
    """
    half = books.M * books.T // 2
    x1, x2 = books.user1.entries, books.user2.entries
    first = h1 * x1[:, None, :half] + h2 * x2[None, :, :half]
    s1 = g1 * x1[:, None, :half] + g2 * x2[None, :, :half]
    s2 = g1 * x1[:, None, half:] + g2 * x2[None, :, half:] + gr * b * first
    var2 = noise_var_dest + abs(gr * b) ** 2 * noise_var_relay
    e1 = np.sum(np.abs(y_d[:half] - s1) ** 2, axis=-1) / noise_var_dest
    e2 = np.sum(np.abs(y_d[half:] - s2) ** 2, axis=-1) / var2
    return e1 + e2 + half * math.log(var2 / noise_var_dest)


# -- protocol runs ----------------------------------------------------------------


class TrialOutcome(NamedTuple):
    decision_time: Optional[int]  # slot the relay decoded at; M if silent; None if it amplified
    relay_decoded: bool
    relay_correct: bool
    dest_message: tuple
    dest_decision_time: Optional[int]  # None when the destination chose amplify-and-forward
    error: bool
    trace: Optional[dict] = None

    def core(self):
        """Outcome without the trace, for comparisons between runs."""
        return tuple(self[:6])


@dataclass(frozen=True)
class _Plan:
    attempts: tuple  # slots at which the relay tries to decode
    maf_fallback: bool  # amplify the first half if no attempt succeeds


def relay_plan(mode, M, r):
    mode = ProtocolMode(mode)
    if mode is ProtocolMode.DDF:
        return _Plan(tuple(range(1, M)), False)
    if mode is ProtocolMode.MAF:
        check_even_slots(M)
        return _Plan((), True)
    M = check_even_slots(M)
    half = M // 2
    first = half if mode is ProtocolMode.HDAF_MODIFIED else 1
    if r > 2 / 3:
        return _Plan((), True)
    if r > 0.5:
        return _Plan(tuple(range(first, M)), False)
    return _Plan(tuple(range(first, half + 1)), True)


def _trial_rng(seed, j, i):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(1, j, i))))


def check_mu(mu, T):
    mu = check_positive(mu, "mu")
    if not mu * T > 3:
        raise ValueError(f"need mu*T > 3, got mu*T = {mu * T:g}")
    return mu


def run_trial(
    mode,
    M,
    T,
    n_msgs,
    snr_db,
    mu=None,
    seed=0,
    r=0.25,
    books=None,
    channel=None,
    stream=(0, 0),
    relay_enabled=True,
    trace=False,
):
    """Transmit one uniformly drawn message pair through the chosen protocol.

    Randomness is drawn in a fixed order (channel, messages, relay noise,
    destination noise) from the substream ``(seed, *stream)``, so runs of
    different modes with the same seed see the same realizations.  Pass
    ``channel`` to override the fading draw.
    """
    mode = ProtocolMode(mode)
    M = check_positive_int(M, "M")
    T = check_positive_int(T, "T")
    mu = check_mu(4 / T if mu is None else mu, T)
    r = check_unit_interval(r)
    plan = relay_plan(mode, M, r)
    if not relay_enabled:
        plan = _Plan((), False)

    P = 10.0 ** (snr_db / 10.0)
    if books is None:
        books = generate_codebooks(seed, M, T, n_msgs, P)
    elif not math.isclose(books.user1.power, P):
        books = books.scaled(P)
    n = books.n_msgs
    L = M * T
    delta = mu * math.log(P)

    rng = _trial_rng(seed, *stream)
    drawn = ChannelDraw.sample(rng)
    ch = drawn if channel is None else channel
    w1, w2 = (int(w) for w in rng.integers(n, size=2))
    noise_r = _cn(rng, (L,), NOISE_VAR)
    noise_d = _cn(rng, (L,), NOISE_VAR)

    x1, x2 = books.user1[w1], books.user2[w2]
    y_r = ch.h1 * x1 + ch.h2 * x2 + noise_r

    decided = None
    w_relay = None
    attempts = []
    for m in plan.attempts:
        gate = relay_outage_free(ch.h1, ch.h2, m, M, T, n, P)
        w_hat = relay_decode_bounded(y_r, ch.h1, ch.h2, books, m, delta, NOISE_VAR, gate)
        attempts.append((m, gate, w_hat))
        if w_hat is not None:
            decided, w_relay = m, w_hat
            break

    x_relay = np.zeros(L, dtype=complex)
    b = None
    if decided is not None:
        k = w_relay[0] * n + w_relay[1]
        x_relay[decided * T :] = books.relay[k][decided * T :]
    elif plan.maf_fallback:
        b = maf_gain(ch.h1, ch.h2, P)
        half = L // 2
        x_relay[half:] = b * y_r[:half]
    y_d = ch.g1 * x1 + ch.g2 * x2 + ch.gr * x_relay + noise_d

    # destination: every decode-forward slot the plan allows, relay silence, and AF if possible
    scores = {}
    if plan.maf_fallback:
        b_hyp = maf_gain(ch.h1, ch.h2, P)
        scores[None] = maf_nll(y_d, ch.g1, ch.g2, ch.gr, ch.h1, ch.h2, b_hyp, books)
    cands = sorted(set(plan.attempts) | (set() if plan.maf_fallback else {M}), reverse=True)
    for m, res in glrt_residuals(y_d, ch.g1, ch.g2, ch.gr, books, cands).items():
        scores[m] = res / NOISE_VAR
    # ties: larger decision time first, AF last
    ordered = {m: scores[m] for m in cands}
    if None in scores:
        ordered[None] = scores[None]
    dest_msg, dest_m = _pick(ordered)

    # a relay that never decoded and had no amplify fallback sat silent through slot M
    outcome = TrialOutcome(
        decided if decided is not None or plan.maf_fallback else M,
        decided is not None,
        decided is not None and w_relay == (w1, w2),
        dest_msg,
        dest_m,
        dest_msg != (w1, w2),
    )
    if trace:
        info = dict(
            w=(w1, w2),
            channel=ch,
            y_r=y_r,
            y_d=y_d,
            noise_r=noise_r,
            noise_d=noise_d,
            x_relay=x_relay,
            attempts=attempts,
            relay_message=w_relay,
            delta=delta,
            power=P,
            amp_gain=b,
            candidate_m=tuple(cands),
            books=books,
        )
        outcome = outcome._replace(trace=info)
    return outcome


class ErrorRow(NamedTuple):
    snr_db: float
    p_err: float
    stderr: float
    relay_error_rate: float
    relay_silent_rate: float
    n_trials: int


def simulate_trials(mode, M, T, n_msgs, snr_db_list, trials, mu=None, seed=0, r=0.25,
                    relay_enabled=True, n_jobs=1):
    """All trial outcomes, ``[[outcome per trial] per SNR]``; deterministic given ``seed``."""
    trials = check_positive_int(trials, "trials")
    T = check_positive_int(T, "T")
    mu = check_mu(4 / T if mu is None else mu, T)
    base = generate_codebooks(seed, M, T, n_msgs, 1.0)

    def one_snr(j, snr_db):
        books = base.scaled(10.0 ** (snr_db / 10.0))
        return [
            run_trial(mode, M, T, n_msgs, snr_db, mu, seed, r, books=books,
                      stream=(j, i), relay_enabled=relay_enabled)
            for i in range(trials)
        ]

    jobs = list(enumerate(snr_db_list))
    if n_jobs == 1:
        return [one_snr(j, s) for j, s in jobs]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda js: one_snr(*js), jobs))


def rows_from_outcomes(mode, M, r, relay_enabled, snr_db_list, outcomes):
    """Reduce ``simulate_trials`` output to one :class:`ErrorRow` per SNR."""
    plan = relay_plan(mode, M, r) if relay_enabled else _Plan((), False)
    rows = []
    for snr_db, trial in zip(snr_db_list, outcomes):
        n = len(trial)
        p = sum(o.error for o in trial) / n
        relay_err = sum(o.relay_decoded and not o.relay_correct for o in trial) / n
        # with an amplify fallback the relay always transmits something
        silent = 0.0 if plan.maf_fallback else sum(not o.relay_decoded for o in trial) / n
        rows.append(ErrorRow(float(snr_db), p, math.sqrt(p * (1 - p) / n), relay_err, silent, n))
    return rows


def error_rate(mode, M, T, n_msgs, snr_db_list, trials, mu=None, seed=0, r=0.25,
               relay_enabled=True, n_jobs=1):
    """Error statistics per SNR."""
    out = simulate_trials(mode, M, T, n_msgs, snr_db_list, trials, mu, seed, r, relay_enabled, n_jobs)
    return rows_from_outcomes(mode, M, r, relay_enabled, snr_db_list, out)


def agreement_rate(a, b):
    """Fraction of paired trials with identical outcomes."""
    if len(a) != len(b):
        raise ValueError("outcome lists differ in length")
    return sum(x.core() == y.core() for x, y in zip(a, b)) / len(a)


def error_csv_lines(rows):
    yield "snr_db,p_err,stderr,relay_error_rate,relay_silent_rate,n_trials"
    for row in rows:
        yield ",".join(
            [format_ext(row.snr_db), format_ext(row.p_err), format_ext(row.stderr),
             format_ext(row.relay_error_rate), format_ext(row.relay_silent_rate), str(row.n_trials)]
        )


def summary_line(params, rows):
    """Single-line ``key=value`` record of a run."""
    items = [f"{k}={v}" for k, v in params.items()]
    items.append("snr_db=" + ";".join(format_ext(r.snr_db) for r in rows))
    items.append("p_err=" + ";".join(format_ext(r.p_err) for r in rows))
    items.append("relay_error_rate=" + ";".join(format_ext(r.relay_error_rate) for r in rows))
    return " ".join(items)
