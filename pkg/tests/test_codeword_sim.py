import itertools
import math

import numpy as np
import pytest

from marc_dmt.channel_mc import ChannelDraw
from marc_dmt.codeword_sim import (
    Codebook,
    Codebooks,
    ErrorRow,
    ProtocolMode,
    agreement_rate,
    error_csv_lines,
    error_rate,
    generate_codebooks,
    glrt_decode,
    glrt_residuals,
    maf_gain,
    maf_nll,
    relay_decode_bounded,
    relay_outage_free,
    relay_plan,
    run_trial,
    simulate_trials,
    sphere_distances,
    summary_line,
)

rng0 = np.random.default_rng(2024)


def cn(*shape):
    return (rng0.standard_normal(shape) + 1j * rng0.standard_normal(shape)) / math.sqrt(2)


def brute_force_ml(y, g1, g2, gr, books, m):
    """Exhaustive ML with the relay known to forward from slot m + 1, by explicit loops."""
    n, T, M = books.n_msgs, books.T, books.M
    best = None
    for w1 in range(n):
        for w2 in range(n):
            s = g1 * books.user1[w1] + g2 * books.user2[w2]
            if m < M:
                xr = books.relay[w1 * n + w2].copy()
                xr[: m * T] = 0
                s = s + gr * xr
            d = float(np.sum(np.abs(y - s) ** 2))
            if best is None or d < best[0]:
                best = (d, (w1, w2))
    return best[1]


# -- codebooks ------------------------------------------------------------------


def test_codebook_shapes():
    books = generate_codebooks(1, 2, 2, 2, 1.0)
    assert (len(books.user1), len(books.user2), len(books.relay)) == (2, 2, 4)
    assert books.user1.entries.shape[1] == 4
    assert books.relay.entries.shape == (4, 4)


def test_codebooks_deterministic():
    a = generate_codebooks(7, 2, 4, 3, 2.0)
    b = generate_codebooks(7, 2, 4, 3, 2.0)
    c = generate_codebooks(8, 2, 4, 3, 2.0)
    np.testing.assert_array_equal(a.relay.entries, b.relay.entries)
    assert not np.allclose(a.user1.entries, c.user1.entries)


def test_codebook_power():
    P = 3.0
    books = generate_codebooks(5, 8, 8, 16, P)  # 256 x 64 relay symbols
    relay_power = np.mean(np.abs(books.relay.entries) ** 2)
    assert relay_power == pytest.approx(P, rel=0.05)
    for b in (books.user1, books.user2):
        assert np.mean(np.abs(b.entries) ** 2) == pytest.approx(P, rel=0.2)


def test_codebook_limits():
    with pytest.raises(ValueError):
        generate_codebooks(0, 8, 9, 2)
    with pytest.raises(ValueError):
        generate_codebooks(0, 2, 4, 17)
    with pytest.raises(ValueError):
        generate_codebooks(0, 2, 4, 1)


def test_scaled_books_keep_codewords():
    books = generate_codebooks(3, 2, 4, 2, 1.0)
    big = books.scaled(100.0)
    np.testing.assert_allclose(big.user2.entries, 10 * books.user2.entries)
    assert big.relay.power == 100.0


def test_codebook_must_be_2d():
    with pytest.raises(ValueError):
        Codebook(np.zeros(4), 1.0)


# -- relay decoder -----------------------------------------------------------------


def test_relay_noiseless_returns_truth():
    # codewords far apart relative to the unit-noise sphere radius
    books = generate_codebooks(2, 4, 2, 4, 100.0)
    h1, h2 = 0.8 + 0.3j, -0.4 + 0.9j
    for w1, w2 in itertools.product(range(4), repeat=2):
        y = h1 * books.user1[w1] + h2 * books.user2[w2]
        assert relay_decode_bounded(y, h1, h2, books, 2, delta=0.5) == (w1, w2)


def test_relay_gate_closed():
    books = generate_codebooks(2, 4, 2, 4, 1.0)
    y = books.user1[0] + books.user2[0]
    assert relay_decode_bounded(y, 1.0, 1.0, books, 2, delta=0.5, outage_free=False) is None


def test_relay_two_pairs_in_sphere():
    books = generate_codebooks(2, 2, 2, 2, 1.0)
    u1 = books.user1.entries.copy()
    u1[1] = u1[0]  # duplicated codeword: (0, w2) and (1, w2) coincide
    dup = Codebooks(Codebook(u1, 1.0), books.user2, books.relay, 2, 2)
    y = dup.user1[0] + dup.user2[1]
    assert relay_decode_bounded(y, 1.0, 1.0, dup, 1, delta=0.5) is None


def test_relay_decision_slot_range():
    books = generate_codebooks(2, 2, 2, 2, 1.0)
    with pytest.raises(ValueError):
        relay_decode_bounded(np.zeros(4, complex), 1, 1, books, 2, 0.5)


def test_outage_gate_uses_codebook_rate():
    # 2 messages per user = 1 bit per block; mT symbols carry mT log2(1 + a snr)
    assert relay_outage_free(1.0, 1.0, 1, 2, 4, 2, 10.0)
    assert not relay_outage_free(0.0, 1.0, 1, 2, 4, 2, 10.0)
    a = 2 ** (1 / 4) - 1  # per-user test at equality for one slot of T=4
    assert not relay_outage_free(math.sqrt(a), 10.0, 1, 2, 4, 2, 1.0)


# -- destination decoder -----------------------------------------------------------


def test_glrt_noiseless():
    books = generate_codebooks(4, 4, 2, 3, 1.0)
    g1, g2, gr = cn(3)
    for m_true in (1, 2, 3, 4):
        for w1, w2 in [(0, 2), (1, 1), (2, 0)]:
            s = g1 * books.user1[w1] + g2 * books.user2[w2]
            if m_true < 4:
                xr = books.relay[w1 * 3 + w2].copy()
                xr[: m_true * 2] = 0
                s = s + gr * xr
            assert glrt_decode(s, g1, g2, gr, books, {1, 2, 3, 4}) == ((w1, w2), m_true)


def test_glrt_silent_hypothesis_is_mac_ml():
    books = generate_codebooks(6, 2, 2, 2, 1.0)
    for _ in range(50):
        g1, g2, gr = cn(3)
        y = cn(4) * 2
        msg, m = glrt_decode(y, g1, g2, gr, books, {2})
        assert m == 2
        assert msg == brute_force_ml(y, g1, g2, 0.0, books, 2)


def test_glrt_no_relay_link_matches_mac():
    books = generate_codebooks(6, 2, 2, 2, 1.0)
    for _ in range(50):
        g1, g2 = cn(2)
        y = cn(4) * 2
        msg, _ = glrt_decode(y, g1, g2, 0.0, books, {1, 2})
        assert msg == brute_force_ml(y, g1, g2, 0.0, books, 2)


def test_glrt_tie_break():
    # identical hypotheses: larger m and the smaller pair win
    books = generate_codebooks(1, 2, 2, 2, 1.0)
    y = np.zeros(4, complex)
    msg, m = glrt_decode(y, 0.0, 0.0, 0.0, books, {1, 2})
    assert (msg, m) == ((0, 0), 2)


def test_glrt_rejects_bad_candidates():
    books = generate_codebooks(1, 2, 2, 2, 1.0)
    with pytest.raises(ValueError):
        glrt_decode(np.zeros(4, complex), 1, 1, 1, books, set())
    with pytest.raises(ValueError):
        glrt_decode(np.zeros(4, complex), 1, 1, 1, books, {3})


def test_maf_likelihood_matches_gaussian_density():
    # oracle: full-covariance complex Gaussian log-density built from the linear model
    books = generate_codebooks(9, 2, 2, 2, 5.0)
    h1, h2, g1, g2, gr = cn(5)
    b = maf_gain(h1, h2, 5.0)
    y = cn(4) * 3
    got = maf_nll(y, g1, g2, gr, h1, h2, b, books)
    half = 2
    C = np.eye(4, dtype=complex)
    C[half:, half:] += abs(gr * b) ** 2 * np.eye(half)
    Cinv = np.linalg.inv(C)
    logdet = np.linalg.slogdet(C)[1]
    for w1, w2 in itertools.product(range(2), repeat=2):
        x1, x2 = books.user1[w1], books.user2[w2]
        s = g1 * x1 + g2 * x2
        s[half:] += gr * b * (h1 * x1[:half] + h2 * x2[:half])
        e = y - s
        nll = float(np.real(e.conj() @ Cinv @ e)) + logdet
        assert got[w1, w2] == pytest.approx(nll, rel=1e-10)


def test_maf_gain_normalizes_power():
    h1, h2, P = 0.5 + 0.5j, 1.2, 10.0
    b = maf_gain(h1, h2, P)
    received_power = (abs(h1) ** 2 + abs(h2) ** 2) * P + 1.0
    assert b**2 * received_power == pytest.approx(P)


# -- protocol runs -----------------------------------------------------------------


def test_plans():
    assert relay_plan("ddf", 4, 0.9).attempts == (1, 2, 3)
    assert relay_plan("maf", 4, 0.1).attempts == ()
    assert relay_plan("hdaf", 4, 0.3) == relay_plan(ProtocolMode.HDAF, 4, 0.3)
    assert relay_plan("hdaf", 4, 0.3).attempts == (1, 2) and relay_plan("hdaf", 4, 0.3).maf_fallback
    assert relay_plan("hdaf", 4, 0.6).attempts == (1, 2, 3)
    assert relay_plan("hdaf", 4, 0.7).attempts == ()
    assert relay_plan("hdaf_modified", 4, 0.3).attempts == (2,)
    assert relay_plan("hdaf_modified", 4, 0.6).attempts == (2, 3)
    with pytest.raises(ValueError):
        relay_plan("hdaf", 3, 0.3)


def test_mu_T_condition():
    with pytest.raises(ValueError):
        run_trial("ddf", 2, 4, 2, 20, mu=0.5)
    run_trial("ddf", 2, 4, 2, 20, mu=0.76)


@pytest.mark.parametrize("mode", list(ProtocolMode))
def test_high_snr_nearly_error_free(mode):
    rows = error_rate(mode, 2, 4, 2, [60], 1000, mu=1, seed=11)
    assert rows[0].p_err < 0.01


def test_severed_relay_links():
    books = generate_codebooks(3, 2, 4, 2, 100.0)
    for i in range(200):
        g = ChannelDraw.sample(np.random.default_rng(i))
        ch = ChannelDraw(0j, 0j, g.g1, g.g2, g.gr)
        out = run_trial("ddf", 2, 4, 2, 20, 1, seed=3, books=books, channel=ch, stream=(0, i), trace=True)
        assert out.decision_time == 2 and not out.relay_decoded
        assert not np.any(out.trace["x_relay"])
        if out.dest_decision_time == 2:
            assert out.dest_message == brute_force_ml(out.trace["y_d"], ch.g1, ch.g2, ch.gr, books, 2)


def test_relay_disabled_baseline():
    out = run_trial("ddf", 2, 4, 2, 30, 1, seed=3, relay_enabled=False, trace=True)
    assert out.trace["candidate_m"] == (2,)
    assert not np.any(out.trace["x_relay"])


def test_outcome_invariants():
    for mode in ProtocolMode:
        for i in range(100):
            o = run_trial(mode, 2, 4, 2, 5, 1, seed=5, stream=(0, i), trace=True)
            assert o.relay_decoded or not o.relay_correct
            assert o.error == (o.dest_message != o.trace["w"])


def test_half_duplex_accounting():
    books = generate_codebooks(5, 4, 2, 2, 1.0)
    for mode, r in [("ddf", 0.3), ("hdaf", 0.3), ("hdaf", 0.8), ("maf", 0.3), ("hdaf_modified", 0.3)]:
        for i in range(150):
            o = run_trial(mode, 4, 2, 2, 10, 2, seed=5, r=r, books=books, stream=(1, i), trace=True)
            xr = o.trace["x_relay"]
            if o.relay_decoded:
                assert not np.any(xr[: o.decision_time * 2])
            else:
                assert not np.any(xr[: 4 * 2 // 2])


def test_hdaf_modified_matches_hdaf_when_deciding_at_half():
    # same channels and noise: identical relay behaviour and destination message
    books = generate_codebooks(1, 4, 4, 2, 1.0)
    seen = 0
    for i in range(1500):
        a = run_trial("hdaf", 4, 4, 2, 10, 1, seed=1, r=0.3, books=books, stream=(0, i))
        b = run_trial("hdaf_modified", 4, 4, 2, 10, 1, seed=1, r=0.3, books=books, stream=(0, i))
        if a.decision_time == 2:
            seen += 1
            assert a[:4] == b[:4] and a.error == b.error
    assert seen > 10


def test_hdaf_variants_coincide_at_M2():
    a = simulate_trials("hdaf", 2, 4, 2, [0, 10], 200, mu=1, seed=4, r=0.3)
    b = simulate_trials("hdaf_modified", 2, 4, 2, [0, 10], 200, mu=1, seed=4, r=0.3)
    assert [agreement_rate(x, y) for x, y in zip(a, b)] == [1.0, 1.0]


def test_paired_seeds_share_realizations():
    a = run_trial("ddf", 2, 4, 2, 10, 1, seed=8, trace=True)
    b = run_trial("maf", 2, 4, 2, 10, 1, seed=8, trace=True)
    assert a.trace["w"] == b.trace["w"]
    np.testing.assert_array_equal(a.trace["noise_d"], b.trace["noise_d"])


# -- error rates -----------------------------------------------------------------


def test_error_rate_properties():
    snrs = [0, 5, 10, 15]
    rows = error_rate("ddf", 2, 4, 2, snrs, 2000, mu=1, seed=6)
    for row in rows:
        assert row.relay_error_rate <= row.p_err + 1e-12
    for a, b in zip(rows, rows[1:]):
        assert b.p_err <= a.p_err + 2 * math.hypot(a.stderr, b.stderr)


def test_ddf_not_worse_than_mac_baseline():
    # not claimed by the asymptotic analysis; soft threshold of two standard errors
    ddf = error_rate("ddf", 2, 4, 2, [30], 3000, mu=1, seed=12)[0]
    mac = error_rate("ddf", 2, 4, 2, [30], 3000, mu=1, seed=12, relay_enabled=False)[0]
    assert ddf.p_err <= mac.p_err + 2 * math.hypot(ddf.stderr, mac.stderr)


def test_error_rate_deterministic_across_workers():
    a = error_rate("hdaf", 2, 4, 2, [0, 10], 300, seed=2, n_jobs=1)
    b = error_rate("hdaf", 2, 4, 2, [0, 10], 300, seed=2, n_jobs=2)
    assert a == b


def test_error_csv_and_summary():
    rows = [ErrorRow(20.0, 0.01, 0.002, 0.0, 0.125, 1000)]
    lines = list(error_csv_lines(rows))
    assert lines[0] == "snr_db,p_err,stderr,relay_error_rate,relay_silent_rate,n_trials"
    assert lines[1] == "20,0.01,0.002,0,0.125,1000"
    line = summary_line({"mode": "ddf", "seed": 3}, rows)
    assert "\n" not in line
    assert line.startswith("mode=ddf seed=3 ")
    assert "p_err=0.01" in line


def test_default_mu_is_four_over_T():
    o = run_trial("ddf", 2, 8, 2, 10, seed=1, trace=True)
    assert o.trace["delta"] == pytest.approx(0.5 * math.log(10.0))


def test_glrt_residual_ordering():
    # the unrestricted GLRT only moves away from the true-slot ML answer by
    # finding a strictly smaller residual
    books = generate_codebooks(3, 2, 4, 2, 10.0)
    for i in range(300):
        o = run_trial("ddf", 2, 4, 2, 10, 1, seed=3, books=books, stream=(0, i), trace=True)
        ch, y = o.trace["channel"], o.trace["y_d"]
        m_true = o.decision_time
        res = glrt_residuals(y, ch.g1, ch.g2, ch.gr, books, {1, 2})
        known = glrt_decode(y, ch.g1, ch.g2, ch.gr, books, {m_true})[0]
        if o.dest_message != known:
            assert res[o.dest_decision_time][o.dest_message] < res[m_true][known]


def test_sphere_distances_shape():
    books = generate_codebooks(3, 2, 4, 3, 1.0)
    d = sphere_distances(np.zeros(8, complex), 1.0, 1.0, books, 1)
    assert d.shape == (3, 3)
