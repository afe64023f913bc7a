"""Command-line front end; every command writes CSV.

Exit status: 0 on success, 2 on a usage error, 1 if ``verify`` finds a
failing check.
"""

import argparse
import contextlib
import sys

import numpy as np

from . import channel_mc, codeword_sim, dmt_formulas, exponent_oracle
from .piecewise import INF, DomainError, eval_curve, format_ext, sample_to_table

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

PROTOCOLS = ("ddf_finite", "ddf_infinite", "maf", "hdaf", "hdaf_modified")
_NEEDS_M = {"ddf_finite", "hdaf", "hdaf_modified"}


class UsageError(Exception):
    pass


# -- argument parsing ---------------------------------------------------------


def int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def snr_list(text):
    """``start:stop:step`` (stop included) or a comma-separated list, in dB."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [start + k * step for k in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR spec {text!r}; use 10:25:3 or 20,40,60")


def window(text):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window {text!r}; use lo:hi in dB")
    return lo, hi


def _bool(text):
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def read_config(path):
    """``key=value`` lines, ``#`` starts a comment; keys may use ``-`` or ``_``."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="marc-dmt", description="Diversity-multiplexing tradeoff of DDF/HDAF on the MARC."
    )
    parser.add_argument("--config", help="key=value file; command-line flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output CSV path (default: stdout)")
        return p

    p = common(sub.add_parser("curve", help="sample a closed-form DMT curve"))
    p.add_argument("--protocol", choices=PROTOCOLS, default="ddf_finite")
    p.add_argument("--M", type=int_list, default=None)
    p.add_argument("--samples", type=int, default=201)

    p = common(sub.add_parser("fig2", help="finite-M DDF curves next to the infinite-M limit"))
    p.add_argument("--M", type=int_list, default=[2, 5, 10, 20])
    p.add_argument("--samples", type=int, default=201)

    p = common(sub.add_parser("verify", help="check closed forms against grid oracles"))
    p.add_argument("--M", type=int_list, default=[2, 4, 5])
    p.add_argument("--r-step", type=float, default=0.1)
    p.add_argument("--step", type=float, default=0.02, help="oracle grid step for the closed forms")
    p.add_argument("--bc-step", type=float, default=0.05, help="grid step for the inequality searches")
    p.add_argument("--T", type=int, default=4)
    p.add_argument("--skip", default="", help="comma list of check groups to skip (A,B,C)")

    p = common(sub.add_parser("outage", help="Monte Carlo outage sweep and slope fit"))
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--snr", type=snr_list, default=snr_list("10:25:3"))
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--base-rate", type=float, default=0.0)
    p.add_argument("--relay-offset-db", type=float, default=0.0)
    p.add_argument("--window", type=window, default=(10.0, 25.0))

    p = common(sub.add_parser("sim", help="codeword-level error-rate simulation"))
    p.add_argument("--mode", choices=[m.value for m in codeword_sim.ProtocolMode], default="ddf")
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--T", type=int, default=4)
    p.add_argument("--n", type=int, default=2, help="messages per user")
    p.add_argument("--mu", type=float, default=None, help="sphere-radius exponent (default 4/T)")
    p.add_argument("--r", type=float, default=0.25, help="selects the hybrid protocols' regime")
    p.add_argument("--snr", type=snr_list, default=snr_list("0,10,20,30"))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-relay", action="store_true", default=False)
    p.add_argument("--compare-with", default=None,
                   choices=[m.value for m in codeword_sim.ProtocolMode],
                   help="rerun with this mode on the same seed and report agreement")
    return parser


def parse_args(argv):
    parser = build_parser()
    first = parser.parse_args(argv)
    if first.config:
        values = read_config(first.config)
        sub = parser._subparsers._group_actions[0].choices[first.command]
        known = {a.dest: a for a in sub._actions}
        for key, value in values.items():
            if key not in known or key == "help":
                raise UsageError(f"unknown config key {key!r} for {first.command}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                value = _bool(value)
            elif action.type is not None:
                value = action.type(value)
            sub.set_defaults(**{key: value})
        return parser.parse_args(argv)
    return first


# -- output helpers -----------------------------------------------------------


@contextlib.contextmanager
def _open_out(path):
    if path:
        with open(path, "w", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


def _write(lines, path):
    with _open_out(path) as fh:
        for line in lines:
            fh.write(line + "\n")


def _side_stream(args):
    """Where secondary records go: stdout if the CSV went to a file."""
    return sys.stdout if args.out else sys.stderr


def _positive(value, name):
    if value is None or value <= 0:
        raise UsageError(f"--{name} must be positive, got {value}")


# -- curve / fig2 -------------------------------------------------------------


DEFAULT_M = {"ddf_finite": [2, 5, 10, 20], "hdaf": [2, 4, 8, 20], "hdaf_modified": [2, 4, 8, 20]}


def curve_columns(protocol, Ms):
    if protocol in _NEEDS_M:
        if Ms is None:
            Ms = DEFAULT_M[protocol]
        if not Ms:
            raise UsageError(f"protocol {protocol} needs --M")
        builder = {
            "ddf_finite": dmt_formulas.out_curve,
            "hdaf": dmt_formulas.hdaf_curve,
            "hdaf_modified": dmt_formulas.hdaf_modified_curve,
        }[protocol]
        cols = []
        for M in Ms:
            if M < 1:
                raise UsageError(f"M must be >= 1, got {M}")
            if protocol != "ddf_finite" and M % 2:
                raise UsageError(f"protocol {protocol} needs an even M, got M={M}")
            cols.append((f"d_M{M}", builder(M)))
        return cols
    if Ms:
        raise UsageError(f"protocol {protocol} does not depend on M; drop --M")
    curve = dmt_formulas.ddf_infinite_curve() if protocol == "ddf_infinite" else dmt_formulas.maf_curve()
    return [(f"d_{protocol}", curve)]


def curve_table(columns, samples):
    if samples < 2:
        raise UsageError(f"--samples must be >= 2, got {samples}")
    rs = []
    for r in sorted({r for _, c in columns for r, _ in sample_to_table(c, samples)}):
        if not rs or r - rs[-1] > 1e-12:
            rs.append(r)
    header = "r," + ",".join(name for name, _ in columns)
    rows = [[r] + [eval_curve(c, r) for _, c in columns] for r in rs]
    return header, rows


def _table_lines(header, rows):
    yield header
    for row in rows:
        yield ",".join(format_ext(v) for v in row)


def cmd_curve(args):
    header, rows = curve_table(curve_columns(args.protocol, args.M), args.samples)
    _write(_table_lines(header, rows), args.out)
    return EXIT_OK


def cmd_fig2(args):
    cols = curve_columns("ddf_finite", args.M) + curve_columns("ddf_infinite", None)
    header, rows = curve_table(cols, args.samples)
    _write(_table_lines(header, rows), args.out)
    return EXIT_OK


# -- verify -------------------------------------------------------------------


def _status(ok):
    return "PASS" if ok else "FAIL"


def _equal_within(closed, oracle, slack):
    if closed == INF or oracle == INF:
        return closed == oracle
    return abs(closed - oracle) <= slack


def verify_rows(Ms, r_step, step, bc_step, T=4, skip=()):
    """Rows ``(check, m, M, r, closed_form, oracle, slack, status)``.

    Formula functions are looked up on the module at call time, so a test
    can swap one out and watch the report fail.
    """
    if not 0 < r_step <= 1:
        raise UsageError(f"--r-step must lie in (0, 1], got {r_step}")
    if bc_step > 0.05:
        raise UsageError(f"--bc-step must be <= 0.05, got {bc_step}")
    rs = [round(k * r_step, 12) for k in range(int(np.floor(1 / r_step + 1e-9)) + 1)]
    slack_a = 3 * step * 5
    slack_bc = 3 * bc_step * 5
    f = dmt_formulas
    rows = []
    for M in Ms:
        for m in range(1, M + 1):
            for r in rs:
                if "A" not in skip:
                    c = f.d_relay_decision(m, M, r)
                    o = exponent_oracle.relay_exponent_oracle(m, M, r, step)
                    rows.append(("A_relay", m, M, r, c, o, slack_a, _status(_equal_within(c, o, slack_a))))
                    c = f.d_dest_outage(m, M, r)
                    o = exponent_oracle.dest_exponent_oracle(m, M, r, step)
                    rows.append(("A_dest", m, M, r, c, o, slack_a, _status(_equal_within(c, o, slack_a))))
                if "B" not in skip and m >= 2:
                    bound = f.d_relay_decision(m, M, r) + f.d_dest_outage(m, M, r)
                    for s in (0, 2):
                        o = exponent_oracle.appendixB_correlated_exponent(m, M, r, T, s, bc_step)
                        ok = bound != INF and o >= bound - slack_bc or bound == INF and o == INF
                        rows.append((f"B_s{s}", m, M, r, bound, o, slack_bc, _status(ok)))
    if "C" not in skip:
        for r in (r for r in rs if r <= 0.5):
            ex = exponent_oracle.appendixC_exponents(r, T, bc_step)
            for name in ("d_pe1", "d_pe12", "d_k"):
                o = getattr(ex, name)
                rows.append((f"C_{name}", "", "", r, 2 - r, o, slack_bc, _status(o >= 2 - r - slack_bc)))
    return rows


def verify_lines(rows):
    yield "check,m,M,r,closed_form,oracle,slack,status"
    for check, m, M, r, c, o, slack, status in rows:
        yield ",".join([check, str(m), str(M), format_ext(r), format_ext(c), format_ext(o),
                        format_ext(slack), status])


def cmd_verify(args):
    skip = {s.strip().upper() for s in args.skip.split(",") if s.strip()}
    rows = verify_rows(args.M, args.r_step, args.step, args.bc_step, args.T, skip)
    _write(verify_lines(rows), args.out)
    n_fail = sum(row[-1] == "FAIL" for row in rows)
    print(f"checks={len(rows)} failures={n_fail}", file=_side_stream(args))
    return EXIT_FAIL if n_fail else EXIT_OK


# -- outage -------------------------------------------------------------------


def cmd_outage(args):
    if args.M is None or args.r is None:
        raise UsageError("outage needs --M and --r")
    _positive(args.trials, "trials")
    _positive(args.jobs, "jobs")
    config = channel_mc.McConfig(
        args.M, args.r, tuple(args.snr), args.trials, args.seed,
        args.relay_offset_db, args.base_rate,
    )
    rows = channel_mc.estimate_pout(config, n_jobs=args.jobs)
    _write(channel_mc.outage_csv_lines(rows, args.M), args.out)
    lo, hi = args.window
    try:
        fit = channel_mc.fit_diversity(rows, args.window)
        line = (f"slope={format_ext(fit.slope)} intercept={format_ext(fit.intercept)} "
                f"residual={format_ext(fit.residual)} window={format_ext(lo)}:{format_ext(hi)}")
    except channel_mc.InsufficientDataError as exc:
        line = f"slope=NA reason={str(exc).replace(' ', '_')}"
    print(line, file=_side_stream(args))
    return EXIT_OK


# -- sim ----------------------------------------------------------------------


def cmd_sim(args):
    _positive(args.trials, "trials")
    _positive(args.jobs, "jobs")
    mu = 4 / args.T if args.mu is None else args.mu
    if args.T < 1:
        raise UsageError(f"--T must be >= 1, got {args.T}")
    if not mu * args.T > 3:
        raise UsageError(f"need mu*T > 3, got mu*T = {mu * args.T:g}")
    relay = not args.no_relay
    kw = dict(M=args.M, T=args.T, n_msgs=args.n, snr_db_list=args.snr, trials=args.trials,
              mu=mu, seed=args.seed, r=args.r, relay_enabled=relay, n_jobs=args.jobs)
    outcomes = codeword_sim.simulate_trials(args.mode, **kw)
    rows = codeword_sim.rows_from_outcomes(args.mode, args.M, args.r, relay, args.snr, outcomes)
    _write(codeword_sim.error_csv_lines(rows), args.out)
    params = dict(mode=args.mode, M=args.M, T=args.T, n_msgs=args.n, mu=format_ext(mu),
                  r=format_ext(args.r), seed=args.seed, trials=args.trials)
    side = _side_stream(args)
    print(codeword_sim.summary_line(params, rows), file=side)
    if args.compare_with:
        other = codeword_sim.simulate_trials(args.compare_with, **kw)
        rates = [codeword_sim.agreement_rate(a, b) for a, b in zip(outcomes, other)]
        print(f"compare_mode={args.compare_with} agreement="
              + ";".join(format_ext(x) for x in rates), file=side)
    return EXIT_OK


COMMANDS = {
    "curve": cmd_curve,
    "fig2": cmd_fig2,
    "verify": cmd_verify,
    "outage": cmd_outage,
    "sim": cmd_sim,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports its own usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    except (UsageError, argparse.ArgumentTypeError, OSError) as exc:
        print(f"marc-dmt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError, TypeError, DomainError) as exc:
        print(f"marc-dmt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
