"""Command-line front end: ``so3obs certify|simulate|replay|lemma-sweep``.

Exit codes: 0 success, 1 invalid certificate or failed check, 2 bad config,
bad log or usage error.
"""

import argparse
import json
import sys
import warnings

import numpy as np

from .config import build_setup, load_config
from .errors import ConfigError, ParseError, So3ObsError
from .scenario import ESTIMATE_COLUMNS, TRACE_COLUMNS, load_replay, run, run_replay
from .sweeps import lemma_sweep

__all__ = ["main", "build_parser", "ENVELOPE_TOL"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ENVELOPE_TOL = 1e-6


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="so3obs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="YAML run configuration")
        sp.add_argument("--seed", type=_u64, default=None, help="noise / sampling seed")
        sp.add_argument("--out", default=None, help="output path (default from config, else stdout)")
        sp.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")

    c = sub.add_parser("certify", help="check the gain conditions and write the certificate")
    common(c)

    s = sub.add_parser("simulate", help="run the configured scenario and write the error trace")
    common(s)
    s.add_argument("--check-envelope", action="store_true",
                   help="exit 1 if a certified run leaves the convergence envelope")
    s.add_argument("--decimate", type=_positive_int, default=None, help="write every k-th sample")

    r = sub.add_parser("replay", help="run the observer on a recorded CSV log")
    r.add_argument("log", help="replay log path")
    common(r)
    r.add_argument("--check-envelope", action="store_true",
                   help="exit 1 if a certified run leaves the convergence envelope")
    r.add_argument("--decimate", type=_positive_int, default=None, help="write every k-th sample")

    lsw = sub.add_parser("lemma-sweep", help="Monte-Carlo check of the error-function inequalities")
    common(lsw, config_required=False)
    lsw.add_argument("--count", type=int, default=100000, help="samples per check")
    lsw.add_argument("--corrupt-e-r-sign", action="store_true",
                     help="test hook: flip the sign of the measurement-form e_R")
    return p


def _err(msg):
    print(msg, file=sys.stderr)


def _setup(args):
    cfg = load_config(args.config)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            setup = build_setup(cfg, seed=args.seed)
    except (So3ObsError, ValueError) as exc:
        # rank-deficient or malformed custom scenarios are configuration errors
        raise ConfigError(str(exc)) from exc
    for note in setup.notes:
        _err(note)
    return cfg, setup


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="", encoding="utf-8")


def cmd_certify(args):
    cfg, setup = _setup(args)
    cert = setup.certificate
    if setup.auto:
        print(f"auto gains: k_r = {setup.gains.k_r!r}, k_gamma = {setup.gains.k_gamma!r}")
    print(cert.report())
    out = args.out or cfg.certificate
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(cert.to_json() + "\n")
    for reason in cert.failure_reasons:
        _err(f"invalid: {reason}")
    return EXIT_OK if cert.valid else EXIT_FAIL


def _certified_start(setup, trace):
    """The envelope applies only to a valid certificate and a start inside the certified set."""
    cert = setup.certificate
    if not cert.valid or np.isnan(trace.egamma_norm[0]):
        return False
    return bool(trace.v0[0] < 2.0 * cert.consts.a * cert.consts.c1)


def _envelope_check(setup, trace):
    if not _certified_start(setup, trace):
        _err("envelope check skipped: run is not certified (invalid gains or start outside the set)")
        return EXIT_OK
    excess = trace.z_norm - trace.envelope
    worst = float(np.nanmax(excess))
    if worst > ENVELOPE_TOL:
        k = int(np.nanargmax(excess))
        _err(f"envelope violated by {worst:.3e} at t = {trace.t[k]!r}")
        return EXIT_FAIL
    _err(f"envelope check passed (worst excess {worst:.3e})")
    return EXIT_OK


def _write_trace(trace, path, columns, decimate):
    fh = _open_out(path)
    try:
        trace.to_csv(fh, columns=columns, decimate=decimate)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_simulate(args):
    cfg, setup = _setup(args)
    cert = setup.certificate
    trace = run(setup.scenario, setup.gains, cert if cert.valid else None)
    _write_trace(trace, args.out or cfg.trace, TRACE_COLUMNS, args.decimate or cfg.decimate)
    if args.check_envelope:
        return _envelope_check(setup, trace)
    return EXIT_OK


def cmd_replay(args):
    cfg, setup = _setup(args)
    log = load_replay(args.log)
    cert = setup.certificate
    trace = run_replay(log, setup.gains, setup.scenario.initial_state(), h=cfg.h,
                       certificate=cert if cert.valid else None)
    _write_trace(trace, args.out or cfg.trace, TRACE_COLUMNS + ESTIMATE_COLUMNS,
                 args.decimate or cfg.decimate)
    if args.check_envelope:
        return _envelope_check(setup, trace)
    return EXIT_OK


def cmd_lemma_sweep(args):
    seed = 0 if args.seed is None else args.seed
    res = lemma_sweep(seed, args.count, jobs=args.jobs, corrupt_e_r_sign=args.corrupt_e_r_sign)
    print(f"lemma sweep: {res.count} samples per check, seed {seed}")
    for name, margin in res.worst_margin.items():
        status = "PASS" if margin <= 0.0 else "FAIL"
        print(f"  [{status}] {name}: worst margin {margin!r}")
    if res.passed:
        return EXIT_OK
    for name in res.failures():
        _err(json.dumps({"check": name, "margin": res.worst_margin[name],
                         "sample": res.worst_sample[name]}))
    return EXIT_FAIL


COMMANDS = {
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "replay": cmd_replay,
    "lemma-sweep": cmd_lemma_sweep,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "lemma-sweep" and args.count <= 0:
        parser.error("--count must be positive")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError) as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE
    except So3ObsError as exc:
        _err(f"error: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
