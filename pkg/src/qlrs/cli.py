"""Command-line front end: ``qlrs {fig1,fig2,fig3,theorems,single,limits}``.

Tables go to stdout (or ``--out``) as CSV; ``--json`` writes the same rows.
Exit codes: 0 ok, 1 usage error, 2 results flagged (budget exhausted),
3 internal error.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import geometry
from .asymptotics import LIMITS, single_user_ber
from .channel import ChannelInstance, SystemConfig, make_instance, random_bits
from .harness import (DEFAULT_DETECTORS, LAS_KINDS, exact_load_dims, fig1_driver,
                      fig2_driver, fig3_driver, scaled_bk)
from .las import WSLASDetector, is_lml_point
from .refdet import DetectorKind
from .streams import trial_rng

log = logging.getLogger("qlrs")

EXIT_OK, EXIT_USAGE, EXIT_FLAGGED, EXIT_INTERNAL = 0, 1, 2, 3

RESULT_FIELDS = ("experiment", "alpha", "snr_db", "bk", "B", "K", "detector", "sample",
                 "ber", "ber_ci95_lo", "ber_ci95_hi", "bfr", "additions_per_bit", "bits",
                 "errors", "seed")
LIMIT_FIELDS = ("alpha", "snr_db", "detector", "ber", "sir", "multiplicity", "flag")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def format_number(v):
    """CSV text for one value; numbers below 1e-3 always carry an exponent."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return ""
        if v == 0:
            return "0"
        if abs(v) < 1e-3:
            return f"{v:.6e}"
        return f"{v:.10g}"
    return str(v)


def _json_value(text, raw):
    if text == "":
        return None
    if isinstance(raw, (bool, np.bool_)):
        return bool(raw)
    if isinstance(raw, (int, np.integer)):
        return int(raw)
    if isinstance(raw, (float, np.floating)):
        return float(text)
    return text


def write_table(rows, fields, out=None, json_path=None, meta=None):
    """Write rows (dicts) as CSV to ``out`` or stdout; mirror to JSON if asked."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    json_rows = []
    for r in rows:
        texts = [format_number(r.get(f)) for f in fields]
        w.writerow(texts)
        json_rows.append({f: _json_value(t, r.get(f)) for f, t in zip(fields, texts)})
    text = buf.getvalue()
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if json_path:
        with open(json_path, "w") as fh:
            json.dump({"meta": meta or {}, "rows": json_rows}, fh, indent=1)


def parse_grid(text, cast=float):
    """Comma-separated items, each a value or an inclusive ``start:stop:step`` range."""
    values = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise argparse.ArgumentTypeError(f"bad range {item!r}, expected start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0 or stop < start:
                raise argparse.ArgumentTypeError(f"bad range {item!r}")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            values.extend(cast(round(start + i * step, 12)) for i in range(n))
        else:
            values.append(cast(float(item)) if cast is int else cast(item))
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(values)


def _int_grid(text):
    vals = parse_grid(text, float)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _detectors(text):
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    try:
        return tuple(DetectorKind(n).value for n in names)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_common(p):
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (default: $QLRS_SEED or 0)")
    p.add_argument("--workers", type=int, default=0, help="worker processes, 0 = all cores")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.add_argument("--json", dest="json_path", help="also write the rows as JSON")
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--log-level", default="INFO")


def _add_mc(p):
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--detectors", type=_detectors, default=DEFAULT_DETECTORS)
    p.add_argument("--min-errors", type=int, default=200)
    p.add_argument("--max-bits", type=int, default=10_000_000)
    p.add_argument("--samples", type=int, default=5, help="short-sequence samples")
    p.add_argument("--group-rule", choices=("parallel", "exhaustive"), default="parallel")
    p.add_argument("--tanaka", action="store_true", help="add the replica ML limit curve")


def build_parser():
    parser = _Parser(prog="qlrs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fig1", help="BER/BFR versus BK")
    _add_common(p)
    _add_mc(p)
    p.add_argument("--bk", type=_int_grid, default=(8, 16, 32, 64, 128, 256, 512, 1024))
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--snr", type=float, default=11.0)

    p = sub.add_parser("fig2", help="BER/BFR versus SNR")
    _add_common(p)
    _add_mc(p)
    p.add_argument("--snr", type=parse_grid, default=parse_grid("0:15:1"))
    p.add_argument("--bk", type=int, default=1024)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--initial", choices=("mf", "random"), default="random")
    p.add_argument("--no-mf-complexity", action="store_true",
                   help="skip the MF-initial LAS runs used for the BFR panel")
    p.add_argument("--extended", action="store_true", help="full-scale BK = 3000")

    p = sub.add_parser("fig3", help="BER/BFR versus load")
    _add_common(p)
    _add_mc(p)
    p.add_argument("--alpha", type=parse_grid, default=parse_grid("0.1:1.3:0.1"))
    p.add_argument("--snr", type=float, default=11.0)
    p.add_argument("--scale", type=float, default=0.25,
                   help="fraction of the reference BK schedule")
    p.add_argument("--extended", action="store_true", help="full reference BK schedule")

    p = sub.add_parser("theorems", help="distance-geometry convergence tables")
    _add_common(p)
    p.add_argument("--which", choices=("thm1", "thm2", "thm4"), required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--K", type=_int_grid, default=None)
    p.add_argument("--M1", type=int, default=2)
    p.add_argument("--M2", type=int, default=4)
    p.add_argument("--M", type=int, default=3, help="largest weight for thm2 part (i)")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--c", type=float, default=3.0, help="thm4 noise level sigma = c/sqrt(N)")

    p = sub.add_parser("single", help="trace one detection")
    _add_common(p)
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--N", type=int, default=10)
    p.add_argument("--B", type=int, default=1)
    p.add_argument("--snr", type=float, default=11.0)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--initial", choices=("mf", "random"), default="mf")
    p.add_argument("--stages", type=_int_grid, default=(8, 4, 2, 1))
    p.add_argument("--group-rule", choices=("parallel", "exhaustive"), default="parallel")
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--orthogonal", action="store_true", help="use R = I instead of random chips")

    p = sub.add_parser("limits", help="large-system limit BER curves")
    _add_common(p)
    p.add_argument("--alpha", type=parse_grid, default=parse_grid("0:2:0.1"))
    p.add_argument("--snr", type=parse_grid, default=parse_grid("11"))
    p.add_argument("--tanaka", action="store_true")
    return parser


def read_config(path):
    """Parse a ``key = value`` file (``#`` comments, blank lines ignored)."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise UsageError(f"unknown command {name}")


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = _subparser(parser, args.command)
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in read_config(args.config).items():
            if key not in known or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise UsageError(f"{key} must be a boolean")
                value = value.lower() in ("true", "1", "yes")
            defaults[key] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.seed is None:
        env = os.environ.get("QLRS_SEED")
        try:
            args.seed = int(env) if env not in (None, "") else 0
        except ValueError:
            raise UsageError(f"QLRS_SEED must be an integer, got {env!r}")
    if getattr(args, "workers", 0) < 0:
        raise UsageError("--workers must be >= 0")
    return args


def _limit_rows(point, seed):
    rows = []
    lims, su = point.limits
    base = {"experiment": point.experiment, "alpha": point.alpha, "snr_db": point.snr_db,
            "bk": point.bk, "B": point.B, "K": point.K, "sample": "avg", "seed": seed}
    for lp in lims:
        ber = None if lp.flag in ("undefined", "nonconverged") else lp.ber
        rows.append(dict(base, detector=f"limit:{lp.detector}", ber=ber))
    rows.append(dict(base, detector="limit:single_user", ber=su))
    return rows


def grid_rows(points, seed):
    """ResultRows for every detector and sample of every grid point, then limit rows."""
    rows = []
    for pt in points:
        las_labels = {lab for k in LAS_KINDS for lab in pt.summary.plan.labels(k)}
        for st in pt.summary.rows():
            lo, hi = st.ber_ci95
            is_las = st.label in las_labels
            rows.append({"experiment": pt.experiment, "alpha": pt.alpha,
                         "snr_db": pt.snr_db, "bk": pt.bk, "B": pt.B, "K": pt.K,
                         "detector": st.label, "sample": str(st.sample), "ber": st.ber,
                         "ber_ci95_lo": lo, "ber_ci95_hi": hi,
                         "bfr": st.bfr if is_las else None,
                         "additions_per_bit": st.additions_per_bit if is_las else None,
                         "bits": st.bits, "errors": st.errors, "seed": seed})
        if pt.experiment != "fig2_mf_initial":
            rows.extend(_limit_rows(pt, seed))
    return rows


def _mc_kwargs(args):
    if args.min_errors < 1:
        raise UsageError("--min-errors must be >= 1")
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    return dict(seed=args.seed, detectors=args.detectors, min_errors=args.min_errors,
                max_bits=args.max_bits, n_samples=args.samples, workers=args.workers,
                tanaka=args.tanaka, group_rule=args.group_rule)


def _check_bk(bks, K, args):
    if args.K < 1:
        raise UsageError("--K must be >= 1")
    if args.max_bits < max(bks):
        raise UsageError("--max-bits is below the bits of a single trial")
    for bk in bks:
        if bk < K or bk % K:
            raise UsageError(f"BK = {bk} must be a positive multiple of K = {K}")


def cmd_fig1(args):
    _check_bk(args.bk, args.K, args)
    if args.alpha <= 0:
        raise UsageError("--alpha must be positive")
    return lambda: fig1_driver(args.bk, K=args.K, alpha=args.alpha, snr_db=args.snr,
                               **_mc_kwargs(args))


def cmd_fig2(args):
    bk = 3000 if args.extended else args.bk
    _check_bk((bk,), args.K, args)
    if args.alpha <= 0:
        raise UsageError("--alpha must be positive")
    return lambda: fig2_driver(args.snr, bk=bk, K=args.K, alpha=args.alpha,
                               initial=args.initial,
                               mf_complexity=not args.no_mf_complexity, **_mc_kwargs(args))


def cmd_fig3(args):
    if any(a <= 0 for a in args.alpha):
        raise UsageError("loads must be positive")
    scale = 1.0 if args.extended else args.scale
    if scale <= 0:
        raise UsageError("--scale must be positive")
    if args.K < 1:
        raise UsageError("--K must be >= 1")
    bks = [scaled_bk(a, exact_load_dims(a, args.K)[0], scale) for a in args.alpha]
    _check_bk(bks, 1, args)
    return lambda: fig3_driver(args.alpha, K=args.K, snr_db=args.snr, scale=scale,
                               **_mc_kwargs(args))


def _run_grid(args, build):
    run = build(args)
    points = run()
    rows = grid_rows(points, args.seed)
    write_table(rows, RESULT_FIELDS, args.out, args.json_path, meta=_meta(args))
    flagged = [p for p in points if p.flagged]
    for p in flagged:
        log.warning("flagged: %s BK=%d snr=%g alpha=%g labels=%s", p.experiment, p.bk,
                    p.snr_db, p.alpha, ",".join(p.summary.flagged_labels))
    return EXIT_FLAGGED if flagged else EXIT_OK


def cmd_theorems(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    which = args.which
    if which == "thm1":
        alpha = 0.8 if args.alpha is None else args.alpha
        Ks = args.K or (32, 128, 512)
        if not 1 <= args.M1 < args.M2:
            raise UsageError("thm1 needs 1 <= M1 < M2")
        if args.M2 > min(Ks):
            raise UsageError("M2 exceeds the smallest K")
        return lambda: geometry.thm1_experiment(alpha, Ks, args.M1, args.M2, args.trials,
                                                args.seed)
    if which == "thm2":
        alpha = 0.8 if args.alpha is None else args.alpha
        Ks = args.K or (32, 128, 512)
        if args.M < 1:
            raise UsageError("--M must be >= 1")
        return lambda: geometry.thm2_experiment(alpha, Ks, args.M, args.trials, args.seed)
    alpha = 0.1 if args.alpha is None else args.alpha
    Ks = args.K or (8, 12, 16)
    if not 0 < alpha < geometry.ALPHA_STAR:
        raise UsageError(f"thm4 needs 0 < alpha < alpha* = {geometry.ALPHA_STAR:.4f}, "
                         f"got {alpha}")
    if args.c <= 0:
        raise UsageError("--c must be positive")
    if max(Ks) > geometry.GML_CAP:
        raise UsageError(f"thm4 enumerates 2^K vectors; K is capped at {geometry.GML_CAP}")
    return lambda: geometry.thm4_experiment(alpha, args.c, Ks, args.trials, args.seed)


def _run_theorems(args):
    rows = cmd_theorems(args)()
    fields = []
    for r in rows:
        fields.extend(k for k in r if k not in fields)
    for r in rows:
        r.setdefault("seed", args.seed)
    if "seed" not in fields:
        fields.append("seed")
    write_table(rows, fields, args.out, args.json_path, meta=_meta(args))
    return EXIT_OK


def cmd_limits(args):
    if any(a < 0 for a in args.alpha):
        raise UsageError("loads must be non-negative")
    names = [n for n in LIMITS if args.tanaka or n != "gml"]
    rows = []
    for a in args.alpha:
        for s in args.snr:
            for n in names:
                lp = LIMITS[n](float(a), float(s))
                rows.append({"alpha": float(a), "snr_db": float(s), "detector": n,
                             "ber": None if lp.flag in ("undefined", "nonconverged")
                             else lp.ber,
                             "sir": lp.sir, "multiplicity": lp.multiplicity, "flag": lp.flag})
            rows.append({"alpha": float(a), "snr_db": float(s), "detector": "single_user",
                         "ber": single_user_ber(float(s)), "sir": 10 ** (float(s) / 10),
                         "multiplicity": 1, "flag": ""})
    write_table(rows, LIMIT_FIELDS, args.out, args.json_path, meta=_meta(args))
    return EXIT_OK


def cmd_single(args):
    """One detection with its per-stage counters and metric trajectory."""
    try:
        cfg = SystemConfig(K=args.K, N=args.N, B=args.B, snr_db=args.snr,
                           sequence_mode="long", master_seed=args.seed)
        det = WSLASDetector(args.stages, args.initial, args.group_rule)
        det.schedule  # validates the stage list
    except ValueError as exc:
        raise UsageError(str(exc))
    rng = trial_rng(args.seed, 0, args.trial)
    sigma = 0.0 if args.noiseless else cfg.sigma
    if args.orthogonal:
        inst = ChannelInstance.orthogonal(cfg.total_bits, sigma=sigma)
    else:
        drawn = make_instance(cfg, rng)
        inst = ChannelInstance(drawn.S, drawn.A, sigma, R=drawn.R)
    b = random_bits(rng, inst.total_bits)
    noise = sigma * rng.standard_normal(inst.total_chips)
    y = inst.S.T @ (inst.S @ (inst.A * b) + noise)
    det.fit(inst)
    res = det.detect(y, rng=rng, trace=True)
    errors = int(np.count_nonzero(res.b_hat != b))
    lml = is_lml_point(res.b_hat, res.z, inst.H)
    out = io.StringIO()
    out.write(f"bits: {inst.total_bits}, chips: {inst.total_chips}, sigma: {sigma:.6g}, "
              f"initial: {args.initial}, seed: {args.seed}, trial: {args.trial}\n")
    for j, f, a, dec in zip(res.stages, res.flips, res.additions, res.stage_decisions):
        out.write(f"stage J={j}: flips {int(f)}, additions {int(a)}, "
                  f"errors {int(np.count_nonzero(dec != b))}\n")
    out.write("step,omega\n")
    for i, w in enumerate(res.omega_trace):
        out.write(f"{i},{w:.12g}\n")
    out.write(f"flips: {res.total_flips}, errors: {errors}, BER: {errors / b.size:.6g}, "
              f"LML: {'true' if lml else 'false'}\n")
    text = out.getvalue()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump({"meta": _meta(args), "stages": list(res.stages),
                       "flips": res.flips.tolist(), "additions": res.additions.tolist(),
                       "omega": res.omega_trace.tolist(), "errors": errors,
                       "lml": lml}, fh, indent=1)
    return EXIT_OK


def _meta(args):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()}


_GRID = {"fig1": cmd_fig1, "fig2": cmd_fig2, "fig3": cmd_fig3}


def main(argv=None):
    try:
        args = parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        log.info("resolved configuration: %s", json.dumps(_meta(args), sort_keys=True))
        if args.command in _GRID:
            return _run_grid(args, _GRID[args.command])
        if args.command == "theorems":
            return _run_theorems(args)
        if args.command == "limits":
            return cmd_limits(args)
        return cmd_single(args)
    except UsageError as exc:
        sys.stderr.write(f"qlrs: usage error: {exc}\n")
        return EXIT_USAGE
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
