"""Command line entry point ``magnls``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load
from .errors import ConfigError, MagnlsError
from .runner import run_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _points(text):
    """'x1,y1;x2,y2' -> [[x1, y1], [x2, y2]]."""
    return [_floats(part) for part in text.split(";") if part.strip()]


def _param(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"value of {key!r} is not JSON: {value!r}")


def _box(values, flag="--box"):
    if len(values) % 2:
        raise ConfigError(f"box: {flag} needs lo,hi per axis")
    return [values[0::2], values[1::2]]


def _preset_args(sp):
    sp.add_argument("--preset", required=True, help="potential preset name")
    sp.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=JSON",
                    help="preset parameter, value parsed as JSON (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="magnls", description="Concentrating solutions of the magnetic NLS.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="run a JSON experiment config")
    sp.add_argument("config", help="path to the JSON config")

    sp = sub.add_parser("groundstate", help="radial ground state profile to CSV (r, w, dw)")
    sp.add_argument("--p", type=float, required=True, help="nonlinearity exponent")
    sp.add_argument("--dim", type=int, required=True, help="space dimension")
    sp.add_argument("--rmax", type=float, default=30.0, help="outer radius (default 30)")
    sp.add_argument("--tol", type=float, default=1e-10, help="integration tolerance (default 1e-10)")
    sp.add_argument("--out", required=True, help="output CSV")

    sp = sub.add_parser("field-scan", help="field invariants on a grid and their critical points")
    _preset_args(sp)
    sp.add_argument("--box", type=_floats, required=True, help="x0,x1,y0,y1 (lo,hi per axis); write --box=-1,1,-1,1 for negative values")
    sp.add_argument("--n", type=int, required=True, help="samples per axis")
    sp.add_argument("--rng-seed", type=int, default=0, help="seed for derivative probe points")
    sp.add_argument("--out", required=True, help="output CSV; critical points go to <stem>_critical.csv")

    sp = sub.add_parser("ansatz", help="write the approximate solution as a field file")
    sp.add_argument("--config", required=True, help="JSON config with potential, bump and eps")
    sp.add_argument("--out", required=True, help="output field file")

    for name, what in (("residual-scaling", "L2 residual of the ansatz against eps"),
                       ("energy-expansion", "ansatz energy against eps and its expansion fit")):
        sp = sub.add_parser(name, help=what)
        sp.add_argument("--config", required=True, help="JSON config with potential and bump")
        sp.add_argument("--eps", type=_floats, help="comma-separated decreasing eps list (overrides config)")
        sp.add_argument("--out", required=True, help="output CSV")

    sp = sub.add_parser("landscape", help="single-bump energy over a grid of centres")
    _preset_args(sp)
    sp.add_argument("--eps", type=float, required=True, help="semiclassical parameter")
    sp.add_argument("--box", type=_floats, required=True, help="x0,x1,y0,y1 (lo,hi per axis); write --box=-1,1,-1,1 for negative values")
    sp.add_argument("--n", type=int, default=9, help="samples per axis (default 9)")
    sp.add_argument("--p", type=float, default=3.0, help="nonlinearity exponent (default 3)")
    sp.add_argument("--spacing", type=float, default=0.25, help="grid spacing in y (default 0.25)")
    sp.add_argument("--out", required=True, help="output CSV")

    sp = sub.add_parser("solve", help="full Lyapunov-Schmidt solve from seed centres")
    sp.add_argument("--config", required=True, help="JSON config with potential, bump and eps")
    sp.add_argument("--seed", type=_points, help="seed centres 'x1,y1;x2,y2' (overrides bump.centers)")
    sp.add_argument("--tol", type=float, help="target for max|c| (overrides tolerances.outer)")
    sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("gauge-check", help="energy change under a gauge transformation")
    sp.add_argument("--config", required=True, help="JSON config with potential, bump, eps and gauge")
    sp.add_argument("--out", required=True, help="output CSV")
    return ap


def config_from_args(args) -> dict:
    cmd = args.command
    if cmd == "run":
        return load(args.config)
    if cmd == "groundstate":
        return {"kind": cmd, "p": args.p, "dim": args.dim, "r_max": args.rmax,
                "tolerances": {"groundstate": args.tol}, "output": args.out}
    if cmd == "field-scan":
        return {"kind": cmd, "potential": {"preset": args.preset, "params": dict(args.param)},
                "box": _box(args.box), "n": args.n, "rng_seed": args.rng_seed, "output": args.out}
    if cmd == "landscape":
        return {"kind": cmd, "p": args.p, "eps": args.eps,
                "potential": {"preset": args.preset, "params": dict(args.param)},
                "box": _box(args.box), "n": args.n, "bump": {"spacing": args.spacing},
                "output": args.out}
    cfg = load(args.config)
    if not isinstance(cfg, dict):
        raise ConfigError("<root>: config must be a JSON object")
    cfg["kind"] = cmd
    cfg["output"] = args.out
    if getattr(args, "eps", None) is not None:
        cfg["eps"] = args.eps
    if cmd == "solve":
        if args.seed is not None:
            cfg.setdefault("bump", {})["centers"] = args.seed
        if args.tol is not None:
            cfg.setdefault("tolerances", {})["outer"] = args.tol
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        written = run_config(config_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MagnlsError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
