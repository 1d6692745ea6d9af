"""Command-line interface.

JSON results go to stdout, human-readable logs to stderr.  Exit codes:
0 success, 2 validation failure (bad arguments or config, inadmissible
law), 3 blow-up during a run.
"""

from __future__ import annotations

import argparse
import importlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis_checks, diagnostics
from .constitutive import ConstitutiveLaw, law_from_config, verify_structural
from .errors import BlowUpError, ConfigError, DomainError, NNFlowError, StructuralError
from .fields import Grid, random_solenoidal, read_checkpoint, sobolev_norm, taylor_green
from .solver import SimConfig, run

log = logging.getLogger("nnflow")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BLOWUP = 3


class _Invalid(Exception):
    pass


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, default=_json_default) + "\n")
    sys.stdout.flush()


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _add_law_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", required=True, choices=["newtonian", "power_a", "power_b", "user"])
    p.add_argument("--m0", type=float, default=1.0)
    p.add_argument("--q", type=float)
    p.add_argument("--sigma-reg", type=float, default=1.0)
    p.add_argument("--law-factory", metavar="MODULE:ATTR",
                   help="for --kind user: callable returning a law, called with m0=<--m0>")


def _law_from_args(args) -> ConstitutiveLaw:
    if args.kind == "user":
        if not args.law_factory:
            raise _Invalid("--kind user needs --law-factory MODULE:ATTR")
        mod_name, _, attr = args.law_factory.partition(":")
        try:
            factory = getattr(importlib.import_module(mod_name), attr)
        except (ImportError, AttributeError, ValueError) as exc:
            raise _Invalid(f"cannot load law factory {args.law_factory!r}: {exc}") from None
        law = factory(m0=args.m0)
        if not isinstance(law, ConstitutiveLaw):
            raise _Invalid(f"{args.law_factory} did not return a ConstitutiveLaw")
        return law
    cfg = {"kind": args.kind, "m0": args.m0, "sigma_reg": args.sigma_reg}
    if args.q is not None:
        cfg["q"] = args.q
    try:
        return law_from_config(cfg)
    except DomainError as exc:
        raise _Invalid(str(exc)) from None


def cmd_verify_law(args) -> int:
    law = _law_from_args(args)
    report = verify_structural(law, args.samples, args.s_max, seed=args.seed)
    payload = {"law": law.label, **report.to_dict()}
    _emit(payload)
    if not report.passed:
        log.error("law %s fails the structural audit (min G + 2G's = %.6g at s = %.6g)",
                  law.label, report.min_coercive, report.argmin_coercive)
        return EXIT_INVALID
    return EXIT_OK


def cmd_check_derivatives(args) -> int:
    law = _law_from_args(args)
    try:
        dirs = tuple(int(d) for d in args.dirs.split(",")) if args.dirs else tuple(range(args.order))
    except ValueError:
        raise _Invalid(f"--dirs must be comma-separated axis indices, got {args.dirs!r}") from None
    if len(dirs) != args.order:
        raise _Invalid(f"--dirs has {len(dirs)} entries but --order is {args.order}")
    grid = Grid(args.n)
    if args.field == "taylor_green":
        u = taylor_green(grid) * args.amplitude
    else:
        u = random_solenoidal(grid, args.seed, args.k_max, args.amplitude)
    report = analysis_checks.check_decomposition(law, u, dirs)
    payload = {"law": law.label, "field": args.field, **report.to_dict()}
    if args.order >= 2:
        try:
            payload["bound_ratio_all_dirs"] = analysis_checks.bound_ratio_report(law, u, args.order)
        except NNFlowError as exc:
            payload["bound_ratio_all_dirs"] = None
            log.warning("bound ratio unavailable: %s", exc)
    _emit(payload)
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = SimConfig.from_json(args.config)
    law = law_from_config(config.law)
    law.require_structural()
    t0 = time.perf_counter()
    try:
        state, series = run(config, law=law)
    except BlowUpError as exc:
        log.error("blow-up: %s", exc)
        payload = {"status": "blow-up", "message": str(exc)}
        if exc.series is not None:
            payload["summary"] = diagnostics.summarize(exc.series)
        _emit(payload)
        return EXIT_BLOWUP
    summary = diagnostics.summarize(series)
    summary.update(status="ok", wall_time=time.perf_counter() - t0, output_dir=config.output_dir)
    _emit(summary)
    return EXIT_OK


def cmd_taylor_green(args) -> int:
    config = SimConfig(n=args.n, law={"kind": "newtonian", "m0": args.m0}, dt=args.dt,
                       t_end=args.t_end, diag_every=args.diag_every, l_max=0)
    t0 = time.perf_counter()
    state, series = run(config)
    u0 = taylor_green(config.grid)
    exact = u0 * math.exp(-args.m0 * state.t)
    err = sobolev_norm(state.u - exact, 0) / sobolev_norm(exact, 0)
    try:
        rate = diagnostics.fit_decay_rate(series, "l2")
    except DomainError:
        rate = None
    _emit({
        "n": args.n, "m0": args.m0, "dt": args.dt, "t_end": state.t, "steps": state.step,
        "rel_l2_error": err, "fitted_rate": rate, "expected_rate": -args.m0,
        "wall_time": time.perf_counter() - t0,
    })
    return EXIT_OK


def cmd_norms(args) -> int:
    path = Path(args.checkpoint)
    if not path.is_file():
        raise _Invalid(f"checkpoint not found: {path}")
    try:
        u, t, step = read_checkpoint(path)
    except ValueError as exc:
        raise _Invalid(str(exc)) from None
    if not 0 <= args.l_max <= 6:
        raise _Invalid("--l-max must lie in 0..6")
    payload = {"t": t, "step": step, "n": u.grid.n, "box_length": u.grid.box_length,
               "l2": sobolev_norm(u, 0)}
    for l in range(1, args.l_max + 1):
        payload[f"h{l}"] = sobolev_norm(u, l)
    _emit(payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-law", help="sample the structural conditions of a viscosity law")
    _add_law_args(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--s-max", type=float, default=1e6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_law)

    p = sub.add_parser("check-derivatives", help="check the derivative decomposition of G[|Du|^2]")
    _add_law_args(p)
    p.add_argument("--n", type=int, default=48)
    p.add_argument("--order", type=int, choices=[1, 2, 3], default=2)
    p.add_argument("--dirs", help="comma-separated axes, e.g. 0,1,2 (default 0..order-1)")
    p.add_argument("--field", choices=["random", "taylor_green"], default="random")
    p.add_argument("--k-max", type=float, default=2.0)
    p.add_argument("--amplitude", type=float, default=1.0,
                   help="H^3 norm of the random field, or scale factor for taylor_green")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_derivatives)

    p = sub.add_parser("taylor-green", help="Newtonian Taylor-Green decay against the exact solution")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--m0", type=float, default=1.0)
    p.add_argument("--diag-every", type=int, default=10)
    p.set_defaults(func=cmd_taylor_green)

    p = sub.add_parser("norms", help="Sobolev norms of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--l-max", type=int, default=3)
    p.set_defaults(func=cmd_norms)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (_Invalid, ConfigError, StructuralError, DomainError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
