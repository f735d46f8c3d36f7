"""Command-line interface.

Exit codes: 0 success, 1 at least one verification check failed,
2 configuration or argument error, 3 sampling budget or resource
limit exhausted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .conditioning import (DEFAULT_BUDGET_FACTOR, rejection_sample)
from .environment import environment, read_manifest
from .errors import (BudgetExhaustedError, ConfigError, DomainError,
                     ManifestError, MeanderWalkError, ParameterError,
                     ResourceLimitError)
from .meander import (FddQuery, TRUNCATION_SD, meander_cdf_from_origin,
                      meander_density_from_origin)
from .report import matrix_block
from .scaling import build_whitening, estimate_sigma
from .tableio import write_csv
from .verify import (DEFAULT_SIGMA_REPLICAS, fdd_check, heatkernel_envelope,
                     lemma_probe, main_theorem_check, null_calibration,
                     tightness_check, uclt_check)
from .walk import simulate, simulate_endpoints

_DEFAULT_QUERY = {"times": [0.5], "uppers": [1.0]}


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}")


def _json_arg(text: str, what: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc}")
    if not isinstance(value, dict):
        raise ConfigError(f"{what} must be a JSON object")
    return value


def _common_flags() -> argparse.ArgumentParser:
    """Parent parser holding the global flags with SUPPRESS defaults, so
    they are accepted both before and after the subcommand without the
    subparser's defaults clobbering values parsed at the root."""
    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                   help="environment manifest (JSON); default is the "
                        "constant-conductance environment in dimension 2")
    c.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="run seed (default 0)")
    c.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                   help="worker processes for rejection sampling")
    c.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                   help="directory for output files")
    c.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                   help="print only the final verdict")
    return c


def build_parser() -> argparse.ArgumentParser:
    # the root must use its own parent instance: set_defaults overwrites
    # the default attribute on the parent's action objects, and sharing
    # them with the subparsers would void their SUPPRESS sentinels
    p = argparse.ArgumentParser(
        prog="meanderwalk",
        parents=[_common_flags()],
        description="Random walks among random conductances conditioned to "
                    "a positive first coordinate: simulation and limit-law "
                    "verification.")
    p.add_argument("--version", action="version", version=__version__)
    p.set_defaults(config=None, seed=0, workers=1, out=None, quiet=False)
    sub = p.add_subparsers(dest="command", required=True)
    sub_common = _common_flags()

    def add_parser(name, **kwargs):
        return sub.add_parser(name, parents=[sub_common], **kwargs)

    s = add_parser("simulate", help="unconditioned walk paths")
    s.add_argument("--n", type=int, required=True, help="step count")
    s.add_argument("--streams", type=int, default=1, help="replica count")
    s.add_argument("--start", default=None,
                   help="comma-separated start point (default: origin)")
    s.add_argument("--endpoint-only", action="store_true")

    s = add_parser("condition", help="rejection-sample conditioned walks")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--count", type=int, required=True,
                   help="accepted sample target")
    s.add_argument("--budget-factor", type=int, default=DEFAULT_BUDGET_FACTOR,
                   help="attempt budget per accepted sample")
    s.add_argument("--endpoint-only", action="store_true",
                   help="save endpoints instead of full paths")

    s = add_parser("verify-main", help="endpoint law of the limit")
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--count", type=int, default=20_000)
    s.add_argument("--sigma-replicas", type=int, default=DEFAULT_SIGMA_REPLICAS)

    s = add_parser("verify-fdd", help="joint law at fixed times")
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--count", type=int, default=20_000)
    s.add_argument("--sigma-replicas", type=int, default=DEFAULT_SIGMA_REPLICAS)
    s.add_argument("--query", default=None,
                   help='JSON: {"times": [...], "uppers": [...], '
                        '"boxes": [[[a, b], ...], ...]}')

    s = add_parser("verify-uclt", help="unconditioned functional CLT")
    s.add_argument("--ns", default="400,1600",
                   help="comma-separated step counts")
    s.add_argument("--count", type=int, default=3000,
                   help="per-start samples at the smallest n")
    s.add_argument("--sup-level", type=float, default=1.0)
    s.add_argument("--start-scale", type=float, default=1.0)

    s = add_parser("verify-tightness", help="modulus of continuity")
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--count", type=int, default=500)
    s.add_argument("--deltas", default="0.2,0.1,0.05")
    s.add_argument("--threshold", type=float, default=1.0)

    s = add_parser("verify-heatkernel", help="kernel shape envelopes")
    s.add_argument("--steps", default="20,40,60")

    s = add_parser("verify-lemmas", help="supporting estimate probes")
    s.add_argument("--probe", required=True,
                   choices=("strip_exit", "ball_exit", "level_competition",
                            "slow_ascent", "transverse_spread"))
    s.add_argument("--params", default="{}",
                   help="JSON object of probe parameters")

    s = add_parser("verify-calibration",
                       help="null size of the KS machinery")
    s.add_argument("--seeds", type=int, default=100)
    s.add_argument("--count", type=int, default=5000)

    s = add_parser("meander-table",
                       help="density and CDF table of the meander marginal")
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--points", type=int, default=513)
    s.add_argument("--max-u", type=float, default=None)

    s = add_parser("sigma-estimate", help="limit covariance estimate")
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--replicas", type=int, default=DEFAULT_SIGMA_REPLICAS)

    s = add_parser("plot-data", help="export tables of one experiment")
    s.add_argument("--experiment", required=True,
                   choices=("main", "fdd", "uclt", "tightness", "heatkernel",
                            "calibration", "strip_exit", "ball_exit",
                            "level_competition", "slow_ascent",
                            "transverse_spread"))
    s.add_argument("--tables", default=None,
                   help="comma-separated table names (default: all)")
    s.add_argument("--params", default="{}",
                   help="JSON object of experiment parameters")
    return p


def _load_env(args):
    if args.config is None:
        return environment(dimension=2, kappa=0.5, generator="constant", seed=0)
    return read_manifest(args.config).to_environment()


def _build_query(raw: dict) -> FddQuery:
    allowed = {"times", "uppers", "boxes"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"query keys {unknown} not recognized; "
                          f"allowed: {sorted(allowed)}")
    if "times" not in raw or "uppers" not in raw:
        raise ConfigError("query needs keys 'times' and 'uppers'")
    try:
        boxes = tuple(tuple(tuple(pair) for pair in coord)
                      for coord in raw.get("boxes", ()))
        return FddQuery(times=tuple(raw["times"]), uppers=tuple(raw["uppers"]),
                        boxes=boxes)
    except (TypeError, ParameterError, DomainError) as exc:
        raise ConfigError(f"bad query: {exc}")


def _experiment_report(name: str, env, seed: int, workers: int, params: dict):
    params = dict(params)
    if name == "main":
        params.setdefault("seed", seed)
        params.setdefault("workers", workers)
        return main_theorem_check(env, params.pop("n", 400), **params)
    if name == "fdd":
        params.setdefault("seed", seed)
        params.setdefault("workers", workers)
        query = _build_query(params.pop("query", _DEFAULT_QUERY))
        return fdd_check(env, params.pop("n", 400), query, **params)
    if name == "uclt":
        params.setdefault("seed", seed)
        return uclt_check(env, **params)
    if name == "tightness":
        params.setdefault("seed", seed)
        params.setdefault("workers", workers)
        return tightness_check(env, params.pop("n", 400), **params)
    if name == "heatkernel":
        return heatkernel_envelope(env, **params)
    if name == "calibration":
        return null_calibration(**params)
    params.setdefault("seed", seed)
    if name in ("slow_ascent", "transverse_spread"):
        params.setdefault("workers", workers)
    return lemma_probe(env, name, **params)


def _emit(args, rep) -> None:
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        rep.emit_plot_data(args.out)
        with open(os.path.join(args.out, f"report_{rep.name}.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(rep.to_json())
    if args.quiet:
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.name}")
    else:
        print(rep.summary())


def _cmd_simulate(args, env) -> int:
    start = _ints(args.start) if args.start else (0,) * env.dimension
    if len(start) != env.dimension:
        raise ConfigError(f"start has {len(start)} coordinates, "
                          f"environment dimension is {env.dimension}")
    if args.endpoint_only or args.streams > 1:
        ends = simulate_endpoints(env, start, args.n,
                                  np.arange(args.streams), args.seed)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            header = ["stream"] + [f"x{j + 1}" for j in range(env.dimension)]
            rows = [[i] + list(map(int, row)) for i, row in enumerate(ends)]
            write_csv(os.path.join(args.out, "endpoints.csv"), header, rows)
        if not args.quiet:
            mean = ends.mean(axis=0)
            print(f"simulated {args.streams} walks of {args.n} steps; "
                  f"mean endpoint {np.array2string(mean, precision=4)}")
    else:
        path = simulate(env, start, args.n, stream=0, seed=args.seed)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            path.to_csv(os.path.join(args.out, "path.csv"))
        if not args.quiet:
            print(f"simulated {args.n} steps; endpoint {path.end}")
    return 0


def _cmd_condition(args, env) -> int:
    budget = args.budget_factor * args.count
    sample = rejection_sample(env, args.n, args.count, seed=args.seed,
                              budget=budget, workers=args.workers,
                              on_exhausted="raise")
    if args.out:
        sample.save(args.out, endpoint_only=args.endpoint_only)
    if not args.quiet:
        print(f"accepted {sample.count} of {sample.raw_attempts} attempts "
              f"(rate {sample.acceptance_rate:.3e}) at n={args.n}")
    return 0


def _cmd_meander_table(args) -> int:
    if not 0.0 < args.t <= 1.0:
        raise ConfigError("--t must lie in (0, 1]")
    if args.points < 3 or args.points % 2 == 0:
        raise ConfigError("--points must be an odd count >= 3")
    hi = args.max_u if args.max_u else TRUNCATION_SD * float(np.sqrt(args.t))
    grid = np.linspace(0.0, hi, args.points)
    dens = meander_density_from_origin(args.t, grid)
    cdf = [meander_cdf_from_origin(args.t, u) for u in grid]
    rows = list(zip(grid, dens, cdf))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "meander_table.csv"),
                  ("u", "density", "cdf"), rows)
    if not args.quiet:
        print(f"meander marginal at t={args.t:g}: {args.points} points "
              f"on [0, {hi:g}]" + (f" written to {args.out}" if args.out else ""))
        if not args.out:
            for u, d, c in rows[:: max(1, args.points // 16)]:
                print(f"  u={u:8.4f} density={d:10.6f} cdf={c:8.6f}")
    return 0


def _cmd_sigma(args, env) -> int:
    est = estimate_sigma(env, args.n, args.replicas, seed=args.seed)
    wm = build_whitening(est.matrix)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        rows = [(i, j, est.matrix[i, j], est.stderr[i, j])
                for i in range(est.dimension) for j in range(est.dimension)]
        write_csv(os.path.join(args.out, "sigma.csv"),
                  ("row", "col", "value", "stderr"), rows)
    if not args.quiet:
        print(matrix_block("covariance", est.matrix))
        print(matrix_block("stderr", est.stderr))
        print(matrix_block("whitening", wm.matrix))
        print(f"sigma1 = {wm.sigma1!r}")
    return 0


def _dispatch(args) -> int:
    if args.command == "meander-table":
        return _cmd_meander_table(args)
    if args.command == "verify-calibration":
        rep = null_calibration(seed_count=args.seeds, sample_count=args.count)
        _emit(args, rep)
        return 0 if rep.passed else 1

    env = _load_env(args)
    if args.command == "simulate":
        return _cmd_simulate(args, env)
    if args.command == "condition":
        return _cmd_condition(args, env)
    if args.command == "sigma-estimate":
        return _cmd_sigma(args, env)

    if args.command == "verify-main":
        rep = main_theorem_check(env, args.n, args.count, seed=args.seed,
                                 workers=args.workers,
                                 sigma_replicas=args.sigma_replicas)
    elif args.command == "verify-fdd":
        raw = _json_arg(args.query, "--query") if args.query else _DEFAULT_QUERY
        rep = fdd_check(env, args.n, _build_query(raw), args.count,
                        seed=args.seed, workers=args.workers,
                        sigma_replicas=args.sigma_replicas)
    elif args.command == "verify-uclt":
        rep = uclt_check(env, _ints(args.ns), start_scale=args.start_scale,
                         sample_count=args.count, sup_level=args.sup_level,
                         seed=args.seed)
    elif args.command == "verify-tightness":
        rep = tightness_check(env, args.n, _floats(args.deltas),
                              threshold=args.threshold,
                              sample_count=args.count, seed=args.seed,
                              workers=args.workers)
    elif args.command == "verify-heatkernel":
        rep = heatkernel_envelope(env, _ints(args.steps))
    elif args.command == "verify-lemmas":
        params = _json_arg(args.params, "--params")
        rep = _experiment_report(args.probe, env, args.seed, args.workers,
                                 params)
    elif args.command == "plot-data":
        params = _json_arg(args.params, "--params")
        rep = _experiment_report(args.experiment, env, args.seed,
                                 args.workers, params)
        out = args.out or "."
        names = args.tables.split(",") if args.tables else None
        paths = rep.emit_plot_data(out, names)
        if not args.quiet:
            for p in paths:
                print(p)
        return 0
    else:
        raise ConfigError(f"unhandled command {args.command}")
    _emit(args, rep)
    return 0 if rep.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, ManifestError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BudgetExhaustedError, ResourceLimitError) as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return 3
    except TypeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MeanderWalkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
