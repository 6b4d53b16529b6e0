"""Command-line interface.

Subcommands: density, bound, rate, ldp, simulate, verify-density,
verify-rayknight, chi-discrete.  Exit status 0 on success/all-pass, 1 on an
acceptance failure, 2 on usage or config errors.
"""

import argparse
import sys

import numpy as np

from . import harness
from .chain import simulate_fixed_time, simulate_inverse_local_time
from .density import density_certified
from .errors import ConfigParseError, LoctimesError
from .montecarlo import sample_paths_fixed_time, sample_paths_inverse_local_time
from .rates import (
    density_upper_bound,
    ldp_probability_bound,
    ldp_varadhan_bound,
    rate_general,
    rate_symmetric,
    rescaled_chi_discrete,
)


def _parse_label(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def _parse_labels(text: str):
    return [_parse_label(t) for t in text.split(",") if t != ""]


def _parse_floats(text: str):
    return [float(t) for t in text.split(",") if t != ""]


def _load_generator(path: str):
    return harness.generator_from_config(path)


def _add_generator_point_args(p):
    p.add_argument("--generator", required=True, help="generator JSON document")
    p.add_argument("--R", required=True, help="comma-separated range labels")
    p.add_argument("--a", required=True, help="start site")
    p.add_argument("--b", required=True, help="end site")
    p.add_argument("--l", required=True, help="comma-separated local times on R")


def cmd_density(args) -> int:
    gen = _load_generator(args.generator)
    R = _parse_labels(args.R)
    l = _parse_floats(args.l)
    result = density_certified(gen, R, _parse_label(args.a), _parse_label(args.b),
                               l, tol=args.tol)
    print(f"{result.value:.10g}")
    print(f"certified truncation error <= {result.error_bound:.3e} "
          f"(series order {result.order})")
    return 0


def cmd_bound(args) -> int:
    gen = _load_generator(args.generator)
    R = _parse_labels(args.R)
    l = _parse_floats(args.l)
    bound = density_upper_bound(gen, R, _parse_label(args.a), _parse_label(args.b),
                                l, rate_tol=args.tol)
    print(f"{bound:.10g}")
    return 0


def cmd_rate(args) -> int:
    gen = _load_generator(args.generator)
    mu = _parse_floats(args.mu)
    sol = rate_general(gen, np.array(mu), tol=args.tol)
    print(f"value = {sol.value:.12g}")
    print(f"iterations = {sol.iterations}, gradient_norm = {sol.final_gradient_norm:.3e}")
    g_str = ", ".join(f"{k}: {v:.8g}" for k, v in sol.minimizer.items())
    print(f"minimizer g = {{{g_str}}}")
    if gen.is_symmetric():
        print(f"dirichlet form = {rate_symmetric(gen, np.array(mu)):.12g}")
    return 0


def cmd_ldp(args) -> int:
    gen = _load_generator(args.generator)
    S = _parse_labels(args.S)
    if args.mode == "prob":
        if args.inf_rate is not None:
            inf_rate = args.inf_rate
        elif args.halfspace is not None:
            state_text, thresh_text = args.halfspace.split(":")
            inf_rate = harness.halfspace_rate_infimum(
                gen, S, _parse_label(state_text), float(thresh_text))
        else:
            raise ConfigParseError("ldp prob needs --inf-rate or --halfspace STATE:THRESH")
        bound = ldp_probability_bound(gen, S, inf_rate, args.T)
        print(f"inf_rate = {inf_rate:.10g}")
        print(f"log-probability bound = {bound:.10g}")
    else:
        if args.sup_value is not None:
            sup_value = args.sup_value
        elif args.V is not None:
            V = _parse_floats(args.V)
            sup_value = harness.linear_varadhan_supremum(gen, S, V)
        else:
            raise ConfigParseError("ldp varadhan needs --sup-value or --V v1,v2,...")
        bound = ldp_varadhan_bound(gen, S, sup_value, args.T)
        print(f"sup_value = {sup_value:.10g}")
        print(f"log-moment bound = {bound:.10g}")
    return 0


def cmd_simulate(args) -> int:
    gen = _load_generator(args.generator)
    start = _parse_label(args.start)
    rng = np.random.default_rng(args.seed)
    if args.pivot is not None:
        if args.samples == 1:
            res = simulate_inverse_local_time(gen, start, _parse_label(args.pivot),
                                              args.level, rng)
            path = res.path
        else:
            batch = sample_paths_inverse_local_time(
                gen, start, _parse_label(args.pivot), args.level, args.samples, rng)
            return _emit_batch(args, gen, batch)
    else:
        if args.samples == 1:
            path = simulate_fixed_time(gen, start, args.T, rng)
        else:
            batch = sample_paths_fixed_time(gen, start, args.T, args.samples, rng)
            return _emit_batch(args, gen, batch)
    for x in gen.states:
        print(f"{x},{path.local_times[x]!r}")
    print(f"# endpoint={path.endpoint} horizon={path.horizon!r} "
          f"range={sorted(path.range)}")
    return 0


def _emit_batch(args, gen, batch) -> int:
    means = batch.local_times.mean(axis=0)
    stds = batch.local_times.std(axis=0, ddof=1)
    rows = [(x, float(means[i]), float(stds[i])) for i, x in enumerate(gen.states)]
    resolved = {"generator": args.generator, "start": args.start, "T": args.T,
                "pivot": args.pivot, "level": args.level,
                "samples": args.samples, "seed": args.seed}
    meta = {"config_hash": harness.config_hash(resolved), "seed": args.seed}
    if args.out:
        harness.write_csv(f"{args.out}/simulate.csv", meta,
                          ["state", "mean_local_time", "std_local_time"], rows)
    for x, m, s in rows:
        print(f"{x},{m!r},{s!r}")
    return 0


def _run_config_experiments(args, default_kind: str) -> int:
    config = harness.load_config(args.config)
    if "experiments" not in config:
        config = {"experiments": [dict(config, kind=config.get("kind", default_kind))],
                  "seed": config.get("seed", args.seed)}
    if args.seed is not None:
        config["seed"] = args.seed
    for exp in config["experiments"]:
        if args.samples is not None:
            exp["samples"] = args.samples
    return harness.run_suite(config, args.out)


def cmd_verify_density(args) -> int:
    return _run_config_experiments(args, "verify-density")


def cmd_verify_rayknight(args) -> int:
    return _run_config_experiments(args, "verify-rayknight")


def cmd_chi_discrete(args) -> int:
    if args.delta_weight is not None:
        weight = args.delta_weight
        origin_index = None

        def F(values):
            nonlocal origin_index
            if origin_index is None:
                origin_index = (len(values) - 1) // 2
            return weight * values[origin_index]
    else:
        def F(values):
            return 0.0
    value = rescaled_chi_discrete(args.radius, args.alpha, F, tol=args.tol,
                                  dim=args.dim, seed=args.seed or 0)
    print(f"{value:.10g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loctimes",
        description="Local-time densities, bounds and Ray-Knight checks for "
                    "continuous-time Markov chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density", help="evaluate the joint local-time density")
    _add_generator_point_args(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("bound", help="pointwise upper bound on the density")
    _add_generator_point_args(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("rate", help="occupation-measure rate function")
    p.add_argument("--generator", required=True)
    p.add_argument("--mu", required=True, help="comma-separated probability vector")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("ldp", help="finite-time large-deviation bounds")
    p.add_argument("--generator", required=True)
    p.add_argument("--S", required=True, help="comma-separated support labels")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--mode", choices=["prob", "varadhan"], default="prob")
    p.add_argument("--inf-rate", type=float, default=None)
    p.add_argument("--halfspace", default=None, help="STATE:THRESHOLD")
    p.add_argument("--sup-value", type=float, default=None)
    p.add_argument("--V", default=None, help="comma-separated linear functional on S")
    p.set_defaults(func=cmd_ldp)

    p = sub.add_parser("simulate", help="simulate paths and report local times")
    p.add_argument("--generator", required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--pivot", default=None, help="stop at an inverse local time")
    p.add_argument("--level", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    for name, fn in (("verify-density", cmd_verify_density),
                     ("verify-rayknight", cmd_verify_rayknight)):
        p = sub.add_parser(name, help=f"run the {name} Monte Carlo experiment")
        p.add_argument("--config", required=True)
        p.add_argument("--out", default="results")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.set_defaults(func=fn)

    p = sub.add_parser("chi-discrete", help="discrete rescaled variational value")
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--delta-weight", type=float, default=None,
                   help="linear functional: weight at the origin cell")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_chi_discrete)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LoctimesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
