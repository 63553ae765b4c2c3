"""Command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

from .envs import BUILDERS, build_named_env, load_mdp
from .errors import ArgumentError, ConfigError, RegretLabError
from .experiment import ExperimentConfig, load_config, resolve_problem, run_experiment
from .mdp import FiniteHorizonMDP, classify
from .oracles import EpisodeScheme, exact_counterexample, exact_heaven_hell, gain_at, lemma1_check

log = logging.getLogger("regretlab")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _exact(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else repr(float(x))


def _probability(text: str) -> Fraction:
    try:
        p = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= p <= 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return p


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def _existing_file(text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return p


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed_base(args.seed)
    result = run_experiment(cfg, jobs=args.jobs, out_dir=args.out, keep_outcomes=False)
    s = result.summary
    print(f"mean final regret: {s['mean_final_regret']:.6g} ± {s['se_final_regret']:.3g} "
          f"(n={s['n_seeds']}, T={s['T']})")
    dec = s.get("per_episode_decomposition")
    if dec:
        print(f"optimism sum: {dec['mean_optimism_sum']:.6g} ± {dec['se_optimism_sum']:.3g}; "
              f"concentration sum: {dec['mean_concentration_sum']:.6g} ± "
              f"{dec['se_concentration_sum']:.3g}")
    print(f"wrote {s['n_seeds']} seed files and summary.json to {args.out}")
    return EXIT_OK


def counterexample_config(h_max: int, T: int, p: Fraction, n_seeds: int, seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig.from_json({
        "environment": {"prior": "two_point", "p": float(p)},
        "agent": {"agent": "lazy_psrl",
                  "signal": {"kind": "reward_threshold", "threshold": 1.0, "h_max": h_max}},
        "T": T, "n_seeds": n_seeds, "seed_base": seed, "decomposition": "gain"})


def cmd_counterexample(args) -> int:
    if args.hmax < 2:
        raise ArgumentError("--hmax must exceed 1")
    signed, absolute = exact_counterexample(args.hmax, args.T, args.p)
    print(f"signed: {_exact(signed)}")
    print(f"absolute: {_exact(absolute)}")
    if args.mc_seeds:
        cfg = counterexample_config(args.hmax, args.T, args.p, args.mc_seeds, args.seed)
        res = run_experiment(cfg, jobs=args.jobs, keep_outcomes=False)
        dec = res.summary["per_episode_decomposition"]
        mean, se = dec["mean_optimism_sum"], dec["se_optimism_sum"]
        z = (mean - float(signed)) / se if se > 0 else (0.0 if mean == float(signed) else math.inf)
        print(f"monte carlo: {mean:.6g} ± {se:.3g} over {args.mc_seeds} seeds, z = {z:.3f}")
    return EXIT_OK


def cmd_heaven_hell(args) -> int:
    value = exact_heaven_hell(args.T, args.p)
    print(f"expected regret: {_exact(value)}")
    print(f"T/2: {_exact(Fraction(args.T, 2))}")
    return EXIT_OK


def cmd_classify(args) -> int:
    if args.mdp is not None:
        try:
            mdp = load_mdp(args.mdp)
        except OSError as exc:
            raise ConfigError(str(args.mdp), exc.strerror or str(exc)) from None
    else:
        mdp = build_named_env(args.env)
    if isinstance(mdp, FiniteHorizonMDP):
        mdp = mdp.base
    report = classify(mdp, args.policy_cap)
    for name, flag in report.flags.items():
        print(f"{name}: {str(flag).lower()}")
    print(f"method: {report.method}")
    for name, why in report.witness.items():
        print(f"witness[{name}]: {why}")
    return EXIT_OK


def cmd_lemma_check(args) -> int:
    try:
        obj = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(args.config), f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError("$", "config must be a JSON object")
    obj.setdefault("n_seeds", 1)
    cfg = ExperimentConfig.from_json(obj)
    problem = resolve_problem(cfg)
    if problem.prior is None:
        raise ConfigError("environment", "the check needs a prior environment")
    lemma = obj.get("lemma", {})
    if not isinstance(lemma, dict):
        raise ConfigError("lemma", "expected an object")
    try:
        scheme = EpisodeScheme(cfg.agent, cfg.T, int(lemma.get("episode", 1)),
                               lemma.get("stratum", "history"))
    except ArgumentError as exc:
        raise ConfigError("lemma", str(exc)) from None
    seed = args.seed if args.seed is not None else int(obj.get("seed_base", 0))
    res = lemma1_check(problem.prior, scheme, gain_at(int(lemma.get("state", 0))), args.n, seed)
    print(f"statistic: {res.statistic:.6g}")
    print(f"dof: {res.dof}")
    print(f"p_value: {res.p_value:.6g}")
    print(f"mean difference: {res.mean_difference:.6g} ± {res.se_difference:.3g} (n={res.n_used})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regretlab",
                                     description="Regret experiments for posterior sampling agents")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True, type=_existing_file)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="first seed; replaces the config's seed list")
    p.add_argument("--jobs", type=_positive, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("counterexample", help="exact optimism-gap sum on the two-point bandit")
    p.add_argument("--hmax", required=True, type=int)
    p.add_argument("--T", required=True, type=_positive)
    p.add_argument("--p", type=_probability, default=Fraction(1, 2))
    p.add_argument("--mc-seeds", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive, default=1)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("heaven-hell", help="exact expected regret on heaven-and-hell")
    p.add_argument("--T", required=True, type=_positive)
    p.add_argument("--p", type=_probability, default=Fraction(1, 2))
    p.set_defaults(func=cmd_heaven_hell)

    p = sub.add_parser("classify", help="connectedness flags of an MDP")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mdp", type=_existing_file)
    src.add_argument("--env", choices=sorted(BUILDERS))
    p.add_argument("--policy-cap", type=_positive, default=10**6)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("lemma-check", help="stratified sample-versus-truth homogeneity test")
    p.add_argument("--config", required=True, type=_existing_file)
    p.add_argument("--n", required=True, type=_positive)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_lemma_check)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("REGRETLAB_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RegretLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
