"""Experiment configuration, the multi-seed runner and its file outputs."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .belief import (Belief, belief_from_json, conjugate_prior, heaven_hell_prior,
                     two_point_prior)
from .engine import Problem, SeedOutcome, iter_outcomes
from .envs import build_named_env, load_mdp
from .errors import ArgumentError, ConfigError, RegretLabError
from .signals import signal_from_json

AGENTS = ("psrl", "lazy_psrl", "ofu", "smoothed_psrl")
PRIORS = ("two_point", "heaven_hell", "conjugate", "file")


@dataclass(frozen=True)
class ExperimentConfig:
    environment: dict
    agent: dict
    T: int
    seeds: tuple
    start_state: Optional[int] = None
    decomposition: Optional[str] = None
    engine: str = "auto"
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T", "must be at least 1")
        if not self.seeds:
            raise ConfigError("seeds", "seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds", "seed list contains duplicates")

    @classmethod
    def from_json(cls, obj: Any) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("$", "config must be a JSON object")
        for key in ("environment", "agent", "T"):
            if key not in obj:
                raise ConfigError(key, "missing required field")
        env = obj["environment"]
        _check_environment(env)
        agent = obj["agent"]
        _check_agent(agent)
        T = obj["T"]
        if not isinstance(T, int) or isinstance(T, bool) or T < 1:
            raise ConfigError("T", f"expected a positive integer, got {T!r}")
        if "seeds" in obj:
            seeds = obj["seeds"]
            if not isinstance(seeds, list) or not all(isinstance(s, int) and s >= 0 for s in seeds):
                raise ConfigError("seeds", "expected a list of non-negative integers")
        elif "n_seeds" in obj:
            n = obj["n_seeds"]
            if not isinstance(n, int) or n < 1:
                raise ConfigError("n_seeds", "expected a positive integer")
            base = obj.get("seed_base", 0)
            seeds = list(range(base, base + n))
        else:
            raise ConfigError("seeds", "give either 'seeds' or 'n_seeds'")
        start = obj.get("start_state")
        if start is not None and (not isinstance(start, int) or start < 0):
            raise ConfigError("start_state", "expected a non-negative integer")
        decomposition = obj.get("decomposition")
        if decomposition not in (None, "gain", "finite"):
            raise ConfigError("decomposition", "expected 'gain', 'finite' or null")
        engine = obj.get("engine", "auto")
        if engine not in ("auto", "scalar", "batched"):
            raise ConfigError("engine", "expected 'auto', 'scalar' or 'batched'")
        return cls(env, agent, T, tuple(seeds), start, decomposition, engine, obj.get("out_dir"))

    def to_json(self) -> dict:
        out = {"environment": self.environment, "agent": self.agent, "T": self.T,
               "seeds": list(self.seeds), "start_state": self.start_state,
               "decomposition": self.decomposition}
        return out

    def config_hash(self) -> str:
        """Digest of everything that determines the outputs (not engine or paths)."""
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed_base(self, base: int) -> "ExperimentConfig":
        seeds = tuple(base + i for i in range(len(self.seeds)))
        return ExperimentConfig(self.environment, self.agent, self.T, seeds, self.start_state,
                                self.decomposition, self.engine, self.out_dir)


def load_config(path) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(str(path), exc.strerror or str(exc)) from None
    return ExperimentConfig.from_json(obj)


def _check_environment(env: Any) -> None:
    if not isinstance(env, dict):
        raise ConfigError("environment", "expected an object")
    if "prior" in env:
        if env["prior"] not in PRIORS:
            raise ConfigError("environment.prior", f"expected one of {PRIORS}")
    elif "name" not in env and "file" not in env:
        raise ConfigError("environment", "give 'name', 'file' or 'prior'")


def _check_agent(agent: Any) -> None:
    if not isinstance(agent, dict):
        raise ConfigError("agent", "expected an object")
    kind = agent.get("agent")
    if kind not in AGENTS:
        raise ConfigError("agent.agent", f"expected one of {AGENTS}, got {kind!r}")
    if kind == "psrl" and not isinstance(agent.get("H"), int):
        raise ConfigError("agent.H", "psrl needs an integer episode length")
    if kind == "smoothed_psrl":
        g = agent.get("gamma")
        if not isinstance(g, (int, float)) or not 0 < g < 1:
            raise ConfigError("agent.gamma", "expected a number in (0, 1)")
    if kind == "ofu" and "delta" in agent:
        d = agent["delta"]
        if not isinstance(d, (int, float)) or not 0 < d < 1:
            raise ConfigError("agent.delta", "expected a number in (0, 1)")
    if "signal" in agent:
        signal_from_json(agent["signal"], "agent.signal")
    if "prior" in agent:
        _check_environment({"prior": agent["prior"]} if isinstance(agent["prior"], str)
                           else agent["prior"])


def _prior_from(spec: dict, where: str) -> Belief:
    kind = spec["prior"]
    try:
        if kind == "two_point":
            return two_point_prior(float(spec.get("p", 0.5)))
        if kind == "heaven_hell":
            return heaven_hell_prior(float(spec.get("p", 0.5)), bool(spec.get("entry_reward", True)))
        if kind == "conjugate":
            if "like" in spec:
                like = _env_from(spec["like"], f"{where}.like")
                S, A = like.n_states, like.n_actions
            else:
                S, A = int(spec["n_states"]), int(spec["n_actions"])
            return conjugate_prior(S, A, float(spec.get("transition", 1.0)),
                                   float(spec.get("alpha", 1.0)), float(spec.get("beta", 1.0)))
        if kind == "file":
            return belief_from_json(json.loads(Path(spec["path"]).read_text()))
    except KeyError as exc:
        raise ConfigError(f"{where}.{exc.args[0]}", "missing field") from None
    except (ArgumentError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.prior", f"unknown prior {kind!r}")


def _env_from(spec: dict, where: str):
    try:
        if "file" in spec:
            return load_mdp(spec["file"])
        return build_named_env(spec["name"], spec.get("params", {}))
    except ConfigError as exc:
        raise ConfigError(f"{where}.{exc.path}", exc.message) from None
    except (ArgumentError, OSError) as exc:
        raise ConfigError(where, str(exc)) from None


def resolve_problem(cfg: ExperimentConfig) -> Problem:
    env = cfg.environment
    fixed = prior = None
    if "prior" in env:
        prior = _prior_from(env, "environment")
    else:
        fixed = _env_from(env, "environment")
    shape = fixed if fixed is not None else prior
    agent = dict(cfg.agent)
    if "prior" in agent:
        spec = agent.pop("prior")
        belief = _prior_from({"prior": spec} if isinstance(spec, str) else spec, "agent.prior")
    elif prior is not None:
        belief = prior
    else:
        belief = conjugate_prior(shape.n_states, shape.n_actions)
    if (belief.n_states, belief.n_actions) != (shape.n_states, shape.n_actions):
        raise ConfigError("agent.prior", "prior shape does not match the environment")
    if cfg.decomposition == "finite" and agent["agent"] != "psrl":
        raise ConfigError("decomposition", "the finite decomposition needs the psrl agent")
    if cfg.decomposition == "gain" and agent["agent"] == "psrl":
        raise ConfigError("decomposition", "psrl follows time policies; use 'finite'")
    return Problem(agent, cfg.T, fixed, prior, belief, cfg.start_state, cfg.decomposition)


# --- running ---------------------------------------------------------------------

@dataclass
class ExperimentResult:
    summary: dict
    final_regret: np.ndarray
    mean_curve: np.ndarray
    se_curve: np.ndarray
    optimism: Optional[np.ndarray] = None
    concentration: Optional[np.ndarray] = None
    outcomes: list = field(default_factory=list)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = len(x)
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, out_dir: Optional[str] = None,
                   keep_outcomes: bool = True, detail: bool = False) -> ExperimentResult:
    """Run every seed, optionally writing ``seed_<n>.csv`` files and ``summary.json``."""
    problem = resolve_problem(cfg)
    out = Path(out_dir or cfg.out_dir) if (out_dir or cfg.out_dir) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    n, T = len(cfg.seeds), cfg.T
    finals = np.zeros(n)
    opt = np.zeros(n) if cfg.decomposition else None
    conc = np.zeros(n) if cfg.decomposition else None
    curve_sum = np.zeros(T)
    curve_sq = np.zeros(T)
    kept = []
    try:
        outcomes = iter_outcomes(problem, cfg.seeds, cfg.engine, jobs, detail)
    except ValueError as exc:
        raise ConfigError("engine", str(exc)) from None
    for i, o in enumerate(outcomes):
        finals[i] = o.final_regret
        curve_sum += o.cumulative
        curve_sq += o.cumulative ** 2
        if opt is not None:
            opt[i], conc[i] = o.optimism, o.concentration
        if out is not None:
            write_seed_csv(out / f"seed_{o.seed}.csv", o)
        if keep_outcomes:
            kept.append(o)
    mean_curve = curve_sum / n
    var = np.maximum(curve_sq / n - mean_curve ** 2, 0.0) * (n / (n - 1)) if n > 1 else np.zeros(T)
    se_curve = np.sqrt(var / n)
    mean, se = _mean_se(finals)
    summary = {"config_hash": cfg.config_hash(), "n_seeds": n, "T": T,
               "regret_convention": "bayesian" if problem.prior is not None else "fixed_mdp",
               "mean_final_regret": mean, "se_final_regret": se}
    if opt is not None:
        m_opt, se_opt = _mean_se(opt)
        m_conc, se_conc = _mean_se(conc)
        summary["per_episode_decomposition"] = {
            "kind": cfg.decomposition,
            "mean_optimism_sum": m_opt, "se_optimism_sum": se_opt,
            "mean_concentration_sum": m_conc, "se_concentration_sum": se_conc}
    if out is not None:
        (out / "summary.json").write_text(dumps_17g(summary) + "\n")
    return ExperimentResult(summary, finals, mean_curve, se_curve, opt, conc, kept)


# --- serialization ---------------------------------------------------------------

def fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_17g(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        items = [f"{pad}{json.dumps(str(k))}: {dumps_17g(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}" if items else "{}"
    if isinstance(obj, (list, tuple)):
        items = [f"{pad}{dumps_17g(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]" if items else "[]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, np.integer)) or isinstance(obj, str):
        return json.dumps(obj if not isinstance(obj, np.integer) else int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise ValueError("non-finite float in summary")
        return fmt(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_seed_csv(path: Path, o: SeedOutcome) -> None:
    lines = ["seed,t,episode_index,reward,cumulative_regret"]
    seed = o.seed
    for t, (k, r, c) in enumerate(zip(o.episode_index.tolist(), o.rewards.tolist(),
                                      o.cumulative.tolist()), start=1):
        lines.append(f"{seed},{t},{k},{fmt(r)},{fmt(c)}")
    path.write_text("\n".join(lines) + "\n")
