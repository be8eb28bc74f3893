"""Experiment configs, regret metrics, and CSV/JSON outputs."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import QConfig, fixed_policy_run, q_learning_run, random_policy_run
from .errors import ConfigError, InvariantViolation
from .game import Dsg, FollowerOracle, load_dsg, validate
from .learner import LearnerConfig, RunResult, mistake_budget, run_anytime, run_learning
from .planning import hindsight_policy
from .scenarios import TABLE1_PRESETS, PoachingSpec, RandomDsgSpec, poaching_dsg, random_dsg

LEARNERS = ("version_space", "q_learning", "random", "hindsight")
CSV_HEADER = "episode,seed,learner,avg_regret,avg_cum_reward,mistakes_cum,epsilon,p,state_count"
SUMMARY_HEADER = "episode,learner,avg_regret,avg_cum_reward,mistakes_cum,n_seeds"


def fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else format(float(v), ".9g")


# metrics


def average_regret(run: RunResult, opt_value: float, H: int) -> np.ndarray:
    """Running ``(1/(tH)) sum_{i<=t} (opt_value - return_i)`` using the exact optimal value."""
    returns = run.returns if isinstance(run, RunResult) else np.asarray(run, dtype=float)
    t = np.arange(1, returns.size + 1)
    return np.cumsum(opt_value - returns) / (t * H)


def average_cumulative_reward(run: RunResult, H: int) -> np.ndarray:
    returns = run.returns if isinstance(run, RunResult) else np.asarray(run, dtype=float)
    t = np.arange(1, returns.size + 1)
    return np.cumsum(returns) / (t * H)


def report_bounds(run: RunResult, dsg: Dsg) -> dict:
    """Mistake budget ``(2/eps)^(p-1)`` against realized mistakes, per segment."""
    checks = []
    for c in run.mistake_checks():
        checks.append(
            {
                "start": c["start"],
                "length": c["length"],
                "epsilon": c["epsilon"],
                "epsilon_in_force": c["epsilon_in_force"],
                "budget": None if math.isinf(c["budget"]) else c["budget"],
                "nominal_budget": mistake_budget(c["epsilon"], dsg.p),
                "mistakes": c["mistakes"],
                "pass": bool(c["pass"]),
            }
        )
    return {"p": dsg.p, "checks": checks, "pass": all(c["pass"] for c in checks)}


# configuration


@dataclass
class ExperimentConfig:
    scenario: dict
    learners: list[str]
    T: int
    seeds: list[int]
    epsilon: float | None = None  # None: automatic schedule
    candidates: int = 128
    instance_seed: int | None = None  # None: a fresh instance per seed
    anytime: dict | None = None
    q_learning: dict = field(default_factory=dict)
    output: str | None = None

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<config>") -> "ExperimentConfig":
        def bad(msg):
            return ConfigError(f"{source}: {msg}")

        if not isinstance(doc, dict):
            raise bad("top level must be a JSON object")
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise bad(f"unknown keys {sorted(unknown)}")
        for key in ("scenario", "learners", "T", "seeds"):
            if key not in doc:
                raise bad(f"missing required key '{key}'")
        learners = doc["learners"]
        if not isinstance(learners, list) or not learners:
            raise bad("'learners' must be a non-empty list")
        for name in learners:
            if name not in LEARNERS:
                raise bad(f"unknown learner '{name}' (expected one of {list(LEARNERS)})")
        seeds = doc["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise bad("'seeds' must be a non-empty list of integers")
        if not isinstance(doc["T"], int) or doc["T"] < 1:
            raise bad("'T' must be a positive integer")
        eps = doc.get("epsilon", "auto")
        if eps in (None, "auto", "Auto"):
            eps = None
        elif not isinstance(eps, (int, float)) or eps <= 0:
            raise bad("'epsilon' must be 'auto' or a positive number")
        scen = doc["scenario"]
        if not isinstance(scen, dict) or scen.get("kind") not in ("random", "table1", "poaching", "file"):
            raise bad("'scenario.kind' must be one of random, table1, poaching, file")
        anytime = doc.get("anytime")
        if anytime is not None and not (
            isinstance(anytime, dict) and int(anytime.get("T0", 0)) >= 1 and int(anytime.get("segments", 0)) >= 1
        ):
            raise bad("'anytime' needs positive integers T0 and segments")
        return cls(
            scenario=scen,
            learners=list(learners),
            T=int(doc["T"]),
            seeds=list(seeds),
            epsilon=None if eps is None else float(eps),
            candidates=int(doc.get("candidates", 128)),
            instance_seed=doc.get("instance_seed"),
            anytime=anytime,
            q_learning=dict(doc.get("q_learning", {})),
            output=doc.get("output"),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epsilon"] = "auto" if self.epsilon is None else self.epsilon
        return d


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc
    return ExperimentConfig.from_dict(doc, str(path))


def build_scenario(scen: dict, seed: int) -> tuple[Dsg, np.ndarray]:
    kind = scen["kind"]
    opts = {k: v for k, v in scen.items() if k != "kind"}
    try:
        if kind == "random":
            return random_dsg(RandomDsgSpec(seed=seed, **opts))
        if kind == "table1":
            row = int(opts.pop("row"))
            if row not in TABLE1_PRESETS:
                raise ConfigError(f"table1 row must be one of {sorted(TABLE1_PRESETS)}")
            return random_dsg(RandomDsgSpec(TABLE1_PRESETS[row], seed=seed, **opts))
        if kind == "poaching":
            return poaching_dsg(PoachingSpec(seed=seed, **opts))
        dsg, theta = load_dsg(opts["path"])
    except TypeError as exc:
        raise ConfigError(f"bad scenario options: {exc}") from exc
    if theta is None:
        raise ConfigError(f"{opts['path']}: game file has no theta_star")
    problems = validate(dsg)
    if problems:
        raise ConfigError(f"{opts['path']}: invalid game: {problems[0]}")
    return dsg, theta / np.linalg.norm(theta)


def cell_seed(seed: int, learner: str) -> int:
    return int(np.random.SeedSequence([seed, LEARNERS.index(learner)]).generate_state(1)[0])


# running


@dataclass
class CellResult:
    seed: int
    learner: str
    rows: list[str]
    opt_value: float
    run: dict
    bounds: dict | None
    instance: dict


def run_cell(cfg: ExperimentConfig, seed: int, learner: str) -> CellResult:
    inst_seed = seed if cfg.instance_seed is None else cfg.instance_seed
    dsg, theta = build_scenario(cfg.scenario, inst_seed)
    oracle = FollowerOracle(theta)
    x_star, v_star = hindsight_policy(dsg, theta)
    opt_value = float(v_star[0])
    rs = cell_seed(seed, learner)
    H = dsg.horizon
    bounds = None
    if learner == "version_space":
        lcfg = LearnerConfig(T=cfg.T, epsilon=cfg.epsilon, candidates=cfg.candidates, seed=rs, keep_logs=False)
        if cfg.anytime:
            run = run_anytime(dsg, oracle, int(cfg.anytime["T0"]), int(cfg.anytime["segments"]), lcfg)
        else:
            run = run_learning(dsg, oracle, lcfg)
        bounds = report_bounds(run, dsg)
    elif learner == "q_learning":
        run = q_learning_run(dsg, oracle, QConfig(T=cfg.T, seed=rs, **cfg.q_learning))
    elif learner == "random":
        run = random_policy_run(dsg, oracle, cfg.T, seed=rs)
    else:
        run = fixed_policy_run(dsg, oracle, x_star, cfg.T, seed=rs)

    regret = average_regret(run, opt_value, H)
    reward = average_cumulative_reward(run, H)
    mistakes = np.cumsum(run.mistakes)
    rows = []
    for i, ep in enumerate(run.episodes):
        rows.append(
            ",".join(
                [
                    str(ep.episode),
                    str(seed),
                    learner,
                    fmt(regret[i]),
                    fmt(reward[i]),
                    str(int(mistakes[i])),
                    fmt(ep.epsilon),
                    str(dsg.p),
                    str(dsg.num_states),
                ]
            )
        )
    instance = {
        "instance_seed": inst_seed,
        "normalization_constant": dsg.metadata.get("normalization_constant"),
        "layer_sizes": list(dsg.layer_sizes),
        "n": dsg.n,
        "m": dsg.m,
        "p": dsg.p,
    }
    return CellResult(seed, learner, rows, opt_value, run.to_json() | {"events": run.events}, bounds, instance)


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1) -> dict:
    """Run every (seed, learner) cell and write ``results.csv``, ``summary.csv``, ``manifest.json``."""
    out = Path(out_dir or cfg.output or "results")
    out.mkdir(parents=True, exist_ok=True)
    cells = [(cfg, seed, learner) for seed in cfg.seeds for learner in cfg.learners]
    if threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_cell_args, cells))
    else:
        results = [run_cell(*c) for c in cells]

    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for res in results:
        for row in res.rows:
            buf.write(row + "\n")
    (out / "results.csv").write_text(buf.getvalue())
    (out / "summary.csv").write_text(summarize(buf.getvalue()))

    bound_failures = [
        {"seed": r.seed, "learner": r.learner, **c}
        for r in results
        if r.bounds
        for c in r.bounds["checks"]
        if not c["pass"]
    ]
    manifest = {
        "config": cfg.to_dict(),
        "seeds": cfg.seeds,
        "regret_reference": "exact expected optimal value V(pi*, s1) from backward-induction LPs",
        "csv_header": CSV_HEADER,
        "cells": [
            {
                "seed": r.seed,
                "learner": r.learner,
                "opt_value": r.opt_value,
                "instance": r.instance,
                "fallback_events": [e for e in r.run.get("events", []) if e["kind"] == "fallback_uniform"],
                "epsilon_halvings": sum(e["kind"] == "epsilon_halved" for e in r.run.get("events", [])),
                "episodes": r.run["episodes"],
                "segments": r.run.get("segments", []),
                "bounds": r.bounds,
            }
            for r in results
        ],
        "mistake_bound": {"pass": not bound_failures, "failures": bound_failures},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=_json_default))
    if bound_failures:
        raise InvariantViolation(f"mistake budget exceeded in {len(bound_failures)} check(s)")
    return manifest


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o)}")


def summarize(results_csv: str) -> str:
    """Seed-averaged curves per (learner, episode)."""
    acc: dict[tuple[str, int], list] = {}
    order: list[str] = []
    for row in csv.DictReader(io.StringIO(results_csv)):
        key = (row["learner"], int(row["episode"]))
        if row["learner"] not in order:
            order.append(row["learner"])
        acc.setdefault(key, []).append(
            (float(row["avg_regret"]), float(row["avg_cum_reward"]), float(row["mistakes_cum"]))
        )
    lines = [SUMMARY_HEADER]
    for learner in order:
        for (name, ep) in sorted(k for k in acc if k[0] == learner):
            vals = np.array(acc[(name, ep)])
            mean = vals.mean(axis=0)
            lines.append(",".join([str(ep), name, fmt(mean[0]), fmt(mean[1]), fmt(mean[2]), str(len(vals))]))
    return "\n".join(lines) + "\n"


def read_summary(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    curves: dict[str, dict[str, list]] = {}
    with open(path) as fh:
        for row in csv.DictReader(fh):
            c = curves.setdefault(row["learner"], {"episode": [], "avg_regret": [], "avg_cum_reward": []})
            for k in c:
                c[k].append(float(row[k]))
    return {k: {f: np.array(v) for f, v in c.items()} for k, c in curves.items()}


def report_manifest(path: str | Path) -> dict:
    """Bound checks and final seed-averaged metrics from a finished run."""
    path = Path(path)
    manifest = json.loads(path.read_text())
    summary = path.parent / "summary.csv"
    finals = {}
    if summary.exists():
        for learner, c in read_summary(summary).items():
            finals[learner] = {
                "episode": int(c["episode"][-1]),
                "avg_regret": float(c["avg_regret"][-1]),
                "avg_cum_reward": float(c["avg_cum_reward"][-1]),
            }
    checks = [
        {"seed": cell["seed"], **chk}
        for cell in manifest["cells"]
        if cell.get("bounds")
        for chk in cell["bounds"]["checks"]
    ]
    return {
        "mistake_bound_pass": all(c["pass"] for c in checks),
        "checks": checks,
        "final": finals,
    }
