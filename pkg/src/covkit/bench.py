"""Seeded replication harness.

Replication ``i`` of an experiment draws its randomness from
``np.random.default_rng(child_seed(master_seed, seed_i))`` where
``child_seed`` is the splitmix64 finaliser applied to
``master * 0x9E3779B97F4A7C15 + seed`` (mod 2^64). Records are written one JSON
line per replication, in seed order, followed by a CSV summary.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .covgame import DEFAULT_MAX_ROUNDS, run_covgame
from .envs import make_env
from .flow_lp import coverage_bounds, phi_star
from .mdp import TabularMdp, max_reach_table, optimal_value, policy_gap
from .pce import PCE_MAX_ROUNDS, rfe_plan, run_pce
from .principle import PRINCIPLE_MAX_ROUNDS, run_principle
from .reachability import estimate_reachability

SCHEMA_VERSION = 1
CSV_FIELDS = ["schema_version", "algorithm", "runs", "errors", "success_rate",
              "tau_median", "tau_q05", "tau_q25", "tau_q75", "tau_q95"]
TIMING_FIELDS = ("wall_time",)
ALGORITHMS = ("covgame", "pce", "principle", "phi-star", "reach")

_MASK64 = (1 << 64) - 1


def child_seed(master: int, index: int) -> int:
    """Mix a master seed and a replication index into a 64-bit seed."""
    z = (int(master) * 0x9E3779B97F4A7C15 + int(index)) & _MASK64
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass
class ExperimentConfig:
    algorithm: str
    env: dict
    seeds: list
    eps: float = 0.2
    delta: float = 0.1
    beta_scale: float = 1.0
    regret_scale: float | None = None
    max_rounds: int | None = None
    master_seed: int = 0
    target: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    n_rewards: int = 100
    eps0: float | None = None
    concurrency: int = 1
    jsonl_path: str | None = None
    csv_path: str | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RunRecord:
    seed: int
    index: int
    algorithm: str
    tau: int | None
    success: bool
    gap: float | None
    wall_time: float
    payload: dict = field(default_factory=dict)
    error: str | None = None
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def build_target(env: TabularMdp, spec: dict) -> np.ndarray:
    kind = spec.get("kind", "constant")
    support = np.broadcast_to(max_reach_table(env)[:, :, None] > 0, env.shape)
    if kind == "constant":
        return float(spec["value"]) * support
    if kind == "reach":
        return float(spec.get("scale", 1.0)) * np.broadcast_to(max_reach_table(env)[:, :, None],
                                                                env.shape).copy()
    if kind == "file":
        with open(spec["path"]) as fh:
            return np.asarray(json.load(fh)["c"], dtype=float)
    raise ValueError(f"unknown target kind {kind!r}")


def random_rewards(rng: np.random.Generator, shape, count: int) -> np.ndarray:
    return rng.uniform(size=(count,) + tuple(shape))


def _finite(x):
    return None if x is None or not math.isfinite(x) else x


def _one(cfg: ExperimentConfig, index: int, seed: int) -> RunRecord:
    rng = np.random.default_rng(child_seed(cfg.master_seed, seed))
    t0 = time.perf_counter()
    tau, success, gap, payload = None, False, None, {}
    try:
        env = make_env(cfg.env)
        if cfg.algorithm == "covgame":
            c = build_target(env, cfg.target)
            run = run_covgame(env, c, cfg.delta, rng, cfg.beta_scale,
                              cfg.max_rounds or DEFAULT_MAX_ROUNDS)
            tau, success = run.tau, run.covered
            payload = {"phase_changes": run.phase_changes,
                       "phase_trace": run.phase_trace,
                       "counts_min_slack": float(np.min(run.counts.n - c))}
        elif cfg.algorithm == "pce":
            res = run_pce(env, cfg.eps, cfg.delta, rng, cfg.beta_scale, cfg.regret_scale,
                          max_rounds=cfg.max_rounds or PCE_MAX_ROUNDS)
            eval_rng = np.random.default_rng(child_seed(cfg.master_seed + 1, seed))
            gaps = [policy_gap(env, rfe_plan(res.p_hat, r, env.s1), r)
                    for r in random_rewards(eval_rng, env.shape, cfg.n_rewards)]
            tau, gap = res.tau, float(max(gaps))
            success = gap <= cfg.eps
            payload = {"phases": res.phases, "x_hat_size": len(res.x_hat),
                       "reach_episodes": res.reach_episodes,
                       "burn_in_episodes": res.burn_in_episodes,
                       "phase_episodes": [e["episodes"] for e in res.phase_log]}
        elif cfg.algorithm == "principle":
            res = run_principle(env, cfg.eps, cfg.delta, rng, cfg.beta_scale,
                                max_rounds=cfg.max_rounds or PRINCIPLE_MAX_ROUNDS)
            gap = float(policy_gap(env, res.policy, env.r))
            H, S, A = env.shape
            vl = res.lower_bounds()
            tau, success = res.raw_episodes, gap <= cfg.eps
            payload = {"phases": res.phases, "effective_episodes": res.effective_episodes,
                       "v_lower": vl,
                       "v_lower_monotone": bool(all(b >= a - 1e-12 for a, b in zip(vl, vl[1:]))),
                       "prune_ok": bool(all(e["d"] <= S * A * H * 2 ** e["k"]
                                            for e in res.phase_log if e["pruned"])),
                       "d": [e["d"] for e in res.phase_log],
                       "T": [e["T"] for e in res.phase_log]}
        elif cfg.algorithm == "phi-star":
            c = build_target(env, cfg.target)
            sol = phi_star(env, c)
            b1, b2, b3 = coverage_bounds(env, c)
            success = sol.ok
            payload = {"phi_star": _finite(sol.value), "b1": b1, "b2": _finite(b2),
                       "b3": _finite(b3), "status": sol.status}
        elif cfg.algorithm == "reach":
            eps0 = cfg.eps0 if cfg.eps0 is not None else cfg.eps
            W = max_reach_table(env)
            hits, tot, ivs = 0, 0, {}
            for h in range(env.H):
                for s in range(env.S):
                    iv = estimate_reachability(env, (h, s), eps0, cfg.delta, rng,
                                               cfg.beta_scale, cfg.regret_scale)
                    ivs[f"{h},{s}"] = [iv.lower, iv.upper]
                    hits += int(iv.contains(W[h, s]))
                    tot += 1
                    tau = (tau or 0) + iv.episodes
            success = hits == tot
            payload = {"intervals": ivs, "contained": hits, "targets": tot}
    except Exception as exc:  # recorded, never fatal for the sweep
        return RunRecord(seed, index, cfg.algorithm, tau, False, gap,
                         time.perf_counter() - t0, payload, f"{type(exc).__name__}: {exc}")
    return RunRecord(seed, index, cfg.algorithm, tau, bool(success), gap,
                     time.perf_counter() - t0, payload)


def _star(args):
    return _one(*args)


def summarize(records: list[RunRecord]) -> dict:
    taus = np.array([r.tau for r in records if r.tau is not None], dtype=float)
    q = (lambda p: float(np.quantile(taus, p))) if taus.size else (lambda p: None)
    return {"schema_version": SCHEMA_VERSION,
            "algorithm": records[0].algorithm if records else "",
            "runs": len(records),
            "errors": sum(r.error is not None for r in records),
            "success_rate": (sum(r.success for r in records) / len(records)) if records else 0.0,
            "tau_median": q(0.5), "tau_q05": q(0.05), "tau_q25": q(0.25),
            "tau_q75": q(0.75), "tau_q95": q(0.95)}


def write_summary(path, records: list[RunRecord]) -> dict:
    row = summarize(records)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        w.writerow(row)
    return row


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    jobs = [(cfg, i, s) for i, s in enumerate(cfg.seeds)]
    out = open(cfg.jsonl_path, "w") if cfg.jsonl_path else None
    records = []
    try:
        if cfg.concurrency > 1:
            with ProcessPoolExecutor(cfg.concurrency) as pool:
                it = pool.map(_star, jobs)
                for rec in it:
                    records.append(rec)
                    if out:
                        out.write(rec.to_json() + "\n")
                        out.flush()
        else:
            for job in jobs:
                rec = _star(job)
                records.append(rec)
                if out:
                    out.write(rec.to_json() + "\n")
                    out.flush()
    finally:
        if out:
            out.close()
    if cfg.csv_path:
        write_summary(cfg.csv_path, records)
    return records


def strip_timing(line: str) -> dict:
    d = json.loads(line)
    for key in TIMING_FIELDS:
        d.pop(key, None)
    return d


__all__ = ["ExperimentConfig", "RunRecord", "child_seed", "run_experiment", "summarize",
           "write_summary", "strip_timing", "build_target", "optimal_value"]
