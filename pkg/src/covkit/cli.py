"""Command-line entry point: ``covkit <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import ExperimentConfig, run_experiment, summarize
from .covgame import DEFAULT_MAX_ROUNDS, CapExceededError, run_covgame
from .envs import make_env
from .flow_lp import TargetFunction, coverage_bounds, phi_star
from .mdp import TabularMdp
from .pce import PCE_MAX_ROUNDS, run_pce
from .principle import PRINCIPLE_MAX_ROUNDS, PrincipleAbort, run_principle
from .reachability import estimate_all


def _load_target(path) -> np.ndarray:
    with open(path) as fh:
        return TargetFunction.from_dict(json.load(fh)).c


def _emit(obj, path) -> None:
    text = json.dumps(obj)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_phi_star(args) -> int:
    mdp = TabularMdp.load(args.mdp)
    c = _load_target(args.target)
    sol = phi_star(mdp, c)
    out = sol.to_dict()
    if sol.ok:
        out["bounds"] = list(coverage_bounds(mdp, c))
    _emit(out, args.out)
    return 0


def cmd_covgame(args) -> int:
    mdp = TabularMdp.load(args.mdp)
    c = _load_target(args.target)
    rng = np.random.default_rng(args.seed)
    try:
        run = run_covgame(mdp, c, args.delta, rng, args.beta_scale, args.max_rounds)
    except CapExceededError as exc:
        run = exc.run
        print(f"covkit: {exc}", file=sys.stderr)
    if args.out:
        run.write_jsonl(args.out)
    else:
        for rec in run.records():
            print(json.dumps(rec))
    return 0


def cmd_pce(args) -> int:
    mdp = TabularMdp.load(args.mdp)
    res = run_pce(mdp, args.eps, args.delta, np.random.default_rng(args.seed),
                  args.beta_scale, args.regret_scale, max_rounds=args.max_rounds)
    d = res.to_dict()
    d["beta_scale"] = args.beta_scale
    _emit(d, args.out)
    return 0


def cmd_principle(args) -> int:
    mdp = TabularMdp.load(args.mdp)
    try:
        res = run_principle(mdp, args.eps, args.delta, np.random.default_rng(args.seed),
                            args.beta_scale, max_rounds=args.max_rounds)
    except PrincipleAbort as exc:
        print(f"covkit: aborted: {exc}", file=sys.stderr)
        return 3
    d = res.to_dict()
    d["beta_scale"] = args.beta_scale
    _emit(d, args.out)
    return 0


def cmd_reach(args) -> int:
    mdp = TabularMdp.load(args.mdp)
    ivs = estimate_all(mdp, args.eps0, args.delta, np.random.default_rng(args.seed),
                       args.beta_scale, args.regret_scale)
    _emit({f"{h},{s}": iv.to_dict() for (h, s), iv in ivs.items()}, args.out)
    return 0


def cmd_bench(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.jsonl:
        cfg.jsonl_path = args.jsonl
    if args.csv:
        cfg.csv_path = args.csv
    if args.concurrency:
        cfg.concurrency = args.concurrency
    records = run_experiment(cfg)
    print(json.dumps(summarize(records)))
    return 0


def cmd_gen(args) -> int:
    spec = json.loads(args.params) if args.params else {}
    spec["generator"] = args.generator
    mdp = make_env(spec)
    if args.out:
        mdp.save(args.out)
    else:
        print(json.dumps(mdp.to_dict()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covkit", description="Active coverage toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phi-star", help="coverage complexity of a target")
    p.add_argument("--mdp", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_phi_star)

    def learning(p, max_rounds):
        p.add_argument("--mdp", required=True)
        p.add_argument("--delta", type=float, default=0.1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--beta-scale", type=float, default=1.0)
        p.add_argument("--max-rounds", type=int, default=max_rounds)
        p.add_argument("--out")

    p = sub.add_parser("covgame", help="run the coverage game")
    learning(p, DEFAULT_MAX_ROUNDS)
    p.add_argument("--target", required=True)
    p.set_defaults(func=cmd_covgame)

    p = sub.add_parser("pce", help="reward-free exploration")
    learning(p, PCE_MAX_ROUNDS)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--regret-scale", type=float, default=None)
    p.set_defaults(func=cmd_pce)

    p = sub.add_parser("principle", help="best-policy identification")
    learning(p, PRINCIPLE_MAX_ROUNDS)
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_principle)

    p = sub.add_parser("reach", help="reachability intervals for every (h, s)")
    learning(p, DEFAULT_MAX_ROUNDS)
    p.add_argument("--eps0", type=float, required=True)
    p.add_argument("--regret-scale", type=float, default=None)
    p.set_defaults(func=cmd_reach)

    p = sub.add_parser("bench", help="run a seeded experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--jsonl")
    p.add_argument("--csv")
    p.add_argument("--concurrency", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="generate an MDP file")
    p.add_argument("generator", choices=["random", "contextual", "ergodic", "tree", "chain",
                                          "two-block", "bandit"])
    p.add_argument("--params", help='JSON object, e.g. {"seed": 42, "S": 3, "A": 2, "H": 3}')
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, TypeError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"covkit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
