"""Command line entry point: ``uavcollect <command> [options]``.

Exit codes: 0 success, 2 invalid input or configuration, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .config import (ConfigError, Scenario, TrainConfig, from_mapping, parse_overrides,
                     resolve, split_overrides)
from .crdt import Trainer, count_parameters, eval_seeds, load_model, rollout
from .datasets import (BehaviorPolicy, generate_dataset, greedy_nearest_action, load_dataset,
                       save_dataset, survey_policy)
from .env import ALLOCATOR_KINDS, UavDataEnv, compare_allocators
from .nn.checkpoint import load_checkpoint
from .nn.gradcheck import gradcheck_layers

GRADCHECK_TOL = 1e-4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--dataset", help="dataset file")
    p.add_argument("--checkpoint", help="model checkpoint")
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario or training field (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavcollect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario-gen", help="write a scenario file")
    _common(p)

    p = sub.add_parser("dataset-gen", help="roll out a behavior policy into a dataset file")
    _common(p)
    p.add_argument("--policy", default="greedy_nearest", help="greedy_nearest | random | noisy:<sigma>")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--encoding", default="decimal", choices=["decimal", "binary64"])

    for name, text in (("train", "fine-tune a (critic-regularized) decision transformer"),
                       ("pretrain", "train the full model with plain return-conditioned cloning")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--metrics", help="per-epoch metrics CSV (default: <out>.metrics.csv)")

    p = sub.add_parser("eval", help="roll out a checkpoint")
    _common(p)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--target-rtg", type=float, help="initial return-to-go (default: from checkpoint)")

    p = sub.add_parser("compare-allocators", help="per-slot CSV of allocator performance")
    _common(p)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--policy", default="survey",
                   help="flight plan: survey | greedy_nearest | random | noisy:<sigma>")

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    _common(p)

    p = sub.add_parser("sweep", help="train across values of one setting and tabulate results")
    _common(p)
    p.add_argument("--param", default="lora_rank", help="training field to vary")
    p.add_argument("--values", default="0,4,8,16", help="comma separated values")
    return parser


# --- helpers ---------------------------------------------------------------------

def _scenario(args) -> Scenario:
    overrides = parse_overrides(args.override)
    base = Scenario.load(args.scenario) if args.scenario else None
    scen, _ = resolve(args.preset, overrides, base)
    return replace(scen, seed=args.seed) if base is None and "seed" not in overrides else scen


def _train_config(args, scenario: Scenario, **fixed) -> TrainConfig:
    _, train_over = split_overrides(parse_overrides(args.override))
    _, cfg = resolve(args.preset, None, scenario)
    return from_mapping(TrainConfig, {"seed": args.seed, **train_over, **fixed}, base=cfg)


def _require(args, *names: str) -> None:
    for name in names:
        value = getattr(args, name)
        if value is None:
            raise ConfigError(f"--{name} is required")
        if name != "out" and not Path(value).exists():
            raise ConfigError(f"{name} file not found: {value}")


def _write_csv(path, rows: list[dict], fields: list[str]) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if path:
            fh.close()


def _policy_fn(text: str, env: UavDataEnv, rng: np.random.Generator):
    if text == "survey":
        return survey_policy(env, rng)
    if text == "greedy_nearest":
        return lambda env, rng: greedy_nearest_action(env)
    return BehaviorPolicy.parse(text).act


# --- commands --------------------------------------------------------------------

def cmd_scenario_gen(args) -> None:
    _require(args, "out")
    _scenario(args).save(args.out)
    print(args.out)


def cmd_dataset_gen(args) -> None:
    _require(args, "out")
    if args.scenario:
        _require(args, "scenario")
    scenario = _scenario(args)
    ds = generate_dataset(BehaviorPolicy.parse(args.policy), scenario, args.episodes, args.seed,
                          args.encoding)
    save_dataset(ds, args.out)
    rets = ds.returns()
    print(json.dumps({"episodes": len(rets), "mean_return": float(rets.mean()),
                      "max_return": float(rets.max()), "reward_norm": ds.reward_norm}))


def _fit(args, **fixed) -> Trainer:
    _require(args, "dataset", "out")
    ds = load_dataset(args.dataset)
    cfg = _train_config(args, ds.scenario, **fixed)
    backbone = None
    if args.checkpoint:
        _require(args, "checkpoint")
        backbone, _ = load_checkpoint(args.checkpoint)
    trainer = Trainer(ds, cfg, backbone)
    trainer.fit(args.metrics or f"{args.out}.metrics.csv")
    trainer.save(args.out)
    return trainer


def cmd_train(args) -> None:
    trainer = _fit(args)
    print(json.dumps({k: v for k, v in trainer.history[-1].items() if v != ""}))


def cmd_pretrain(args) -> None:
    trainer = _fit(args, mode="full", use_critic=False, lambda_reg=0.0)
    print(json.dumps({k: v for k, v in trainer.history[-1].items() if v != ""}))


def cmd_eval(args) -> None:
    _require(args, "checkpoint")
    model, cfg, meta = load_model(args.checkpoint)
    scenario = Scenario.load(args.scenario) if args.scenario else from_mapping(Scenario, meta["scenario"])
    env = UavDataEnv(scenario)
    target = args.target_rtg if args.target_rtg is not None else meta["target_rtg"]
    rows = []
    for s in eval_seeds(args.seed, args.episodes):
        tr = rollout(model, env, target, cfg.context_k, meta["reward_norm"], s).trajectory
        bits, joules = float(tr.collected.sum()), float(tr.energy.sum())
        rows.append({"episode_seed": s, "steps": len(tr), "return": tr.episode_return,
                     "collected_bits": bits, "energy_j": joules, "efficiency_bits_per_j": bits / joules})
    if args.out:
        _write_csv(args.out, rows, list(rows[0]))
    rets = np.array([r["return"] for r in rows])
    print(json.dumps({"episodes": len(rows), "return_mean": float(rets.mean()),
                      "return_std": float(rets.std()),
                      "efficiency_mean": float(np.mean([r["efficiency_bits_per_j"] for r in rows]))}))


def cmd_compare_allocators(args) -> None:
    scenario = _scenario(args)
    env = UavDataEnv(scenario)
    rng = np.random.default_rng([args.seed, 3])
    rows = []
    for ep, s in enumerate(eval_seeds(args.seed, args.episodes)):
        policy = _policy_fn(args.policy, env, rng)
        for row in compare_allocators(env, policy, s, rng, ALLOCATOR_KINDS):
            rows.append({"episode": ep, **row})
    _write_csv(args.out, rows, ["episode", "slot", "allocator", "collected_bits", "energy_j",
                                "efficiency_bits_per_j"])


def cmd_gradcheck(args) -> int:
    errs = gradcheck_layers(seed=args.seed)
    for name, err in errs.items():
        print(f"{name:12s} {err:.3e}")
    worst = max(errs.values())
    print(f"max relative error {worst:.3e}")
    return 0 if worst < GRADCHECK_TOL else 1


def cmd_sweep(args) -> None:
    """One fine-tuning run per value. With --checkpoint the backbone starts from
    that (pretrained) model; rank 0 then trains only the embeddings and head."""
    _require(args, "dataset")
    ds = load_dataset(args.dataset)
    backbone = load_checkpoint(args.checkpoint)[0] if args.checkpoint else None
    rows = []
    for value in args.values.split(","):
        cfg = _train_config(args, ds.scenario, **{args.param: value.strip()})
        if args.param == "lora_rank":
            cfg = replace(cfg, mode="lora")
        trainer = Trainer(ds, cfg, backbone)
        trainer.fit()
        total, trainable = count_parameters(trainer.model)
        final = trainer.history[-1]
        rows.append({args.param: value.strip(), "eval_return_mean": final["eval_return_mean"],
                     "eval_energy_efficiency": final["eval_energy_efficiency"],
                     "total_params": total, "trainable_params": trainable,
                     "trainable_pct": 100.0 * trainable / total})
    _write_csv(args.out, rows, list(rows[0]))


COMMANDS = {
    "scenario-gen": cmd_scenario_gen, "dataset-gen": cmd_dataset_gen, "train": cmd_train,
    "pretrain": cmd_pretrain, "eval": cmd_eval, "compare-allocators": cmd_compare_allocators,
    "gradcheck": cmd_gradcheck, "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    torch.set_num_threads(1)  # keeps results bit-stable across machines' thread counts
    try:
        code = COMMANDS[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
