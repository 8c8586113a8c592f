"""Command-line surface: gen / train / eval / compare / replay."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import datagen, evaluate as ev
from .config import ExperimentConfig, atomic_write_text, load_config, save_config
from .datagen import (
    IN_DISTRIBUTION_PROFILE,
    OOD_PROFILE,
    file_hash,
    generate_dataset,
    load_dataset,
    mask_peer,
    relabel,
    sample_record,
    split,
)
from .domain import BatteryConfig, Scenario, TimeOfDay
from .policy import BASELINE_NAMES, HeadPolicy, make_baseline
from .reward import RewardConfig, RewardMode
from .train import TrainConfig, load_checkpoint, save_checkpoint, train as train_head_raw
from .evaluate import cooperative_slice, evaluate, flat_table, replay_snapshot, train_head

OOD_STREAM = 1


class CliError(RuntimeError):
    pass


def _dataset_text(samples) -> str:
    return "".join(json.dumps(sample_record(s)) + "\n" for s in samples)


def _write_dataset(path, samples) -> None:
    atomic_write_text(path, _dataset_text(samples))


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.dataset.seed = args.seed
        cfg.train.seed = args.seed
    return cfg


def cmd_gen(args) -> int:
    cfg = _load_cfg(args)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    chash = cfg.config_hash()

    full = generate_dataset(IN_DISTRIBUTION_PROFILE, cfg.link, cfg.dataset, cfg.reward, stream=0)
    rng = np.random.default_rng([cfg.dataset.seed, 9973])
    train_set, test_set = split(full, cfg.dataset.split_fraction, rng)
    ood = generate_dataset(OOD_PROFILE, cfg.link, cfg.dataset, cfg.reward, stream=OOD_STREAM)

    paths = {k: os.path.join(out, f"{k}.jsonl") for k in ("train", "test", "ood")}
    _write_dataset(paths["train"], train_set)
    _write_dataset(paths["test"], test_set)
    _write_dataset(paths["ood"], ood)
    save_config(os.path.join(out, "config.json"), cfg)

    manifest = {
        "config_hash": chash,
        "seed": cfg.seed,
        "counts": {
            "in_distribution": len(full),
            "train": len(train_set),
            "test": len(test_set),
            "ood": len(ood),
        },
        "hashes": {k: file_hash(p) for k, p in paths.items()},
    }
    atomic_write_text(os.path.join(out, "manifest.json"),
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(full)} in-distribution samples "
          f"({len(train_set)} train / {len(test_set)} test), {len(ood)} OOD -> {out}")
    return 0


def _resolve_data(path: str, which: str = "test") -> str:
    if os.path.isdir(path):
        f = os.path.join(path, f"{which}.jsonl")
        if not os.path.exists(f):
            raise CliError(f"no {which}.jsonl under {path}; run `watune gen` first")
        return f
    return path


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    tcfg = TrainConfig(
        loss=args.loss,
        epochs=cfg.train.epochs,
        effective_batch=cfg.train.effective_batch,
        learning_rate=cfg.train.learning_rate,
        weight_decay=cfg.train.weight_decay,
        dpo_beta=cfg.train.dpo_beta,
        seed=cfg.seed,
        soft_temp=cfg.reward.soft_temp,
        layers=args.layers,
        hidden=cfg.train.hidden,
    )
    data = load_dataset(_resolve_data(args.data, "train"))
    if args.reward == "naive":
        naive = RewardConfig(w_l=cfg.reward.w_l, w_p=cfg.reward.w_p,
                             mode=RewardMode.naive, soft_temp=cfg.reward.soft_temp)
        data = relabel(data, naive)
    if args.no_peer:
        data = mask_peer(data)

    from .train import init_head
    if tcfg.loss == "dpo":
        if not args.ref:
            raise CliError("--loss dpo requires --ref <sft-checkpoint>")
        ref_model, _ = load_checkpoint(args.ref)
        model, report = train_head_raw(data, ref_model, tcfg, ref_model=ref_model)
    else:
        model, report = train_head_raw(data, init_head(tcfg.layers, tcfg.hidden, seed=tcfg.seed), tcfg)

    meta = {
        "loss": tcfg.loss,
        "layers": tcfg.layers,
        "seed": tcfg.seed,
        "config_hash": cfg.config_hash(),
        "reward_mode": args.reward,
        "no_peer": bool(args.no_peer),
        "report": report,
    }
    save_checkpoint(args.out, model, meta)
    print(f"trained {tcfg.loss} head ({tcfg.layers} layers) on {len(data)} samples -> {args.out}")
    return 0


def _parse_scenario(text: str) -> Scenario:
    try:
        time_name, bc_name = text.split("/")
        return Scenario(TimeOfDay[time_name], BatteryConfig[bc_name])
    except (ValueError, KeyError):
        raise CliError(f"bad scenario {text!r}; expected e.g. afternoon/pubHighSubLow") from None


def _make_policy(args):
    if args.policy == "head":
        if not args.checkpoint:
            raise CliError("policy 'head' requires --checkpoint")
        model, meta = load_checkpoint(args.checkpoint)
        return HeadPolicy(model, name="head", mask_peer=bool(meta.get("no_peer")))
    try:
        return make_baseline(args.policy)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    policy = _make_policy(args)

    if args.single:
        full = load_dataset(_resolve_data(args.data, "train")) + load_dataset(
            _resolve_data(args.data, "test"))
        policies = [make_baseline(n) for n in BASELINE_NAMES]
        reports = ev.single_objective_eval(full, args.single, policies, cfg.train,
                                           cfg.dataset, cfg.reward)
        out = {name: rep.__dict__ for name, rep in reports.items()}
    else:
        which = "ood" if args.ood else "test"
        data = load_dataset(_resolve_data(args.data, which))
        if args.scenario == "coop":
            data = cooperative_slice(data)
        rep = evaluate(policy, data, config_hash=cfg.config_hash())
        out = {policy.name: rep.__dict__}

    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"report -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


COMPARE_ROWS = ("oracle", "rule", "fix-rt-iv", "fix-bulk-bg",
                "head-ce", "head-kl", "head-kl+dpo", "head-kl-no-peer")
COMPARE_SLICES = ("aggregate", "coop", "ood")
COMPARE_METRICS = ("objective", "latency", "energy")


def _head_variants(train_set, cfg: ExperimentConfig, out: str, chash: str) -> dict:
    """Train (or reload) the four head rows of the comparison table."""
    variants = {}
    base = dict(epochs=cfg.train.epochs, effective_batch=cfg.train.effective_batch,
                learning_rate=cfg.train.learning_rate, weight_decay=cfg.train.weight_decay,
                dpo_beta=cfg.train.dpo_beta, seed=cfg.seed, soft_temp=cfg.reward.soft_temp,
                layers=cfg.train.layers, hidden=cfg.train.hidden)
    specs = {
        "head-ce": (TrainConfig(loss="ce", **base), False),
        "head-kl": (TrainConfig(loss="kl", **base), False),
        "head-kl+dpo": (TrainConfig(loss="dpo", **base), False),
        "head-kl-no-peer": (TrainConfig(loss="kl", **base), True),
    }
    for name, (tcfg, masked) in specs.items():
        ckpt = os.path.join(out, name + ".ckpt.json")
        if os.path.exists(ckpt):
            model, meta = load_checkpoint(ckpt)
            if meta.get("config_hash") != chash:
                raise CliError(
                    f"checkpoint {ckpt} was built from config {meta.get('config_hash')}, "
                    f"current config is {chash}; remove stale artifacts or use a fresh out dir")
            variants[name] = HeadPolicy(model, name=name, mask_peer=masked)
            continue
        policy, model, _ = train_head(train_set, tcfg, masked=masked)
        policy.name = name
        save_checkpoint(ckpt, model, {
            "loss": tcfg.loss, "layers": tcfg.layers, "seed": tcfg.seed,
            "config_hash": chash, "no_peer": masked, "reward_mode": "context",
        })
        variants[name] = policy
    return variants


def cmd_compare(args) -> int:
    cfg = _load_cfg(args)
    out = args.out or cfg.out_dir
    chash = cfg.config_hash()
    manifest_path = os.path.join(out, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        if manifest.get("config_hash") != chash:
            raise CliError(
                f"artifacts in {out} were generated from config {manifest.get('config_hash')}, "
                f"current config is {chash}; remove them or use a fresh out dir")
    else:
        cmd_gen(argparse.Namespace(config=getattr(args, "config", None),
                                   seed=getattr(args, "seed", None), out=out))

    train_set = load_dataset(os.path.join(out, "train.jsonl"))
    test_set = load_dataset(os.path.join(out, "test.jsonl"))
    ood_set = load_dataset(os.path.join(out, "ood.jsonl"))
    coop_set = cooperative_slice(test_set)

    policies = {name: make_baseline(name) for name in BASELINE_NAMES}
    policies.update(_head_variants(train_set, cfg, out, chash))

    slices = {"aggregate": test_set, "coop": coop_set, "ood": ood_set}
    lines = ["policy\t" + "\t".join(f"{m}/{s}" for m in COMPARE_METRICS for s in COMPARE_SLICES)]
    reports = {}
    for row in COMPARE_ROWS:
        reps = {s: evaluate(policies[row], data, config_hash=chash) for s, data in slices.items()}
        reports[row] = reps
        cells = []
        for metric in COMPARE_METRICS:
            for s in COMPARE_SLICES:
                value = {"objective": reps[s].objective_score,
                         "latency": reps[s].latency_score,
                         "energy": reps[s].energy_score}[metric]
                cells.append(f"{value:.6f}")
        lines.append(row + "\t" + "\t".join(cells))
    table = f"# config_hash: {chash}\n" + "\n".join(lines) + "\n"
    table_path = os.path.join(out, "compare.tsv")
    atomic_write_text(table_path, table)
    atomic_write_text(os.path.join(out, "compare_full.tsv"),
                      f"# config_hash: {chash}\n" + flat_table(reports))
    sys.stdout.write(table)
    print(f"table -> {table_path}")
    return 0


def cmd_replay(args) -> int:
    data = load_dataset(_resolve_data(args.data, "test"))
    policies = []
    for name in args.policies.split(","):
        name = name.strip()
        if name == "head":
            policies.append(_make_policy(argparse.Namespace(policy="head",
                                                            checkpoint=args.checkpoint)))
        else:
            try:
                policies.append(make_baseline(name))
            except ValueError as exc:
                raise CliError(str(exc)) from None
    scenario = _parse_scenario(args.scenario) if args.scenario else None
    transcript = replay_snapshot(data, policies, scenario=scenario, max_steps=args.steps)
    if args.out:
        atomic_write_text(args.out, transcript)
        print(f"transcript -> {args.out}")
    else:
        sys.stdout.write(transcript)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="watune",
                                 description="Cooperative Wi-Fi Aware parameter-selection harness")
    ap.add_argument("--config", help=f"experiment config JSON (default: ${'{'}WATUNE_CONFIG{'}'} or built-ins)")
    ap.add_argument("--seed", type=int, help="override the config seed everywhere")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate train/test/OOD datasets and manifest")
    g.add_argument("--out", help="output directory (default: config out_dir)")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a classification head")
    t.add_argument("--data", required=True, help="train.jsonl or a gen output directory")
    t.add_argument("--loss", choices=("ce", "kl", "dpo"), default="kl")
    t.add_argument("--layers", type=int, choices=(1, 2, 3), default=3)
    t.add_argument("--no-peer", action="store_true", help="train on peer-masked features")
    t.add_argument("--reward", choices=("context", "naive"), default="context")
    t.add_argument("--ref", help="reference SFT checkpoint (required for --loss dpo)")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a policy")
    e.add_argument("--data", required=True, help="dataset file or gen output directory")
    e.add_argument("--policy", required=True,
                   help="oracle | rule | fix-rt-iv | fix-bulk-bg | head")
    e.add_argument("--checkpoint", help="head checkpoint (for --policy head)")
    e.add_argument("--scenario", choices=("all", "coop"), default="all")
    e.add_argument("--ood", action="store_true", help="evaluate on the OOD test file")
    e.add_argument("--single", choices=("latency", "energy"),
                   help="single-objective run (retrains the head)")
    e.add_argument("--out", help="report path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="end-to-end comparison table")
    c.add_argument("--out", help="artifact directory (default: config out_dir)")
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("replay", help="qualitative decision transcript")
    r.add_argument("--data", required=True)
    r.add_argument("--policies", default="oracle,rule",
                   help="comma-separated policy names")
    r.add_argument("--checkpoint", help="head checkpoint if 'head' is listed")
    r.add_argument("--scenario", help="filter, e.g. afternoon/pubHighSubLow")
    r.add_argument("--steps", type=int, default=10)
    r.add_argument("--out")
    r.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
