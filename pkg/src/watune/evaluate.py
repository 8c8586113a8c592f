"""Policy evaluation: the three metrics, scenario breakdowns, the
cooperative slice, peer-info / reward-design ablations, single-objective
runs, and qualitative replay transcripts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import DatasetConfig, Sample, mask_peer, relabel, split
from .domain import BatteryConfig, Scenario
from .policy import Policy
from .reward import RewardConfig, RewardMode
from .train import TrainConfig, encode_batch, forward, init_head, train


@dataclass
class EvalReport:
    policy: str
    n_samples: int
    objective_score: float          # per-sample mean of R at the chosen action
    latency_score: float            # per-sample mean of the latency score
    energy_score: float             # per-sample mean of the energy score
    raw_energy_pct_h: float         # per-sample mean energy drain of chosen actions
    scenario_mean_objective: float  # per-scenario means, then averaged
    scenario_mean_latency: float
    scenario_mean_energy: float
    per_scenario: dict = field(default_factory=dict)
    dataset_hash: str = ""
    config_hash: str = ""


def decisions(policy: Policy, dataset: list[Sample]) -> np.ndarray:
    return np.array([policy.decide(s.context, s.rewards).index for s in dataset])


def evaluate(policy: Policy, dataset: list[Sample],
             dataset_hash: str = "", config_hash: str = "") -> EvalReport:
    """Score one policy. Metrics always use the stored ground-truth rewards
    (both devices), regardless of what the policy was allowed to see."""
    if not dataset:
        raise ValueError("cannot evaluate on an empty dataset slice")
    chosen = decisions(policy, dataset)
    obj = np.array([s.rewards.objective[a] for s, a in zip(dataset, chosen)])
    lat = np.array([s.rewards.latency_score[a] for s, a in zip(dataset, chosen)])
    eng = np.array([s.rewards.energy_score[a] for s, a in zip(dataset, chosen)])
    raw = np.array([s.measurements.energy_pct_h[a] for s, a in zip(dataset, chosen)])

    per_scenario: dict[str, dict] = {}
    scen_keys = [s.scenario for s in dataset]
    for scen in sorted(set(scen_keys), key=lambda s: (int(s.time), int(s.battery_config))):
        idx = np.array([i for i, k in enumerate(scen_keys) if k == scen])
        per_scenario[scen.key()] = {
            "n": int(len(idx)),
            "objective": float(obj[idx].mean()),
            "latency": float(lat[idx].mean()),
            "energy": float(eng[idx].mean()),
            "raw_energy_pct_h": float(raw[idx].mean()),
        }
    return EvalReport(
        policy=policy.name,
        n_samples=len(dataset),
        objective_score=float(obj.mean()),
        latency_score=float(lat.mean()),
        energy_score=float(eng.mean()),
        raw_energy_pct_h=float(raw.mean()),
        scenario_mean_objective=float(np.mean([v["objective"] for v in per_scenario.values()])),
        scenario_mean_latency=float(np.mean([v["latency"] for v in per_scenario.values()])),
        scenario_mean_energy=float(np.mean([v["energy"] for v in per_scenario.values()])),
        per_scenario=per_scenario,
        dataset_hash=dataset_hash,
        config_hash=config_hash,
    )


def cooperative_slice(dataset: list[Sample]) -> list[Sample]:
    """Publisher-high / subscriber-low scenarios only."""
    return [s for s in dataset if s.scenario.battery_config is BatteryConfig.pubHighSubLow]


def train_head(train_set: list[Sample], cfg: TrainConfig,
               masked: bool = False, test_set: list[Sample] | None = None,
               ref_cfg: TrainConfig | None = None):
    """Train a head per config; with masked=True the policy input hides the
    subscriber battery (labels still come from both devices). For DPO the
    reference checkpoint is trained first with ref_cfg (default: same
    config with KL loss)."""
    from .policy import HeadPolicy

    data = mask_peer(train_set) if masked else train_set
    model = init_head(cfg.layers, cfg.hidden, seed=cfg.seed)
    if cfg.loss == "dpo":
        if ref_cfg is None:
            ref_cfg = TrainConfig(**{**cfg.__dict__, "loss": "kl"})
        ref_model, _ = train(data, model, ref_cfg, test_set=test_set)
        trained, report = train(data, ref_model, cfg, ref_model=ref_model, test_set=test_set)
    else:
        trained, report = train(data, model, cfg, test_set=test_set)
    policy = HeadPolicy(trained, name=f"head-{cfg.loss}" + ("-no-peer" if masked else ""),
                        mask_peer=masked)
    return policy, trained, report


def ablate_peer_info(train_set: list[Sample], test_set: list[Sample],
                     cfg: TrainConfig) -> dict:
    """Same seed/config, with vs without subscriber battery in the input."""
    with_peer, _, _ = train_head(train_set, cfg, masked=False)
    without_peer, _, _ = train_head(train_set, cfg, masked=True)
    coop = cooperative_slice(test_set)
    reports = {
        "with_peer": {
            "aggregate": evaluate(with_peer, test_set),
            "cooperative": evaluate(with_peer, coop),
        },
        "without_peer": {
            "aggregate": evaluate(without_peer, test_set),
            "cooperative": evaluate(without_peer, coop),
        },
    }
    reports["delta"] = {
        slice_name: {
            "objective": reports["with_peer"][slice_name].objective_score
            - reports["without_peer"][slice_name].objective_score,
            "raw_energy_pct_h": reports["with_peer"][slice_name].raw_energy_pct_h
            - reports["without_peer"][slice_name].raw_energy_pct_h,
        }
        for slice_name in ("aggregate", "cooperative")
    }
    return reports


def ablate_reward(train_set: list[Sample], test_set: list[Sample],
                  cfg: TrainConfig, reward_cfg: RewardConfig) -> dict:
    """Context-aware vs naive reward labels; both arms scored under the
    context-aware objective on the identical test slice."""
    naive_cfg = RewardConfig(w_l=reward_cfg.w_l, w_p=reward_cfg.w_p,
                             mode=RewardMode.naive, soft_temp=reward_cfg.soft_temp)
    naive_train = relabel(train_set, naive_cfg)
    ctx_policy, _, _ = train_head(train_set, cfg)
    naive_policy, _, _ = train_head(naive_train, cfg)
    naive_policy.name = "head-" + cfg.loss + "-naive"
    return {
        "context_aware": evaluate(ctx_policy, test_set),
        "naive": evaluate(naive_policy, test_set),
    }


def single_objective_eval(dataset: list[Sample], which: str,
                          policies: list[Policy], cfg: TrainConfig,
                          dataset_cfg: DatasetConfig,
                          base_reward_cfg: RewardConfig) -> dict:
    """Relabel under latency-only (w_P=0) or energy-only (w_L=0) weights,
    retrain the head, and score every policy under the same objective."""
    if which == "latency":
        rcfg = RewardConfig(w_l=base_reward_cfg.w_l, w_p=0.0,
                            mode=base_reward_cfg.mode, soft_temp=base_reward_cfg.soft_temp)
    elif which == "energy":
        rcfg = RewardConfig(w_l=0.0, w_p=base_reward_cfg.w_p,
                            mode=base_reward_cfg.mode, soft_temp=base_reward_cfg.soft_temp)
    else:
        raise ValueError("which must be 'latency' or 'energy'")
    data = relabel(dataset, rcfg)
    rng = np.random.default_rng([dataset_cfg.seed, 9973])
    tr, te = split(data, dataset_cfg.split_fraction, rng)
    head, _, _ = train_head(tr, cfg)
    reports = {head.name: evaluate(head, te)}
    for p in policies:
        reports[p.name] = evaluate(p, te)
    return reports


def replay_snapshot(dataset: list[Sample], policies: list[Policy],
                    scenario: Scenario | None = None, max_steps: int = 10) -> str:
    """Human-readable transcript of context, each policy's decision, and the
    per-decision objective."""
    rows = [s for s in dataset if scenario is None or s.scenario == scenario]
    lines = []
    for s in rows[:max_steps]:
        ctx = s.context
        sub = "--" if ctx.subscriber_battery is None else f"{ctx.subscriber_battery:.0f}%"
        lines.append(
            f"step {ctx.step_index:>4}  {ctx.time.name:<9} pub {ctx.publisher_battery:.0f}%  "
            f"sub {sub}  app {ctx.app_history[-1].name}"
        )
        for p in policies:
            a = p.decide(ctx, s.rewards)
            lines.append(f"    {p.name:<16} -> {a}  objective {s.rewards.objective[a.index]:+.3f}")
    return "\n".join(lines) + ("\n" if lines else "")


def flat_table(reports: dict[str, dict[str, EvalReport]]) -> str:
    """One row per policy x slice x metric, both averaging conventions."""
    header = "policy\tslice\tmetric\tper_sample_mean\tper_scenario_mean"
    rows = [header]
    for policy_name in reports:
        for slice_name, rep in reports[policy_name].items():
            rows.append(f"{policy_name}\t{slice_name}\tobjective\t{rep.objective_score!r}\t{rep.scenario_mean_objective!r}")
            rows.append(f"{policy_name}\t{slice_name}\tlatency\t{rep.latency_score!r}\t{rep.scenario_mean_latency!r}")
            rows.append(f"{policy_name}\t{slice_name}\tenergy\t{rep.energy_score!r}\t{rep.scenario_mean_energy!r}")
    return "\n".join(rows) + "\n"
