"""Synthetic dataset pipeline: scenario grid, app-usage sampling, session
simulation sweeping all 8 actions per step, reward annotation, stratified
split, peer masking, and the OOD variant."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    ALL_SCENARIOS,
    AppType,
    BatteryClass,
    BatteryConfig,
    Context,
    Scenario,
    TimeOfDay,
)
from .measurement import LinkModelConfig, MeasurementVector, measure
from .reward import RewardConfig, RewardVector, objective

AppUsageProfile = dict  # TimeOfDay -> {AppType: probability}

IN_DISTRIBUTION_PROFILE: AppUsageProfile = {
    TimeOfDay.morning: {
        AppType.textMessage: 0.25,
        AppType.voiceChat: 0.20,
        AppType.videoCall: 0.25,
        AppType.mapSync: 0.20,
        AppType.photoTransfer: 0.10,
    },
    TimeOfDay.afternoon: {
        AppType.textMessage: 0.20,
        AppType.voiceChat: 0.20,
        AppType.videoCall: 0.25,
        AppType.sensorSync: 0.20,
        AppType.photoTransfer: 0.15,
    },
    TimeOfDay.evening: {
        AppType.textMessage: 0.10,
        AppType.voiceChat: 0.20,
        AppType.videoUpload: 0.30,
        AppType.photoTransfer: 0.20,
        AppType.videoCall: 0.20,
    },
    TimeOfDay.night: {
        AppType.firmwareUpdate: 0.40,
        AppType.sensorSync: 0.30,
        AppType.textMessage: 0.10,
        AppType.photoTransfer: 0.10,
        AppType.mapSync: 0.10,
    },
}

OOD_PROFILE: AppUsageProfile = {
    TimeOfDay.morning: {
        AppType.videoCall: 0.30,
        AppType.textMessage: 0.25,
        AppType.voiceChat: 0.20,
        AppType.photoTransfer: 0.15,
        AppType.videoUpload: 0.10,
    },
    TimeOfDay.afternoon: {
        AppType.videoCall: 0.25,
        AppType.textMessage: 0.25,
        AppType.voiceChat: 0.20,
        AppType.photoTransfer: 0.20,
        AppType.videoUpload: 0.10,
    },
    TimeOfDay.evening: {
        AppType.videoUpload: 0.35,
        AppType.videoCall: 0.25,
        AppType.photoTransfer: 0.20,
        AppType.voiceChat: 0.15,
        AppType.textMessage: 0.05,
    },
    TimeOfDay.night: {
        AppType.videoUpload: 0.30,
        AppType.videoCall: 0.25,
        AppType.textMessage: 0.20,
        AppType.voiceChat: 0.15,
        AppType.photoTransfer: 0.10,
    },
}

DEFAULT_BATTERY_RANGES: dict[BatteryClass, tuple[float, float]] = {
    BatteryClass.high: (70.0, 100.0),
    BatteryClass.medium: (30.0, 70.0),
    BatteryClass.low: (5.0, 30.0),
}

BATTERY_FLOOR = 5.0

_CONFIG_CLASSES = {
    BatteryConfig.bothHigh: (BatteryClass.high, BatteryClass.high),
    BatteryConfig.bothMedium: (BatteryClass.medium, BatteryClass.medium),
    BatteryConfig.bothLow: (BatteryClass.low, BatteryClass.low),
    BatteryConfig.pubHighSubLow: (BatteryClass.high, BatteryClass.low),
}


def validate_profile(profile: AppUsageProfile) -> None:
    for t in TimeOfDay:
        dist = profile.get(t)
        if not dist:
            raise ValueError(f"profile missing time-of-day {t.name}")
        total = sum(dist.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"profile for {t.name} sums to {total}, not 1")
        if any(p < 0 for p in dist.values()):
            raise ValueError(f"negative probability in profile for {t.name}")


@dataclass
class DatasetConfig:
    logs_per_session: int = 2000
    sample_interval_s: float = 5.0
    window: int = 10
    split_fraction: float = 0.8
    seed: int = 1
    battery_class_ranges: dict = field(default_factory=lambda: dict(DEFAULT_BATTERY_RANGES))

    def __post_init__(self):
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must be in (0,1)")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.logs_per_session < self.window:
            raise ValueError("logs_per_session must be >= window")


@dataclass(frozen=True)
class Sample:
    context: Context
    measurements: MeasurementVector
    rewards: RewardVector
    scenario: Scenario


def sample_app(profile: AppUsageProfile, time: TimeOfDay, rng: np.random.Generator) -> AppType:
    dist = profile[time]
    apps = list(dist.keys())
    probs = np.array([dist[a] for a in apps])
    return apps[rng.choice(len(apps), p=probs / probs.sum())]


def battery_classes(bc: BatteryConfig) -> tuple[BatteryClass, BatteryClass]:
    return _CONFIG_CLASSES[bc]


def generate_session(
    scenario: Scenario,
    profile: AppUsageProfile,
    link: LinkModelConfig,
    cfg: DatasetConfig,
    reward_cfg: RewardConfig,
    rng: np.random.Generator,
) -> list[Sample]:
    """Simulate one 5 s-interval session, sweeping all 8 actions per step."""
    pub_class, sub_class = battery_classes(scenario.battery_config)
    pub_lo, pub_hi = cfg.battery_class_ranges[pub_class]
    sub_lo, sub_hi = cfg.battery_class_ranges[sub_class]
    pub_batt = rng.uniform(pub_lo, pub_hi)
    sub_batt = rng.uniform(sub_lo, sub_hi)

    dist = profile[scenario.time]
    apps = list(dist.keys())
    probs = np.array([dist[a] for a in apps])
    app_stream = [apps[i] for i in rng.choice(len(apps), size=cfg.logs_per_session, p=probs / probs.sum())]

    drain_scale = cfg.sample_interval_s / 3600.0
    history: list[AppType] = []
    samples: list[Sample] = []
    for step, app in enumerate(app_stream):
        history.append(app)
        if len(history) > cfg.window:
            history.pop(0)
        padded = tuple([history[0]] * (cfg.window - len(history)) + history)
        ctx = Context(
            time=scenario.time,
            publisher_battery=pub_batt,
            subscriber_battery=sub_batt,
            app_history=padded,
            step_index=step,
            pub_device="iPadPro-pub",
            sub_device="iPadPro-sub",
        )
        mv = measure(link, ctx, rng)
        rv = objective(ctx, mv, reward_cfg)
        samples.append(Sample(context=ctx, measurements=mv, rewards=rv, scenario=scenario))
        # Small intra-session drain: both devices pay the oracle-best
        # action's energy for one sampling interval, floored at 5%.
        best = int(np.argmax(rv.objective))
        drain = mv.energy_pct_h[best] * drain_scale
        pub_batt = max(BATTERY_FLOOR, pub_batt - drain)
        sub_batt = max(BATTERY_FLOOR, sub_batt - drain)
    return samples


def generate_dataset(
    profile: AppUsageProfile,
    link: LinkModelConfig,
    cfg: DatasetConfig,
    reward_cfg: RewardConfig,
    stream: int = 0,
) -> list[Sample]:
    """Full 16-scenario grid in canonical order (scenario-major, step-minor).

    `stream` separates independent datasets under the same seed (e.g. the
    OOD evaluation set).
    """
    validate_profile(profile)
    link.validate()
    out: list[Sample] = []
    for idx, scenario in enumerate(ALL_SCENARIOS):
        rng = np.random.default_rng([cfg.seed, stream, idx])
        out.extend(generate_session(scenario, profile, link, cfg, reward_cfg, rng))
    return out


def split(dataset: list[Sample], fraction: float, rng: np.random.Generator) -> tuple[list[Sample], list[Sample]]:
    """Stratified-by-scenario split; train and test are disjoint, union is the input."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0,1)")
    by_scenario: dict[Scenario, list[int]] = {}
    for i, s in enumerate(dataset):
        by_scenario.setdefault(s.scenario, []).append(i)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for scen in sorted(by_scenario, key=lambda s: (int(s.time), int(s.battery_config))):
        idxs = by_scenario[scen]
        perm = rng.permutation(len(idxs))
        n_train = int(len(idxs) * fraction)
        train_idx.extend(idxs[p] for p in perm[:n_train])
        test_idx.extend(idxs[p] for p in perm[n_train:])
    train_idx.sort()
    test_idx.sort()
    return [dataset[i] for i in train_idx], [dataset[i] for i in test_idx]


def mask_peer(dataset: list[Sample]) -> list[Sample]:
    """Hide subscriber battery from every context; rewards stay untouched."""
    return [
        Sample(
            context=s.context.without_peer(),
            measurements=s.measurements,
            rewards=s.rewards,
            scenario=s.scenario,
        )
        for s in dataset
    ]


def relabel(dataset: list[Sample], reward_cfg: RewardConfig) -> list[Sample]:
    """Recompute reward annotations from raw measurements under a new config.

    Reward computation always sees the unmasked context stored at
    generation time (masking affects policy input only), so relabeling a
    masked dataset is not supported.
    """
    out = []
    for s in dataset:
        out.append(
            Sample(
                context=s.context,
                measurements=s.measurements,
                rewards=objective(s.context, s.measurements, reward_cfg),
                scenario=s.scenario,
            )
        )
    return out


def sample_record(s: Sample) -> dict:
    ctx, mv = s.context, s.measurements
    return {
        "step": ctx.step_index,
        "time": ctx.time.name,
        "app": ctx.app_history[-1].name,
        "app_history": [a.name for a in ctx.app_history],
        "pub_battery": ctx.publisher_battery,
        "sub_battery": ctx.subscriber_battery,
        "pub_device": ctx.pub_device,
        "sub_device": ctx.sub_device,
        "latency_ms": [float(v) for v in mv.latency_ms],
        "energy_pct_h": [float(v) for v in mv.energy_pct_h],
        "rewards": [float(v) for v in s.rewards.objective],
        "lat_scores": [float(v) for v in s.rewards.latency_score],
        "eng_scores": [float(v) for v in s.rewards.energy_score],
        "scenario": {"time": s.scenario.time.name, "battery_config": s.scenario.battery_config.name},
    }


def save_dataset(path, dataset: list[Sample]) -> None:
    with open(path, "w") as fh:
        for s in dataset:
            fh.write(json.dumps(sample_record(s)) + "\n")


def load_dataset(path) -> list[Sample]:
    out: list[Sample] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                scen = Scenario(
                    TimeOfDay[rec["scenario"]["time"]],
                    BatteryConfig[rec["scenario"]["battery_config"]],
                )
                ctx = Context(
                    time=TimeOfDay[rec["time"]],
                    publisher_battery=float(rec["pub_battery"]),
                    subscriber_battery=None if rec["sub_battery"] is None else float(rec["sub_battery"]),
                    app_history=tuple(AppType[a] for a in rec["app_history"]),
                    step_index=int(rec["step"]),
                    pub_device=rec.get("pub_device"),
                    sub_device=rec.get("sub_device"),
                )
                mv = MeasurementVector(
                    latency_ms=np.asarray(rec["latency_ms"], dtype=float),
                    energy_pct_h=np.asarray(rec["energy_pct_h"], dtype=float),
                )
                rv = RewardVector(
                    objective=np.asarray(rec["rewards"], dtype=float),
                    latency_score=np.asarray(rec["lat_scores"], dtype=float),
                    energy_score=np.asarray(rec["eng_scores"], dtype=float),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"line {lineno}: malformed dataset record: {exc}") from None
            out.append(Sample(context=ctx, measurements=mv, rewards=rv, scenario=scen))
    return out


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
