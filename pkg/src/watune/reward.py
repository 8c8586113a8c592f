"""Context-aware reward: tolerance-normalized latency, battery-scaled energy,
the naive ablation variant, and soft-label construction."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .domain import NUM_ACTIONS, AppType, Context
from .measurement import MeasurementVector

# Per-application latency tolerance L_a in ms.
DEFAULT_TOLERANCE_MS: dict[AppType, float] = {
    AppType.textMessage: 200.0,
    AppType.voiceChat: 50.0,
    AppType.videoCall: 100.0,
    AppType.sensorSync: 1000.0,
    AppType.photoTransfer: 2000.0,
    AppType.videoUpload: 5000.0,
    AppType.firmwareUpdate: 10000.0,
    AppType.mapSync: 500.0,
}

# Context-independent normalizers for the naive-reward ablation.
NAIVE_TOLERANCE_MS = 1000.0
NAIVE_BATTERY = 100.0


class RewardMode(str, Enum):
    contextAware = "contextAware"
    naive = "naive"


@dataclass
class RewardConfig:
    w_l: float = 0.1
    w_p: float = 1.0
    mode: RewardMode = RewardMode.contextAware
    soft_temp: float = 0.25

    def __post_init__(self):
        self.mode = RewardMode(self.mode)
        if self.w_l < 0 or self.w_p < 0 or self.w_l + self.w_p <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        if self.soft_temp <= 0:
            raise ValueError("soft_temp must be positive")


@dataclass(frozen=True)
class RewardVector:
    """Per-action scores for one context: overall objective, mean latency
    score over active apps, mean energy score over devices."""

    objective: np.ndarray
    latency_score: np.ndarray
    energy_score: np.ndarray

    def __post_init__(self):
        for name in ("objective", "latency_score", "energy_score"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (NUM_ACTIONS,):
                raise ValueError(f"{name} must have shape (8,)")
        if np.any(self.latency_score < 0) or np.any(self.latency_score > 100):
            raise ValueError("latency_score must lie in [0,100]")
        if np.any(self.energy_score <= 0):
            raise ValueError("energy_score must be positive")


def latency_score(app: AppType, latency_ms: float, tol: Mapping[AppType, float] | None = None) -> float:
    """Score in [0,100]: how well the latency fits the app's tolerance."""
    if latency_ms < 0:
        raise ValueError("latency must be non-negative")
    tol = DEFAULT_TOLERANCE_MS if tol is None else tol
    return max(100.0 - 100.0 * latency_ms / tol[app], 0.0)


def energy_score(battery_pct: float, energy: float) -> float:
    """b_d / E(p): battery headroom per unit energy drain."""
    if energy <= 0:
        raise ValueError("energy must be strictly positive")
    if battery_pct <= 0:
        raise ValueError("battery must be strictly positive")
    return battery_pct / energy


def objective(
    context: Context,
    mv: MeasurementVector,
    cfg: RewardConfig,
    tol: Mapping[AppType, float] | None = None,
) -> RewardVector:
    """Per-action reward R(p) = w_L * mean_A R_lat - w_P * mean_D E/b."""
    tol = DEFAULT_TOLERANCE_MS if tol is None else tol
    lat = mv.latency_ms
    eng = mv.energy_pct_h

    batteries = [context.publisher_battery]
    if context.subscriber_battery is not None:
        batteries.append(context.subscriber_battery)
    for b in batteries:
        if b <= 0:
            raise ValueError("battery must be strictly positive for reward computation")

    if cfg.mode is RewardMode.naive:
        lat_scores = np.maximum(100.0 - 100.0 * lat / NAIVE_TOLERANCE_MS, 0.0)
        energy_penalty = eng / NAIVE_BATTERY
        eng_scores = NAIVE_BATTERY / eng
    else:
        # Mean over the app-history multiset A; repeats weight the mean.
        per_app = np.zeros(NUM_ACTIONS)
        for app in context.app_history:
            per_app += np.maximum(100.0 - 100.0 * lat / tol[app], 0.0)
        lat_scores = per_app / len(context.app_history)
        inv = np.zeros(NUM_ACTIONS)
        sco = np.zeros(NUM_ACTIONS)
        for b in batteries:
            inv += eng / b
            sco += b / eng
        energy_penalty = inv / len(batteries)
        eng_scores = sco / len(batteries)

    return RewardVector(
        objective=cfg.w_l * lat_scores - cfg.w_p * energy_penalty,
        latency_score=lat_scores,
        energy_score=eng_scores,
    )


def soft_labels(objective_values: np.ndarray, temperature: float) -> np.ndarray:
    """Temperature softmax over per-action objectives (max-subtracted)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    r = np.asarray(objective_values, dtype=float)
    z = (r - r.max()) / temperature
    e = np.exp(z)
    return e / e.sum()
