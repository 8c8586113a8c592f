"""Decision policies: oracle, rule-based heuristic, fixed tuples, and the
trained-head wrapper."""

from __future__ import annotations

from collections import Counter
from typing import Mapping, Optional, Sequence

import numpy as np

from .domain import (
    AccessCategory,
    Action,
    AppType,
    Context,
    PerformanceMode,
    action_from_index,
)
from .reward import RewardVector

# Heuristic app -> preferred WA parameter tuple.
PREFERRED_TUPLE: dict[AppType, Action] = {
    AppType.textMessage: Action(PerformanceMode.realtime, AccessCategory.bestEffort),
    AppType.voiceChat: Action(PerformanceMode.realtime, AccessCategory.interactiveVoice),
    AppType.videoCall: Action(PerformanceMode.realtime, AccessCategory.interactiveVideo),
    AppType.sensorSync: Action(PerformanceMode.bulk, AccessCategory.background),
    AppType.photoTransfer: Action(PerformanceMode.bulk, AccessCategory.bestEffort),
    AppType.videoUpload: Action(PerformanceMode.bulk, AccessCategory.bestEffort),
    AppType.firmwareUpdate: Action(PerformanceMode.bulk, AccessCategory.background),
    AppType.mapSync: Action(PerformanceMode.realtime, AccessCategory.bestEffort),
}


def oracle_decide(rewards: RewardVector) -> Action:
    """Reward-maximizing action; ties break to the lowest index."""
    return action_from_index(int(np.argmax(rewards.objective)))


def rule_decide(history: Sequence[AppType], table: Mapping[AppType, Action] | None = None) -> Action:
    """Modal preferred tuple over the app-history window; lowest index wins ties."""
    if len(history) == 0:
        raise ValueError("history must be non-empty")
    table = PREFERRED_TUPLE if table is None else table
    counts = Counter(table[app].index for app in history)
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    return action_from_index(best[0])


def fixed_decide(variant: str) -> Action:
    if variant == "rt_iv":
        return Action(PerformanceMode.realtime, AccessCategory.interactiveVoice)
    if variant == "bulk_bg":
        return Action(PerformanceMode.bulk, AccessCategory.background)
    raise ValueError(f"unknown fixed variant: {variant}")


class Policy:
    """Base interface: decide(context) -> Action.

    The oracle additionally receives the sample's ground-truth reward
    vector; every other policy must ignore it.
    """

    name = "base"

    def decide(self, context: Context, rewards: Optional[RewardVector] = None) -> Action:
        raise NotImplementedError


class OraclePolicy(Policy):
    name = "oracle"

    def decide(self, context: Context, rewards: Optional[RewardVector] = None) -> Action:
        if rewards is None:
            raise ValueError("oracle requires the sample's reward vector")
        return oracle_decide(rewards)


class RulePolicy(Policy):
    name = "rule"

    def __init__(self, table: Mapping[AppType, Action] | None = None):
        self.table = PREFERRED_TUPLE if table is None else table

    def decide(self, context: Context, rewards: Optional[RewardVector] = None) -> Action:
        return rule_decide(context.app_history, self.table)


class FixedPolicy(Policy):
    def __init__(self, variant: str):
        self.variant = variant
        self.action = fixed_decide(variant)
        self.name = "fix-rt-iv" if variant == "rt_iv" else "fix-bulk-bg"

    def decide(self, context: Context, rewards: Optional[RewardVector] = None) -> Action:
        return self.action


class HeadPolicy(Policy):
    """Trained classification head; argmax over a single forward pass."""

    def __init__(self, model, name: str = "head", mask_peer: bool = False):
        self.model = model
        self.name = name
        self.mask_peer = mask_peer

    def decide(self, context: Context, rewards: Optional[RewardVector] = None) -> Action:
        from .train import head_decide

        ctx = context.without_peer() if self.mask_peer else context
        return head_decide(self.model, ctx)


BASELINE_NAMES = ("oracle", "rule", "fix-rt-iv", "fix-bulk-bg")


def make_baseline(name: str) -> Policy:
    if name == "oracle":
        return OraclePolicy()
    if name == "rule":
        return RulePolicy()
    if name == "fix-rt-iv":
        return FixedPolicy("rt_iv")
    if name == "fix-bulk-bg":
        return FixedPolicy("bulk_bg")
    raise ValueError(f"unknown policy {name!r}; valid: {', '.join(BASELINE_NAMES + ('head',))}")
