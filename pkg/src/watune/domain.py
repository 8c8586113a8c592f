"""Canonical types shared by the whole pipeline.

Enum member names double as the wire format: they serialize as their
lower-camel names ("interactiveVoice", "photoTransfer") in every file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional


class PerformanceMode(IntEnum):
    realtime = 0
    bulk = 1


class AccessCategory(IntEnum):
    bestEffort = 0
    background = 1
    interactiveVideo = 2
    interactiveVoice = 3


class AppType(IntEnum):
    textMessage = 0
    voiceChat = 1
    videoCall = 2
    sensorSync = 3
    photoTransfer = 4
    videoUpload = 5
    firmwareUpdate = 6
    mapSync = 7


class TimeOfDay(IntEnum):
    morning = 0
    afternoon = 1
    evening = 2
    night = 3


class BatteryClass(IntEnum):
    high = 0
    medium = 1
    low = 2


class BatteryConfig(IntEnum):
    bothHigh = 0
    bothMedium = 1
    bothLow = 2
    pubHighSubLow = 3


NUM_ACTIONS = 8


@dataclass(frozen=True)
class Action:
    mode: PerformanceMode
    category: AccessCategory

    @property
    def index(self) -> int:
        # mode-major, category-minor canonical ordering
        return int(self.mode) * 4 + int(self.category)

    def __str__(self) -> str:
        return f"({self.mode.name}, {self.category.name})"


def action_from_index(index: int) -> Action:
    if not 0 <= index <= 7:
        raise ValueError(f"action index out of range [0,7]: {index}")
    return Action(PerformanceMode(index // 4), AccessCategory(index % 4))


ALL_ACTIONS: tuple[Action, ...] = tuple(action_from_index(i) for i in range(NUM_ACTIONS))


def all_actions() -> tuple[Action, ...]:
    return ALL_ACTIONS


@dataclass(frozen=True)
class Scenario:
    time: TimeOfDay
    battery_config: BatteryConfig

    def key(self) -> str:
        return f"{self.time.name}/{self.battery_config.name}"


ALL_SCENARIOS: tuple[Scenario, ...] = tuple(
    Scenario(t, b) for t in TimeOfDay for b in BatteryConfig
)


@dataclass(frozen=True)
class Context:
    """One decision step's observable state.

    subscriber_battery is None when peer info is masked. Device labels are
    opaque metadata; they never enter features or rewards.
    """

    time: TimeOfDay
    publisher_battery: float
    subscriber_battery: Optional[float]
    app_history: tuple[AppType, ...]
    step_index: int = 0
    pub_device: Optional[str] = None
    sub_device: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.publisher_battery <= 100.0:
            raise ValueError(f"publisher battery out of [0,100]: {self.publisher_battery}")
        if self.subscriber_battery is not None and not 0.0 <= self.subscriber_battery <= 100.0:
            raise ValueError(f"subscriber battery out of [0,100]: {self.subscriber_battery}")
        if len(self.app_history) < 1:
            raise ValueError("app_history must be non-empty")
        if self.step_index < 0:
            raise ValueError("step_index must be non-negative")

    def without_peer(self) -> "Context":
        if self.subscriber_battery is None:
            return self
        return Context(
            time=self.time,
            publisher_battery=self.publisher_battery,
            subscriber_battery=None,
            app_history=self.app_history,
            step_index=self.step_index,
            pub_device=self.pub_device,
            sub_device=self.sub_device,
        )
