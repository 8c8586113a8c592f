"""Ground-truth D2D link model: per-action latency and energy.

The calibration table is a config default, not measured truth; every
downstream check that depends on it is directional, never exact-value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import (
    NUM_ACTIONS,
    AccessCategory,
    AppType,
    Context,
    PerformanceMode,
    TimeOfDay,
    action_from_index,
)

ENERGY_NOISE_FLOOR = 0.1

# Action index order: (realtime|bulk) x (bestEffort, background, interactiveVideo, interactiveVoice)
DEFAULT_BASE_LATENCY_MS = (3.5, 5.5, 3.0, 2.5, 7.0, 11.0, 6.0, 5.0)
DEFAULT_BASE_ENERGY_PCT_H = (3.8, 3.1, 4.1, 4.3, 2.6, 1.8, 2.9, 3.1)
DEFAULT_TIME_MULTIPLIER = {
    TimeOfDay.morning: 1.0,
    TimeOfDay.afternoon: 1.3,
    TimeOfDay.evening: 1.9,
    TimeOfDay.night: 3.1,
}


@dataclass(frozen=True)
class MeasurementVector:
    """Measured latency/energy for all 8 actions at one decision step."""

    latency_ms: np.ndarray
    energy_pct_h: np.ndarray

    def __post_init__(self):
        lat = np.asarray(self.latency_ms, dtype=float)
        eng = np.asarray(self.energy_pct_h, dtype=float)
        object.__setattr__(self, "latency_ms", lat)
        object.__setattr__(self, "energy_pct_h", eng)
        if lat.shape != (NUM_ACTIONS,) or eng.shape != (NUM_ACTIONS,):
            raise ValueError("measurement arrays must have shape (8,)")
        if np.any(lat < 0):
            raise ValueError("latency must be non-negative")
        if np.any(eng <= 0):
            raise ValueError("energy must be strictly positive")


@dataclass
class LinkModelConfig:
    base_latency_ms: tuple[float, ...] = DEFAULT_BASE_LATENCY_MS
    base_energy_pct_h: tuple[float, ...] = DEFAULT_BASE_ENERGY_PCT_H
    time_latency_multiplier: dict = field(default_factory=lambda: dict(DEFAULT_TIME_MULTIPLIER))
    latency_noise_sigma: float = 0.6
    energy_noise_sigma: float = 0.15

    def validate(self) -> None:
        lat = np.asarray(self.base_latency_ms, dtype=float)
        eng = np.asarray(self.base_energy_pct_h, dtype=float)
        if lat.shape != (NUM_ACTIONS,) or eng.shape != (NUM_ACTIONS,):
            raise ValueError("base tables must have 8 entries")
        if np.any(lat <= 0) or np.any(eng <= 0):
            raise ValueError("base latencies and energies must be positive")
        if self.latency_noise_sigma < 0 or self.energy_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        for t in TimeOfDay:
            if self.time_latency_multiplier.get(t, 0) <= 0:
                raise ValueError(f"missing/invalid time multiplier for {t.name}")
        for c in AccessCategory:
            rt = lat[int(PerformanceMode.realtime) * 4 + int(c)]
            bk = lat[int(PerformanceMode.bulk) * 4 + int(c)]
            if not rt < bk:
                raise ValueError(f"latency ordering violated for category {c.name}")
        for m in PerformanceMode:
            bg = eng[int(m) * 4 + int(AccessCategory.background)]
            for c in AccessCategory:
                if not bg <= eng[int(m) * 4 + int(c)]:
                    raise ValueError(f"energy ordering violated within mode {m.name}")
        for c in AccessCategory:
            if not eng[int(PerformanceMode.bulk) * 4 + int(c)] <= eng[int(PerformanceMode.realtime) * 4 + int(c)]:
                raise ValueError(f"energy ordering violated for category {c.name}")
        bulk_bg = int(PerformanceMode.bulk) * 4 + int(AccessCategory.background)
        rt_iv = int(PerformanceMode.realtime) * 4 + int(AccessCategory.interactiveVoice)
        if not all(eng[bulk_bg] < eng[i] for i in range(NUM_ACTIONS) if i != bulk_bg):
            raise ValueError("(bulk, background) must have the strictly minimal base energy")
        if not all(lat[rt_iv] < lat[i] for i in range(NUM_ACTIONS) if i != rt_iv):
            raise ValueError("(realtime, interactiveVoice) must have the strictly minimal base latency")


def measure(config: LinkModelConfig, context: Context, rng: np.random.Generator) -> MeasurementVector:
    """Draw one 8-action measurement sweep for a context."""
    base_lat = np.asarray(config.base_latency_ms, dtype=float)
    base_eng = np.asarray(config.base_energy_pct_h, dtype=float)
    mult = config.time_latency_multiplier[context.time]
    if config.latency_noise_sigma > 0:
        lat_noise = np.exp(rng.normal(0.0, config.latency_noise_sigma, NUM_ACTIONS))
    else:
        lat_noise = np.ones(NUM_ACTIONS)
    if config.energy_noise_sigma > 0:
        eng_noise = np.maximum(ENERGY_NOISE_FLOOR, 1.0 + rng.normal(0.0, config.energy_noise_sigma, NUM_ACTIONS))
    else:
        eng_noise = np.ones(NUM_ACTIONS)
    return MeasurementVector(
        latency_ms=base_lat * mult * lat_noise,
        energy_pct_h=base_eng * eng_noise,
    )


LOG_FIELDS = (
    "step", "time", "app", "pub_battery", "sub_battery",
    "pub_device", "sub_device", "latency_ms", "energy_pct_h",
)


def log_record(step: int, context: Context, mv: MeasurementVector) -> dict:
    return {
        "step": step,
        "time": context.time.name,
        "app": context.app_history[-1].name,
        "pub_battery": context.publisher_battery,
        "sub_battery": context.subscriber_battery,
        "pub_device": context.pub_device,
        "sub_device": context.sub_device,
        "latency_ms": [float(v) for v in mv.latency_ms],
        "energy_pct_h": [float(v) for v in mv.energy_pct_h],
    }


def write_log(path, records: list[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _parse_record(obj: dict, lineno: int) -> dict:
    try:
        known = {k: obj[k] for k in LOG_FIELDS}
    except KeyError as exc:
        raise ValueError(f"line {lineno}: missing field {exc.args[0]!r}") from None
    # Extra fields (charging status, signal strength, ...) are dropped.
    return known


def ingest_log(path, window: int = 10) -> list[tuple[Context, MeasurementVector]]:
    """Parse a measurement log, rebuilding the rolling app-history window.

    Records must appear in step order. The first window-1 steps pad the
    history by repeating the earliest observed app.
    """
    out: list[tuple[Context, MeasurementVector]] = []
    history: list[AppType] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: malformed record: {exc}") from None
            rec = _parse_record(obj, lineno)
            try:
                app = AppType[rec["app"]]
                time = TimeOfDay[rec["time"]]
            except KeyError as exc:
                raise ValueError(f"line {lineno}: unknown enum value {exc.args[0]!r}") from None
            history.append(app)
            if len(history) > window:
                history.pop(0)
            padded = [history[0]] * (window - len(history)) + history
            try:
                mv = MeasurementVector(
                    latency_ms=np.asarray(rec["latency_ms"], dtype=float),
                    energy_pct_h=np.asarray(rec["energy_pct_h"], dtype=float),
                )
                ctx = Context(
                    time=time,
                    publisher_battery=float(rec["pub_battery"]),
                    subscriber_battery=None if rec["sub_battery"] is None else float(rec["sub_battery"]),
                    app_history=tuple(padded),
                    step_index=int(rec["step"]),
                    pub_device=rec["pub_device"],
                    sub_device=rec["sub_device"],
                )
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            out.append((ctx, mv))
    return out
