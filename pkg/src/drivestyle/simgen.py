"""Synthetic driving traces from parameterized behavior profiles.

A longitudinal car-following simulator (IDM-style) drives one ego vehicle over
a looping road made of constant-limit segments while lead vehicles come and
go. Every 0.05 s it logs an IMU-like sample, the obstacle sensor reading and
the posted speed limit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidArgument

DT = 0.05
SENSOR_RANGE = 10.5
SPEED_LIMITS = (8.33, 13.89, 25.0)
MAX_CURVATURE = 0.01
MAX_BRAKING = 8.0
SEGMENT_LENGTH = (150.0, 600.0)

CAUTIOUS, NORMAL, AGGRESSIVE = 0, 1, 2
CLASS_NAMES = ("cautious", "normal", "aggressive")

CHANNELS = (
    "t",
    "accel_x",
    "accel_y",
    "accel_z",
    "gyro_x",
    "gyro_y",
    "gyro_z",
    "speed",
    "obstacle_distance",
    "speed_limit",
)
CSV_COLUMNS = CHANNELS + ("label",)

# Sensor noise, identical for every profile.
ACCEL_NOISE = 0.3
VERTICAL_NOISE = 0.4
GYRO_NOISE = 0.02
# Correlation time of the driver's speed-keeping wander.
JITTER_TAU = 4.0
LEAD_SPAWN_MIN_GAP = 30.0
# Drivers slow for a lower limit ahead at this fraction of their comfortable
# deceleration, reaching the new speed this far before the sign.
ANTICIPATION_DECEL_FRACTION = 0.5
ANTICIPATION_MARGIN = 30.0
# Lead-vehicle traffic: mean free time between leads, lead duration bounds.
LEAD_MEAN_INTERVAL = 60.0
LEAD_DURATION = (10.0, 40.0)
STOPPED_LEAD_PROB = 0.08


@dataclass(frozen=True)
class ProfileParams:
    label: int
    desired_speed_factor: float
    max_accel: float
    comfort_decel: float
    min_gap: float
    time_headway: float
    steer_aggressiveness: float = 0.0
    noise_scale: float = 0.0

    def __post_init__(self):
        if self.label not in (CAUTIOUS, NORMAL, AGGRESSIVE):
            raise InvalidArgument(f"unknown profile label {self.label}")
        for name in ("desired_speed_factor", "max_accel", "comfort_decel", "min_gap", "time_headway"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.steer_aggressiveness < 0 or self.noise_scale < 0:
            raise InvalidArgument("noise parameters must be non-negative")


DEFAULT_PROFILES = {
    CAUTIOUS: ProfileParams(CAUTIOUS, 0.9, 1.5, 2.0, 4.0, 2.0, steer_aggressiveness=0.05, noise_scale=0.05),
    NORMAL: ProfileParams(NORMAL, 1.0, 2.5, 3.0, 2.5, 1.4, steer_aggressiveness=0.10, noise_scale=0.10),
    AGGRESSIVE: ProfileParams(AGGRESSIVE, 1.3, 4.0, 6.0, 1.0, 0.7, steer_aggressiveness=0.20, noise_scale=0.20),
}


@dataclass(frozen=True)
class Segment:
    length: float
    speed_limit: float
    curvature: float


@dataclass(frozen=True)
class LeadEvent:
    start_time: float
    duration: float
    lead_speed: float

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


@dataclass(frozen=True)
class RoadLayout:
    segments: tuple[Segment, ...]
    lead_vehicle_events: tuple[LeadEvent, ...] = ()

    def __post_init__(self):
        ends = np.cumsum([s.length for s in self.segments])
        object.__setattr__(self, "_ends", ends)
        starts = np.array([e.start_time for e in self.lead_vehicle_events])
        object.__setattr__(self, "_event_starts", starts)

    @property
    def total_length(self) -> float:
        return float(self._ends[-1])

    def segment_at(self, position: float) -> Segment:
        """Segment under ``position``; the road loops after its last segment."""
        pos = position % self.total_length
        idx = int(np.searchsorted(self._ends, pos, side="right"))
        return self.segments[min(idx, len(self.segments) - 1)]

    def next_segment(self, position: float) -> tuple[Segment, float]:
        """The following segment and the distance left until it starts."""
        pos = position % self.total_length
        idx = min(int(np.searchsorted(self._ends, pos, side="right")), len(self.segments) - 1)
        nxt = self.segments[(idx + 1) % len(self.segments)]
        return nxt, max(float(self._ends[idx]) - pos, 0.0)

    def lead_event_at(self, t: float) -> LeadEvent | None:
        idx = int(np.searchsorted(self._event_starts, t, side="right")) - 1
        if idx < 0:
            return None
        event = self.lead_vehicle_events[idx]
        return event if t < event.end_time else None


def build_road(seed: int, total_length: float) -> RoadLayout:
    if not total_length > 0:
        raise InvalidArgument("total_length must be positive")
    rng = np.random.default_rng([seed, 0x70AD])
    segments: list[Segment] = []
    covered = 0.0
    prev_limit = None
    while covered < total_length:
        length = float(rng.uniform(*SEGMENT_LENGTH))
        limit = float(rng.choice([v for v in SPEED_LIMITS if v != prev_limit]))
        if rng.random() < 0.6:
            curvature = 0.0
        else:
            curvature = float(rng.uniform(-MAX_CURVATURE, MAX_CURVATURE))
        length = min(length, total_length - covered)
        segments.append(Segment(length, limit, curvature))
        covered += length
        prev_limit = limit
    if len(segments) == 1:
        # keep at least two posted limits even on very short roads
        only = segments[0]
        other = next(v for v in SPEED_LIMITS if v != only.speed_limit)
        half = only.length / 2.0
        segments = [
            Segment(half, only.speed_limit, only.curvature),
            Segment(only.length - half, other, only.curvature),
        ]

    # Lead vehicles are scheduled in time; the horizon assumes a slow 5 m/s average.
    horizon = total_length / 5.0
    events: list[LeadEvent] = []
    t = float(rng.exponential(LEAD_MEAN_INTERVAL))
    while t < horizon:
        if rng.random() < STOPPED_LEAD_PROB:
            duration = float(rng.uniform(20.0, 60.0))
            speed = 0.0
        else:
            duration = float(rng.uniform(*LEAD_DURATION))
            speed = float(rng.uniform(3.0, 18.0))
        events.append(LeadEvent(t, duration, speed))
        t += duration + float(rng.exponential(LEAD_MEAN_INTERVAL))
    return RoadLayout(tuple(segments), tuple(events))


@dataclass(frozen=True)
class VehicleState:
    t: float = 0.0
    position: float = 0.0
    speed: float = 0.0
    accel: float = 0.0
    yaw_rate: float = 0.0
    lead_gap: float | None = None
    lead_speed: float = 0.0
    obstacle_distance: float = SENSOR_RANGE
    speed_jitter: float = 0.0

    @property
    def obstacle_detected(self) -> bool:
        return self.lead_gap is not None and self.lead_gap <= SENSOR_RANGE


def idm_accel(
    speed: float,
    desired_speed: float,
    params: ProfileParams,
    gap: float | None = None,
    lead_speed: float = 0.0,
) -> float:
    """IDM acceleration with the free-road term floored at the comfortable braking."""
    if desired_speed > 0:
        free = params.max_accel * (1.0 - (speed / desired_speed) ** 4)
        free = max(free, -params.comfort_decel)
    else:
        free = -params.comfort_decel
    accel = free
    if gap is not None:
        closing = speed - lead_speed
        s_star = params.min_gap + max(
            0.0,
            speed * params.time_headway
            + speed * closing / (2.0 * math.sqrt(params.max_accel * params.comfort_decel)),
        )
        accel -= params.max_accel * (s_star / max(gap, 1e-3)) ** 2
    return min(max(accel, -MAX_BRAKING), params.max_accel)


def step_dynamics(
    state: VehicleState,
    params: ProfileParams,
    road: RoadLayout,
    dt: float,
    rng: np.random.Generator,
) -> VehicleState:
    """Advance the ego vehicle by one time step."""
    segment = road.segment_at(state.position)
    # drivers drift below their target speed, never above it
    wander = 1.0 - params.noise_scale * abs(state.speed_jitter)
    desired = params.desired_speed_factor * segment.speed_limit * wander
    upcoming, distance = road.next_segment(state.position)
    if upcoming.speed_limit < segment.speed_limit:
        target = params.desired_speed_factor * upcoming.speed_limit * wander
        room = max(distance - ANTICIPATION_MARGIN, 0.0)
        brake = ANTICIPATION_DECEL_FRACTION * params.comfort_decel
        desired = min(desired, math.sqrt(target * target + 2.0 * brake * room))
    accel = idm_accel(state.speed, desired, params, state.lead_gap, state.lead_speed)

    speed = state.speed + accel * dt
    if speed < 0.0:
        speed = 0.0
        accel = -state.speed / dt
    position = state.position + 0.5 * (state.speed + speed) * dt
    t = state.t + dt

    lead_gap, lead_speed = state.lead_gap, state.lead_speed
    event = road.lead_event_at(t)
    if event is None:
        lead_gap = None
    elif lead_gap is None:
        lead_speed = event.lead_speed
        lead_gap = max(LEAD_SPAWN_MIN_GAP, 3.0 * speed)
    else:
        lead_gap = lead_gap + (lead_speed - 0.5 * (state.speed + speed)) * dt
        if lead_gap < 0.5:
            # contact: match the lead instead of passing through it
            lead_gap = 0.5
            speed = min(speed, lead_speed)

    steer_noise = params.steer_aggressiveness * float(rng.standard_normal())
    yaw_rate = segment.curvature * speed * (1.0 + steer_noise)

    jitter = state.speed_jitter
    jitter += -jitter * dt / JITTER_TAU + math.sqrt(2.0 * dt / JITTER_TAU) * float(rng.standard_normal())

    obstacle = SENSOR_RANGE if lead_gap is None else min(lead_gap, SENSOR_RANGE)
    return VehicleState(
        t=t,
        position=position,
        speed=speed,
        accel=accel,
        yaw_rate=yaw_rate,
        lead_gap=lead_gap,
        lead_speed=lead_speed,
        obstacle_distance=obstacle,
        speed_jitter=jitter,
    )


@dataclass(frozen=True)
class SampleRecord:
    t: float
    accel_x: float
    accel_y: float
    accel_z: float
    gyro_x: float
    gyro_y: float
    gyro_z: float
    speed: float
    obstacle_distance: float
    speed_limit: float
    label: int

    @property
    def obstacle_missing(self) -> bool:
        return math.isnan(self.obstacle_distance)


@dataclass
class Trace:
    """Column-oriented sequence of SampleRecords from one source.

    Missing obstacle readings are stored as NaN.
    """

    columns: dict[str, np.ndarray]
    label: int
    source_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(self.columns[c]) for c in CHANNELS}
        if len(lengths) != 1:
            raise InvalidArgument("trace columns differ in length")

    def __len__(self) -> int:
        return len(self.columns["t"])

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return Trace({c: v[idx] for c, v in self.columns.items()}, self.label, self.source_id)
        return SampleRecord(*(float(self.columns[c][idx]) for c in CHANNELS), label=self.label)

    def __iter__(self) -> Iterator[SampleRecord]:
        for i in range(len(self)):
            yield self[i]

    def __getattr__(self, name):
        columns = self.__dict__.get("columns")
        if columns is not None and name in columns:
            return columns[name]
        raise AttributeError(name)

    @classmethod
    def from_records(cls, records: Sequence[SampleRecord], source_id: str = "") -> "Trace":
        if not records:
            raise InvalidArgument("no records")
        labels = {r.label for r in records}
        if len(labels) != 1:
            raise InvalidArgument("records carry more than one label")
        columns = {c: np.array([getattr(r, c) for r in records], dtype=float) for c in CHANNELS}
        return cls(columns, labels.pop(), source_id)

    def records(self) -> list[SampleRecord]:
        return list(self)


def generate_trace(params: ProfileParams, duration: float, seed: int, source_id: str = "") -> Trace:
    if duration < 60.0:
        raise InvalidArgument("duration must be at least 60 s")
    n = int(math.floor(duration / DT + 1e-9))
    road = build_road(seed, max(1000.0, 1.3 * max(SPEED_LIMITS) * duration))
    rng = np.random.default_rng([seed, params.label, 0xD21E])

    cols = {c: np.empty(n) for c in CHANNELS}
    state = VehicleState(speed=params.desired_speed_factor * road.segment_at(0.0).speed_limit * 0.5)
    sensor = rng.standard_normal((n, 6))
    for k in range(n):
        limit = road.segment_at(state.position).speed_limit
        cols["t"][k] = k * DT
        cols["speed"][k] = state.speed
        cols["speed_limit"][k] = limit
        cols["obstacle_distance"][k] = state.lead_gap if state.obstacle_detected else np.nan
        cols["accel_x"][k] = state.accel + ACCEL_NOISE * sensor[k, 0]
        cols["accel_y"][k] = state.speed * state.yaw_rate + ACCEL_NOISE * sensor[k, 1]
        cols["accel_z"][k] = VERTICAL_NOISE * sensor[k, 2]
        cols["gyro_x"][k] = GYRO_NOISE * sensor[k, 3]
        cols["gyro_y"][k] = GYRO_NOISE * sensor[k, 4]
        cols["gyro_z"][k] = state.yaw_rate + GYRO_NOISE * sensor[k, 5]
        state = step_dynamics(state, params, road, DT, rng)
    meta = {"seed": seed, "duration": duration, "profile": CLASS_NAMES[params.label]}
    return Trace(cols, params.label, source_id, meta)


def _fmt(value: float) -> str:
    if math.isnan(value):
        return ""
    return repr(float(value))


def export_trace(records: Trace | Sequence[SampleRecord], path: str | Path) -> Path:
    """Write a trace as CSV; missing obstacle readings become empty fields."""
    trace = records if isinstance(records, Trace) else None
    if trace is None:
        if not records:
            raise InvalidArgument("cannot export an empty record list")
        trace = Trace.from_records(records)
    if len(trace) == 0:
        raise InvalidArgument("cannot export an empty record list")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        cols = [trace.columns[c] for c in CHANNELS]
        for i in range(len(trace)):
            writer.writerow([_fmt(col[i]) for col in cols] + [trace.label])
    return path
