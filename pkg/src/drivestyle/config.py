"""Declarative run configuration: defaults < config file < command-line flags."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import InvalidArgument
from .features import CONFIGS
from .simgen import CLASS_NAMES, DEFAULT_PROFILES, ProfileParams

TASKS = ("three_class", "binary")
MODELS = ("rf", "gbt", "svm")


def _default_hyperparameters() -> dict:
    return {
        "rf": {"n_trees": 100, "max_depth": 12, "min_samples_leaf": 1, "features_per_split": None},
        "gbt": {"n_rounds": 100, "max_depth": 4, "learning_rate": 0.1, "min_samples_leaf": 1},
        "svm": {"lam": 1e-4, "epochs": 50},
    }


@dataclass
class RunConfig:
    seed: int = 0
    profiles: dict = field(default_factory=dict)
    traces_per_class: int = 30
    trace_duration_s: float = 600.0
    warmup_s: float = 2.0
    window_len: int = 600
    zero_tolerance: float = 0.9
    stop_speed_eps: float = 0.1
    feature_config: str = "config3"
    task: str = "three_class"
    model: str = "rf"
    hyperparameters: dict = field(default_factory=_default_hyperparameters)
    split_ratio: float = 0.8
    recommend_k: int = 4
    max_reports: int = 20
    save_traces: bool = False
    out: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.feature_config not in CONFIGS:
            raise InvalidArgument(f"unknown feature_config {self.feature_config!r}")
        if self.task not in TASKS:
            raise InvalidArgument(f"task must be one of {TASKS}")
        if self.model not in MODELS:
            raise InvalidArgument(f"model must be one of {MODELS}")
        if self.traces_per_class < 1:
            raise InvalidArgument("traces_per_class must be positive")
        if self.trace_duration_s < 60:
            raise InvalidArgument("trace_duration_s must be at least 60")
        if self.window_len <= 0:
            raise InvalidArgument("window_len must be positive")
        if not 0 <= self.zero_tolerance <= 1:
            raise InvalidArgument("zero_tolerance must lie in [0, 1]")
        if not 0 < self.split_ratio < 1:
            raise InvalidArgument("split_ratio must lie in (0, 1)")
        unknown = set(self.profiles) - set(CLASS_NAMES)
        if unknown:
            raise InvalidArgument(f"unknown profile(s) {sorted(unknown)}")
        for name in MODELS:
            self.hyperparameters.setdefault(name, _default_hyperparameters()[name])
        self.profile_params()

    def profile_params(self) -> dict[int, ProfileParams]:
        out = {}
        for label, base in DEFAULT_PROFILES.items():
            overrides = dict(self.profiles.get(CLASS_NAMES[label], {}))
            overrides.pop("label", None)
            try:
                out[label] = ProfileParams(**{**asdict(base), **overrides})
            except TypeError as exc:
                raise InvalidArgument(f"bad profile override for {CLASS_NAMES[label]}: {exc}") from None
        return out

    def model_params(self, model: str | None = None) -> dict:
        return dict(self.hyperparameters[model or self.model])

    def replace(self, **changes) -> "RunConfig":
        data = copy.deepcopy(self.to_dict())
        data.update(changes)
        return RunConfig(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgument(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidArgument("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidArgument(f"unknown config key(s) {sorted(unknown)}")
    if "hyperparameters" in data:
        merged = _default_hyperparameters()
        for name, params in data["hyperparameters"].items():
            merged.setdefault(name, {}).update(params)
        data["hyperparameters"] = merged
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return RunConfig(**data)
