"""Turn attributions toward the aggressive class into driving advice."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InvalidArgument, SchemaError
from .explain import Explanation
from .simgen import AGGRESSIVE, CLASS_NAMES

log = logging.getLogger(__name__)

SIGNS = ("positive_phi", "negative_phi", "any")


@dataclass(frozen=True)
class RecommendationRule:
    feature_name: str
    sign_condition: str
    advice_text: str
    priority: int = 0
    # used instead of advice_text when the feature value exceeds its training median
    advice_above_median: str | None = None

    def matches(self, phi: float) -> bool:
        if self.sign_condition == "positive_phi":
            return phi > 0
        if self.sign_condition == "negative_phi":
            return phi < 0
        return True

    def text_for(self, value: float, median: float | None) -> str:
        if self.advice_above_median is not None and median is not None and value > median:
            return self.advice_above_median
        return self.advice_text


@dataclass
class Rulebook:
    rules: list[RecommendationRule]

    def __post_init__(self):
        seen = set()
        for rule in self.rules:
            if rule.sign_condition not in SIGNS:
                raise SchemaError(f"bad sign condition {rule.sign_condition!r}")
            key = (rule.feature_name, rule.sign_condition)
            if key in seen:
                raise SchemaError(f"duplicate rule for {key}")
            seen.add(key)

    def match(self, feature: str, phi: float) -> RecommendationRule | None:
        hits = [r for r in self.rules if r.feature_name == feature and r.matches(phi)]
        return min(hits, key=lambda r: r.priority) if hits else None


def load_rulebook(path: str | Path | None = None) -> Rulebook:
    """Read a rulebook JSON file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("drivestyle").joinpath("data/rulebook.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        data = json.loads(text)
        rules = [
            RecommendationRule(r["feature"], r["sign"], r["text"], int(r.get("priority", 0)),
                               r.get("text_above_median"))
            for r in data["rules"]
        ]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed rulebook: {exc}") from exc
    return Rulebook(rules)


@dataclass
class RecommendationReport:
    instance_ref: object
    predicted_class: int
    top_features: list[tuple[str, float, float]]
    advice: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "instance_ref": self.instance_ref,
            "predicted_class": self.predicted_class,
            "predicted_label": CLASS_NAMES[self.predicted_class] if self.predicted_class < len(CLASS_NAMES) else None,
            "top_features": [{"feature": f, "shap_value": p, "feature_value": v} for f, p, v in self.top_features],
            "advice": list(self.advice),
        }


def top_features(explanation: Explanation, k: int, class_index: int = AGGRESSIVE) -> list[tuple[str, float, float]]:
    """Up to ``k`` features pushing toward ``class_index``, strongest first."""
    if k < 1:
        raise InvalidArgument("k must be at least 1")
    phi = explanation.phi[:, class_index]
    positive = [j for j in range(len(phi)) if phi[j] > 0]
    positive.sort(key=lambda j: (-phi[j], j))
    return [(explanation.feature_names[j], float(phi[j]), float(explanation.feature_values[j])) for j in positive[:k]]


def recommend(
    explanation: Explanation,
    rulebook: Rulebook | None = None,
    k: int = 4,
    medians: Mapping[str, float] | None = None,
    predicted_class: int | None = None,
    class_index: int = AGGRESSIVE,
) -> RecommendationReport:
    if rulebook is None:
        rulebook = load_rulebook()
    if predicted_class is None:
        predicted_class = int(np.argmax(explanation.fx))
    top = top_features(explanation, k, class_index)
    advice = []
    if predicted_class == class_index:
        for name, phi, value in top:
            rule = rulebook.match(name, phi)
            if rule is None:
                log.info("no rule for feature %s; skipped", name)
                continue
            advice.append(rule.text_for(value, None if medians is None else medians.get(name)))
    return RecommendationReport(explanation.instance_ref, predicted_class, top, advice)


def write_report(report: RecommendationReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2))
