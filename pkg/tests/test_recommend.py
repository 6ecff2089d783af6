import json

import numpy as np
import pytest

from drivestyle.errors import InvalidArgument, SchemaError
from drivestyle.explain import Explanation
from drivestyle.recommend import Rulebook, RecommendationRule, load_rulebook, recommend, top_features, write_report
from drivestyle.simgen import AGGRESSIVE, CAUTIOUS


def _expl(phi_by_name: dict, values: dict | None = None, fx=(0.1, 0.2, 0.7)) -> Explanation:
    names = list(phi_by_name)
    phi = np.zeros((len(names), 3))
    phi[:, AGGRESSIVE] = list(phi_by_name.values())
    vals = np.array([(values or {}).get(n, 0.0) for n in names])
    return Explanation(np.zeros(3), phi, np.array(fx), names, vals, instance_ref="i0")


def test_top_features_examples():
    expl = _expl({"f0": 0.4, "f1": -0.2, "f2": 0.1})
    assert [t[0] for t in top_features(expl, 2)] == ["f0", "f2"]
    assert top_features(_expl({"a": -0.1, "b": 0.0, "c": -3.0}), 3) == []
    with pytest.raises(InvalidArgument):
        top_features(expl, 0)


def test_shipped_rulebook_unique_pairs():
    book = load_rulebook()
    keys = [(r.feature_name, r.sign_condition) for r in book.rules]
    assert len(keys) == len(set(keys))
    assert {r.feature_name for r in book.rules} >= {"overspeed_count", "speed", "distance", "brake_x", "accel_x"}


def test_first_worked_example_advice():
    expl = _expl({"speed": 0.2, "distance": 0.1, "overspeed_count": 0.3, "gyro_z": -0.05})
    report = recommend(expl, k=4, predicted_class=AGGRESSIVE)
    assert report.advice == [
        "Adhere to speed limits to reduce the risk of aggressive driving classifications.",
        "Maintain a consistent speed to promote smoother and safer driving behavior.",
        "Keep a safe following distance to avoid collisions.",
    ]


def test_second_worked_example_uses_above_median_variants():
    phi = {"distance": 0.4, "brake_x": 0.3, "speed": 0.2, "accel_x": 0.1}
    values = {"distance": 9.0, "speed": 12.0, "brake_x": 1.0, "accel_x": 1.0}
    medians = {"distance": 3.0, "speed": 5.0, "brake_x": 0.5, "accel_x": 0.5}
    report = recommend(_expl(phi, values), medians=medians, predicted_class=AGGRESSIVE)
    assert report.advice == [
        "Maintain a safe and consistent following distance to reduce sudden braking and collision risks.",
        "Apply braking smoothly to ensure better vehicle control and passenger comfort.",
        "Regulate speed variations to promote safer and more stable driving behavior.",
        "Limit excessive acceleration to enhance driving stability.",
    ]


def test_non_aggressive_prediction_gives_empty_advice(tmp_path):
    report = recommend(_expl({"speed": 0.5}), predicted_class=CAUTIOUS)
    assert report.advice == []
    assert [t[0] for t in report.top_features] == ["speed"]
    write_report(report, tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["predicted_label"] == "cautious"


def test_predicted_class_defaults_to_argmax():
    assert recommend(_expl({"speed": 0.5})).predicted_class == AGGRESSIVE


def test_feature_without_rule_is_skipped():
    report = recommend(_expl({"gyro_y": 0.9, "speed": 0.1}), predicted_class=AGGRESSIVE)
    assert len(report.advice) == 1
    assert len(report.top_features) == 2


def test_priority_picks_lowest_number():
    book = Rulebook([
        RecommendationRule("speed", "any", "generic", priority=5),
        RecommendationRule("speed", "positive_phi", "specific", priority=1),
    ])
    assert book.match("speed", 0.3).advice_text == "specific"
    assert book.match("speed", -0.3).advice_text == "generic"


def test_rulebook_validation(tmp_path):
    with pytest.raises(SchemaError):
        Rulebook([RecommendationRule("a", "positive_phi", "x"), RecommendationRule("a", "positive_phi", "y")])
    with pytest.raises(SchemaError):
        Rulebook([RecommendationRule("a", "sideways", "x")])
    bad = tmp_path / "rb.json"
    bad.write_text('{"rules": [{"feature": "a"}]}')
    with pytest.raises(SchemaError):
        load_rulebook(bad)
