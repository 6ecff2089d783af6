import json

import numpy as np
import pytest

from drivestyle.cli import main
from drivestyle.config import RunConfig, load_config
from drivestyle.errors import InvalidArgument

SMALL = {
    "traces_per_class": 3,
    "trace_duration_s": 120,
    "hyperparameters": {"rf": {"n_trees": 10}, "gbt": {"n_rounds": 5}, "svm": {"epochs": 5}},
    "max_reports": 3,
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    traces, feats, model = root / "traces", root / "feats", root / "model"
    assert main(["generate", "--config", str(cfg), "--out", str(traces)]) == 0
    assert main(["featurize", "--config", str(cfg), "--traces", str(traces), "--out", str(feats)]) == 0
    assert main(["train", "--config", str(cfg), "--features", str(feats / "train_features.csv"),
                 "--out", str(model)]) == 0
    return {"root": root, "cfg": cfg, "traces": traces, "feats": feats, "model": model}


def test_generate_writes_files_and_manifest(bundle):
    manifest = json.loads((bundle["traces"] / "manifest.json").read_text())
    assert len(manifest) == 9
    assert len(list(bundle["traces"].glob("*.csv"))) == 9
    assert {"file", "seed", "duration_s"} <= set(manifest[0])


def test_generate_is_deterministic(bundle, tmp_path):
    out = tmp_path / "again"
    assert main(["generate", "--config", str(bundle["cfg"]), "--out", str(out)]) == 0
    for path in bundle["traces"].glob("*.csv"):
        assert (out / path.name).read_bytes() == path.read_bytes()


def test_dirty_output_dir_refused_without_force(bundle, capsys):
    assert main(["generate", "--config", str(bundle["cfg"]), "--out", str(bundle["traces"])]) != 0
    assert "--force" in capsys.readouterr().err


def test_slice_writes_manifest(bundle, tmp_path):
    assert main(["slice", "--config", str(bundle["cfg"]), "--traces", str(bundle["traces"]), "--out", str(tmp_path / "s")]) == 0
    entries = json.loads((tmp_path / "s" / "windows_manifest.json").read_text())
    assert len(entries) == 9 * 3


def test_eval_outputs(bundle, tmp_path):
    out = tmp_path / "eval"
    assert main(["eval", "--model", str(bundle["model"] / "model.json"),
                 "--features", str(bundle["feats"] / "test_features.csv"), "--out", str(out)]) == 0
    data = json.loads((out / "metrics.json").read_text())
    assert 0 <= data["accuracy"] <= 1
    assert (out / "confusion_normalized.csv").exists()


def test_explain_beeswarm_rows(bundle, tmp_path):
    out = tmp_path / "explain"
    feats = bundle["feats"] / "test_features.csv"
    assert main(["explain", "--model", str(bundle["model"] / "model.json"), "--features", str(feats),
                 "--instance-id", "0", "--out", str(out)]) == 0
    n_rows = len((out / "beeswarm.csv").read_text().splitlines()) - 1
    n_instances = len(feats.read_text().splitlines()) - 1
    assert n_rows == n_instances * 12 * 3
    assert (out / "waterfall_0.json").exists()


def test_explain_unknown_instance_is_data_error(bundle, tmp_path):
    code = main(["explain", "--model", str(bundle["model"] / "model.json"),
                 "--features", str(bundle["feats"] / "test_features.csv"), "--instance-id", "9999",
                 "--out", str(tmp_path / "x")])
    assert code == 3


def test_dimension_mismatch_is_data_error(bundle, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,label\n1.0,2.0,0\n")
    code = main(["eval", "--model", str(bundle["model"] / "model.json"), "--features", str(bad),
                 "--out", str(tmp_path / "x")])
    assert code == 3


def test_recommend_command(bundle, tmp_path):
    out = tmp_path / "rec"
    assert main(["recommend", "--model", str(bundle["model"] / "model.json"),
                 "--features", str(bundle["feats"] / "test_features.csv"), "--instance-id", "0",
                 "--train-features", str(bundle["feats"] / "train_features.csv"), "--out", str(out)]) == 0
    report = json.loads((out / "recommendation_0.json").read_text())
    assert "advice" in report


def test_config_errors_exit_two(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"no_such_key": 1}')
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert main(["generate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


def test_missing_trace_dir_is_data_error(small_config, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["slice", "--config", str(small_config), "--traces", str(empty), "--out", str(tmp_path / "o")]) == 3


def test_pipeline_bundle_and_precedence(small_config, tmp_path):
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(small_config), "--seed", "5", "--out", str(out)]) == 0
    for name in ("config.json", "metrics.json", "confusion.csv", "confusion_normalized.csv", "beeswarm.csv",
                 "importance.csv", "recommendations.json", "summary.json", "model.json"):
        assert (out / name).exists(), name
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["seed"] == 5  # flag beats file
    assert resolved["traces_per_class"] == 3  # file beats default
    assert resolved["window_len"] == 600  # default
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 5
    assert summary["hyperparameters"]["n_trees"] == 10


def test_pipeline_svm_skips_explanations(small_config, tmp_path):
    out = tmp_path / "svm"
    assert main(["pipeline", "--config", str(small_config), "--model", "svm", "--out", str(out)]) == 0
    assert "skipped" in json.loads((out / "summary.json").read_text())["explanations"]


def test_load_config_rejects_bad_values(tmp_path):
    with pytest.raises(InvalidArgument):
        load_config(None, {"task": "four_class"})
    with pytest.raises(InvalidArgument):
        RunConfig(split_ratio=1.0)
    with pytest.raises(InvalidArgument):
        RunConfig(profiles={"reckless": {}})
    cfg = RunConfig(profiles={"aggressive": {"max_accel": 5.0}})
    assert cfg.profile_params()[2].max_accel == 5.0


def test_replace_keeps_other_fields():
    cfg = RunConfig(seed=3).replace(model="gbt")
    assert (cfg.seed, cfg.model) == (3, "gbt")
    assert np.isclose(cfg.split_ratio, 0.8)
