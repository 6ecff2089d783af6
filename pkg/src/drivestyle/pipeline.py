"""End-to-end orchestration: generate, slice, featurize, split, train, evaluate, explain, recommend."""

from __future__ import annotations

import json
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataset, evaluation, explain, features, recommend, simgen
from .config import RunConfig
from .errors import InvalidArgument
from .models import TreeEnsemble, fit_forest, fit_gbt, fit_linear_svm, serialize_model

log = logging.getLogger(__name__)


class StageError(Exception):
    """A pipeline stage failed; carries the stage name and the original error."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


def trace_seed(seed: int, label: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, label, index]).generate_state(1)[0])


def trace_plan(cfg: RunConfig) -> list[dict]:
    plan = []
    for label in sorted(simgen.DEFAULT_PROFILES):
        for i in range(cfg.traces_per_class):
            plan.append({
                "source_id": f"{simgen.CLASS_NAMES[label]}_{i:03d}",
                "label": label,
                "seed": trace_seed(cfg.seed, label, i),
                "duration_s": cfg.trace_duration_s,
            })
    return plan


def generate_traces(cfg: RunConfig) -> tuple[list[simgen.Trace], list[dict]]:
    profiles = cfg.profile_params()
    plan = trace_plan(cfg)
    traces = [simgen.generate_trace(profiles[p["label"]], p["duration_s"], p["seed"], p["source_id"]) for p in plan]
    return traces, plan


def build_windows(cfg: RunConfig, traces: Sequence[simgen.Trace], manifest: list | None = None) -> list[dataset.Window]:
    return dataset.prepare_windows(traces, cfg.warmup_s, cfg.window_len, cfg.zero_tolerance,
                                   cfg.stop_speed_eps, manifest)


def task_labels(y: np.ndarray, task: str) -> np.ndarray:
    """Binary task: 1 = aggressive, 0 = cautious or normal."""
    if task == "binary":
        return (np.asarray(y) == simgen.AGGRESSIVE).astype(np.int64)
    return np.asarray(y, dtype=np.int64)


def n_classes_for(task: str) -> int:
    return 2 if task == "binary" else 3


def class_names_for(task: str) -> list[str]:
    return ["non_aggressive", "aggressive"] if task == "binary" else list(simgen.CLASS_NAMES)


def train_model(model: str, params: dict, X: np.ndarray, y: np.ndarray, n_classes: int,
                seed: int, feature_names: list[str] | None = None):
    if model == "rf":
        return fit_forest(X, y, seed=seed, n_classes=n_classes, feature_names=feature_names, **params)
    if model == "gbt":
        return fit_gbt(X, y, seed=seed, n_classes=n_classes, feature_names=feature_names, **params)
    if model == "svm":
        return fit_linear_svm(X, y, seed=seed, n_classes=n_classes, feature_names=feature_names, **params)
    raise InvalidArgument(f"unknown model {model!r}")


@dataclass
class Experiment:
    """One trained and evaluated model on a fixed window split."""

    model: object
    feature_names: list[str]
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    test_refs: list
    y_pred: np.ndarray
    cm: evaluation.ConfusionMatrix
    report: evaluation.MetricsReport


def run_experiment(cfg: RunConfig, windows: Sequence[dataset.Window], split: dataset.SplitDataset | None = None,
                   feature_config: str | None = None, model: str | None = None,
                   task: str | None = None) -> Experiment:
    feature_config = feature_config or cfg.feature_config
    model = model or cfg.model
    task = task or cfg.task
    if split is None:
        split = dataset.split(windows, cfg.split_ratio, cfg.seed)
    names = features.get_config(feature_config).feature_names
    X_train, y_train = features.feature_matrix(split.train, feature_config)
    X_test, y_test = features.feature_matrix(split.test, feature_config)
    y_train, y_test = task_labels(y_train, task), task_labels(y_test, task)
    k = n_classes_for(task)
    fitted = train_model(model, cfg.model_params(model), X_train, y_train, k, cfg.seed, names)
    fitted.params.update({"task": task, "feature_config": feature_config})
    y_pred = fitted.predict(X_test)
    cm = evaluation.confusion_matrix(y_test, y_pred, k)
    return Experiment(fitted, names, X_train, y_train, X_test, y_test,
                      [w.ref for w in split.test], y_pred, cm, evaluation.metrics(cm))


def prepare_output_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise FileExistsError(f"output directory {path} is not empty (use --force)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # re-raised with the stage name attached
        raise StageError(name, exc) from exc


def _dump(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def run_pipeline(cfg: RunConfig, out: str | Path | None = None, force: bool = False) -> dict:
    """Run every stage and write the result bundle; returns the summary dict."""
    out_dir = prepare_output_dir(Path(out or cfg.out), force)
    _dump(out_dir / "config.json", cfg.to_dict())

    traces, plan = _stage("generate", generate_traces, cfg)
    if cfg.save_traces:
        trace_dir = out_dir / "traces"
        trace_dir.mkdir()
        for trace in traces:
            simgen.export_trace(trace, trace_dir / f"{trace.source_id}.csv")
    _dump(out_dir / "traces_manifest.json", plan)

    manifest: list = []
    windows = _stage("slice", build_windows, cfg, traces, manifest)
    dataset.write_manifest(manifest, out_dir / "windows_manifest.json")
    if not windows:
        raise StageError("slice", InvalidArgument("no windows survived cleaning and slicing"))

    split = _stage("split", dataset.split, windows, cfg.split_ratio, cfg.seed)
    exp = _stage("train", run_experiment, cfg, windows, split)
    names = exp.feature_names
    features.write_feature_csv(out_dir / "train_features.csv", exp.X_train, exp.y_train, names)
    features.write_feature_csv(out_dir / "test_features.csv", exp.X_test, exp.y_test, names)
    serialize_model(exp.model, out_dir / "model.json")

    class_names = class_names_for(cfg.task)
    evaluation.write_metrics_json(exp.report, out_dir / "metrics.json",
                                  {"model": cfg.model, "hyperparameters": exp.model.params, "seed": cfg.seed})
    evaluation.write_cm_csv(exp.cm, out_dir / "confusion.csv", class_names)
    normalized = _stage("evaluate", evaluation.normalize_cm, exp.cm)
    evaluation.write_cm_csv(normalized, out_dir / "confusion_normalized.csv", class_names)

    summary = {
        "seed": cfg.seed,
        "task": cfg.task,
        "model": cfg.model,
        "feature_config": cfg.feature_config,
        "hyperparameters": exp.model.params,
        "n_traces": len(traces),
        "n_windows": len(windows),
        "windows_per_class": {class_names_for("three_class")[c]: int(n)
                              for c, n in zip(*np.unique([w.label for w in windows], return_counts=True))},
        "n_train": len(split.train),
        "n_test": len(split.test),
        "metrics": exp.report.to_dict(),
        "confusion": exp.cm.counts.tolist(),
        "confusion_normalized": normalized.tolist(),
    }

    if isinstance(exp.model, TreeEnsemble):
        summary["explanations"] = _stage("explain", _explain_bundle, cfg, exp, out_dir)
    else:
        summary["explanations"] = {"skipped": "linear model has no tree explainer"}

    _dump(out_dir / "summary.json", summary)
    return summary


def _explain_bundle(cfg: RunConfig, exp: Experiment, out_dir: Path) -> dict:
    ids = [f"{src}@{start}" for src, start in exp.test_refs]
    table = explain.explain_dataset(exp.model, exp.X_test, exp.feature_names, ids)
    explain.write_beeswarm_csv(table, out_dir / "beeswarm.csv")
    explain.write_importance_csv(table, out_dir / "importance.csv")

    aggressive = n_classes_for(cfg.task) - 1
    medians = dict(zip(exp.feature_names, np.median(exp.X_train, axis=0).tolist()))
    rulebook = recommend.load_rulebook()
    wf_dir = out_dir / "waterfalls"
    wf_dir.mkdir(exist_ok=True)
    reports = []
    flagged = [a for a in range(len(ids)) if exp.y_pred[a] == aggressive][: cfg.max_reports]
    for a in flagged:
        expl = table.explanation(a, aggressive)
        wf = explain.waterfall(expl, aggressive)
        explain.write_waterfall_json(wf, wf_dir / f"{ids[a]}.json", {"instance_id": ids[a], "output": table.output})
        report = recommend.recommend(expl, rulebook, cfg.recommend_k, medians, int(exp.y_pred[a]), aggressive)
        reports.append(report.to_dict())
    _dump(out_dir / "recommendations.json", reports)

    importance = table.global_importance()
    return {
        "output": table.output,
        "base_value": table.base_value.tolist(),
        "n_instances": len(ids),
        "top_features": {class_names_for(cfg.task)[k]: table.top_features(k, 4) for k in range(table.n_classes)},
        "mean_abs_shap": {class_names_for(cfg.task)[k]: dict(zip(exp.feature_names, importance[k].tolist()))
                          for k in range(table.n_classes)},
        "n_reports": len(reports),
    }
