"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric or
feasibility error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset, evaluation, explain, features, pipeline, recommend, simgen
from .config import MODELS, TASKS, load_config
from .errors import FeasibilityError, InvalidArgument, NotFound, NumericError, ParseError, SchemaError
from .models import TreeEnsemble, load_model, serialize_model

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("drivestyle")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, pipeline.StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, (FeasibilityError, NumericError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (ParseError, SchemaError, NotFound, OSError)) and not isinstance(exc, FileExistsError):
        return EXIT_DATA
    return EXIT_CONFIG


def _resolve(args):
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "feature_config": getattr(args, "feature_config", None),
        "task": getattr(args, "task", None),
        "model": getattr(args, "model", None),
        "traces_per_class": getattr(args, "traces_per_class", None),
        "trace_duration_s": getattr(args, "duration", None),
    }
    return load_config(args.config, overrides)


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    out = pipeline.prepare_output_dir(Path(cfg.out), args.force)
    traces, plan = pipeline.generate_traces(cfg)
    for trace, entry in zip(traces, plan):
        simgen.export_trace(trace, out / f"{trace.source_id}.csv")
        entry["file"] = f"{trace.source_id}.csv"
    (out / "manifest.json").write_text(json.dumps(plan, indent=2))
    (out / "config.json").write_text(cfg.to_json())
    print(f"wrote {len(traces)} traces to {out}")
    return EXIT_OK


def _load_traces(trace_dir: Path) -> list[simgen.Trace]:
    files = sorted(p for p in trace_dir.glob("*.csv"))
    if not files:
        raise NotFound(f"no trace CSV files in {trace_dir}")
    return [dataset.load_trace(p) for p in files]


def cmd_slice(args) -> int:
    cfg = _resolve(args)
    out = pipeline.prepare_output_dir(Path(cfg.out), args.force)
    manifest: list = []
    windows = pipeline.build_windows(cfg, _load_traces(Path(args.traces)), manifest)
    dataset.write_manifest(manifest, out / "windows_manifest.json")
    print(f"{len(windows)} windows kept of {len(manifest)} scanned")
    return EXIT_OK


def cmd_featurize(args) -> int:
    cfg = _resolve(args)
    out = pipeline.prepare_output_dir(Path(cfg.out), args.force)
    windows = pipeline.build_windows(cfg, _load_traces(Path(args.traces)))
    names = features.get_config(cfg.feature_config).feature_names
    split = dataset.split(windows, cfg.split_ratio, cfg.seed)
    for part, items in (("train", split.train), ("test", split.test)):
        X, y = features.feature_matrix(items, cfg.feature_config)
        features.write_feature_csv(out / f"{part}_features.csv", X, pipeline.task_labels(y, cfg.task), names)
        (out / f"{part}_index.json").write_text(json.dumps([w.ref for w in items]))
    (out / "config.json").write_text(cfg.to_json())
    print(f"featurized {len(windows)} windows with {cfg.feature_config}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve(args)
    X, y, names = features.read_feature_csv(args.features)
    n_classes = max(int(y.max()) + 1, pipeline.n_classes_for(cfg.task))
    model = pipeline.train_model(cfg.model, cfg.model_params(), X, y, n_classes, cfg.seed, names)
    model.params.update({"task": cfg.task, "feature_config": cfg.feature_config})
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    serialize_model(model, out / "model.json")
    (out / "results.json").write_text(json.dumps({"hyperparameters": model.params, "seed": cfg.seed}, indent=2))
    print(f"trained {cfg.model} on {len(y)} instances")
    return EXIT_OK


def _load_model_and_features(model_path, features_path):
    model = load_model(model_path)
    X, y, names = features.read_feature_csv(features_path)
    if X.shape[1] != model.n_features:
        raise SchemaError(f"model expects {model.n_features} features, file has {X.shape[1]}")
    return model, X, y, names


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    model, X, y, _ = _load_model_and_features(args.model_path, args.features)
    cm = evaluation.confusion_matrix(y, model.predict(X), model.n_classes)
    report = evaluation.metrics(cm)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_metrics_json(report, out / "metrics.json", {"hyperparameters": model.params})
    evaluation.write_cm_csv(cm, out / "confusion.csv")
    evaluation.write_cm_csv(evaluation.normalize_cm(cm), out / "confusion_normalized.csv")
    print(json.dumps({"accuracy": report.accuracy, "recall": report.recall, "f1": report.f1}))
    return EXIT_OK


def _instance(X: np.ndarray, instance_id: int) -> np.ndarray:
    if not 0 <= instance_id < len(X):
        raise NotFound(f"instance {instance_id} not found ({len(X)} instances)")
    return X[instance_id]


def cmd_explain(args) -> int:
    cfg = _resolve(args)
    model, X, _, names = _load_model_and_features(args.model_path, args.features)
    if not isinstance(model, TreeEnsemble):
        raise InvalidArgument("explanations need a tree ensemble model")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.instance_id is not None:
        _instance(X, args.instance_id)
    table = explain.explain_dataset(model, X, names)
    explain.write_beeswarm_csv(table, out / "beeswarm.csv")
    explain.write_importance_csv(table, out / "importance.csv")
    if args.instance_id is not None:
        aggressive = model.n_classes - 1
        expl = table.explanation(args.instance_id, aggressive)
        explain.write_waterfall_json(explain.waterfall(expl, aggressive), out / f"waterfall_{args.instance_id}.json",
                                     {"instance_id": args.instance_id, "output": table.output})
        predicted = int(model.predict(X[args.instance_id])[0])
        if predicted == aggressive:
            report = recommend.recommend(expl, recommend.load_rulebook(args.rulebook), cfg.recommend_k,
                                         predicted_class=predicted, class_index=aggressive)
            recommend.write_report(report, out / f"recommendation_{args.instance_id}.json")
    print(f"explained {len(X)} instances ({len(table)} rows)")
    return EXIT_OK


def cmd_recommend(args) -> int:
    cfg = _resolve(args)
    model, X, _, names = _load_model_and_features(args.model_path, args.features)
    if not isinstance(model, TreeEnsemble):
        raise InvalidArgument("recommendations need a tree ensemble model")
    x = _instance(X, args.instance_id)
    aggressive = model.n_classes - 1
    expl = explain.tree_shap(model, x, aggressive, instance_ref=args.instance_id)
    expl.feature_names = names
    medians = None
    if args.train_features:
        X_train, _, _ = features.read_feature_csv(args.train_features)
        medians = dict(zip(names, np.median(X_train, axis=0).tolist()))
    predicted = int(model.predict(x)[0])
    report = recommend.recommend(expl, recommend.load_rulebook(args.rulebook), cfg.recommend_k, medians,
                                 predicted, aggressive)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    recommend.write_report(report, out / f"recommendation_{args.instance_id}.json")
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _resolve(args)
    summary = pipeline.run_pipeline(cfg, cfg.out, args.force)
    m = summary["metrics"]
    print(f"accuracy={m['accuracy']:.4f} recall={m['recall']:.4f} f1={m['f1']:.4f} -> {cfg.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivestyle", description="Explainable driving-style classification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "simulate traces and write CSV files")
    p.add_argument("--traces-per-class", type=int)
    p.add_argument("--duration", type=float, help="trace duration in seconds")

    p = add("slice", cmd_slice, "clean and slice traces into windows")
    p.add_argument("--traces", required=True, help="directory of trace CSV files")

    p = add("featurize", cmd_featurize, "compute feature matrices with a train/test split")
    p.add_argument("--traces", required=True)
    p.add_argument("--feature-config", choices=sorted(features.CONFIGS))
    p.add_argument("--task", choices=TASKS)

    p = add("train", cmd_train, "fit a model on a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--task", choices=TASKS)

    p = add("eval", cmd_eval, "evaluate a model on a feature CSV")
    p.add_argument("--model", required=True, dest="model_path")
    p.add_argument("--features", required=True)

    p = add("explain", cmd_explain, "SHAP attributions for a tree model")
    p.add_argument("--model", required=True, dest="model_path")
    p.add_argument("--features", required=True)
    p.add_argument("--instance-id", type=int)
    p.add_argument("--rulebook", type=Path)

    p = add("recommend", cmd_recommend, "driving advice for one instance")
    p.add_argument("--model", required=True, dest="model_path")
    p.add_argument("--features", required=True)
    p.add_argument("--instance-id", type=int, required=True)
    p.add_argument("--train-features", help="training features for median-based advice variants")
    p.add_argument("--rulebook", type=Path)

    p = add("pipeline", cmd_pipeline, "run every stage end to end")
    p.add_argument("--feature-config", choices=sorted(features.CONFIGS))
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--traces-per-class", type=int)
    p.add_argument("--duration", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        code = _exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return code


if __name__ == "__main__":
    sys.exit(main())
