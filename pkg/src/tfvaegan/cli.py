"""Command-line entry point: train, eval, ablate, export-embeddings, make-synth, validate-data.

Configuration files are flat JSON objects with dotted keys, for example::

    {"data.synthetic": "seed=1", "model.epochs": 2, "model.lr": 0.001, "output.dir": "runs/a"}

Every ``model.<field>`` key has a matching ``--<field>`` flag; flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .classify import harmonic_mean, transform
from .data import (
    ZSLDataset,
    load_benchmark_bundle,
    load_native_bundle,
    make_dataset,
    make_synthetic,
    save_native_bundle,
)
from .errors import (
    CompatibilityError,
    FormatError,
    NumericError,
    ShapeError,
    TFVAEGANError,
    ValidationError,
)
from .networks import ModelConfig, check_compatible, load_checkpoint
from .synthesis import synthesize
from .training import train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "TFVAEGAN_OUTPUT_ROOT"
MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}
# dimensions come from the data, never from flags
DERIVED_FIELDS = {"d_x", "d_a", "d_z"}


class UsageError(TFVAEGANError):
    pass


def parse_synthetic_recipe(recipe: str) -> dict:
    """``"seed=1,d_x=32,noise_sigma=0.05"`` -> keyword arguments for ``make_synthetic``."""
    out = {}
    for item in filter(None, (s.strip() for s in (recipe or "").split(","))):
        if "=" not in item:
            raise UsageError(f"synthetic recipe item {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        try:
            out[key] = int(value)
        except ValueError:
            try:
                out[key] = float(value)
            except ValueError as exc:
                raise UsageError(f"synthetic recipe {key}: {value!r} is not a number") from exc
    return out


def _field_type(f):
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if t.startswith("bool"):
        return _bool
    if t.startswith("int"):
        return int
    if t.startswith("float"):
        return float
    return str


def _bool(text):
    if isinstance(text, bool):
        return text
    lowered = str(text).lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config_file(path) -> dict:
    try:
        values = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(values, dict) or any(isinstance(v, dict) for v in values.values()):
        raise UsageError("config file must be a flat JSON object with dotted keys")
    return values


def resolve(args) -> dict:
    """Merge the config file and flags into one flat dotted-key dict."""
    flat = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in list(flat):
        if "." not in key:
            flat[f"model.{key}"] = flat.pop(key)
    for src in ("synthetic", "native"):
        value = getattr(args, src, None)
        if value is not None:
            flat[f"data.{src}"] = value
    if getattr(args, "benchmark", None):
        flat["data.benchmark"] = list(args.benchmark)
    for key in ("out", "format", "scaling", "checkpoint"):
        value = getattr(args, key, None)
        if value is not None:
            flat[{"out": "output.dir", "format": "output.format"}.get(key, f"run.{key}")] = value
    for name in MODEL_FIELDS:
        value = getattr(args, f"m_{name}", None)
        if value is not None:
            flat[f"model.{name}"] = value
    return flat


def model_overrides(flat: dict) -> dict:
    out = {}
    for key, value in flat.items():
        if not key.startswith("model."):
            continue
        name = key[len("model."):]
        if name not in MODEL_FIELDS:
            raise UsageError(f"unknown config field {key!r}")
        if name in DERIVED_FIELDS:
            raise UsageError(f"{key} is taken from the dataset and cannot be set")
        try:
            out[name] = None if value is None else _field_type(MODEL_FIELDS[name])(value)
        except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"config field {key!r}: {exc}") from exc
    return out


def load_source(flat: dict) -> tuple[ZSLDataset, dict | None]:
    """Dataset named by exactly one ``data.*`` key; returns the synthetic recipe too, if any."""
    sources = [k for k in ("data.benchmark", "data.native", "data.synthetic") if k in flat]
    if len(sources) != 1:
        raise UsageError("give exactly one dataset source: --benchmark, --native or --synthetic")
    key = sources[0]
    if key == "data.benchmark":
        paths = flat[key]
        if len(paths) != 2:
            raise UsageError("--benchmark needs FEATURES_FILE SPLITS_FILE")
        return load_benchmark_bundle(*paths), None
    if key == "data.native":
        return load_native_bundle(flat[key]), None
    recipe = parse_synthetic_recipe(flat[key])
    try:
        return make_synthetic(**recipe)[0], recipe
    except TypeError as exc:
        raise UsageError(f"synthetic recipe: {exc}") from exc


def output_dir(flat: dict, command: str) -> Path:
    if "output.dir" in flat:
        out = Path(flat["output.dir"])
    else:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_config(dataset: ZSLDataset, flat: dict, desk: bool = False) -> ModelConfig:
    values = dict(pipeline.DESK_SCALE) if desk else {}
    values.update(model_overrides(flat))
    try:
        return pipeline.config_for(dataset, **values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model config: {exc}") from exc


def _echo(out: Path, flat: dict, config: ModelConfig):
    echo = {k: v for k, v in flat.items() if not k.startswith("model.")}
    echo.update({f"model.{k}": v for k, v in config.to_dict().items()})
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True))


def _log(message: str):
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    flat = resolve(args)
    dataset, _ = load_source(flat)
    config = build_config(dataset, flat, args.desk)
    scaled, _ = pipeline.prepare(dataset, flat.get("run.scaling", "minmax"))
    out = output_dir(flat, "train")
    _echo(out, flat, config)
    with (out / "metrics.jsonl").open("w") as log:
        def write(record):
            log.write(json.dumps(record, sort_keys=True) + "\n")

        state, path = train(scaled, config, checkpoint_path=out / "checkpoint.zip", callback=write)
    _log(f"trained {state.iteration} iterations; checkpoint {path}")
    return EXIT_OK


def _load_for_eval(args):
    flat = resolve(args)
    if "run.checkpoint" not in flat:
        raise UsageError("--checkpoint is required")
    dataset, _ = load_source(flat)
    model, manifest = load_checkpoint(flat["run.checkpoint"])
    check_compatible(model.config, dataset.n_features, dataset.n_attributes)
    try:
        config = dataclasses.replace(model.config, **model_overrides(flat))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model config: {exc}") from exc
    scaled, _ = pipeline.prepare(dataset, flat.get("run.scaling", "minmax"))
    return flat, scaled, model, config


def cmd_eval(args) -> int:
    flat, dataset, model, config = _load_for_eval(args)
    out = output_dir(flat, "eval")
    _echo(out, flat, config)
    zsl, gzsl = pipeline.evaluate_model(model, dataset, config)
    zsl.write_json(out / "zsl.json")
    gzsl.write_json(out / "gzsl.json")
    report = {"zsl_t1": zsl.zsl_t1, "u": gzsl.gzsl_u, "s": gzsl.gzsl_s, "H": harmonic_mean(gzsl.gzsl_u, gzsl.gzsl_s),
              "feature_width": zsl.feature_width, "classifier_input": config.classifier_input}
    (out / "report.json").write_text(json.dumps(report, indent=2))
    if flat.get("output.format") == "csv":
        zsl.write_csv(out / "zsl_per_class.csv")
        gzsl.write_csv(out / "gzsl_per_class.csv")
    _log(f"feature_width={zsl.feature_width} zsl_t1={zsl.zsl_t1:.4f} u={gzsl.gzsl_u:.4f} "
         f"s={gzsl.gzsl_s:.4f} H={report['H']:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    flat = resolve(args)
    dataset, recipe = load_source(flat)
    config = build_config(dataset, flat, args.desk)
    out = output_dir(flat, "ablate")
    _echo(out, flat, config)
    scaling = flat.get("run.scaling", "minmax")
    if recipe is not None:
        base = recipe.get("seed", 0)
        seeds = [base + i for i in range(args.seeds)]
        datasets = lambda s: make_synthetic(**{**recipe, "seed": s})[0]
    else:
        seeds = [config.seed + i for i in range(args.seeds)]
        datasets = lambda s: dataset

    grids = {"main": pipeline.ABLATIONS}
    for name in args.appendix or []:
        grids[name] = {"feedback": pipeline.FEEDBACK_ABLATIONS, "classifier": pipeline.CLASSIFIER_ABLATIONS}[name]
    report = {"seeds": seeds, "grids": {}}
    for grid, variants in grids.items():
        results = pipeline.run_ablation(datasets, config, variants, seeds, scaling)
        table = pipeline.ablation_table(results)
        report["grids"][grid] = {"table": {task: {col: table[col][task] for col in variants} for task in ("ZSL", "GZSL")},
                                 "runs": results}
        with (out / f"ablation_{grid}.csv").open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["task", *variants])
            for task in ("ZSL", "GZSL"):
                w.writerow([task, *(f"{100 * table[col][task]:.1f}" for col in variants)])
        print(f"[{grid}] " + "  ".join(f"{c}: ZSL {100 * table[c]['ZSL']:.1f} GZSL {100 * table[c]['GZSL']:.1f}"
                                       for c in variants))
    (out / "ablation.json").write_text(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    flat, dataset, model, config = _load_for_eval(args)
    out = output_dir(flat, "export")
    test_rows = np.concatenate([dataset.test_seen, dataset.test_unseen])
    syn = synthesize(model, dataset.attributes, dataset.unseen_classes, config.syn_num, config, seed=config.seed)
    feats = np.concatenate([np.asarray(dataset.features[test_rows], dtype=np.float32),
                            syn.features.astype(np.float32)])
    labels = np.concatenate([dataset.labels[test_rows], syn.labels])
    matrix = transform(feats, model.decoder, config.classifier_input).matrix
    source = np.concatenate([np.zeros(test_rows.size, np.uint8), np.ones(len(syn), np.uint8)])
    n_seen = dataset.test_seen.size
    bundle = make_dataset(matrix, labels, dataset.attributes, dataset.seen_classes, dataset.unseen_classes,
                          train_seen=[], test_seen=np.arange(n_seen),
                          test_unseen=np.arange(n_seen, test_rows.size), name=f"{dataset.name}-embeddings")
    save_native_bundle(bundle, out, extra_arrays={"source": source},
                       meta={"source_codes": {"0": "real", "1": "synth"}, "variant": config.classifier_input})
    _log(f"exported {test_rows.size} real and {len(syn)} synthesized rows of width {matrix.shape[1]} to {out}")
    return EXIT_OK


def cmd_make_synth(args) -> int:
    flat = resolve(args)
    recipe = parse_synthetic_recipe(flat.get("data.synthetic", ""))
    try:
        dataset, _ = make_synthetic(**recipe)
    except TypeError as exc:
        raise UsageError(f"synthetic recipe: {exc}") from exc
    out = output_dir(flat, "synthetic")
    save_native_bundle(dataset, out, meta={"synthetic": recipe})
    _log(f"wrote {dataset.features.shape[0]} rows to {out}")
    return EXIT_OK


def cmd_validate_data(args) -> int:
    dataset, _ = load_source(resolve(args))
    dataset.validate()
    print(json.dumps({"name": dataset.name, "n": int(dataset.features.shape[0]), "d_x": dataset.n_features,
                      "d_a": dataset.n_attributes, "seen": int(dataset.seen_classes.size),
                      "unseen": int(dataset.unseen_classes.size),
                      **{k: int(dataset.split(k).size) for k in ("train_seen", "test_seen", "test_unseen")}}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_data(p):
    g = p.add_argument_group("dataset source (exactly one)")
    g.add_argument("--benchmark", nargs=2, metavar=("FEATURES", "SPLITS"), help="feature and split files")
    g.add_argument("--native", metavar="DIR", help="native bundle directory")
    g.add_argument("--synthetic", nargs="?", const="", metavar="RECIPE", help="e.g. seed=1,d_x=32")
    p.add_argument("--config", metavar="JSON", help="flat JSON config with dotted keys")
    p.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<command>)")


def _add_model(p):
    g = p.add_argument_group("model overrides")
    for name, f in MODEL_FIELDS.items():
        if name in DERIVED_FIELDS:
            continue
        g.add_argument(f"--{name.replace('_', '-')}", dest=f"m_{name}", type=_field_type(f), metavar="V")
    p.add_argument("--scaling", choices=("minmax", "none"))
    p.add_argument("--desk", action="store_true", help="start from the small synthetic-benchmark settings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfvaegan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint.zip, metrics.jsonl, config.json")
    _add_data(p)
    _add_model(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="synthesize, train final classifiers and write ZSL/GZSL reports")
    _add_data(p)
    _add_model(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--format", choices=("json", "csv"), help="csv also writes per-class accuracies")
    p.set_defaults(func=cmd_eval, desk=False)

    p = sub.add_parser("ablate", help="Baseline / Feedback / T-feature / TF-VAEGAN grid over seeds")
    _add_data(p)
    _add_model(p)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--appendix", action="append", choices=("feedback", "classifier"))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-embeddings", help="real test and synthesized transformed features as a bundle")
    _add_data(p)
    _add_model(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_export_embeddings, desk=False)

    p = sub.add_parser("make-synth", help="write a synthetic benchmark as a native bundle")
    p.add_argument("--synthetic", nargs="?", const="", default="", metavar="RECIPE")
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_make_synth)

    p = sub.add_parser("validate-data", help="load and check a dataset")
    _add_data(p)
    p.set_defaults(func=cmd_validate_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except (FormatError, ValidationError, ShapeError, CompatibilityError, FileNotFoundError) as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except NumericError as exc:
        _log(f"numeric error: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
