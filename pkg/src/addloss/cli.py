"""Command-line entry point: ``addloss {train,ablate,gradcheck,geometry}``.

Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 numeric failure.
Diagnostics go to stderr; each command prints one JSON summary line on stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import geometry as geo
from .data import SynthConfig, generate_synthetic, load_csv
from .errors import AddLossError, ConfigError, NonFiniteActivation, NonFiniteGradient, NonFiniteLoss
from .gradients import gradcheck
from .metrics import geometry_report
from .model import ModelConfig, forward, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, ablation_sweep, train

log = logging.getLogger("addloss")

OUTPUT_ROOT_ENV = "ADDLOSS_OUTPUT_ROOT"
SECTIONS = ("data", "model", "train", "output")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# config ------------------------------------------------------------------

@dataclasses.dataclass
class ExperimentConfig:
    data: dict
    model: ModelConfig
    train: TrainConfig
    output_dir: Path
    source: Path | None = None

    def load_dataset(self):
        if "synthetic" in self.data:
            return generate_synthetic(SynthConfig(**self.data["synthetic"]))
        return load_csv(self.data["csv"], self.data.get("label_column"))

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "model": dataclasses.asdict(self.model) | {"hidden": list(self.model.hidden)},
            "train": self.train.to_dict(),
            "output": {"dir": str(self.output_dir)},
        }


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")


def _field_names(cls) -> list[str]:
    return [f.name for f in dataclasses.fields(cls)]


def apply_override(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    if keys[0] not in SECTIONS:
        raise ConfigError(f"override {dotted!r} must start with one of {SECTIONS}")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-section")
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override must look like key.path=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build_config(doc: dict, source: Path | None = None) -> ExperimentConfig:
    _check_keys("top level", doc, SECTIONS)
    data = dict(doc.get("data") or {})
    _check_keys("data", data, ("synthetic", "csv", "label_column"))
    if ("synthetic" in data) == ("csv" in data):
        raise ConfigError("data section needs exactly one of 'synthetic' or 'csv'")
    if "synthetic" in data:
        _check_keys("data.synthetic", data["synthetic"], _field_names(SynthConfig))
    else:
        base = source.parent if source else Path.cwd()
        csv_path = Path(data["csv"])
        if not csv_path.is_absolute():
            csv_path = base / csv_path
        if not csv_path.exists():
            raise ConfigError(f"data file not found: {csv_path}")
        data["csv"] = str(csv_path)

    model = doc.get("model") or {}
    _check_keys("model", model, _field_names(ModelConfig))
    train_doc = doc.get("train") or {}
    _check_keys("train", train_doc, _field_names(TrainConfig))
    output = doc.get("output") or {}
    _check_keys("output", output, ("dir",))

    if "dir" in output:
        out_dir = Path(output["dir"])
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        out_dir = root / (source.stem if source else "run")
    try:
        return ExperimentConfig(data, ModelConfig(**model), TrainConfig(**train_doc),
                                out_dir, source)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides=()) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for key, value in overrides:
        apply_override(doc, key, value)
    return build_config(doc, path)


# commands ----------------------------------------------------------------

def _emit(summary: dict) -> None:
    print(json.dumps(summary), flush=True)


def _overrides(args) -> list:
    pairs = [parse_override(s) for s in args.set or []]
    if getattr(args, "lambda_", None):
        pairs.append(("train.weights", list(geo.LossWeights.parse(args.lambda_).as_array())))
    if getattr(args, "out", None):
        pairs.append(("output.dir", args.out))
    return pairs


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    dataset = cfg.load_dataset()
    params, record = train(dataset, cfg.model, cfg.train)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "checkpoint.json",
                    meta={"model": cfg.to_dict()["model"], "class_names": list(dataset.class_names)})
    (out / "run.json").write_text(json.dumps(record.to_dict(), indent=1))
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    if record.geometry is not None:
        (out / "geometry.json").write_text(json.dumps(record.geometry.to_dict(), indent=2))
    _emit({"command": "train", "out_dir": str(out), "accuracy": record.final_accuracy,
           "weights": cfg.train.weights.tag, "seed": cfg.train.seed})
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    if args.lambdas is not None and not args.lambdas:
        raise ConfigError("empty lambda list")
    lambdas = ([geo.LossWeights.parse(t) for t in args.lambdas]
               if args.lambdas is not None else list(geo.DEFAULT_ABLATION))
    seeds = args.seeds if args.seeds is not None else [cfg.train.seed]
    if not seeds:
        raise ConfigError("empty seed list")
    dataset = cfg.load_dataset()
    table = ablation_sweep(dataset, cfg.model, cfg.train, lambdas, seeds, workers=args.parallel)
    out = cfg.output_dir
    (out / "runs").mkdir(parents=True, exist_ok=True)
    table.write_csv(out / "ablation.csv")
    summary = table.summary()
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    for row in table.rows:
        name = f"{row.tag.replace(',', '_')}__seed{row.seed}.json"
        (out / "runs" / name).write_text(json.dumps(row.record.to_dict(), indent=1))
    _emit({"command": "ablate", "out_dir": str(out), "rows": len(table.rows),
           "accuracy": {t: s["accuracy"] for t, s in summary.items()}})
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    """``"2-8"`` (inclusive range) or ``"2,4,8"``."""
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = (int(p) for p in text.split("-", 1))
        return list(range(lo, hi + 1))
    return [int(p) for p in text.split(",") if p.strip()]


def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        raise ConfigError("trials must be >= 1")
    dims, sizes = _int_list(args.dims), _int_list(args.batch_sizes)
    if not dims or min(dims) < 2 or not sizes or min(sizes) < 2:
        raise ConfigError("dims and batch sizes must be >= 2")
    result = gradcheck(args.trials, dims, sizes, seed=args.seed, h=args.h)
    passed = result.passed(args.tolerance)
    print(f"max relative error {result.max_rel_error:.3e} "
          f"(elementwise {result.max_elementwise_error:.3e})", file=sys.stderr)
    _emit({"command": "gradcheck", "trials": result.trials,
           "max_rel_error": result.max_rel_error,
           "max_elementwise_error": result.max_elementwise_error,
           "tolerance": args.tolerance, "passed": passed, "worst": result.worst})
    return EXIT_OK if passed else EXIT_CHECK


def cmd_geometry(args) -> int:
    if not Path(args.checkpoint).exists():
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    params, meta = load_checkpoint(args.checkpoint)
    if args.csv:
        if not Path(args.csv).exists():
            raise ConfigError(f"data file not found: {args.csv}")
        dataset = load_csv(args.csv, args.label_column)
    elif args.config:
        dataset = load_config(args.config).load_dataset()
    else:
        raise ConfigError("pass --csv or --config to select the dataset")

    z = forward(params, dataset.features).z
    classes = _int_list(args.classes) if args.classes else None
    report = geometry_report(z, dataset.class_ids, classes=classes)
    names = [dataset.class_names[c] for c in report.classes]
    paths = report.write(args.out, class_names=names)
    _emit({"command": "geometry", "out_dir": str(args.out),
           "files": {k: str(v) for k, v in paths.items()},
           "scores": report.to_dict()["scores"]})
    return EXIT_OK


# parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="addloss", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add_config_args(sp):
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="dotted override, e.g. train.epochs=5 (repeatable)")
        sp.add_argument("--lambda", dest="lambda_", metavar="W",
                        help="loss weights, e.g. 1,1,1,1 or 1010")
        sp.add_argument("--out", help="output directory (overrides output.dir)")

    sp = sub.add_parser("train", help="train one model")
    add_config_args(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("ablate", help="sweep loss weights x seeds")
    add_config_args(sp)
    sp.add_argument("--lambdas", nargs="*", metavar="W",
                    help="weight configurations (default: 1000 0100 0010 0001 1010 1111)")
    sp.add_argument("--seeds", type=_int_list, help="e.g. 0,1,2 or 0-4")
    sp.add_argument("--parallel", type=int, default=1, metavar="N",
                    help="worker processes (default 1, sequential)")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    sp.add_argument("--dims", default="2-8")
    sp.add_argument("--batch-sizes", default="2-16")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--tolerance", type=float, default=1e-6)
    sp.add_argument("--h", type=float, default=1e-5)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("geometry", help="export mean/CV matrices for a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--csv", help="feature CSV")
    sp.add_argument("--label-column", help="categorical label column in the CSV")
    sp.add_argument("--config", help="experiment config whose data section to use")
    sp.add_argument("--classes", help="subset of class indices, e.g. 0-9")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_geometry)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NonFiniteLoss, NonFiniteGradient, NonFiniteActivation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AddLossError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
