"""Command-line entry point.

    causal-tkg <command> [--config FILE] [flag overrides]

Commands: prepare, train, eval, ablate, noise, sweep, grad-check, stats.
Exit status is 0 on success, 2 on a configuration or usage error and 1 on a
runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from . import experiments
from .checkpoint import load_model
from .config import ConfigError, TrainConfig, build_config, format_config, parse_config_text
from .data import (
    DatasetBundle,
    dataset_fingerprint,
    dataset_stats,
    format_stats_table,
    load_dataset,
    make_periodic_dataset,
    make_random_dataset,
    write_dataset,
)
from .evaluation import Evaluator
from .gradcheck import DEFAULT_TOLERANCE, gradient_check
from .model import build_model
from .training import Trainer

log = logging.getLogger("causal_tkg")

SYNTHETIC = {"periodic": make_periodic_dataset, "random": make_random_dataset}


@dataclass
class RunManifest:
    command: str
    config: Dict[str, object]
    dataset: Dict[str, object]
    seed: int
    artifacts: Dict[str, str] = field(default_factory=dict)
    argv: List[str] = field(default_factory=list)
    versions: Dict[str, str] = field(default_factory=dict)

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="causal-tkg", description="Causal-disentangled temporal KG extrapolation.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file, or a run manifest (.json) to replay")
    common.add_argument("--dataset", help="dataset preset name (ICEWS14, ..., periodic)")
    common.add_argument("--dataset-dir", dest="dataset_dir")
    common.add_argument("--dim", type=int)
    common.add_argument("--history-len", dest="history_len", type=int)
    common.add_argument("--layers", type=int)
    common.add_argument("--lambda1", type=float)
    common.add_argument("--lambda2", type=float)
    common.add_argument("--lambda3", type=float)
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--ablate", choices=("td", "ce"), help="drop the time vectors or the causal module")
    common.add_argument("--noise-rate", dest="noise_rate", type=float)
    common.add_argument("--out")
    common.add_argument("--set", dest="extra", action="append", default=[], metavar="KEY=VALUE",
                        help="any other config key; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("train", parents=[common], help="train, checkpoint the best validation epoch, report test")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", help="defaults to <out>/best.ntar")
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p = sub.add_parser("prepare", parents=[common], help="validate a dataset directory or write a synthetic one")
    p.add_argument("--synthetic", choices=sorted(SYNTHETIC), help="generate this dataset into --dataset-dir")
    sub.add_parser("stats", parents=[common], help="print the dataset statistics row")
    p = sub.add_parser("ablate", parents=[common], help="full / without_td / without_ce table")
    p.add_argument("--variants", default=",".join(experiments.VARIANTS))
    p = sub.add_parser("noise", parents=[common], help="label-noise robustness curve")
    p.add_argument("--rates", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--seeds", type=_ints, default=None)
    p = sub.add_parser("sweep", parents=[common], help="vary one loss weight")
    p.add_argument("--which", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--grid", type=_floats, default=[round(0.1 * i, 1) for i in range(11)])
    p = sub.add_parser("grad-check", parents=[common], help="finite-difference gradient check on a toy instance")
    p.add_argument("--selector", default="all", help="'all' or a parameter-name prefix")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    return parser


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    """defaults < dataset preset < config file < flags."""
    file_values: Dict[str, object] = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            try:
                file_values = dict(json.loads(text)["config"])
            except (ValueError, KeyError, TypeError):
                raise ConfigError(f"{path} is not a run manifest") from None
        else:
            file_values = parse_config_text(text)
    overrides: Dict[str, object] = {
        key: getattr(args, key)
        for key in ("dataset", "dataset_dir", "dim", "history_len", "layers", "lambda1", "lambda2", "lambda3",
                    "epochs", "lr", "seed", "noise_rate", "out")
    }
    for item in args.extra:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value.strip()
    if args.ablate == "td":
        overrides["without_td"] = True
    elif args.ablate == "ce":
        overrides["without_ce"] = True
    return build_config(file_values, overrides)


def load_bundle(config: TrainConfig) -> tuple[DatasetBundle, Dict[str, object]]:
    """The configured dataset and its fingerprint; synthetic presets are generated in memory."""
    if config.dataset_dir:
        bundle = load_dataset(config.dataset_dir, config.time_interval, config.time_unit or None, config.dataset or None)
        return bundle, {"source": str(config.dataset_dir), **dataset_fingerprint(config.dataset_dir)}
    if config.dataset in SYNTHETIC:
        bundle = SYNTHETIC[config.dataset](seed=0)
        digest = hashlib.sha256(repr((bundle.train, bundle.valid, bundle.test)).encode()).hexdigest()
        return bundle, {"source": f"synthetic:{config.dataset}", "sha256": digest}
    raise ConfigError("no dataset: pass --dataset-dir or a synthetic --dataset (periodic, random)")


def _manifest(command: str, config: TrainConfig, dataset: Dict[str, object], argv: Sequence[str], **artifacts) -> RunManifest:
    return RunManifest(
        command=command,
        config=config.to_dict(),
        dataset=dataset,
        seed=config.seed,
        artifacts={k: str(v) for k, v in artifacts.items()},
        argv=list(argv),
        versions={"python": platform.python_version(), "torch": torch.__version__, "numpy": np.__version__},
    )


def _prepare_out(config: TrainConfig, command: str, dataset: Dict[str, object], argv, **artifacts) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(config), encoding="utf-8")
    _manifest(command, config, dataset, argv, **artifacts).write(out / "manifest.json")
    return out


def cmd_train(args, config: TrainConfig, argv) -> int:
    bundle, fingerprint = load_bundle(config)
    out = Path(config.out)
    checkpoint = out / "best.ntar"
    _prepare_out(config, "train", fingerprint, argv, checkpoint=checkpoint, metrics=out / "metrics.txt")
    trainer = Trainer(bundle, config)

    def on_epoch(epoch, losses, valid):
        print(f"epoch={epoch} " + " ".join(f"{k}={v:.6f}" for k, v in losses.items()), flush=True)
        print(valid.format(), flush=True)

    result = trainer.fit(checkpoint=checkpoint, on_epoch=on_epoch)
    lines = [result.valid.format() if result.valid else "split=valid mrr=nan", result.test.format()]
    print(f"best_epoch={result.best_epoch}")
    for line in lines:
        print(line)
    (out / "metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_eval(args, config: TrainConfig, argv) -> int:
    bundle, _ = load_bundle(config)
    path = Path(args.checkpoint) if args.checkpoint else Path(config.out) / "best.ntar"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    model = build_model(bundle.num_entities, bundle.num_relations_augmented, config, bundle.time_span())
    load_model(model, path)
    print(Evaluator(bundle, config.history_len).evaluate(model, args.split).format())
    return 0


def cmd_prepare(args, config: TrainConfig, argv) -> int:
    if args.synthetic:
        if not config.dataset_dir:
            raise ConfigError("--synthetic needs --dataset-dir to write into")
        write_dataset(SYNTHETIC[args.synthetic](seed=config.seed), config.dataset_dir, config.time_interval)
    if not config.dataset_dir:
        raise ConfigError("prepare needs --dataset-dir")
    bundle, fingerprint = load_bundle(config)
    stats = dataset_stats(bundle)
    table = format_stats_table([stats])
    directory = Path(config.dataset_dir)
    (directory / "stats.tsv").write_text(table + "\n", encoding="utf-8")
    (directory / "fingerprint.json").write_text(json.dumps(fingerprint, indent=2, sort_keys=True) + "\n")
    print(table)
    return 0


def cmd_stats(args, config: TrainConfig, argv) -> int:
    bundle, _ = load_bundle(config)
    print(format_stats_table([dataset_stats(bundle)]))
    return 0


def cmd_ablate(args, config: TrainConfig, argv) -> int:
    bundle, fingerprint = load_bundle(config)
    out = _prepare_out(config, "ablate", fingerprint, argv, table=Path(config.out) / "ablation.tsv")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    rows = experiments.run_ablation(bundle, config, variants)
    experiments.write_table(rows, out / "ablation.tsv")
    print(experiments.format_table(rows))
    return 0


def cmd_noise(args, config: TrainConfig, argv) -> int:
    bundle, fingerprint = load_bundle(config)
    out = Path(config.out)
    _prepare_out(config, "noise", fingerprint, argv, table=out / "noise.tsv", series=out / "noise_series.csv")
    rows = experiments.run_noise_suite(bundle, config, args.rates, args.seeds)
    experiments.write_table(rows, out / "noise.tsv")
    experiments.write_series(rows, "rate", "variant", out / "noise_series.csv")
    print(experiments.format_table(rows))
    return 0


def cmd_sweep(args, config: TrainConfig, argv) -> int:
    bundle, fingerprint = load_bundle(config)
    out = Path(config.out)
    name = f"sweep_lambda{args.which}"
    _prepare_out(config, "sweep", fingerprint, argv, table=out / f"{name}.tsv", series=out / f"{name}_series.csv")
    rows = experiments.sweep_lambdas(bundle, config, args.which, args.grid)
    experiments.write_table(rows, out / f"{name}.tsv")
    experiments.write_series(rows, "value", "lambda", out / f"{name}_series.csv")
    print(experiments.format_table(rows))
    return 0


def cmd_grad_check(args, config: TrainConfig, argv) -> int:
    report = gradient_check(args.selector, args.tolerance, seed=config.seed)
    print(report.format())
    return 0 if report.passed else 1


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "prepare": cmd_prepare,
    "stats": cmd_stats,
    "ablate": cmd_ablate,
    "noise": cmd_noise,
    "sweep": cmd_sweep,
    "grad-check": cmd_grad_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[args.command](args, config, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # report and map to the runtime-failure status
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
