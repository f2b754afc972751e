"""Experiment suites: variant ablation, label-noise robustness and loss-weight sweeps.

Every suite trains independent runs that share one clean evaluator, and returns
plain row dicts that ``write_table`` / ``write_series`` turn into files.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import torch

from .config import ConfigError, TrainConfig
from .data import DatasetBundle
from .disentangle import club_mi_upper, fit_club
from .evaluation import Evaluator
from .training import FitResult, Trainer

log = logging.getLogger(__name__)

VARIANTS: Dict[str, Dict[str, bool]] = {
    "full": {"without_td": False, "without_ce": False},
    "without_td": {"without_td": True, "without_ce": False},
    "without_ce": {"without_td": False, "without_ce": True},
}
METRICS = ("mrr", "hits1", "hits3", "hits10")


def run_variant(bundle: DatasetBundle, config: TrainConfig, evaluator: Optional[Evaluator] = None) -> FitResult:
    return Trainer(bundle, config, evaluator).fit()


def _metrics(result: FitResult) -> Dict[str, float]:
    return {k: result.test.as_dict()[k] for k in METRICS}


def run_ablation(
    bundle: DatasetBundle,
    config: TrainConfig,
    variants: Sequence[str] = tuple(VARIANTS),
    evaluator: Optional[Evaluator] = None,
) -> List[Dict[str, object]]:
    """Train each variant with the same seed; one row per variant with test metrics."""
    evaluator = evaluator or Evaluator(bundle, config.history_len)
    rows = []
    for name in variants:
        if name not in VARIANTS:
            raise ConfigError(f"unknown variant {name!r}")
        result = run_variant(bundle, config.replace(**VARIANTS[name]), evaluator)
        row = {"variant": name, **_metrics(result), "best_epoch": result.best_epoch}
        log.info("ablation %s", " ".join(f"{k}={v}" for k, v in row.items()))
        rows.append(row)
    return rows


def run_noise_suite(
    bundle: DatasetBundle,
    config: TrainConfig,
    rates: Iterable[float],
    seeds: Optional[Sequence[int]] = None,
    variants: Sequence[str] = ("full", "without_ce"),
    evaluator: Optional[Evaluator] = None,
) -> List[Dict[str, object]]:
    """Corrupt the training split at each rate and score on the clean test split.

    One row per (rate, variant) holding seed-averaged metrics; ``degradation`` is
    the drop in mean MRR from the same variant's rate-0 row when that rate is run.
    """
    rates = list(rates)
    if not rates or any(not 0 <= r <= 0.5 for r in rates):
        raise ConfigError("noise rates must be a nonempty subset of [0, 0.5]")
    seeds = list(seeds) if seeds else [config.seed]
    evaluator = evaluator or Evaluator(bundle, config.history_len)
    rows = []
    for rate in rates:
        for name in variants:
            per_seed = []
            for seed in seeds:
                cfg = config.replace(noise_rate=rate, seed=seed, **VARIANTS[name])
                per_seed.append(_metrics(run_variant(bundle, cfg, evaluator)))
            row: Dict[str, object] = {"rate": rate, "variant": name}
            row.update({k: float(np.mean([m[k] for m in per_seed])) for k in METRICS})
            row["mrr_per_seed"] = [m["mrr"] for m in per_seed]
            log.info("noise rate=%s variant=%s mrr=%.4f", rate, name, row["mrr"])
            rows.append(row)
    clean = {row["variant"]: row["mrr"] for row in rows if row["rate"] == 0}
    for row in rows:
        row["degradation"] = clean[row["variant"]] - row["mrr"] if row["variant"] in clean else float("nan")
    return rows


def sweep_lambdas(
    bundle: DatasetBundle,
    config: TrainConfig,
    which: int,
    grid: Sequence[float],
    evaluator: Optional[Evaluator] = None,
) -> List[Dict[str, object]]:
    """Vary one loss weight over ``grid`` with the other two held at their config values."""
    if which not in (1, 2, 3):
        raise ConfigError("which must be 1, 2 or 3")
    grid = list(grid)
    if not grid:
        raise ConfigError("sweep grid is empty")
    evaluator = evaluator or Evaluator(bundle, config.history_len)
    key = f"lambda{which}"
    rows = []
    for value in grid:
        result = run_variant(bundle, config.replace(**{key: float(value)}), evaluator)
        rows.append({"lambda": key, "value": float(value), **_metrics(result)})
    return rows


def gaussian_pairs(rho: float, n: int, seed: int = 0) -> tuple[torch.Tensor, torch.Tensor]:
    """n draws of a standard bivariate Gaussian with correlation rho, as (n, 1) float64 columns."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = rho * x + math.sqrt(1 - rho**2) * rng.standard_normal(n)
    return torch.tensor(x).view(-1, 1), torch.tensor(y).view(-1, 1)


def club_gaussian_check(rho: float, n: int = 10_000, seed: int = 0, steps: int = 500) -> Dict[str, float]:
    """Fit the estimator on correlated Gaussian pairs and report its bound next to the true MI."""
    x, y = gaussian_pairs(rho, n, seed)
    q = fit_club(x, y, steps=steps, hidden=16, seed=seed)
    perm = torch.randperm(n, generator=torch.Generator().manual_seed(seed + 1))
    with torch.no_grad():
        bound = club_mi_upper(q, x, y, perm).item()
    return {"rho": rho, "true_mi": -0.5 * math.log(1 - rho**2), "club": bound}


def _cell(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, (list, tuple)):
        return ",".join(_cell(v) for v in value)
    return str(value)


def write_table(rows: List[Dict[str, object]], path: str | Path) -> Path:
    """Tab-separated table with a header row taken from the first row's keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        columns = list(rows[0]) if rows else []
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])
    return path


def write_series(rows: List[Dict[str, object]], x: str, group: str, path: str | Path, y: str = "mrr") -> Path:
    """Plot-ready series: comma-separated ``group,x,y`` lines, one per row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([group, x, y])
        for row in rows:
            writer.writerow([row[group], _cell(row[x]), _cell(row[y])])
    return path


def format_table(rows: List[Dict[str, object]]) -> str:
    if not rows:
        return ""
    columns = list(rows[0])
    cells = [columns] + [[_cell(row[c]) for c in columns] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells)
