"""Chronological snapshot training with early stopping on validation MRR."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import torch

from .checkpoint import save_model
from .config import TrainConfig
from .data import DatasetBundle, augment_inverse, build_snapshots, inject_noise
from .encoder import history_window
from .evaluation import Evaluator, RankOutcome
from .model import CausalTKGModel, build_model

log = logging.getLogger(__name__)


@dataclass
class FitResult:
    epoch_losses: List[Dict[str, float]] = field(default_factory=list)
    valid_history: List[float] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_mrr: float = float("-inf")
    test: Optional[RankOutcome] = None
    valid: Optional[RankOutcome] = None


class Trainer:
    """Owns one model and its optimizers for a single training run."""

    def __init__(self, bundle: DatasetBundle, config: TrainConfig, evaluator: Optional[Evaluator] = None):
        self.bundle = bundle
        self.config = config
        train = bundle.train
        if config.noise_rate > 0:
            train = inject_noise(train, config.noise_rate, config.seed, bundle.num_entities, config.noise_slot)
        self.train_quads = train
        self.snapshots = build_snapshots(augment_inverse(train, bundle.num_relations), bundle.num_entities)
        self.model: CausalTKGModel = build_model(
            bundle.num_entities, bundle.num_relations_augmented, config, bundle.time_span()
        )
        betas = (config.adam_beta1, config.adam_beta2)
        self.optimizer = torch.optim.Adam(self.model.main_parameters(), lr=config.lr, betas=betas, eps=config.adam_eps)
        self.club_optimizer = torch.optim.Adam(
            self.model.club_parameters(), lr=config.effective_club_lr, betas=betas, eps=config.adam_eps
        )
        self.generator = torch.Generator().manual_seed(config.seed)
        # evaluation filters are built from the clean data
        self.evaluator = evaluator or Evaluator(bundle, config.history_len)
        self.epoch = 0

    def train_step(self, index: int) -> Dict[str, float]:
        cfg = self.config
        snap = self.snapshots[index]
        window = history_window(self.snapshots[:index], snap.time, cfg.history_len)
        self.model.train()
        state = self.model.encode(window)
        parts = self.model.decompose(state)
        if parts is not None:
            self.model.club_update(parts, snap, self.club_optimizer, cfg.club_steps)
        self.optimizer.zero_grad()
        breakdown = self.model.loss(state, snap, self.generator, parts, context=f"epoch={self.epoch} t={snap.time}")
        breakdown.total.backward()
        if cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(self.model.main_parameters(), cfg.grad_clip)
        self.optimizer.step()
        return breakdown.as_dict()

    def train_epoch(self) -> Dict[str, float]:
        """One pass over the training snapshots in time order; returns mean loss terms."""
        rows = [self.train_step(i) for i in range(len(self.snapshots))]
        self.epoch += 1
        return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}

    def fit(
        self,
        epochs: Optional[int] = None,
        checkpoint: Optional[Path] = None,
        on_epoch: Optional[Callable[[int, Dict[str, float], RankOutcome], None]] = None,
    ) -> FitResult:
        cfg = self.config
        epochs = cfg.epochs if epochs is None else epochs
        result = FitResult()
        best_state = copy.deepcopy(self.model.state_dict())
        stale = 0
        for epoch in range(epochs):
            losses = self.train_epoch()
            result.epoch_losses.append(losses)
            valid = self.evaluator.evaluate(self.model, "valid")
            result.valid_history.append(valid.mrr)
            line = " ".join(f"{k}={v:.6f}" for k, v in losses.items())
            log.info("epoch=%d %s valid_mrr=%.4f", epoch, line, valid.mrr)
            if on_epoch is not None:
                on_epoch(epoch, losses, valid)
            if valid.mrr > result.best_valid_mrr:
                result.best_valid_mrr = valid.mrr
                result.best_epoch = epoch
                result.valid = valid
                best_state = copy.deepcopy(self.model.state_dict())
                stale = 0
                if checkpoint is not None:
                    save_model(self.model, checkpoint)
            else:
                stale += 1
                if cfg.patience > 0 and stale >= cfg.patience:
                    break
        self.model.load_state_dict(best_state)
        if checkpoint is not None and result.best_epoch < 0:
            save_model(self.model, checkpoint)
        result.test = self.evaluator.evaluate(self.model, "test")
        return result


def train_and_evaluate(bundle: DatasetBundle, config: TrainConfig, evaluator: Optional[Evaluator] = None) -> FitResult:
    return Trainer(bundle, config, evaluator).fit()
