"""Time-aware filtered ranking and MRR / Hits@k."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np
import torch

from .data import DatasetBundle, FilterIndex, augment_inverse, build_snapshots, build_time_filter
from .encoder import history_window


class HistoryLeakError(AssertionError):
    """A snapshot at or after the query time reached the encoder."""


@dataclass
class RankOutcome:
    ranks: np.ndarray
    raw_ranks: Optional[np.ndarray] = None
    split: str = ""
    queries: Optional[np.ndarray] = None

    @property
    def mrr(self) -> float:
        return float(np.mean(1.0 / self.ranks)) if len(self.ranks) else 0.0

    def hits(self, k: int) -> float:
        return float(np.mean(self.ranks <= k)) if len(self.ranks) else 0.0

    @property
    def hits1(self) -> float:
        return self.hits(1)

    @property
    def hits3(self) -> float:
        return self.hits(3)

    @property
    def hits10(self) -> float:
        return self.hits(10)

    def as_dict(self) -> Dict[str, float]:
        return {"mrr": self.mrr, "hits1": self.hits1, "hits3": self.hits3, "hits10": self.hits10}

    def format(self) -> str:
        vals = " ".join(f"{k}={v:.4f}" for k, v in self.as_dict().items())
        return f"split={self.split} {vals}"


def rank_from_scores(scores: np.ndarray, true_object: int, filtered: Iterable[int] = ()) -> int:
    """1 + number of unfiltered competitors scoring at least as high (ties count against)."""
    scores = np.asarray(scores, dtype=np.float64).copy()
    target = scores[true_object]
    for e in filtered:
        if e != true_object:
            scores[e] = -np.inf
    scores[true_object] = -np.inf
    return 1 + int(np.sum(scores >= target))


def rank_query(
    query: tuple[int, int, int],
    true_object: int,
    scores: np.ndarray,
    filter_index: Optional[FilterIndex] = None,
) -> int:
    s, r, t = query
    filtered = filter_index.get((s, r, t), set()) if filter_index is not None else set()
    return rank_from_scores(scores, true_object, filtered)


def batch_ranks(scores: torch.Tensor, targets: torch.Tensor, filter_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Vectorised pessimistic ranks; ``filter_mask[i, e]`` marks competitors to drop."""
    target_scores = scores.gather(1, targets.unsqueeze(1))
    beats = scores >= target_scores
    beats.scatter_(1, targets.unsqueeze(1), False)
    if filter_mask is not None:
        beats &= ~filter_mask
    return 1 + beats.sum(dim=1)


def _filter_mask(queries: np.ndarray, num_entities: int, filter_index: FilterIndex) -> torch.Tensor:
    mask = torch.zeros(len(queries), num_entities, dtype=torch.bool)
    for i, (s, r, o, t) in enumerate(queries.tolist()):
        others = filter_index.get((s, r, t), ())
        for e in others:
            if e != o:
                mask[i, e] = True
    return mask


class Evaluator:
    """Scores every query of a split against ground-truth history from all earlier data."""

    def __init__(self, bundle: DatasetBundle, history_len: int, filter_index: Optional[FilterIndex] = None):
        self.bundle = bundle
        self.history_len = history_len
        self.num_entities = bundle.num_entities
        self.history = build_snapshots(
            augment_inverse(bundle.all_quadruples(), bundle.num_relations), bundle.num_entities
        )
        self.filter_index = filter_index if filter_index is not None else build_time_filter(bundle)
        self._queries: Dict[str, Dict[int, np.ndarray]] = {}

    def queries(self, split: str) -> Dict[int, np.ndarray]:
        if split not in self._queries:
            quads = augment_inverse(self.bundle.split(split), self.bundle.num_relations)
            by_time: Dict[int, list] = defaultdict(list)
            for q in quads:
                by_time[q.time].append(q)
            self._queries[split] = {t: np.asarray(v, dtype=np.int64) for t, v in sorted(by_time.items())}
        return self._queries[split]

    @torch.no_grad()
    def evaluate(self, model, split: str, with_raw: bool = False) -> RankOutcome:
        was_training = model.training
        model.eval()
        ranks: List[torch.Tensor] = []
        raw: List[torch.Tensor] = []
        seen: List[np.ndarray] = []
        for t, queries in self.queries(split).items():
            window = history_window(self.history, t, self.history_len)
            if any(s.time >= t for s in window):
                raise HistoryLeakError(f"history for t={t} contains a snapshot at or after t")
            state = model.encode(window)
            scores = model.score(state, queries[:, 0], queries[:, 1], t)
            targets = torch.as_tensor(queries[:, 2], dtype=torch.long)
            seen.append(queries)
            mask = _filter_mask(queries, self.num_entities, self.filter_index)
            ranks.append(batch_ranks(scores, targets, mask))
            if with_raw:
                raw.append(batch_ranks(scores, targets))
        model.train(was_training)
        out = RankOutcome(
            torch.cat(ranks).numpy() if ranks else np.zeros(0, dtype=np.int64),
            torch.cat(raw).numpy() if raw else None,
            split,
            np.concatenate(seen) if seen else np.zeros((0, 4), dtype=np.int64),
        )
        if len(out.ranks) and out.mrr < 1.0 / out.ranks.max() - 1e-12:
            raise AssertionError("MRR fell below 1 / max rank")
        return out


def evaluate(model, bundle: DatasetBundle, split: str, history_len: int, filter_index: Optional[FilterIndex] = None) -> RankOutcome:
    return Evaluator(bundle, history_len, filter_index).evaluate(model, split)
