"""Quadruple datasets: loading, inverse augmentation, snapshots, filters, noise.

Files follow the usual TKG release layout: ``train.txt``, ``valid.txt`` and
``test.txt`` with tab-separated ``subject relation object timestamp`` columns
(extra columns ignored), optionally accompanied by ``entity2id.txt`` and
``relation2id.txt`` vocabularies (``name \\t id``).
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np


class DatasetFormatError(ValueError):
    """A dataset line could not be parsed."""


class VocabularyError(KeyError):
    """An entity or relation id is not covered by the vocabulary."""


class Quadruple(NamedTuple):
    subject: int
    relation: int
    object: int
    time: int


@dataclass
class Snapshot:
    """All facts sharing one timestamp, stored as parallel index arrays."""

    time: int
    src: np.ndarray
    rel: np.ndarray
    dst: np.ndarray
    in_degree: np.ndarray

    @property
    def edges(self) -> List[Tuple[int, int, int]]:
        return list(zip(self.src.tolist(), self.rel.tolist(), self.dst.tolist()))

    def __len__(self) -> int:
        return len(self.src)

    @cached_property
    def relation_incidence(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unique (relation, entity) pairs where the entity is subject or object of an edge with that relation."""
        if len(self.src) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        pairs = np.concatenate(
            [np.stack([self.rel, self.src], 1), np.stack([self.rel, self.dst], 1)], axis=0
        )
        pairs = np.unique(pairs, axis=0)
        return pairs[:, 0].copy(), pairs[:, 1].copy()

    def quadruples(self) -> List[Quadruple]:
        return [Quadruple(s, r, o, self.time) for s, r, o in self.edges]


@dataclass
class DatasetBundle:
    train: List[Quadruple]
    valid: List[Quadruple]
    test: List[Quadruple]
    num_entities: int
    num_relations: int
    time_unit: str = "1"
    name: str = "dataset"

    @property
    def num_relations_augmented(self) -> int:
        return 2 * self.num_relations

    def split(self, name: str) -> List[Quadruple]:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_quadruples(self) -> List[Quadruple]:
        return [*self.train, *self.valid, *self.test]

    def time_span(self) -> Tuple[int, int]:
        times = [q.time for q in self.train]
        return min(times), max(times)


FilterIndex = Dict[Tuple[int, int, int], Set[int]]


def _read_vocab(path: Path) -> Dict[str, int]:
    vocab: Dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise DatasetFormatError(f"{path}:{lineno}: expected 'name<TAB>id'")
            try:
                vocab[parts[0]] = int(parts[1])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: id is not an integer") from exc
    return vocab


def _resolve(token: str, vocab: Optional[Mapping[str, int]], kind: str, where: str) -> int:
    if vocab is None:
        try:
            value = int(token)
        except ValueError as exc:
            raise DatasetFormatError(f"{where}: {kind} {token!r} is not an integer") from exc
        if value < 0:
            raise DatasetFormatError(f"{where}: negative {kind} id {value}")
        return value
    if token in vocab:
        return vocab[token]
    try:
        value = int(token)
    except ValueError:
        raise VocabularyError(f"{where}: {kind} {token!r} not in vocabulary") from None
    if not 0 <= value < len(vocab):
        raise VocabularyError(f"{where}: {kind} id {value} outside vocabulary of size {len(vocab)}")
    return value


def load_quadruple_file(
    path: str | Path,
    id_maps: Optional[Tuple[Optional[Mapping[str, int]], Optional[Mapping[str, int]]]] = None,
    time_interval: int = 1,
) -> List[Quadruple]:
    """Parse one split file into quadruples with time given in interval units.

    ``id_maps`` is an optional ``(entity_vocab, relation_vocab)`` pair. Raw
    timestamps must be multiples of ``time_interval``.
    """
    path = Path(path)
    ent_vocab, rel_vocab = id_maps if id_maps is not None else (None, None)
    if time_interval <= 0:
        raise ValueError("time_interval must be positive")
    quads: List[Quadruple] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 4:
                parts = line.split()
            where = f"{path.name}:{lineno}"
            if len(parts) < 4:
                raise DatasetFormatError(f"{where}: expected at least 4 columns, got {len(parts)}")
            s = _resolve(parts[0].strip(), ent_vocab, "entity", where)
            r = _resolve(parts[1].strip(), rel_vocab, "relation", where)
            o = _resolve(parts[2].strip(), ent_vocab, "entity", where)
            try:
                raw_t = int(parts[3].strip())
            except ValueError as exc:
                raise DatasetFormatError(f"{where}: timestamp {parts[3]!r} is not an integer") from exc
            if raw_t % time_interval:
                raise DatasetFormatError(
                    f"{where}: timestamp {raw_t} is not a multiple of interval {time_interval}"
                )
            quads.append(Quadruple(s, r, o, raw_t // time_interval))
    return quads


def load_dataset(
    directory: str | Path, time_interval: int = 1, time_unit: str | None = None, name: str | None = None
) -> DatasetBundle:
    """Load ``train/valid/test.txt`` (plus optional vocabularies) from a directory.

    Timestamps are re-based so the earliest training timestamp is 0.
    """
    directory = Path(directory)
    ent_vocab = rel_vocab = None
    if (directory / "entity2id.txt").exists():
        ent_vocab = _read_vocab(directory / "entity2id.txt")
    if (directory / "relation2id.txt").exists():
        rel_vocab = _read_vocab(directory / "relation2id.txt")
    splits = {
        split: load_quadruple_file(directory / f"{split}.txt", (ent_vocab, rel_vocab), time_interval)
        for split in ("train", "valid", "test")
    }
    all_quads = [q for qs in splits.values() for q in qs]
    if not splits["train"]:
        raise DatasetFormatError(f"{directory}/train.txt holds no facts")
    base = min(q.time for q in splits["train"])
    splits = {k: [q._replace(time=q.time - base) for q in v] for k, v in splits.items()}
    num_entities = len(ent_vocab) if ent_vocab else 1 + max(max(q.subject, q.object) for q in all_quads)
    num_relations = len(rel_vocab) if rel_vocab else 1 + max(q.relation for q in all_quads)
    bundle = DatasetBundle(
        train=splits["train"],
        valid=splits["valid"],
        test=splits["test"],
        num_entities=num_entities,
        num_relations=num_relations,
        time_unit=time_unit or str(time_interval),
        name=name or directory.name,
    )
    check_bundle(bundle)
    return bundle


def check_bundle(bundle: DatasetBundle) -> None:
    """Validate id ranges and the chronological train < valid < test ordering."""
    for split in ("train", "valid", "test"):
        for q in bundle.split(split):
            if not (0 <= q.subject < bundle.num_entities and 0 <= q.object < bundle.num_entities):
                raise VocabularyError(f"{split}: entity id out of range in {q}")
            if not 0 <= q.relation < bundle.num_relations:
                raise VocabularyError(f"{split}: relation id out of range in {q}")
    spans = [(s, [q.time for q in bundle.split(s)]) for s in ("train", "valid", "test")]
    spans = [(s, (min(t), max(t))) for s, t in spans if t]
    for (a, (_, a_max)), (b, (b_min, _)) in zip(spans, spans[1:]):
        if a_max >= b_min:
            raise DatasetFormatError(f"{a} timestamps overlap or follow {b} timestamps")


def augment_inverse(quads: Iterable[Quadruple], num_relations: int) -> List[Quadruple]:
    """Append ``(o, r + num_relations, s, t)`` for every fact."""
    quads = list(quads)
    for q in quads:
        if not 0 <= q.relation < num_relations:
            raise ValueError(f"relation {q.relation} >= num_relations {num_relations}")
    inverse = [Quadruple(q.object, q.relation + num_relations, q.subject, q.time) for q in quads]
    return quads + inverse


def build_snapshots(quads: Sequence[Quadruple], num_entities: Optional[int] = None) -> List[Snapshot]:
    """Group facts by timestamp, sorted by time."""
    if not quads:
        raise ValueError("build_snapshots needs at least one quadruple")
    if num_entities is None:
        num_entities = 1 + max(max(q.subject, q.object) for q in quads)
    arr = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    order = np.argsort(arr[:, 3], kind="stable")
    arr = arr[order]
    times, starts = np.unique(arr[:, 3], return_index=True)
    bounds = list(starts[1:]) + [len(arr)]
    snapshots = []
    for t, lo, hi in zip(times, starts, bounds):
        chunk = arr[lo:hi]
        dst = chunk[:, 2].copy()
        snapshots.append(
            Snapshot(
                time=int(t),
                src=chunk[:, 0].copy(),
                rel=chunk[:, 1].copy(),
                dst=dst,
                in_degree=np.bincount(dst, minlength=num_entities).astype(np.int64),
            )
        )
    return snapshots


def build_time_filter(bundle_or_quads: DatasetBundle | Iterable[Quadruple]) -> FilterIndex:
    """Map (subject, relation, time) to every true object at exactly that time.

    A bundle is inverse-augmented first so subject queries are covered; a raw
    quadruple iterable is indexed as given.
    """
    if isinstance(bundle_or_quads, DatasetBundle):
        quads = augment_inverse(bundle_or_quads.all_quadruples(), bundle_or_quads.num_relations)
    else:
        quads = bundle_or_quads
    index: FilterIndex = defaultdict(set)
    for s, r, o, t in quads:
        index[(s, r, t)].add(o)
    return dict(index)


def inject_noise(
    train: Sequence[Quadruple],
    rate: float,
    seed: int,
    num_entities: Optional[int] = None,
    slot: str = "object",
) -> List[Quadruple]:
    """Replace the object (or subject) of ``floor(rate * len(train))`` facts by a different random entity."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"noise rate must lie in [0, 1], got {rate}")
    if slot not in ("object", "subject"):
        raise ValueError(f"slot must be 'object' or 'subject', got {slot!r}")
    out = list(train)
    n_corrupt = int(np.floor(rate * len(out) + 1e-9))
    if n_corrupt == 0:
        return out
    if num_entities is None:
        num_entities = 1 + max(max(q.subject, q.object) for q in out)
    if num_entities < 2:
        raise ValueError("noise injection needs at least two entities")
    rng = np.random.default_rng(seed)
    positions = rng.choice(len(out), size=n_corrupt, replace=False)
    # offset in [1, n-1] guarantees a different entity, uniformly
    offsets = rng.integers(1, num_entities, size=n_corrupt)
    for pos, off in zip(positions.tolist(), offsets.tolist()):
        q = out[pos]
        if slot == "object":
            out[pos] = q._replace(object=(q.object + off) % num_entities)
        else:
            out[pos] = q._replace(subject=(q.subject + off) % num_entities)
    return out


def dataset_fingerprint(directory: str | Path) -> Dict[str, object]:
    """File sizes and a combined SHA-256 over the dataset files."""
    directory = Path(directory)
    digest = hashlib.sha256()
    sizes = {}
    for name in ("train.txt", "valid.txt", "test.txt", "entity2id.txt", "relation2id.txt"):
        path = directory / name
        if not path.exists():
            continue
        data = path.read_bytes()
        sizes[name] = len(data)
        digest.update(name.encode())
        digest.update(data)
    return {"sizes": sizes, "sha256": digest.hexdigest()}


def dataset_stats(bundle: DatasetBundle) -> Dict[str, object]:
    return {
        "Dataset": bundle.name,
        "# Entity": bundle.num_entities,
        "# Predict": bundle.num_relations,
        "# Train": len(bundle.train),
        "# Valid": len(bundle.valid),
        "# Test": len(bundle.test),
        "Time interval": bundle.time_unit,
    }


def format_stats_table(rows: Sequence[Mapping[str, object]]) -> str:
    header = list(rows[0].keys())
    lines = ["\t".join(header)]
    lines += ["\t".join(str(row[h]) for h in header) for row in rows]
    return "\n".join(lines)


def write_dataset(bundle: DatasetBundle, directory: str | Path, time_interval: int = 1) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split in ("train", "valid", "test"):
        with open(directory / f"{split}.txt", "w", encoding="utf-8") as fh:
            for s, r, o, t in bundle.split(split):
                fh.write(f"{s}\t{r}\t{o}\t{t * time_interval}\n")


def make_periodic_dataset(
    num_entities: int = 20,
    num_relations: int = 4,
    period: int = 5,
    num_timestamps: int = 100,
    split: Tuple[float, float] = (0.8, 0.9),
    seed: int = 0,
) -> DatasetBundle:
    """Deterministic periodic TKG.

    At time ``t`` every entity emits one fact per relation whose object is a
    fixed seeded permutation indexed by ``(t mod period, relation)``, so each
    query has exactly one answer in either direction and the pattern repeats
    with the given period.
    """
    rng = np.random.default_rng(seed)
    table = np.stack(
        [np.stack([rng.permutation(num_entities) for _ in range(num_relations)]) for _ in range(period)]
    )
    quads = [
        Quadruple(s, r, int(table[t % period, r, s]), t)
        for t in range(num_timestamps)
        for r in range(num_relations)
        for s in range(num_entities)
    ]
    t_valid = int(round(split[0] * num_timestamps))
    t_test = int(round(split[1] * num_timestamps))
    return DatasetBundle(
        train=[q for q in quads if q.time < t_valid],
        valid=[q for q in quads if t_valid <= q.time < t_test],
        test=[q for q in quads if q.time >= t_test],
        num_entities=num_entities,
        num_relations=num_relations,
        time_unit="1",
        name="periodic",
    )


def make_random_dataset(
    num_entities: int = 10,
    num_relations: int = 3,
    num_timestamps: int = 10,
    facts_per_timestamp: int = 20,
    split: Tuple[float, float] = (0.6, 0.8),
    seed: int = 0,
) -> DatasetBundle:
    """Uniformly random facts (duplicates allowed), split chronologically.

    Duplicate and multi-answer queries are common at small sizes, which is what
    filtered evaluation needs to be exercised against.
    """
    rng = np.random.default_rng(seed)
    quads = [
        Quadruple(int(s), int(r), int(o), t)
        for t in range(num_timestamps)
        for s, r, o in zip(
            rng.integers(num_entities, size=facts_per_timestamp),
            rng.integers(num_relations, size=facts_per_timestamp),
            rng.integers(num_entities, size=facts_per_timestamp),
        )
    ]
    t_valid = int(round(split[0] * num_timestamps))
    t_test = int(round(split[1] * num_timestamps))
    return DatasetBundle(
        train=[q for q in quads if q.time < t_valid],
        valid=[q for q in quads if t_valid <= q.time < t_test],
        test=[q for q in quads if q.time >= t_test],
        num_entities=num_entities,
        num_relations=num_relations,
        name="random",
    )
