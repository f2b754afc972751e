import collections
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_tkg.data import (
    DatasetBundle,
    DatasetFormatError,
    Quadruple,
    VocabularyError,
    augment_inverse,
    build_snapshots,
    build_time_filter,
    dataset_stats,
    inject_noise,
    load_dataset,
    load_quadruple_file,
    make_periodic_dataset,
    write_dataset,
)

ICEWS14 = Path(__file__).resolve().parents[1] / "data" / "ICEWS14"

quads_strategy = st.lists(
    st.tuples(st.integers(0, 6), st.integers(0, 3), st.integers(0, 6), st.integers(0, 5)).map(
        lambda x: Quadruple(*x)
    ),
    min_size=1,
    max_size=40,
)


def test_load_single_line_divides_by_interval(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("0\t1\t2\t24\n")
    assert load_quadruple_file(path, time_interval=24) == [Quadruple(0, 1, 2, 1)]


def test_load_empty_file(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("")
    assert load_quadruple_file(path) == []


def test_load_ignores_extra_columns_and_blank_lines(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("0\t1\t2\t48\t0\n\n3\t0\t1\t24\t0\n")
    assert load_quadruple_file(path, time_interval=24) == [Quadruple(0, 1, 2, 2), Quadruple(3, 0, 1, 1)]


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("0\t1\t2\t0\n0\t1\n")
    with pytest.raises(DatasetFormatError, match=":2:"):
        load_quadruple_file(path)


def test_id_outside_vocabulary(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("0\t0\t5\t0\n")
    with pytest.raises(VocabularyError):
        load_quadruple_file(path, ({"a": 0, "b": 1}, {"r": 0}))


def test_names_resolved_through_vocabulary(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("b\tr\ta\t0\n")
    assert load_quadruple_file(path, ({"a": 0, "b": 1}, {"r": 0})) == [Quadruple(1, 0, 0, 0)]


def test_timestamp_not_multiple_of_interval(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("0\t0\t1\t25\n")
    with pytest.raises(DatasetFormatError):
        load_quadruple_file(path, time_interval=24)


def test_dataset_roundtrip_through_files(tmp_path):
    bundle = make_periodic_dataset(num_timestamps=20)
    write_dataset(bundle, tmp_path, time_interval=24)
    loaded = load_dataset(tmp_path, time_interval=24)
    assert loaded.train == bundle.train and loaded.valid == bundle.valid and loaded.test == bundle.test
    assert loaded.num_entities == bundle.num_entities
    assert loaded.num_relations == bundle.num_relations


def test_overlapping_splits_rejected(tmp_path):
    (tmp_path / "train.txt").write_text("0\t0\t1\t5\n")
    (tmp_path / "valid.txt").write_text("0\t0\t1\t3\n")
    (tmp_path / "test.txt").write_text("0\t0\t1\t9\n")
    with pytest.raises(DatasetFormatError):
        load_dataset(tmp_path)


@pytest.mark.skipif(not ICEWS14.exists(), reason="ICEWS14 release not present under data/ICEWS14")
def test_icews14_statistics():
    bundle = load_dataset(ICEWS14, time_interval=24, name="ICEWS14")
    stats = dataset_stats(bundle)
    assert (stats["# Entity"], stats["# Predict"], stats["# Train"]) == (7128, 230, 63685)
    assert (stats["# Valid"], stats["# Test"]) == (13823, 13222)
    snaps = build_snapshots(bundle.train, bundle.num_entities)
    assert len(snaps) == len({q.time for q in bundle.train})


def test_augment_inverse_example():
    assert augment_inverse([Quadruple(0, 1, 2, 5)], 230) == [Quadruple(0, 1, 2, 5), Quadruple(2, 231, 0, 5)]
    assert augment_inverse([], 230) == []


def test_augment_inverse_rejects_out_of_range_relation():
    with pytest.raises(ValueError):
        augment_inverse([Quadruple(0, 3, 1, 0)], 3)


def test_augment_twice_quadruples_size():
    rng = np.random.default_rng(0)
    toy = {Quadruple(int(rng.integers(5)), int(rng.integers(3)), int(rng.integers(5)), int(rng.integers(4))) for _ in range(30)}
    toy = sorted(toy)[:10]
    once = augment_inverse(toy, 3)
    twice = augment_inverse(once, 6)
    assert len(twice) == 4 * len(toy)
    # enumerate the expected set directly
    expected = set()
    for s, r, o, t in toy:
        expected |= {(s, r, o, t), (o, r + 3, s, t), (o, r + 6, s, t), (s, r + 9, o, t)}
    assert set(twice) == expected


@given(quads_strategy)
def test_augment_inverse_doubles_and_is_injective(quads):
    out = augment_inverse(quads, 4)
    assert len(out) == 2 * len(quads)
    assert len(set(out)) == 2 * len(set(quads))


def test_build_snapshots_grouping():
    snaps = build_snapshots([Quadruple(0, 0, 1, 0), Quadruple(1, 0, 2, 2), Quadruple(2, 1, 1, 0)])
    assert [s.time for s in snaps] == [0, 2]
    assert [len(s) for s in snaps] == [2, 1]
    assert snaps[0].in_degree.tolist() == [0, 2, 0]


def test_single_fact_snapshot():
    (snap,) = build_snapshots([Quadruple(0, 0, 1, 3)])
    assert snap.in_degree[1] == 1 and snap.time == 3


def test_build_snapshots_empty():
    with pytest.raises(ValueError):
        build_snapshots([])


@given(quads_strategy)
def test_snapshots_roundtrip_multiset(quads):
    snaps = build_snapshots(quads)
    flat = [q for s in snaps for q in s.quadruples()]
    assert collections.Counter(flat) == collections.Counter(quads)
    assert [s.time for s in snaps] == sorted({q.time for q in quads})
    for s in snaps:
        assert np.array_equal(s.in_degree, np.bincount(s.dst, minlength=len(s.in_degree)))


def test_relation_incidence_is_unique_pairs():
    snaps = build_snapshots([Quadruple(0, 0, 1, 0), Quadruple(1, 0, 2, 0), Quadruple(0, 1, 0, 0)])
    rel, ent = snaps[0].relation_incidence
    assert sorted(zip(rel.tolist(), ent.tolist())) == [(0, 0), (0, 1), (0, 2), (1, 0)]


def test_time_filter_example():
    f = build_time_filter([Quadruple(0, 1, 2, 5), Quadruple(0, 1, 3, 5), Quadruple(0, 1, 2, 6)])
    assert f[(0, 1, 5)] == {2, 3} and f[(0, 1, 6)] == {2}


def test_time_filter_singletons_without_duplicates():
    quads = [Quadruple(i, 0, i + 1, i) for i in range(5)]
    assert all(len(v) == 1 for v in build_time_filter(quads).values())


def test_time_filter_matches_exhaustive_scan():
    bundle = make_periodic_dataset(num_timestamps=30, seed=3)
    noisy = DatasetBundle(
        inject_noise(bundle.train, 0.3, 1, bundle.num_entities),
        bundle.valid[:400],
        bundle.test,
        bundle.num_entities,
        bundle.num_relations,
    )
    index = build_time_filter(noisy)
    facts = augment_inverse(noisy.all_quadruples(), noisy.num_relations)
    keys = {(q.subject, q.relation, q.time) for q in facts}
    assert set(index) == keys
    for key in keys:
        assert index[key] == {q.object for q in facts if (q.subject, q.relation, q.time) == key}


@given(quads_strategy)
def test_filter_membership(quads):
    index = build_time_filter(quads)
    for q in quads:
        assert q.object in index[(q.subject, q.relation, q.time)]


def test_noise_rate_zero_identity():
    quads = make_periodic_dataset(num_timestamps=5).train
    assert inject_noise(quads, 0.0, 7) == quads


def test_noise_rate_one_two_entities_changes_everything():
    quads = [Quadruple(0, 0, i % 2, i) for i in range(10)]
    out = inject_noise(quads, 1.0, 3, num_entities=2)
    assert all(a.object != b.object for a, b in zip(quads, out))


def test_noise_exact_count_and_determinism():
    quads = [Quadruple(i % 7, i % 3, (i * 5) % 11, i) for i in range(100)]
    out = inject_noise(quads, 0.2, 11, num_entities=11)
    changed = [i for i, (a, b) in enumerate(zip(quads, out)) if a != b]
    assert len(changed) == 20
    assert all(quads[i]._replace(object=out[i].object) == out[i] for i in changed)
    assert inject_noise(quads, 0.2, 11, num_entities=11) == out
    assert inject_noise(quads, 0.2, 12, num_entities=11) != out


def test_noise_subject_slot():
    quads = [Quadruple(i % 7, 0, 1, i) for i in range(50)]
    out = inject_noise(quads, 0.5, 0, num_entities=11, slot="subject")
    changed = [(a, b) for a, b in zip(quads, out) if a != b]
    assert len(changed) == 25 and all(a.object == b.object and a.subject != b.subject for a, b in changed)


@pytest.mark.parametrize("rate", [-0.1, 1.5])
def test_noise_rate_out_of_range(rate):
    with pytest.raises(ValueError):
        inject_noise([Quadruple(0, 0, 1, 0)], rate, 0)


@settings(max_examples=50)
@given(quads_strategy, st.floats(0, 1), st.integers(0, 1000))
def test_noise_changes_floor_rate_n(quads, rate, seed):
    out = inject_noise(quads, rate, seed, num_entities=7)
    assert sum(a != b for a, b in zip(quads, out)) == int(np.floor(rate * len(quads) + 1e-9))
    assert out == inject_noise(quads, rate, seed, num_entities=7)


def test_periodic_dataset_shape():
    b = make_periodic_dataset()
    assert b.num_entities == 20 and b.num_relations == 4
    times = sorted({q.time for q in b.all_quadruples()})
    assert times == list(range(100))
    assert max(q.time for q in b.train) < min(q.time for q in b.valid) <= max(q.time for q in b.valid) < min(q.time for q in b.test)
    by_key = collections.defaultdict(set)
    for q in b.all_quadruples():
        by_key[(q.subject, q.relation, q.time % 5)].add(q.object)
    assert all(len(v) == 1 for v in by_key.values())
