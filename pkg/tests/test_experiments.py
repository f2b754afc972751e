import csv
import math

import pytest
import torch

import causal_tkg.model as model_module
from causal_tkg.config import ConfigError, TrainConfig
from causal_tkg.data import make_random_dataset
from causal_tkg.evaluation import Evaluator
from causal_tkg.experiments import (
    METRICS,
    VARIANTS,
    club_gaussian_check,
    format_table,
    gaussian_pairs,
    run_ablation,
    run_noise_suite,
    run_variant,
    sweep_lambdas,
    write_series,
    write_table,
)


@pytest.fixture(scope="module")
def bundle():
    return make_random_dataset(num_entities=8, num_relations=2, num_timestamps=6, facts_per_timestamp=8, seed=0)


@pytest.fixture
def config():
    return TrainConfig(dim=8, channels=4, history_len=2, layers=1, lr=0.003, epochs=2, seed=0)


def test_ablation_table_is_complete(bundle, config):
    rows = run_ablation(bundle, config)
    assert [r["variant"] for r in rows] == list(VARIANTS) == ["full", "without_td", "without_ce"]
    for row in rows:
        assert set(row) == {"variant", *METRICS, "best_epoch"}
        assert 0 < row["mrr"] <= 1 and row["hits1"] <= row["hits3"] <= row["hits10"]


def test_ablation_rejects_unknown_variant(bundle, config):
    with pytest.raises(ConfigError):
        run_ablation(bundle, config, ["full", "no_such"])


def test_single_value_grid_is_one_training_run(bundle, config):
    rows = sweep_lambdas(bundle, config, 2, [0.25])
    direct = run_variant(bundle, config.replace(lambda2=0.25)).test.as_dict()
    assert len(rows) == 1
    assert rows[0] == {"lambda": "lambda2", "value": 0.25, **{k: direct[k] for k in METRICS}}


def test_zero_lambda3_equals_run_without_intervention_loss(bundle, config, monkeypatch):
    swept = sweep_lambdas(bundle, config, 3, [0.0])[0]
    evaluator = Evaluator(bundle, config.history_len)
    # the intervention permutations are still drawn, so the random stream is unchanged
    monkeypatch.setattr(model_module, "loss_intervention", lambda p, o: p.new_zeros(()))
    disabled = run_variant(bundle, config.replace(lambda3=0.0), evaluator)
    assert {k: swept[k] for k in METRICS} == {k: disabled.test.as_dict()[k] for k in METRICS}


def test_sweep_errors(bundle, config):
    with pytest.raises(ConfigError):
        sweep_lambdas(bundle, config, 4, [0.1])
    with pytest.raises(ConfigError):
        sweep_lambdas(bundle, config, 1, [])


def test_noise_suite_rows(bundle, config):
    rows = run_noise_suite(bundle, config.replace(epochs=1), [0.0, 0.5], seeds=[0, 1])
    assert [(r["rate"], r["variant"]) for r in rows] == [
        (0.0, "full"),
        (0.0, "without_ce"),
        (0.5, "full"),
        (0.5, "without_ce"),
    ]
    for row in rows:
        assert len(row["mrr_per_seed"]) == 2
        assert row["mrr"] == pytest.approx(sum(row["mrr_per_seed"]) / 2)
    assert rows[0]["degradation"] == rows[1]["degradation"] == 0.0
    assert rows[2]["degradation"] == pytest.approx(rows[0]["mrr"] - rows[2]["mrr"])


def test_noise_without_clean_rate_has_nan_degradation(bundle, config):
    rows = run_noise_suite(bundle, config.replace(epochs=1), [0.1], variants=("full",))
    assert math.isnan(rows[0]["degradation"])


@pytest.mark.parametrize("rates", [[], [0.6], [-0.1]])
def test_noise_rates_validated(bundle, config, rates):
    with pytest.raises(ConfigError):
        run_noise_suite(bundle, config, rates)


def test_table_and_series_files(tmp_path):
    rows = [
        {"rate": 0.0, "variant": "full", "mrr": 0.5, "mrr_per_seed": [0.5, 0.5]},
        {"rate": 0.2, "variant": "full", "mrr": 0.25, "mrr_per_seed": [0.2, 0.3]},
    ]
    with open(write_table(rows, tmp_path / "t.tsv"), newline="") as fh:
        table = list(csv.reader(fh, delimiter="\t"))
    assert table == [
        ["rate", "variant", "mrr", "mrr_per_seed"],
        ["0.000000", "full", "0.500000", "0.500000,0.500000"],
        ["0.200000", "full", "0.250000", "0.200000,0.300000"],
    ]
    series = write_series(rows, "rate", "variant", tmp_path / "s.csv").read_text().splitlines()
    assert series == ["variant,rate,mrr", "full,0.000000,0.500000", "full,0.200000,0.250000"]
    assert format_table(rows).splitlines()[0].split() == ["rate", "variant", "mrr", "mrr_per_seed"]
    assert format_table([]) == ""


def test_gaussian_pairs_correlation():
    x, y = gaussian_pairs(0.8, 20_000, seed=0)
    assert x.dtype == torch.float64 and x.shape == (20_000, 1)
    assert torch.corrcoef(torch.cat([x, y], 1).T)[0, 1].item() == pytest.approx(0.8, abs=0.01)


def test_club_check_reports_true_mi():
    out = club_gaussian_check(0.6, n=2000, steps=300)
    assert out["true_mi"] == pytest.approx(-0.5 * math.log(1 - 0.36))
    # with the exact conditional the Gaussian bound is rho^2 / (1 - rho^2) = 0.5625
    assert out["club"] >= out["true_mi"] - 0.05
