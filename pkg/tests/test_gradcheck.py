import pytest
import torch

from causal_tkg.gradcheck import check_gradients, gradient_check, relative_error, toy_pipeline


def test_zero_parameter_model_passes_vacuously():
    report = check_gradients(lambda: torch.tensor(1.0), [])
    assert report.passed and report.tensors == [] and report.max_rel_error == 0.0


def test_relative_error_definition():
    a, n = torch.tensor([3.0, 4.0]), torch.tensor([3.0, 4.5])
    assert relative_error(a, n) == pytest.approx(0.5 / n.norm().item())
    assert relative_error(torch.zeros(2), torch.zeros(2)) == 0.0


def test_quadratic_passes_and_corruption_fails():
    w = torch.nn.Parameter(torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64))
    v = torch.nn.Parameter(torch.tensor([0.3], dtype=torch.float64))
    loss = lambda: (w**2).sum() * v.sum() + w.sum()  # noqa: E731
    assert check_gradients(loss, [("w", w), ("v", v)]).passed
    report = check_gradients(loss, [("w", w), ("v", v)], corrupt="v")
    assert report.failing == ["v"]
    assert report.tensors[1].rel_error == pytest.approx(0.1 / 1.1, rel=1e-4)


def test_toy_loss_is_deterministic():
    _, loss_fn = toy_pipeline()
    assert loss_fn().item() == loss_fn().item()


def test_toy_pipeline_is_double_precision_and_small():
    model, _ = toy_pipeline()
    assert all(p.dtype == torch.float64 for p in model.parameters())
    assert model.num_entities == 5 and model.num_relations == 6 and model.config.history_len == 2


@pytest.mark.parametrize("selector", ["decoder", "timevec", "disent.relation"])
def test_selected_modules_pass(selector):
    report = gradient_check(selector)
    assert report.tensors and all(t.name.startswith(selector) for t in report.tensors)
    assert report.passed, report.format()


def test_corrupted_tensor_reported():
    report = gradient_check("timevec", corrupt="timevec.alpha_s")
    assert report.failing == ["timevec.alpha_s"]
    assert "FAIL timevec.alpha_s" in report.format() and "gradcheck failed" in report.format()
