"""Reverse-mode gradients of the training loss against central finite differences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import torch

from .config import TrainConfig
from .data import DatasetBundle, augment_inverse, build_snapshots, make_random_dataset
from .encoder import history_window
from .model import CausalTKGModel, build_model

FD_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


@dataclass
class TensorCheck:
    name: str
    numel: int
    rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    tensors: List[TensorCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        # an empty parameter list passes vacuously
        return all(t.passed for t in self.tensors)

    @property
    def max_rel_error(self) -> float:
        return max((t.rel_error for t in self.tensors), default=0.0)

    @property
    def failing(self) -> List[str]:
        return [t.name for t in self.tensors if not t.passed]

    def format(self) -> str:
        lines = [
            f"{'ok  ' if t.passed else 'FAIL'} {t.name} numel={t.numel} rel_error={t.rel_error:.3e}"
            for t in self.tensors
        ]
        lines.append(
            f"gradcheck {'passed' if self.passed else 'failed'}: tensors={len(self.tensors)} "
            f"max_rel_error={self.max_rel_error:.3e} tolerance={self.tolerance:g}"
        )
        return "\n".join(lines)


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor, floor: float = 1e-12) -> float:
    """||a - n||_2 / max(||a||_2, ||n||_2, floor), computed per tensor."""
    scale = max(analytic.norm().item(), numeric.norm().item(), floor)
    return (analytic - numeric).norm().item() / scale


def check_gradients(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[Tuple[str, torch.nn.Parameter]],
    tolerance: float = DEFAULT_TOLERANCE,
    step: float = FD_STEP,
    corrupt: Optional[str] = None,
) -> GradCheckReport:
    """Compare autograd against central differences for every listed tensor.

    ``loss_fn`` must be deterministic. ``corrupt`` names a tensor whose analytic
    gradient is scaled by 1.1 before comparison, to confirm the check can fail.
    """
    tensors = [p for _, p in params]
    for p in tensors:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors, allow_unused=True) if tensors else []
    report = GradCheckReport(tolerance)
    with torch.no_grad():
        for (name, p), g in zip(params, grads):
            analytic = torch.zeros_like(p) if g is None else g.detach().clone()
            if name == corrupt:
                analytic = analytic * 1.1
            numeric = torch.zeros_like(p)
            flat, num_flat = p.view(-1), numeric.view(-1)
            for i in range(flat.numel()):
                saved = flat[i].item()
                flat[i] = saved + step
                up = loss_fn().item()
                flat[i] = saved - step
                down = loss_fn().item()
                flat[i] = saved
                num_flat[i] = (up - down) / (2 * step)
            err = relative_error(analytic, numeric)
            report.tensors.append(TensorCheck(name, p.numel(), err, err < tolerance))
    return report


def toy_pipeline(
    dim: int = 8,
    num_entities: int = 5,
    num_relations: int = 3,
    history_len: int = 2,
    channels: int = 4,
    seed: int = 0,
    **overrides,
) -> Tuple[CausalTKGModel, Callable[[], torch.Tensor]]:
    """Double-precision model on a random toy graph and a deterministic total-loss closure.

    The MI stop-gradient is off by default: finite differences always see that
    path, so the check compares against the undetached loss.
    """
    overrides.setdefault("mi_detach_encoder", False)
    bundle: DatasetBundle = make_random_dataset(
        num_entities, num_relations, num_timestamps=history_len + 2, facts_per_timestamp=4, split=(1.0, 1.0), seed=seed
    )
    config = TrainConfig(
        dim=dim, layers=2, history_len=history_len, channels=channels, seed=seed, dtype="float64", **overrides
    )
    model = build_model(bundle.num_entities, bundle.num_relations_augmented, config, bundle.time_span())
    snaps = build_snapshots(augment_inverse(bundle.train, bundle.num_relations), bundle.num_entities)
    target = snaps[-1]
    window = history_window(snaps, target.time, history_len)

    def loss_fn() -> torch.Tensor:
        gen = torch.Generator().manual_seed(seed)
        state = model.encode(window)
        return model.loss(state, target, gen).total

    return model, loss_fn


def gradient_check(
    selector: str = "all",
    tolerance: float = DEFAULT_TOLERANCE,
    corrupt: Optional[str] = None,
    **toy_kwargs,
) -> GradCheckReport:
    """Run the check on the toy pipeline; ``selector`` is ``all`` or a parameter-name prefix
    such as ``encoder``, ``disent``, ``club``, ``timevec`` or ``decoder``."""
    model, loss_fn = toy_pipeline(**toy_kwargs)
    params = [(n, p) for n, p in model.named_parameters() if selector == "all" or n.startswith(selector)]
    return check_gradients(loss_fn, params, tolerance, corrupt=corrupt)
