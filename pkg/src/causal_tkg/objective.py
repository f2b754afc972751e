"""Training losses and their weighted combination."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

PROB_FLOOR = 1e-12


class NonFiniteLossError(FloatingPointError):
    def __init__(self, term: str, context: str = ""):
        self.term = term
        super().__init__(f"non-finite loss term {term!r}" + (f" ({context})" if context else ""))


def _nll(p: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    targets = torch.as_tensor(targets, dtype=torch.long, device=p.device)
    if targets.numel() and (targets.min() < 0 or targets.max() >= p.shape[-1]):
        raise IndexError(f"target id outside [0, {p.shape[-1]})")
    picked = p.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp(min=PROB_FLOOR)).mean()


def loss_causal(p_C: torch.Tensor, targets) -> torch.Tensor:
    """Mean negative log-likelihood of the true objects."""
    return _nll(p_C, targets)


def loss_intervention(p_I: torch.Tensor, targets) -> torch.Tensor:
    return _nll(p_I, targets)


def loss_confounding(p_N: torch.Tensor) -> torch.Tensor:
    """Mean over rows of KL(uniform || p_N)."""
    V = p_N.shape[-1]
    log_u = -math.log(V)
    kl = (log_u - torch.log(p_N.clamp(min=PROB_FLOOR))).mean(dim=-1)
    return kl.mean()


@dataclass
class LossBreakdown:
    l_causal: torch.Tensor
    l_confounding: torch.Tensor
    l_mi: torch.Tensor
    l_intervention: torch.Tensor
    total: torch.Tensor
    lambda1: float
    lambda2: float
    lambda3: float

    def as_dict(self) -> dict[str, float]:
        return {
            "l_causal": self.l_causal.item(),
            "l_confounding": self.l_confounding.item(),
            "l_mi": self.l_mi.item(),
            "l_intervention": self.l_intervention.item(),
            "total": self.total.item(),
        }

    def format(self) -> str:
        return " ".join(f"{k}={v:.6f}" for k, v in self.as_dict().items())


def total_loss(
    l_causal,
    l_confounding,
    l_mi,
    l_intervention,
    lambda1: float = 0.5,
    lambda2: float = 0.5,
    lambda3: float = 0.3,
    context: str = "",
) -> LossBreakdown:
    parts = {
        "l_causal": torch.as_tensor(l_causal),
        "l_confounding": torch.as_tensor(l_confounding),
        "l_mi": torch.as_tensor(l_mi),
        "l_intervention": torch.as_tensor(l_intervention),
    }
    for name, value in parts.items():
        if not torch.isfinite(value).all():
            raise NonFiniteLossError(name, context)
    total = (
        parts["l_causal"]
        + lambda1 * parts["l_confounding"]
        + lambda2 * parts["l_mi"]
        + lambda3 * parts["l_intervention"]
    )
    return LossBreakdown(**parts, total=total, lambda1=lambda1, lambda2=lambda2, lambda3=lambda3)
