"""Causal / confounding split of evolved representations, CLUB mutual-information
bound between the two parts, and the random-addition intervention."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

LOGVAR_CLAMP = 10.0


@dataclass
class DisentangledPair:
    causal: torch.Tensor
    confounding: torch.Tensor
    mask_causal: torch.Tensor
    mask_confounding: torch.Tensor


class MaskNet(nn.Module):
    """Row-wise MLP producing a (causal, confounding) logit pair per dimension."""

    def __init__(self, dim: int, negative_slope: float = 0.2, causal_bias: float = 0.0):
        super().__init__()
        self.hidden = nn.Linear(dim, 2 * dim)
        self.out = nn.Linear(2 * dim, 2 * dim)
        self.negative_slope = negative_slope
        self.dim = dim
        if causal_bias:
            # start with the causal logit ahead, so the mask initially keeps most of each dimension
            with torch.no_grad():
                self.out.bias[:dim] += causal_bias

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.leaky_relu(self.hidden(x), self.negative_slope)
        return self.out(h).view(*x.shape[:-1], 2, self.dim)


def decouple(X: torch.Tensor, mask_net: MaskNet) -> DisentangledPair:
    logits = mask_net(X)
    if not torch.isfinite(logits).all():
        raise FloatingPointError("non-finite mask logits")
    masks = torch.softmax(logits, dim=-2)
    m_c, m_n = masks.unbind(dim=-2)
    return DisentangledPair(X * m_c, X * m_n, m_c, m_n)


class ClubEstimator(nn.Module):
    """Diagonal-Gaussian variational conditional q(x_n | x_c) for the CLUB bound."""

    def __init__(self, dim: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or 2 * dim
        self.mean_net = nn.Sequential(nn.Linear(dim, hidden), nn.ReLU(), nn.Linear(hidden, dim))
        self.logvar_net = nn.Sequential(nn.Linear(dim, hidden), nn.ReLU(), nn.Linear(hidden, dim), nn.Tanh())

    def params(self, x_c: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        # tanh output scaled to the [-10, 10] log-variance range
        return self.mean_net(x_c), LOGVAR_CLAMP * self.logvar_net(x_c)

    def log_density(self, x_c: torch.Tensor, x_n: torch.Tensor) -> torch.Tensor:
        """Per-row log q(x_n | x_c)."""
        mean, logvar = self.params(x_c)
        return -0.5 * (
            ((x_n - mean) ** 2) / logvar.exp() + logvar + math.log(2 * math.pi)
        ).sum(dim=-1)


def club_loglik(q: ClubEstimator, X_C: torch.Tensor, X_N: torch.Tensor) -> torch.Tensor:
    if X_C.shape[0] != X_N.shape[0]:
        raise ValueError("row counts of causal and confounding parts differ")
    return q.log_density(X_C, X_N).mean()


def _check_perm(perm: torch.Tensor, n: int) -> torch.Tensor:
    perm = torch.as_tensor(perm, dtype=torch.long)
    if perm.shape != (n,) or not torch.equal(torch.sort(perm).values, torch.arange(n)):
        raise ValueError("perm must be a permutation of the row indices")
    return perm


def club_mi_upper(q: ClubEstimator, X_C: torch.Tensor, X_N: torch.Tensor, perm: torch.Tensor) -> torch.Tensor:
    """mean log q(x_n[i] | x_c[i]) - mean log q(x_n[i] | x_c[perm[i]])."""
    if X_C.shape[0] != X_N.shape[0]:
        raise ValueError("row counts of causal and confounding parts differ")
    perm = _check_perm(perm, X_C.shape[0]).to(X_C.device)
    positive = q.log_density(X_C, X_N)
    negative = q.log_density(X_C[perm], X_N)
    return (positive - negative).mean()


def random_permutation(n: int, seed: int | torch.Generator) -> torch.Tensor:
    gen = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(int(seed))
    return torch.randperm(n, generator=gen)


def intervene(X_C: torch.Tensor, X_N: torch.Tensor, perm: torch.Tensor | None = None, seed: int | None = None) -> torch.Tensor:
    """Add a row-permuted copy of the confounding part to the causal part.

    Pass ``perm`` explicitly, or a ``seed`` from which a uniform permutation is drawn.
    """
    if X_C.shape != X_N.shape:
        raise ValueError(f"shape mismatch: {tuple(X_C.shape)} vs {tuple(X_N.shape)}")
    if perm is None:
        if seed is None:
            raise ValueError("intervene needs a permutation or a seed")
        perm = random_permutation(X_C.shape[0], seed)
    perm = _check_perm(perm, X_C.shape[0]).to(X_C.device)
    return X_C + X_N[perm]


def fit_club(
    X_C: torch.Tensor, X_N: torch.Tensor, steps: int = 1000, lr: float = 0.01, hidden: int | None = None, seed: int = 0
) -> ClubEstimator:
    """Fit a fresh estimator by full-batch maximum likelihood on fixed samples."""
    torch.manual_seed(seed)
    q = ClubEstimator(X_C.shape[-1], hidden).to(X_C.dtype)
    opt = torch.optim.Adam(q.parameters(), lr=lr)
    for _ in range(steps):
        opt.zero_grad()
        (-club_loglik(q, X_C, X_N)).backward()
        opt.step()
    return q
