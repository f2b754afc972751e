"""Time-interval vectors and the convolutional (ConvTransE-style) scoring head."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

KERNEL_HEIGHT = 4
KERNEL_WIDTH = 3


class TimeVectors(nn.Module):
    """Affine time features t_s = a_s * t + b_s and t_l = a_l * t + b_l."""

    def __init__(self, dim: int):
        super().__init__()
        bound = 1.0 / math.sqrt(dim)
        self.alpha_s = nn.Parameter(torch.empty(dim).uniform_(-bound, bound))
        self.beta_s = nn.Parameter(torch.empty(dim).uniform_(-bound, bound))
        self.alpha_l = nn.Parameter(torch.empty(dim).uniform_(-bound, bound))
        self.beta_l = nn.Parameter(torch.empty(dim).uniform_(-bound, bound))

    def forward(self, t_norm: float | torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        t = torch.as_tensor(t_norm, dtype=self.alpha_s.dtype, device=self.alpha_s.device)
        if t.dim() == 1:
            t = t.unsqueeze(-1)
        return self.alpha_s * t + self.beta_s, self.alpha_l * t + self.beta_l


def time_vectors(t_norm: float | torch.Tensor, params: TimeVectors) -> tuple[torch.Tensor, torch.Tensor]:
    return params(t_norm)


class ConvTransEDecoder(nn.Module):
    """Stack (subject, relation, t_s, t_l) as a 4 x d grid, convolve with ``channels``
    4x3 kernels (same padding along d), project back to d, rectify and match
    against every candidate entity row."""

    def __init__(self, dim: int, channels: int = 50, dropout: float = 0.0, norm: str = "none"):
        super().__init__()
        self.dim = dim
        self.channels = channels
        self.kernels = nn.Parameter(torch.empty(channels, KERNEL_HEIGHT, KERNEL_WIDTH))
        self.kernel_bias = nn.Parameter(torch.zeros(channels))
        self.fc = nn.Linear(channels * dim, dim)
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()
        self.norm = {"none": nn.Identity, "layer": lambda: nn.LayerNorm(dim), "batch": lambda: nn.BatchNorm1d(dim)}[norm]()
        fan_in = KERNEL_HEIGHT * KERNEL_WIDTH
        nn.init.uniform_(self.kernels, -1 / math.sqrt(fan_in), 1 / math.sqrt(fan_in))

    def hidden(self, e_s: torch.Tensor, r: torch.Tensor, t_s: torch.Tensor, t_l: torch.Tensor) -> torch.Tensor:
        batch = torch.broadcast_shapes(e_s.shape, r.shape, t_s.shape, t_l.shape)
        if batch[-1] != self.dim:
            raise ValueError(f"expected width {self.dim}, got {batch[-1]}")
        grid = torch.stack([x.expand(batch) for x in (e_s, r, t_s, t_l)], dim=-2)
        squeeze = grid.dim() == 2
        if squeeze:
            grid = grid.unsqueeze(0)
        feat = F.conv1d(grid, self.kernels, self.kernel_bias, padding=KERNEL_WIDTH // 2)
        feat = self.dropout(feat.flatten(1))
        pre = self.fc(feat)
        if pre.shape[0] > 1 or not self.training:
            pre = self.norm(pre)
        h = F.relu(pre)
        return h.squeeze(0) if squeeze else h

    def forward(self, e_s, r, t_s, t_l, E_channel: torch.Tensor) -> torch.Tensor:
        if E_channel.shape[-1] != self.dim:
            raise ValueError(f"candidate matrix width {E_channel.shape[-1]} != {self.dim}")
        return self.hidden(e_s, r, t_s, t_l) @ E_channel.T


def conv_transe_score(e_s, r, t_s, t_l, E_channel, dec: ConvTransEDecoder) -> torch.Tensor:
    return dec(e_s, r, t_s, t_l, E_channel)


def predict_distribution(scores: torch.Tensor) -> torch.Tensor:
    return torch.softmax(scores, dim=-1)
