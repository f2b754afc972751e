"""Recurrent evolution encoder: relation-aware graph convolution per snapshot
plus GRU updates carrying entity and relation state across snapshots."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import Snapshot

NEGATIVE_SLOPE = 0.2


class NumericError(FloatingPointError):
    pass


@dataclass
class EvolvedState:
    entity: torch.Tensor
    relation: torch.Tensor
    time: int | None = None


def compose_phi(e_s: torch.Tensor, r: torch.Tensor, mode: str = "add") -> torch.Tensor:
    """Compose subject and relation embeddings into an edge message."""
    if e_s.shape[-1] != r.shape[-1]:
        raise ValueError(f"dimension mismatch: {e_s.shape[-1]} vs {r.shape[-1]}")
    if mode == "add":
        return e_s + r
    # TODO(conv-phi): 1-D convolution composition behind the `phi` config key
    raise NotImplementedError(f"composition mode {mode!r} is not implemented")


def _uniform_(t: torch.Tensor, width: int) -> torch.Tensor:
    bound = 1.0 / math.sqrt(width)
    with torch.no_grad():
        return t.uniform_(-bound, bound)


class RGCNLayer(nn.Module):
    """One degree-normalised relational convolution with a self-loop transform."""

    def __init__(self, dim: int, negative_slope: float = NEGATIVE_SLOPE, phi: str = "add"):
        super().__init__()
        self.W1 = nn.Parameter(torch.empty(dim, dim))
        self.W2 = nn.Parameter(torch.empty(dim, dim))
        self.negative_slope = negative_slope
        self.phi = phi
        _uniform_(self.W1, dim)
        _uniform_(self.W2, dim)

    def forward(self, snapshot: Snapshot, E_in: torch.Tensor, R: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(E_in).all():
            raise NumericError("non-finite entity embeddings entering graph convolution")
        out = E_in @ self.W2.T
        if len(snapshot):
            src = torch.as_tensor(snapshot.src, device=E_in.device)
            rel = torch.as_tensor(snapshot.rel, device=E_in.device)
            dst = torch.as_tensor(snapshot.dst, device=E_in.device)
            deg = torch.as_tensor(snapshot.in_degree, device=E_in.device, dtype=E_in.dtype)
            norm = 1.0 / deg.clamp(min=1.0)[dst]
            msg = compose_phi(E_in[src], R[rel], self.phi) @ self.W1.T
            out = out.index_add(0, dst, msg * norm.unsqueeze(1))
        return F.leaky_relu(out, self.negative_slope)


class GRUCell(nn.Module):
    """Row-wise GRU cell; an update gate of 0 keeps the previous hidden state.

    h' = (1 - z) * h + z * n, with r, z sigmoid gates and n = tanh(W_n x + b_n + r * (U_n h + c_n)).
    """

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.weight_ih = nn.Parameter(torch.empty(3 * hidden_dim, input_dim))
        self.weight_hh = nn.Parameter(torch.empty(3 * hidden_dim, hidden_dim))
        self.bias_ih = nn.Parameter(torch.zeros(3 * hidden_dim))
        self.bias_hh = nn.Parameter(torch.zeros(3 * hidden_dim))
        _uniform_(self.weight_ih, hidden_dim)
        _uniform_(self.weight_hh, hidden_dim)

    def forward(self, h: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        if h.shape[-1] != self.hidden_dim or x.shape[-1] != self.input_dim or h.shape[0] != x.shape[0]:
            raise ValueError(
                f"GRU shape mismatch: hidden {tuple(h.shape)}, input {tuple(x.shape)}, "
                f"expected (*, {self.hidden_dim}) and (*, {self.input_dim})"
            )
        gx = x @ self.weight_ih.T + self.bias_ih
        gh = h @ self.weight_hh.T + self.bias_hh
        xr, xz, xn = gx.chunk(3, dim=-1)
        hr, hz, hn = gh.chunk(3, dim=-1)
        reset = torch.sigmoid(xr + hr)
        update = torch.sigmoid(xz + hz)
        candidate = torch.tanh(xn + reset * hn)
        return (1.0 - update) * h + update * candidate


def relation_pool(E_prev: torch.Tensor, snapshot: Snapshot, R0: torch.Tensor) -> torch.Tensor:
    """Mean of incident entity rows per relation, concatenated with the static relation rows.

    Relations without an edge in the snapshot get a zero pooled half.
    """
    num_rel, dim = R0.shape
    pooled = E_prev.new_zeros(num_rel, dim)
    rel_idx, ent_idx = snapshot.relation_incidence
    if len(rel_idx):
        rel_t = torch.as_tensor(rel_idx, device=E_prev.device)
        ent_t = torch.as_tensor(ent_idx, device=E_prev.device)
        pooled = pooled.index_add(0, rel_t, E_prev[ent_t])
        counts = np.bincount(rel_idx, minlength=num_rel).clip(min=1)
        pooled = pooled / torch.as_tensor(counts, dtype=E_prev.dtype, device=E_prev.device).unsqueeze(1)
    return torch.cat([pooled, R0], dim=1)


class EvolutionEncoder(nn.Module):
    def __init__(
        self,
        num_entities: int,
        num_relations_augmented: int,
        dim: int,
        num_layers: int = 2,
        negative_slope: float = NEGATIVE_SLOPE,
        phi: str = "add",
        normalize: bool = False,
    ):
        super().__init__()
        self.normalize = normalize
        if dim <= 0 or num_layers < 1:
            raise ValueError("need dim > 0 and at least one layer")
        self.num_entities = num_entities
        self.num_relations = num_relations_augmented
        self.dim = dim
        self.E0 = nn.Parameter(_uniform_(torch.empty(num_entities, dim), dim))
        self.R0 = nn.Parameter(_uniform_(torch.empty(num_relations_augmented, dim), dim))
        self.layers = nn.ModuleList(RGCNLayer(dim, negative_slope, phi) for _ in range(num_layers))
        self.entity_gru = GRUCell(dim, dim)
        self.relation_gru = GRUCell(2 * dim, dim)

    def initial_state(self) -> EvolvedState:
        E0 = F.normalize(self.E0, dim=1) if self.normalize else self.E0
        return EvolvedState(E0, self.R0, None)

    def step(self, state: EvolvedState, snapshot: Snapshot) -> EvolvedState:
        rel_input = relation_pool(state.entity, snapshot, self.R0)
        R_t = self.relation_gru(state.relation, rel_input)
        h = state.entity
        for layer in self.layers:
            h = layer(snapshot, h, R_t)
        E_t = self.entity_gru(state.entity, h)
        if self.normalize:
            E_t = F.normalize(E_t, dim=1)
        return EvolvedState(E_t, R_t, snapshot.time)

    def forward(self, snapshots: Sequence[Snapshot]) -> EvolvedState:
        """Roll the state forward from (E0, R0) through the given history window."""
        state = self.initial_state()
        last = None
        for snap in snapshots:
            if last is not None and snap.time <= last:
                raise ValueError("history snapshots must be strictly time-ordered")
            last = snap.time
            state = self.step(state, snap)
        return state


def encode_history(snapshots: Sequence[Snapshot], encoder: EvolutionEncoder) -> EvolvedState:
    return encoder(snapshots)


def history_window(snapshots: List[Snapshot], t: int, m: int) -> List[Snapshot]:
    """The (at most) ``m`` latest snapshots strictly before time ``t``."""
    before = [s for s in snapshots if s.time < t]
    return before[-m:] if m > 0 else []
