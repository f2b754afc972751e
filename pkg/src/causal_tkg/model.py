"""Full model: evolution encoder, disentangler, CLUB estimators and decoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .config import TrainConfig
from .data import Snapshot
from .decoder import ConvTransEDecoder, TimeVectors, predict_distribution
from .disentangle import ClubEstimator, DisentangledPair, MaskNet, club_loglik, club_mi_upper, decouple, intervene
from .encoder import EvolutionEncoder, EvolvedState
from .objective import LossBreakdown, loss_causal, loss_confounding, loss_intervention, total_loss

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class Decomposition:
    entity: DisentangledPair
    relation: DisentangledPair


def _restricted_perm(n: int, active: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Permutation of ``range(n)`` that shuffles only the ``active`` rows."""
    perm = torch.arange(n)
    perm[active] = active[torch.randperm(len(active), generator=gen)]
    return perm


class CausalTKGModel(nn.Module):
    def __init__(self, num_entities: int, num_relations_augmented: int, config: TrainConfig, time_span=(0, 1)):
        super().__init__()
        d = config.dim
        self.config = config
        self.num_entities = num_entities
        self.num_relations = num_relations_augmented
        self.encoder = EvolutionEncoder(
            num_entities, num_relations_augmented, d, config.layers, config.negative_slope, config.phi, config.normalize_entities
        )
        self.disent = nn.ModuleDict(
            {name: MaskNet(d, config.negative_slope, config.mask_causal_bias) for name in ("entity", "relation")}
        )
        self.club = nn.ModuleDict({"entity": ClubEstimator(d), "relation": ClubEstimator(d)})
        self.timevec = TimeVectors(d)
        self.decoder = ConvTransEDecoder(d, config.channels, config.dropout, config.decoder_norm)
        self.t_min, self.t_max = time_span

    @property
    def uses_ce(self) -> bool:
        return not self.config.without_ce

    def main_parameters(self):
        """Everything except the CLUB estimators, which have their own optimizer."""
        return [p for name, p in self.named_parameters() if not name.startswith("club.")]

    def club_parameters(self):
        return list(self.club.parameters())

    def normalized_time(self, t: int) -> float:
        span = self.t_max - self.t_min
        return (t - self.t_min) / (span if span > 0 else 1)

    def time_features(self, t: int) -> tuple[torch.Tensor, torch.Tensor]:
        t_s, t_l = self.timevec(self.normalized_time(t))
        if self.config.without_td:
            return torch.zeros_like(t_s), torch.zeros_like(t_l)
        return t_s, t_l

    def encode(self, history: Sequence[Snapshot]) -> EvolvedState:
        return self.encoder(history)

    def decompose(self, state: EvolvedState) -> Optional[Decomposition]:
        if not self.uses_ce:
            return None
        return Decomposition(decouple(state.entity, self.disent["entity"]), decouple(state.relation, self.disent["relation"]))

    def channel_scores(self, E: torch.Tensor, R: torch.Tensor, s, r, t: int) -> torch.Tensor:
        t_s, t_l = self.time_features(t)
        return self.decoder(E[s], R[r], t_s, t_l, E)

    def score(self, state: EvolvedState, s, r, t: int) -> torch.Tensor:
        """Causal-channel scores (raw state when the causal module is ablated)."""
        s = torch.as_tensor(s, dtype=torch.long)
        r = torch.as_tensor(r, dtype=torch.long)
        parts = self.decompose(state)
        if parts is None:
            return self.channel_scores(state.entity, state.relation, s, r, t)
        return self.channel_scores(parts.entity.causal, parts.relation.causal, s, r, t)

    @staticmethod
    def active_rows(snapshot: Snapshot) -> tuple[torch.Tensor, torch.Tensor]:
        ents = torch.as_tensor(np.unique(np.concatenate([snapshot.src, snapshot.dst])), dtype=torch.long)
        rels = torch.as_tensor(np.unique(snapshot.rel), dtype=torch.long)
        return ents, rels

    def club_update(self, parts: Decomposition, snapshot: Snapshot, optimizer: torch.optim.Optimizer, steps: int = 1) -> float:
        """Fit the variational conditionals on detached causal/confounding rows."""
        ents, rels = self.active_rows(snapshot)
        pairs = [
            (self.club["entity"], parts.entity.causal[ents].detach(), parts.entity.confounding[ents].detach()),
            (self.club["relation"], parts.relation.causal[rels].detach(), parts.relation.confounding[rels].detach()),
        ]
        value = 0.0
        for _ in range(steps):
            optimizer.zero_grad()
            ll = sum(club_loglik(q, xc, xn) for q, xc, xn in pairs)
            (-ll).backward()
            optimizer.step()
            value = ll.item()
        return value

    def loss(
        self,
        state: EvolvedState,
        snapshot: Snapshot,
        gen: torch.Generator,
        parts: Optional[Decomposition] = None,
        context: str = "",
    ) -> LossBreakdown:
        cfg = self.config
        s = torch.as_tensor(snapshot.src, dtype=torch.long)
        r = torch.as_tensor(snapshot.rel, dtype=torch.long)
        o = torch.as_tensor(snapshot.dst, dtype=torch.long)
        t = snapshot.time
        zero = state.entity.new_zeros(())
        if not self.uses_ce:
            p = predict_distribution(self.channel_scores(state.entity, state.relation, s, r, t))
            return total_loss(loss_causal(p, o), zero, zero, zero, cfg.lambda1, 0.0, 0.0, context)
        if parts is None:
            parts = self.decompose(state)
        ent, rel = parts.entity, parts.relation
        ents, rels = self.active_rows(snapshot)

        mi_ent, mi_rel = ent, rel
        if cfg.mi_detach_encoder:
            mi_ent = decouple(state.entity.detach(), self.disent["entity"])
            mi_rel = decouple(state.relation.detach(), self.disent["relation"])
        l_mi = club_mi_upper(
            self.club["entity"], mi_ent.causal[ents], mi_ent.confounding[ents], torch.randperm(len(ents), generator=gen)
        ) + club_mi_upper(
            self.club["relation"], mi_rel.causal[rels], mi_rel.confounding[rels], torch.randperm(len(rels), generator=gen)
        )
        E_I = intervene(ent.causal, ent.confounding, _restricted_perm(self.num_entities, ents, gen))
        R_I = intervene(rel.causal, rel.confounding, _restricted_perm(self.num_relations, rels, gen))

        p_C = predict_distribution(self.channel_scores(ent.causal, rel.causal, s, r, t))
        p_N = predict_distribution(self.channel_scores(ent.confounding, rel.confounding, s, r, t))
        p_I = predict_distribution(self.channel_scores(E_I, R_I, s, r, t))
        return total_loss(
            loss_causal(p_C, o),
            loss_confounding(p_N),
            l_mi,
            loss_intervention(p_I, o),
            cfg.lambda1,
            cfg.lambda2,
            cfg.lambda3,
            context,
        )


def build_model(num_entities: int, num_relations_augmented: int, config: TrainConfig, time_span=(0, 1)) -> CausalTKGModel:
    """Seeded construction in the configured precision."""
    torch.manual_seed(config.seed)
    model = CausalTKGModel(num_entities, num_relations_augmented, config, time_span)
    return model.to(DTYPES[config.dtype])
