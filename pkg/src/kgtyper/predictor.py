"""Type prediction from neighbor evidence.

Every neighbor of an entity votes an N-vector of type logits through a
TransE-style difference; the votes are pooled by plain averaging, multi-head
attention, or attention with a mixture-of-experts gate.  Training uses a
false-negative aware binary loss over all types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import torch
from torch import nn

from .data import NeighborSet
from .encoder import stream_key

POOLINGS = ("pool", "mha", "mham")

# softplus(raw) = 1 at this raw value; temperatures start at exactly 1
_RAW_TEMP_ONE = math.log(math.e - 1.0)

PROB_EPS = 1e-7


@dataclass
class FinalEmbeddings:
    """Concatenated per-node representations feeding the predictor."""

    z_e: torch.Tensor  # (|E|, 2d)
    z_t: torch.Tensor  # (|T|, 2d)

    @property
    def dim(self) -> int:
        return int(self.z_e.shape[1])


def concat_final(streams: dict[str, torch.Tensor]) -> FinalEmbeddings:
    """Entity rows join e2t and e2c streams; type rows join e2t and c2t."""
    ze_a = streams[stream_key("e2t", "entity")]
    ze_b = streams[stream_key("e2c", "entity")]
    zt_a = streams[stream_key("e2t", "type")]
    zt_b = streams[stream_key("c2t", "type")]
    if ze_a.shape != ze_b.shape or zt_a.shape != zt_b.shape:
        raise ValueError("stream shape mismatch in final concatenation")
    return FinalEmbeddings(
        z_e=torch.cat([ze_a, ze_b], dim=1),
        z_t=torch.cat([zt_a, zt_b], dim=1),
    )


@dataclass
class NeighborMatrix:
    """Per-neighbor logit and feature columns for one entity."""

    logits: torch.Tensor  # (N, n)
    features: torch.Tensor  # (2d, n)

    @property
    def n(self) -> int:
        return int(self.logits.shape[1])


class PredictorParams(nn.Module):
    """Learnable predictor state; only the chosen pooling's tables exist.

    score: Linear(2d -> N) applied to z_i - r_i.  mham gates each neighbor
    through M experts before the per-head attention; mha scores neighbors
    with one linear map per head.
    """

    def __init__(
        self,
        num_relations: int,
        num_types: int,
        dim: int,
        pooling: str = "mham",
        heads: int = 5,
        experts: int = 32,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        if pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {pooling!r}")
        self.pooling = pooling
        self.heads = heads
        self.experts = experts
        self.num_types = num_types
        width = 2 * dim

        bound = 1.0 / math.sqrt(width)
        rel = torch.empty(num_relations + 1, width, dtype=torch.float64)
        nn.init.uniform_(rel, -bound, bound, generator=generator)
        self.relation_embeddings = nn.Parameter(rel)

        self.score = nn.Linear(width, num_types, dtype=torch.float64)
        nn.init.xavier_uniform_(self.score.weight, generator=generator)
        nn.init.zeros_(self.score.bias)

        if pooling == "mham":
            self.gate = nn.Linear(width, experts, dtype=torch.float64)
            self.head = nn.Linear(experts, heads, dtype=torch.float64)
            for layer in (self.gate, self.head):
                nn.init.xavier_uniform_(layer.weight, generator=generator)
                nn.init.zeros_(layer.bias)
        elif pooling == "mha":
            self.attn = nn.Linear(width, heads, dtype=torch.float64)
            nn.init.xavier_uniform_(self.attn.weight, generator=generator)
            nn.init.zeros_(self.attn.bias)
        if pooling in ("mha", "mham"):
            self.raw_temps = nn.Parameter(
                torch.full((heads,), _RAW_TEMP_ONE, dtype=torch.float64)
            )

    def temperatures(self) -> torch.Tensor:
        """Positive per-head sharpness, softplus of the raw parameter."""
        return nn.functional.softplus(self.raw_temps)


def neighbor_logits(
    z_i: torch.Tensor, r_i: torch.Tensor, params: PredictorParams
) -> torch.Tensor:
    """One neighbor's type-logit vector W(z_i - r_i) + b."""
    if z_i.shape != r_i.shape:
        raise ValueError(f"shape mismatch: {tuple(z_i.shape)} vs {tuple(r_i.shape)}")
    return params.score(z_i - r_i)


def assemble(
    neighbors: NeighborSet,
    final: FinalEmbeddings,
    params: PredictorParams,
    mask_type: int | None = None,
) -> NeighborMatrix | None:
    """Stack neighbor columns in NeighborSet order; None when nothing remains.

    Relational neighbor (r, o) contributes z_e[o] - rel[r]; type neighbor
    (has_type, t) contributes z_t[t] - rel[has_type].  mask_type drops that
    type's column (leakage experiments only).
    """
    feats = []
    for r, o in neighbors.relational:
        feats.append(final.z_e[o] - params.relation_embeddings[r])
    for h, t in neighbors.typed:
        if mask_type is not None and t == mask_type:
            continue
        feats.append(final.z_t[t] - params.relation_embeddings[h])
    if not feats:
        return None
    features = torch.stack(feats, dim=1)
    logits = params.score(features.T).T
    return NeighborMatrix(logits=logits, features=features)


def _attend(logits: torch.Tensor, alpha: torch.Tensor, temps: torch.Tensor) -> torch.Tensor:
    """Shared pooling tail: per-head pooled logits, tempered type softmax, sigmoid."""
    pooled = logits @ alpha.T  # (N, H)
    weights = torch.softmax(temps.unsqueeze(0) * pooled, dim=0)
    return torch.sigmoid((weights * pooled).sum(dim=1))


def pool_mham(nm: NeighborMatrix, params: PredictorParams) -> torch.Tensor:
    """Expert-gated multi-head attention over neighbor columns."""
    gated = torch.softmax(params.gate(nm.features.T), dim=1)  # (n, M)
    scores = params.head(gated)  # (n, H)
    alpha = torch.softmax(scores.T, dim=1)  # (H, n)
    return _attend(nm.logits, alpha, params.temperatures())


def pool_mha(nm: NeighborMatrix, params: PredictorParams) -> torch.Tensor:
    """Multi-head attention with a single linear neighbor-score map."""
    scores = params.attn(nm.features.T)  # (n, H)
    alpha = torch.softmax(scores.T, dim=1)
    return _attend(nm.logits, alpha, params.temperatures())


def pool_avg(nm: NeighborMatrix) -> torch.Tensor:
    """Column mean of the logit matrix through a sigmoid."""
    return torch.sigmoid(nm.logits.mean(dim=1))


def pool(nm: NeighborMatrix, params: PredictorParams) -> torch.Tensor:
    if params.pooling == "mham":
        return pool_mham(nm, params)
    if params.pooling == "mha":
        return pool_mha(nm, params)
    return pool_avg(nm)


def fna_loss(p: torch.Tensor, positives: Iterable[int], beta: float) -> torch.Tensor:
    """Binary loss over all types with down-weighted easy negatives.

    Negatives are weighted by beta*(p - p^2), so confident negatives (p near
    0) contribute nothing instead of being pushed further; this protects
    unlabeled true types.
    """
    n = p.shape[0]
    pos = torch.as_tensor(sorted(set(int(i) for i in positives)), dtype=torch.long)
    if pos.numel() and (pos.min() < 0 or pos.max() >= n):
        raise ValueError("positive type id out of range")
    mask = torch.zeros(n, dtype=torch.bool)
    mask[pos] = True
    q = p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    neg_term = beta * (q - q * q) * torch.log1p(-q)
    pos_term = torch.log(q)
    return -(neg_term[~mask].sum() + pos_term[mask].sum())


def joint_loss(
    l_et: torch.Tensor,
    l_cl: torch.Tensor,
    lam: float,
    gamma: float,
    parameters: Iterable[torch.Tensor],
) -> torch.Tensor:
    """Typing loss plus weighted contrastive loss plus explicit L2."""
    reg = sum((w * w).sum() for w in parameters)
    if not isinstance(reg, torch.Tensor):
        reg = l_et.new_zeros(())
    return l_et + lam * l_cl + gamma * reg
