"""Cross-view contrastive alignment.

Each embedding stream gets its own two-layer projection head; the loss pulls
the two encodings of the same node together across a view pair while pushing
apart every other projected node in the batch, both within the anchor's view
and across it.
"""

from __future__ import annotations

import logging
import math

import torch
from torch import nn

from .encoder import STREAMS, stream_key

logger = logging.getLogger(__name__)

# (view_a, view_b, shared node kind): the pairs whose encodings are aligned.
CONTRAST_PAIRS = (
    ("e2t", "e2c", "entity"),
    ("e2t", "c2t", "type"),
    ("c2t", "e2c", "cluster"),
)


class Projector(nn.Module):
    """Two-layer head z = W2 elu(W1 x + b1) + b2, one per embedding stream."""

    def __init__(self, dim: int, generator: torch.Generator | None = None):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim, dtype=torch.float64)
        self.fc2 = nn.Linear(dim, dim, dtype=torch.float64)
        self.act = nn.ELU()
        for layer in (self.fc1, self.fc2):
            nn.init.xavier_uniform_(layer.weight, generator=generator)
            nn.init.zeros_(layer.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


def make_projectors(dim: int, generator: torch.Generator | None = None) -> nn.ModuleDict:
    """One unshared projector per stream, keyed like the encoder output."""
    return nn.ModuleDict(
        {stream_key(v, s): Projector(dim, generator) for v, s in STREAMS}
    )


def cosine(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Cosine similarity along the last dim; zero vectors similarity 0."""
    nu = u.norm(dim=-1)
    nv = v.norm(dim=-1)
    denom = nu * nv
    zero = denom == 0
    if bool(zero.any()):
        logger.warning("cosine over zero-norm vectors; returning 0 for those pairs")
    safe = torch.where(zero, torch.ones_like(denom), denom)
    sim = (u * v).sum(-1) / safe
    return torch.where(zero, torch.zeros_like(sim), sim)


def pair_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    intra_negatives: torch.Tensor,
    inter_negatives: torch.Tensor,
    tau: float,
) -> torch.Tensor:
    """-log softmax of the positive among {positive} + negatives, temp tau.

    Computed as logsumexp(all) - pos so a lone positive gives exactly zero.
    Negatives may be empty (n, d) tensors.
    """
    pos = cosine(anchor, positive) / tau
    sims = [pos.unsqueeze(0)]
    for negs in (intra_negatives, inter_negatives):
        if negs.numel():
            sims.append(cosine(anchor.unsqueeze(0), negs) / tau)
    logits = torch.cat(sims)
    return torch.logsumexp(logits, dim=0) - pos


def cross_view_loss(
    za: torch.Tensor,
    zb: torch.Tensor,
    tau: float,
    negative_cap: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Symmetric contrastive loss between two projected batches of one kind.

    Row i of za and zb encode the same node in the two views.  For anchor
    za[i]: positive zb[i]; intra negatives za[j], inter negatives zb[j]
    (j != i).  negative_cap subsamples j-candidates once per call, shared by
    both directions; the anchor's own row is always excluded.
    """
    m = za.shape[0]
    if m == 0:
        return za.new_zeros(())
    if zb.shape != za.shape:
        raise ValueError(f"shape mismatch: {tuple(za.shape)} vs {tuple(zb.shape)}")

    # pairwise cosine matrices; row = anchor, col = candidate
    sim_ab = _pairwise_cosine(za, zb) / tau
    sim_aa = _pairwise_cosine(za, za) / tau
    sim_bb = _pairwise_cosine(zb, zb) / tau

    eye = torch.eye(m, dtype=torch.bool)
    neg_mask = ~eye
    if negative_cap is not None and negative_cap < m - 1:
        pool = torch.randperm(m, generator=generator)[:negative_cap]
        col_ok = torch.zeros(m, dtype=torch.bool)
        col_ok[pool] = True
        neg_mask = neg_mask & col_ok.unsqueeze(0)

    neg_inf = torch.tensor(float("-inf"), dtype=za.dtype)

    def direction_loss(sim_cross: torch.Tensor, sim_self: torch.Tensor) -> torch.Tensor:
        pos = sim_cross.diagonal()
        inter = torch.where(neg_mask, sim_cross, neg_inf)
        intra = torch.where(neg_mask, sim_self, neg_inf)
        logits = torch.cat([pos.unsqueeze(1), intra, inter], dim=1)
        return (torch.logsumexp(logits, dim=1) - pos).sum()

    total = direction_loss(sim_ab, sim_aa) + direction_loss(sim_ab.T, sim_bb)
    return total


def _pairwise_cosine(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    nu = u.norm(dim=-1, keepdim=True)
    nv = v.norm(dim=-1, keepdim=True)
    denom = nu * nv.T
    zero = denom == 0
    if bool(zero.any()):
        logger.warning("cosine over zero-norm vectors; returning 0 for those pairs")
    safe = torch.where(zero, torch.ones_like(denom), denom)
    sim = (u @ v.T) / safe
    return torch.where(zero, torch.zeros_like(sim), sim)


def contrastive_loss(
    projected: dict[str, torch.Tensor],
    node_sets: dict[str, torch.Tensor],
    tau: float,
    negative_cap: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Mean per-anchor loss over the three cross-view pairs.

    `projected` maps stream keys to full projected tables; `node_sets` maps
    node kind to the index tensor of batch nodes of that kind.  Pairs whose
    node set is empty contribute nothing.
    """
    total = None
    count = 0
    for va, vb, kind in CONTRAST_PAIRS:
        idx = node_sets.get(kind)
        if idx is None or idx.numel() == 0:
            continue
        za = projected[stream_key(va, kind)][idx]
        zb = projected[stream_key(vb, kind)][idx]
        loss = cross_view_loss(za, zb, tau, negative_cap, generator)
        total = loss if total is None else total + loss
        count += idx.numel()
    if total is None:
        return torch.zeros((), dtype=torch.float64)
    return total / count


def pair_loss_oracle(
    anchor, positive, intra_negatives, inter_negatives, tau: float
) -> float:
    """Scalar reference: direct -log(exp(pos)/(exp(pos)+sum(negs))) in python floats."""
    def cos(a, b):
        na = math.sqrt(sum(x * x for x in a))
        nb = math.sqrt(sum(x * x for x in b))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return sum(x * y for x, y in zip(a, b)) / (na * nb)

    pos = math.exp(cos(anchor, positive) / tau)
    neg = sum(math.exp(cos(anchor, n) / tau) for n in intra_negatives)
    neg += sum(math.exp(cos(anchor, n) / tau) for n in inter_negatives)
    return -math.log(pos / (pos + neg))
