"""End-to-end typing model: embeddings, propagation, projection, scoring.

Holds the three layer-0 embedding tables, the per-stream projection heads,
and the predictor parameters; exposes a per-entity scoring path (reference)
and a batched path over flattened neighbor segments (used by training and
evaluation, tested equal to the reference).
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import TrainConfig
from .contrastive import contrastive_loss, make_projectors
from .data import Corpus, neighbor_arrays, neighbor_set
from .encoder import STREAMS, ViewTensors, encode_all_views, stream_key
from .predictor import (
    PROB_EPS,
    FinalEmbeddings,
    PredictorParams,
    assemble,
    concat_final,
    pool,
)

NODE_KINDS = ("entity", "type", "cluster")


class TypingModel(nn.Module):
    def __init__(self, corpus: Corpus, config: TrainConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.num_entities = len(corpus.vocab.entities)
        self.num_relations = len(corpus.vocab.relations)
        self.num_types = len(corpus.vocab.types)
        self.num_clusters = len(corpus.vocab.clusters)
        self.ablated = frozenset(config.view_ablation)

        gen = torch.Generator().manual_seed(config.seed)
        counts = {
            "entity": self.num_entities,
            "type": self.num_types,
            "cluster": self.num_clusters,
        }
        bound = 1.0 / math.sqrt(config.d)

        def table(kind: str) -> nn.Parameter:
            w = torch.empty(counts[kind], config.d, dtype=torch.float64)
            if w.numel():
                nn.init.uniform_(w, -bound, bound, generator=gen)
            return nn.Parameter(w)

        # no parameter sharing across views: each stream owns its layer-0 table
        self.initial = nn.ParameterDict(
            {stream_key(v, s): table(s) for v, s in STREAMS}
        )

        self.projectors = make_projectors(config.d, gen)
        self.predictor = PredictorParams(
            self.num_relations,
            self.num_types,
            config.d,
            pooling=config.pooling,
            heads=config.H,
            experts=config.M,
            generator=gen,
        )

        # propagation structure is data, not parameters
        self.view_tensors = {
            kind: ViewTensors.from_view(view) for kind, view in corpus.views.items()
        }
        offsets, rel_ids, node_ids, is_type = neighbor_arrays(corpus.kg)
        self.register_buffer("nbr_offsets", torch.from_numpy(offsets))
        self.register_buffer("nbr_rel", torch.from_numpy(rel_ids))
        self.register_buffer("nbr_node", torch.from_numpy(node_ids))
        self.register_buffer("nbr_is_type", torch.from_numpy(is_type))
        self._kg = corpus.kg

    # -- representation --------------------------------------------------

    def encode(self) -> dict[str, torch.Tensor]:
        """Propagated per-stream tables; ablated views keep their layer-0 table."""
        return encode_all_views(
            self.view_tensors,
            dict(self.initial),
            self.config.L,
            self.config.include_final_layer,
            self.ablated,
        )

    def project(self, streams: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
        return {key: self.projectors[key](x) for key, x in streams.items()}

    def final_embeddings(self, projected: dict[str, torch.Tensor] | None = None) -> FinalEmbeddings:
        """Concatenated projected streams; what the predictor scores from."""
        if projected is None:
            projected = self.project(self.encode())
        return concat_final(projected)

    # -- scoring ----------------------------------------------------------

    def neighbor_count(self, entity: int) -> int:
        return int(self.nbr_offsets[entity + 1] - self.nbr_offsets[entity])

    def entity_probs(self, entity: int, final: FinalEmbeddings) -> torch.Tensor | None:
        """Reference path: assemble one entity's NeighborMatrix and pool it."""
        nm = assemble(neighbor_set(self._kg, entity), final, self.predictor)
        if nm is None:
            return None
        return pool(nm, self.predictor)

    def entity_batch_probs(
        self, entities: torch.Tensor, final: FinalEmbeddings
    ) -> torch.Tensor:
        """Score a batch over flattened neighbor segments; rows follow `entities`.

        Every entity in the batch must have at least one neighbor; filter with
        neighbor_count first.
        """
        starts = self.nbr_offsets[entities]
        ends = self.nbr_offsets[entities + 1]
        lengths = ends - starts
        if bool((lengths == 0).any()):
            raise ValueError("batch contains a neighborless entity")
        k = entities.shape[0]
        total = int(lengths.sum())
        batch_offs = torch.zeros(k, dtype=torch.long)
        batch_offs[1:] = torch.cumsum(lengths, dim=0)[:-1]
        pos = torch.arange(total) - batch_offs.repeat_interleave(lengths)
        flat = starts.repeat_interleave(lengths) + pos
        seg = torch.repeat_interleave(torch.arange(k), lengths)

        rel = self.nbr_rel[flat]
        node = self.nbr_node[flat]
        is_type = self.nbr_is_type[flat]
        # dictionary indexing: type rows live after the entity rows
        dictionary = torch.cat([final.z_e, final.z_t], dim=0)
        feats = dictionary[node + is_type * self.num_entities]
        feats = feats - self.predictor.relation_embeddings[rel]
        logits = self.predictor.score(feats)  # (total, N)

        if self.config.pooling == "pool":
            sums = torch.zeros(k, self.num_types, dtype=logits.dtype)
            sums = sums.index_add(0, seg, logits)
            return torch.sigmoid(sums / lengths.unsqueeze(1).to(logits.dtype))

        if self.config.pooling == "mham":
            gated = torch.softmax(self.predictor.gate(feats), dim=1)
            scores = self.predictor.head(gated)  # (total, H)
        else:
            scores = self.predictor.attn(feats)
        alpha = _segment_softmax(scores, seg, lengths, k)  # (total, H)

        temps = self.predictor.temperatures()
        acc = torch.zeros(k, self.num_types, dtype=logits.dtype)
        for h in range(self.predictor.heads):
            pooled = torch.zeros(k, self.num_types, dtype=logits.dtype)
            pooled = pooled.index_add(0, seg, logits * alpha[:, h].unsqueeze(1))
            weights = torch.softmax(temps[h] * pooled, dim=1)
            acc = acc + weights * pooled
        return torch.sigmoid(acc)

    # -- losses -----------------------------------------------------------

    def typing_loss(
        self, entities: torch.Tensor, targets: torch.Tensor, final: FinalEmbeddings
    ) -> torch.Tensor:
        """Mean false-negative-aware loss over the batch.

        `targets` is a (k, N) bool mask of train-split types per batch row.
        """
        probs = self.entity_batch_probs(entities, final)
        q = probs.clamp(PROB_EPS, 1.0 - PROB_EPS)
        neg = self.config.beta * (q - q * q) * torch.log1p(-q)
        per_entity = -(
            torch.where(targets, torch.log(q), neg).sum(dim=1)
        )
        return per_entity.mean()

    def batch_node_sets(self, entities: torch.Tensor) -> dict[str, torch.Tensor]:
        """Nodes the batch touches: the entities, their train types, their clusters."""
        ent_set = torch.unique(entities)
        mask = torch.zeros(self.num_entities, dtype=torch.bool)
        mask[ent_set] = True
        types = sorted(
            {t for e, t, sp in self._kg.type_assertions if sp == "train" and mask[e]}
        )
        e2c = self.view_tensors["e2c"]
        if e2c.left.numel():
            cl = torch.unique(e2c.right[mask[e2c.left]])
        else:
            cl = torch.zeros(0, dtype=torch.long)
        return {
            "entity": ent_set,
            "type": torch.as_tensor(types, dtype=torch.long),
            "cluster": cl,
        }

    def contrastive(
        self,
        entities: torch.Tensor,
        projected: dict[str, torch.Tensor],
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        node_sets = self.batch_node_sets(entities)
        return contrastive_loss(
            projected,
            node_sets,
            self.config.tau,
            self.config.negative_cap,
            generator,
        )

    def regularizer(self) -> torch.Tensor:
        reg = torch.zeros((), dtype=torch.float64)
        for w in self.parameters():
            reg = reg + (w * w).sum()
        return reg

    def batch_loss(
        self,
        entities: torch.Tensor,
        targets: torch.Tensor,
        generator: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, dict[str, float]]:
        """Joint objective for one batch plus its component values."""
        projected = self.project(self.encode())
        final = concat_final(projected)
        l_et = self.typing_loss(entities, targets, final)
        if self.config.lam != 0.0:
            l_cl = self.contrastive(entities, projected, generator)
        else:
            l_cl = torch.zeros((), dtype=torch.float64)
        loss = l_et + self.config.lam * l_cl + self.config.gamma * self.regularizer()
        parts = {
            "et": float(l_et.detach()),
            "cl": float(l_cl.detach()),
            "joint": float(loss.detach()),
        }
        return loss, parts


def _segment_softmax(
    scores: torch.Tensor, seg: torch.Tensor, lengths: torch.Tensor, k: int
) -> torch.Tensor:
    """Softmax within each segment, per column; segments are contiguous.

    Pads segments to the longest one, softmaxes rowwise, and scatters back.
    """
    max_len = int(lengths.max())
    h = scores.shape[1]
    offs = torch.zeros(k, dtype=torch.long)
    offs[1:] = torch.cumsum(lengths, dim=0)[:-1]
    # position of each flat row inside its segment
    pos = torch.arange(scores.shape[0]) - offs[seg]
    padded = torch.full((k, max_len, h), float("-inf"), dtype=scores.dtype)
    padded[seg, pos] = scores
    soft = torch.softmax(padded, dim=1)
    return soft[seg, pos]
