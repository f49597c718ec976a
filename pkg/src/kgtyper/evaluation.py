"""Filtered-ranking evaluation: MR, MRR, Hits@{1,3,10}.

Other known-true types of the entity are removed from the candidate pool
before ranking, and ties count against the target (it ranks after every
equal-scored competitor), so constant scorers cannot look good.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import torch

HITS_KS = (1, 3, 10)


@dataclass
class RankingReport:
    per_tuple: list[tuple[int, int, int]]  # (entity, type, filtered rank)
    mr: float
    mrr: float
    hits: dict[int, float]
    skipped_entities: int = 0
    skipped_tuples: int = 0

    def metrics(self) -> dict[str, float]:
        out = {"MRR": self.mrr, "MR": self.mr}
        for k in HITS_KS:
            out[f"Hits@{k}"] = self.hits[k]
        return out


def filtered_rank(scores: torch.Tensor, target: int, known_true: Iterable[int]) -> int:
    """Pessimistic filtered rank of `target` in a score vector.

    Candidates in known_true (the entity's other true types) are excluded;
    the target ranks below every remaining candidate with score >= its own.
    """
    known = set(int(t) for t in known_true)
    if target in known:
        raise ValueError(f"target {target} must not be in known_true")
    n = scores.shape[0]
    if not 0 <= target < n:
        raise ValueError(f"target {target} out of range for {n} types")
    eligible = torch.ones(n, dtype=torch.bool)
    if known:
        eligible[torch.as_tensor(sorted(known), dtype=torch.long)] = False
    eligible[target] = False
    return 1 + int((scores[eligible] >= scores[target]).sum())


def aggregate(
    ranked: Sequence[tuple[int, int, int]],
    skipped_entities: int = 0,
    skipped_tuples: int = 0,
) -> RankingReport:
    if not ranked:
        raise ValueError("no ranked tuples to aggregate")
    ranks = [r for _, _, r in ranked]
    mr = sum(ranks) / len(ranks)
    mrr = sum(1.0 / r for r in ranks) / len(ranks)
    hits = {k: sum(1 for r in ranks if r <= k) / len(ranks) for k in HITS_KS}
    return RankingReport(list(ranked), mr, mrr, hits, skipped_entities, skipped_tuples)


def evaluate_model(model, corpus, split: str = "test", chunk: int = 512) -> RankingReport:
    """Rank every (entity, type) tuple of the split under the frozen model.

    Entities without neighbors cannot be scored; their tuples are skipped and
    counted in the report.
    """
    tuples = corpus.kg.assertions(split)
    if not tuples:
        raise ValueError(f"split {split!r} holds no type assertions")
    known = corpus.known_types()

    by_entity: dict[int, list[int]] = {}
    for e, t in tuples:
        by_entity.setdefault(e, []).append(t)

    scorable = [e for e in sorted(by_entity) if model.neighbor_count(e) > 0]
    skipped_entities = len(by_entity) - len(scorable)
    skipped_tuples = sum(len(by_entity[e]) for e in by_entity) - sum(
        len(by_entity[e]) for e in scorable
    )

    ranked: list[tuple[int, int, int]] = []
    model.eval()
    with torch.no_grad():
        final = model.final_embeddings()
        for i in range(0, len(scorable), chunk):
            batch = scorable[i : i + chunk]
            probs = model.entity_batch_probs(torch.as_tensor(batch, dtype=torch.long), final)
            for row, e in enumerate(batch):
                for t in by_entity[e]:
                    ranked.append(
                        (e, t, filtered_rank(probs[row], t, known[e] - {t}))
                    )
    model.train()
    return aggregate(ranked, skipped_entities, skipped_tuples)


def report_text(report: RankingReport, title: str = "evaluation") -> str:
    lines = [
        title,
        f"  tuples ranked     {len(report.per_tuple)}",
        f"  entities skipped  {report.skipped_entities} (no neighbors; {report.skipped_tuples} tuples)",
        f"  MRR               {report.mrr:.4f}",
        f"  MR                {report.mr:.1f}",
    ]
    for k in HITS_KS:
        lines.append(f"  Hits@{k:<2}           {report.hits[k]:.4f}")
    return "\n".join(lines)


def report_keyvalues(report: RankingReport) -> str:
    """Machine-readable `key<TAB>value` lines."""
    rows = [
        ("tuples", len(report.per_tuple)),
        ("skipped_entities", report.skipped_entities),
        ("skipped_tuples", report.skipped_tuples),
        ("MRR", f"{report.mrr:.6f}"),
        ("MR", f"{report.mr:.4f}"),
    ]
    rows += [(f"Hits@{k}", f"{report.hits[k]:.6f}") for k in HITS_KS]
    return "\n".join(f"{k}\t{v}" for k, v in rows)
