"""Experiment orchestration: view ablations, layer sweeps, dropping sweeps.

Each sweep entry retrains from scratch on a (possibly mutated) corpus,
evaluates the best checkpoint on the test split, and records the corpus
fingerprint that produced the row.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import torch

from .config import TrainConfig
from .data import (
    Corpus,
    KnowledgeGraph,
    drop_relation_types,
    drop_relational_neighbors,
)
from .evaluation import RankingReport, evaluate_model
from .model import TypingModel
from .training import restore_model, train

logger = logging.getLogger(__name__)

VIEW_ABLATION_SETTINGS = (
    ("w/o e2t", ("e2t",)),
    ("w/o c2t", ("c2t",)),
    ("w/o e2c", ("e2c",)),
    ("w/o all", ("e2t", "c2t", "e2c")),
    ("full", ()),
)

DROP_MODES = ("neighbors", "relation_types")


@dataclass(frozen=True)
class MetricsRow:
    setting: str
    mrr: float
    mr: float
    hits1: float
    hits3: float
    hits10: float
    fingerprint: str

    @classmethod
    def from_report(cls, setting: str, report: RankingReport, fingerprint: str) -> "MetricsRow":
        return cls(
            setting=setting,
            mrr=report.mrr,
            mr=report.mr,
            hits1=report.hits[1],
            hits3=report.hits[3],
            hits10=report.hits[10],
            fingerprint=fingerprint,
        )


def _train_and_eval(corpus: Corpus, config: TrainConfig, setting: str) -> MetricsRow:
    result = train(corpus, config)
    model = restore_model(result.best, corpus)
    report = evaluate_model(model, corpus, "test")
    return MetricsRow.from_report(setting, report, corpus.kg.fingerprint())


def run_view_ablation(corpus: Corpus, config: TrainConfig) -> list[MetricsRow]:
    """The five-row view table: drop each view, all views, and none."""
    rows = []
    for setting, ablated in VIEW_ABLATION_SETTINGS:
        logger.info("view ablation: %s", setting)
        rows.append(_train_and_eval(corpus, config.replace(view_ablation=ablated), setting))
    return rows


def filter_by_type_degree(corpus: Corpus, lo: int = 1, hi: int = 4) -> Corpus:
    """Keep only entities with lo..hi train type neighbors.

    Non-conforming entities lose their type assertions in every split;
    triples stay so the relational structure is untouched.
    """
    counts: dict[int, int] = {}
    for e, t, sp in corpus.kg.type_assertions:
        if sp == "train":
            counts[e] = counts.get(e, 0) + 1
    keep = {e for e, c in counts.items() if lo <= c <= hi}
    assertions = [(e, t, sp) for e, t, sp in corpus.kg.type_assertions if e in keep]
    kg = KnowledgeGraph.build(
        corpus.kg.triples,
        assertions,
        corpus.kg.num_entities,
        corpus.kg.num_relations,
        corpus.kg.num_types,
    )
    return corpus.with_kg(kg)


def run_layer_sweep(
    corpus: Corpus,
    config: TrainConfig,
    layers: Sequence[int],
    restrict_type_degree: bool = False,
) -> list[MetricsRow]:
    if restrict_type_degree:
        corpus = filter_by_type_degree(corpus)
    rows = []
    for num in layers:
        logger.info("layer sweep: L=%d", num)
        rows.append(_train_and_eval(corpus, config.replace(L=num), f"L={num}"))
    return rows


def run_dropping_sweep(
    corpus: Corpus,
    config: TrainConfig,
    mode: str,
    rates: Sequence[float] = (0.25, 0.5, 0.75, 0.9),
) -> list[MetricsRow]:
    """Retrain after randomly removing triples (or whole relation types)."""
    if mode not in DROP_MODES:
        raise ValueError(f"mode must be one of {DROP_MODES}, got {mode!r}")
    mutate = drop_relational_neighbors if mode == "neighbors" else drop_relation_types
    rows = []
    for rate in rates:
        logger.info("dropping sweep: mode=%s rate=%.0f%%", mode, rate * 100)
        mutated = corpus.with_kg(mutate(corpus.kg, rate, config.seed))
        rows.append(_train_and_eval(mutated, config, f"drop {mode} {rate:.0%}"))
    return rows


def predict_types(
    model: TypingModel, corpus: Corpus, entity_label: str, k: int
) -> list[tuple[str, float]]:
    """Top-k unasserted types for one entity, best first.

    Types already asserted in the train split are excluded; ties resolve by
    type index so output is reproducible.
    """
    e = corpus.vocab.entities.to_index(entity_label)
    if model.neighbor_count(e) == 0:
        raise ValueError(f"entity {entity_label!r} has no neighbors to score from")
    model.eval()
    with torch.no_grad():
        final = model.final_embeddings()
        probs = model.entity_batch_probs(torch.as_tensor([e]), final)[0]
    model.train()
    known = {t for et, t in corpus.kg.assertions("train") if et == e}
    candidates = [
        (float(probs[t]), t) for t in range(len(corpus.vocab.types)) if t not in known
    ]
    candidates.sort(key=lambda st: (-st[0], st[1]))
    return [(corpus.vocab.types.to_label(t), s) for s, t in candidates[:k]]


def metrics_tsv(rows: Sequence[MetricsRow]) -> str:
    """Render rows as a TSV metrics table; corpus fingerprints trail as comments."""
    lines = ["setting\tMRR\tMR\tHits@1\tHits@3\tHits@10"]
    for r in rows:
        lines.append(
            f"{r.setting}\t{r.mrr:.4f}\t{r.mr:.1f}\t{r.hits1:.4f}\t{r.hits3:.4f}\t{r.hits10:.4f}"
        )
    for r in rows:
        lines.append(f"# corpus\t{r.setting}\t{r.fingerprint}")
    return "\n".join(lines)
