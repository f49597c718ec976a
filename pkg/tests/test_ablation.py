import pytest
import torch

from kgtyper.ablation import (
    MetricsRow,
    filter_by_type_degree,
    metrics_tsv,
    predict_types,
    run_dropping_sweep,
    run_layer_sweep,
    run_view_ablation,
)
from kgtyper.config import TrainConfig
from kgtyper.data import freebase_clusters, index_corpus, toy_corpus
from kgtyper.model import TypingModel
from kgtyper.training import restore_model, train


def sweep_config(**overrides):
    base = dict(d=6, H=2, M=2, lr=0.01, epochs=2, batch_size=6, seed=0, patience=50)
    base.update(overrides)
    return TrainConfig(**base)


class TestViewAblation:
    def test_exactly_five_rows(self):
        rows = run_view_ablation(toy_corpus(), sweep_config())
        assert [r.setting for r in rows] == [
            "w/o e2t", "w/o c2t", "w/o e2c", "w/o all", "full",
        ]
        for r in rows:
            assert 0.0 < r.mrr <= 1.0
            assert r.fingerprint

    def test_reproducible_under_seed(self):
        corpus = toy_corpus()
        a = run_view_ablation(corpus, sweep_config())
        b = run_view_ablation(corpus, sweep_config())
        assert a == b


class TestLayerSweep:
    def test_one_row_per_layer_value(self):
        rows = run_layer_sweep(toy_corpus(), sweep_config(), layers=[1, 2])
        assert [r.setting for r in rows] == ["L=1", "L=2"]

    def test_type_degree_filter(self):
        corpus = index_corpus(
            [("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a")],
            {
                "train": [("a", "/x/p")]
                + [("b", f"/x/t{i}") for i in range(6)]  # b has 6 train types
                + [("c", "/x/q")],
                "valid": [("b", "/x/p")],
                "test": [("a", "/x/q"), ("b", "/x/q")],
            },
            freebase_clusters,
        )
        filtered = filter_by_type_degree(corpus)
        b = corpus.vocab.entities.to_index("b")
        remaining = {e for e, _, _ in filtered.kg.type_assertions}
        assert b not in remaining  # all of b's assertions gone, every split
        assert len(filtered.kg.triples) == len(corpus.kg.triples)
        a = corpus.vocab.entities.to_index("a")
        assert a in remaining


class TestDroppingSweep:
    def test_rows_per_rate(self):
        rows = run_dropping_sweep(
            toy_corpus(), sweep_config(), "neighbors", rates=[0.25, 0.5]
        )
        assert [r.setting for r in rows] == ["drop neighbors 25%", "drop neighbors 50%"]
        assert rows[0].fingerprint != rows[1].fingerprint

    def test_relation_mode(self):
        rows = run_dropping_sweep(
            toy_corpus(), sweep_config(), "relation_types", rates=[0.5]
        )
        assert rows[0].setting == "drop relation_types 50%"

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            run_dropping_sweep(toy_corpus(), sweep_config(), "entities", rates=[0.5])


class TestPredict:
    def trained(self):
        corpus = toy_corpus()
        result = train(corpus, sweep_config(epochs=30))
        return corpus, restore_model(result.best, corpus)

    def test_known_train_types_excluded(self):
        corpus, model = self.trained()
        out = predict_types(model, corpus, "e0", k=10)
        labels = [l for l, _ in out]
        assert "/music/genre" not in labels  # e0's train type
        assert len(out) == 3  # 4 types minus 1 known

    def test_k_larger_than_vocabulary(self):
        corpus, model = self.trained()
        out = predict_types(model, corpus, "e0", k=100)
        assert len(out) == 3

    def test_top1_is_argmax_of_scores(self):
        corpus, model = self.trained()
        e = corpus.vocab.entities.to_index("e0")
        with torch.no_grad():
            probs = model.entity_batch_probs(
                torch.tensor([e]), model.final_embeddings()
            )[0]
        known = {t for et, t in corpus.kg.assertions("train") if et == e}
        best = max(
            (t for t in range(len(corpus.vocab.types)) if t not in known),
            key=lambda t: (float(probs[t]), -t),
        )
        out = predict_types(model, corpus, "e0", k=1)
        assert out[0][0] == corpus.vocab.types.to_label(best)

    def test_scores_descending(self):
        corpus, model = self.trained()
        out = predict_types(model, corpus, "e4", k=4)
        scores = [s for _, s in out]
        assert scores == sorted(scores, reverse=True)

    def test_unknown_entity(self):
        corpus, model = self.trained()
        with pytest.raises(LookupError):
            predict_types(model, corpus, "nobody", k=3)


class TestMetricsTsv:
    def test_layout(self):
        rows = [
            MetricsRow("full", 0.75, 3.2, 0.677, 0.79, 0.85, "abc123"),
            MetricsRow("w/o e2t", 0.70, 4.0, 0.60, 0.75, 0.80, "abc123"),
        ]
        text = metrics_tsv(rows)
        lines = text.splitlines()
        assert lines[0] == "setting\tMRR\tMR\tHits@1\tHits@3\tHits@10"
        assert lines[1].startswith("full\t0.7500\t3.2\t0.6770")
        assert lines[3] == "# corpus\tfull\tabc123"
        assert len([l for l in lines if not l.startswith("#")]) == 3
