"""Full training run on FB15kET (or YAGO43kET) with the best known settings.

Expects a directory holding triples.tsv / train.tsv / valid.tsv / test.tsv
(plus alignment.tsv for yago43ket); see kgtyper.data.DEFAULT_FILES.  Stats
are checked against the known corpus tables before training.  CPU float64
training at full scale takes hours; --epochs trims the budget for smoke
runs.

    python3 scripts/fb15ket_experiment.py --data-dir /data/FB15kET \
        --out-dir runs/fb15ket
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from kgtyper import evaluate_model, load_corpus_dir, restore_model, save_checkpoint, train
from kgtyper.config import DATASET_PRESETS
from kgtyper.data import EXPECTED_STATS, save_cache, stats_match, stats_report
from kgtyper.evaluation import report_text


def run(args):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    corpus = load_corpus_dir(args.data_dir, dataset=args.dataset)
    stats = corpus.stats()
    print(stats_report(stats, EXPECTED_STATS[args.dataset]))
    if not stats_match(stats, EXPECTED_STATS[args.dataset]):
        print("corpus statistics mismatch; aborting", file=sys.stderr)
        return 1

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_cache(corpus, out_dir / "corpus.cache")

    overrides = {
        k: v for k, v in (("epochs", args.epochs), ("seed", args.seed),
                          ("pooling", args.pooling), ("batch_size", args.batch_size))
        if v is not None
    }
    config = dataclasses.replace(DATASET_PRESETS[args.dataset], **overrides)
    print(config)

    def progress(epoch, loss, valid_mrr):
        mrr = "n/a" if valid_mrr is None else f"{valid_mrr:.4f}"
        print(f"epoch {epoch}: loss {loss:.6f} valid MRR {mrr}", flush=True)

    result = train(corpus, config, progress=progress)
    save_checkpoint(result.best, out_dir / "best.ckpt")
    save_checkpoint(result.final, out_dir / "final.ckpt")

    model = restore_model(result.best, corpus)
    report = evaluate_model(model, corpus, "test")
    print(report_text(report))
    (out_dir / "test_metrics.txt").write_text(report_text(report) + "\n")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", required=True)
    ap.add_argument("--dataset", default="fb15ket", choices=["fb15ket", "yago43ket"])
    ap.add_argument("--out-dir", default="runs/fb15ket")
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--pooling", default=None, choices=["pool", "mha", "mham"])
    ap.add_argument("--batch-size", type=int, default=None)
    sys.exit(run(ap.parse_args()))
