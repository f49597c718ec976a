"""Command-line front end.

Subcommands: prepare (TSV directory -> cached corpus), train, evaluate,
predict, and ablate {views, layers, drop-neighbors, drop-relations}.
Training flags mirror TrainConfig fields; a --config file supplies base
values and explicit flags win over it.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import ablation, data, evaluation, training
from .config import POOLINGS, TrainConfig

logger = logging.getLogger(__name__)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model configuration (overrides --config file)")
    g.add_argument("--config", type=Path, help="YAML or JSON config file")
    g.add_argument("--d", type=int, help="embedding dim per stream")
    g.add_argument("--lr", type=float)
    g.add_argument("--tau", type=float, help="contrastive temperature")
    g.add_argument("--L", type=int, help="propagation layers")
    g.add_argument("--H", type=int, help="attention heads")
    g.add_argument("--M", type=int, help="experts in the mham gate")
    g.add_argument("--beta", type=float, help="negative-sample weight")
    g.add_argument("--lambda", dest="lam", type=float, help="contrastive loss weight")
    g.add_argument("--gamma", type=float, help="L2 weight")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--pooling", choices=POOLINGS)
    g.add_argument(
        "--view-ablation",
        dest="view_ablation",
        help="comma-separated views to ablate (e2t,c2t,e2c)",
    )
    g.add_argument(
        "--include-final-layer",
        dest="include_final_layer",
        action="store_const",
        const=True,
        help="sum propagation layers 0..L instead of 0..L-1",
    )
    g.add_argument("--negative-cap", dest="negative_cap", type=int)
    g.add_argument("--patience", type=int, help="early-stopping patience (valid evals)")
    g.add_argument("--eval-every", dest="eval_every", type=int)


_CONFIG_FIELDS = (
    "d", "lr", "tau", "L", "H", "M", "beta", "lam", "gamma", "epochs",
    "batch_size", "seed", "pooling", "view_ablation", "include_final_layer",
    "negative_cap", "patience", "eval_every",
)


def _resolve_config(args: argparse.Namespace) -> TrainConfig:
    base = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {}
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is None:
            continue
        if name == "view_ablation":
            value = tuple(v for v in value.split(",") if v)
        overrides[name] = value
    return base.replace(**overrides) if overrides else base


def _load_corpus(args: argparse.Namespace) -> data.Corpus:
    return data.load_cache(args.cache)


def _write_or_print(text: str, out: Path | None) -> None:
    if out is None:
        print(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out}")


def cmd_prepare(args) -> int:
    corpus = data.load_corpus_dir(
        args.data_dir,
        dataset=args.dataset,
        column_order=args.column_order,
        cluster_rule=args.cluster_rule,
    )
    expected = data.EXPECTED_STATS.get(args.dataset)
    stats = corpus.stats()
    print(data.stats_report(stats, expected))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    data.save_cache(corpus, args.out)
    print(f"cached corpus at {args.out}")
    if expected is not None and not data.stats_match(stats, expected):
        print("statistics MISMATCH against published table", file=sys.stderr)
        return 1
    return 0


def cmd_train(args) -> int:
    corpus = _load_corpus(args)
    config = _resolve_config(args)
    out_dir: Path = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(epoch, loss, mrr):
        if mrr is not None:
            logger.info("epoch %d  loss %.6f  valid MRR %.4f", epoch, loss, mrr)
        else:
            logger.info("epoch %d  loss %.6f", epoch, loss)

    result = training.train(corpus, config, progress=progress)
    training.save_checkpoint(result.best, out_dir / "best.ckpt")
    training.save_checkpoint(result.final, out_dir / "final.ckpt")
    history = ["epoch\tloss"]
    history += [f"{i + 1}\t{loss:.8f}" for i, loss in enumerate(result.epoch_losses)]
    (out_dir / "losses.tsv").write_text("\n".join(history) + "\n", encoding="utf-8")
    best_note = (
        f"best valid MRR {result.best.best_valid_mrr:.4f} at epoch {result.best.epoch}"
        if result.best.best_valid_mrr is not None
        else "no validation split; best = final"
    )
    print(f"trained {len(result.epoch_losses)} epochs; {best_note}")
    print(f"checkpoints in {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    corpus = _load_corpus(args)
    ckpt = training.load_checkpoint(args.checkpoint)
    model = training.restore_model(ckpt, corpus)
    report = evaluation.evaluate_model(model, corpus, args.split)
    print(evaluation.report_text(report, title=f"{args.split} evaluation"))
    if args.out:
        _write_or_print(evaluation.report_keyvalues(report), args.out)
    return 0


def cmd_predict(args) -> int:
    corpus = _load_corpus(args)
    ckpt = training.load_checkpoint(args.checkpoint)
    model = training.restore_model(ckpt, corpus)
    for label, score in ablation.predict_types(model, corpus, args.entity, args.k):
        print(f"{label}\t{score:.6f}")
    return 0


def _rates(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def cmd_ablate(args) -> int:
    corpus = _load_corpus(args)
    config = _resolve_config(args)
    if args.mode == "views":
        rows = ablation.run_view_ablation(corpus, config)
    elif args.mode == "layers":
        layers = [int(x) for x in args.layers.split(",") if x]
        rows = ablation.run_layer_sweep(
            corpus, config, layers, restrict_type_degree=args.restrict_type_degree
        )
    elif args.mode == "drop-neighbors":
        rows = ablation.run_dropping_sweep(corpus, config, "neighbors", _rates(args.rates))
    else:
        rows = ablation.run_dropping_sweep(corpus, config, "relation_types", _rates(args.rates))
    _write_or_print(ablation.metrics_tsv(rows), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgtyper",
        description="Multi-view contrastive entity typing over knowledge graphs",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse a TSV directory into a corpus cache")
    p.add_argument("--data-dir", type=Path, required=True)
    p.add_argument("--dataset", choices=sorted(data.DATASET_RULES), default="custom")
    p.add_argument("--column-order", default="sro", help="triple column permutation")
    p.add_argument("--cluster-rule", choices=("prefix", "alignment", "none"))
    p.add_argument("--out", type=Path, required=True, help="cache file to write")
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train and checkpoint a model")
    p.add_argument("--cache", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="filtered-ranking metrics for a checkpoint")
    p.add_argument("--cache", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=("valid", "test", "train"), default="test")
    p.add_argument("--out", type=Path, help="also write key-value metrics here")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("predict", help="top-k new types for one entity")
    p.add_argument("--cache", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--entity", required=True)
    p.add_argument("-k", type=int, default=10)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("ablate", help="retraining sweeps emitting a metrics table")
    p.add_argument(
        "mode", choices=("views", "layers", "drop-neighbors", "drop-relations")
    )
    p.add_argument("--cache", type=Path, required=True)
    p.add_argument("--out", type=Path, help="metrics TSV (default: stdout)")
    p.add_argument("--layers", default="1,2,3,4", help="comma list for the layer sweep")
    p.add_argument(
        "--restrict-type-degree",
        action="store_true",
        help="layer sweep only: keep entities with 1-4 train type neighbors",
    )
    p.add_argument("--rates", default="0.25,0.5,0.75,0.9", help="comma list of drop rates")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
