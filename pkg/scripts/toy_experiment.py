"""End-to-end walkthrough on the built-in synthetic corpus.

Exports the six-entity toy graph to TSV, then drives the CLI through
prepare -> train -> evaluate -> predict -> ablate exactly as one would on a
real corpus.  Finishes in a few seconds on CPU and is a good smoke test for
a fresh install.

    python3 scripts/toy_experiment.py --work-dir /tmp/kgtyper-toy
"""

import argparse
import sys
from pathlib import Path

from kgtyper.cli import main as cli
from kgtyper.data import export_tsv, toy_corpus


def run(args):
    work = Path(args.work_dir)
    tsv_dir = work / "tsv"
    tsv_dir.mkdir(parents=True, exist_ok=True)
    export_tsv(toy_corpus(), tsv_dir)
    cache = work / "corpus.cache"
    out_dir = work / "run"

    steps = [
        ["prepare", "--data-dir", str(tsv_dir), "--dataset", "custom",
         "--out", str(cache)],
        ["train", "--cache", str(cache), "--out-dir", str(out_dir),
         "--d", "32", "--lr", "0.005", "--epochs", str(args.epochs),
         "--batch-size", "6", "--H", "2", "--M", "4",
         "--pooling", args.pooling, "--seed", str(args.seed)],
        ["evaluate", "--cache", str(cache),
         "--checkpoint", str(out_dir / "best.ckpt"), "--split", "test",
         "--out", str(out_dir / "test_metrics.tsv")],
        ["predict", "--cache", str(cache),
         "--checkpoint", str(out_dir / "best.ckpt"), "--entity", "e0", "-k", "3"],
        ["ablate", "views", "--cache", str(cache),
         "--d", "16", "--lr", "0.005", "--epochs", "10", "--batch-size", "6",
         "--H", "2", "--M", "2", "--seed", str(args.seed),
         "--out", str(out_dir / "view_ablation.tsv")],
    ]
    for step in steps:
        print(f"\n$ kgtyper {' '.join(step)}")
        rc = cli(step)
        if rc != 0:
            return rc
    print(f"\nartifacts under {out_dir}")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work-dir", default="/tmp/kgtyper-toy")
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--pooling", default="mham", choices=["pool", "mha", "mham"])
    ap.add_argument("--seed", type=int, default=0)
    sys.exit(run(ap.parse_args()))
