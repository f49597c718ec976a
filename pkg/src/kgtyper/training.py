"""Training loop and checkpoint persistence.

Adam over shuffled entity mini-batches of the joint objective; validation
MRR drives best-checkpoint tracking and early stopping.  Checkpoints are a
single self-describing binary file (see CKPT_MAGIC below): magic, format
version, JSON header with config / vocabulary hashes / table manifest, then
raw float64 little-endian table bytes in manifest order.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import TrainConfig
from .data import Corpus
from .evaluation import evaluate_model
from .model import TypingModel

logger = logging.getLogger(__name__)

CKPT_MAGIC = b"KGETCKPT"
CKPT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Joint loss went non-finite; carries epoch and batch indices."""


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab_fingerprints: dict[str, str]
    epoch: int
    best_valid_mrr: float | None
    tables: dict[str, np.ndarray]  # insertion order is the declared file order


@dataclass
class TrainResult:
    best: Checkpoint
    final: Checkpoint
    epoch_losses: list[float] = field(default_factory=list)
    valid_history: list[tuple[int, float]] = field(default_factory=list)
    stopped_early: bool = False


def _snapshot_tables(model: TypingModel) -> dict[str, np.ndarray]:
    return {
        name: p.detach().clone().numpy()
        for name, p in model.named_parameters()
    }


def make_checkpoint(
    model: TypingModel, corpus: Corpus, epoch: int, best_valid_mrr: float | None
) -> Checkpoint:
    return Checkpoint(
        config=model.config,
        vocab_fingerprints=corpus.vocab.fingerprints(),
        epoch=epoch,
        best_valid_mrr=best_valid_mrr,
        tables=_snapshot_tables(model),
    )


def train(corpus: Corpus, config: TrainConfig, progress=None, stop_when=None) -> TrainResult:
    """Optimize the joint objective; deterministic for a fixed (corpus, config).

    `progress`, when given, is called as progress(epoch, mean_loss, valid_mrr)
    after each epoch (valid_mrr is None on non-evaluation epochs).
    `stop_when(model, epoch) -> bool` is polled every eval_every epochs and
    ends training when it returns True (convergence probes, time budgets).
    """
    config.validate()
    model = TypingModel(corpus, config)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    shuffle_gen = torch.Generator().manual_seed(config.seed + 1)
    neg_gen = torch.Generator().manual_seed(config.seed + 2)

    train_types: dict[int, list[int]] = {}
    for e, t, sp in corpus.kg.type_assertions:
        if sp == "train":
            train_types.setdefault(e, []).append(t)
    train_entities = torch.as_tensor(
        [e for e in sorted(train_types) if model.neighbor_count(e) > 0],
        dtype=torch.long,
    )
    dropped = len(train_types) - train_entities.numel()
    if dropped:
        logger.warning("%d typed entities have no neighbors and are not trained on", dropped)
    if train_entities.numel() == 0:
        raise ValueError("no trainable entities (every typed entity lacks neighbors)")
    has_valid = bool(corpus.kg.assertions("valid"))

    epoch_losses: list[float] = []
    valid_history: list[tuple[int, float]] = []
    best_mrr: float | None = None
    best_tables: dict[str, np.ndarray] | None = None
    best_epoch = 0
    since_best = 0
    stopped_early = False

    for epoch in range(1, config.epochs + 1):
        perm = torch.randperm(train_entities.numel(), generator=shuffle_gen)
        total, batches = 0.0, 0
        for lo in range(0, perm.numel(), config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            entities = train_entities[idx]
            targets = torch.zeros(
                entities.numel(), model.num_types, dtype=torch.bool
            )
            for row, e in enumerate(entities.tolist()):
                targets[row, train_types[e]] = True
            loss, parts = model.batch_loss(entities, targets, neg_gen)
            if not bool(torch.isfinite(loss)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {batches}: {parts}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += parts["joint"]
            batches += 1
        mean_loss = total / batches
        epoch_losses.append(mean_loss)

        mrr = None
        if has_valid and epoch % config.eval_every == 0:
            mrr = evaluate_model(model, corpus, "valid").mrr
            valid_history.append((epoch, mrr))
            if best_mrr is None or mrr > best_mrr:
                best_mrr = mrr
                best_tables = _snapshot_tables(model)
                best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    stopped_early = True
        if (
            stop_when is not None
            and epoch % config.eval_every == 0
            and stop_when(model, epoch)
        ):
            stopped_early = True
        if progress is not None:
            progress(epoch, mean_loss, mrr)
        if stopped_early:
            logger.info(
                "stopping at epoch %d: no valid MRR gain in %d evaluations",
                epoch, config.patience,
            )
            break

    final = make_checkpoint(model, corpus, len(epoch_losses), best_mrr)
    if best_tables is None:
        best = final
    else:
        best = Checkpoint(
            config=config,
            vocab_fingerprints=corpus.vocab.fingerprints(),
            epoch=best_epoch,
            best_valid_mrr=best_mrr,
            tables=best_tables,
        )
    return TrainResult(best, final, epoch_losses, valid_history, stopped_early)


# ---------------------------------------------------------------------------
# Checkpoint persistence


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab_fingerprints,
        "epoch": ckpt.epoch,
        "best_valid_mrr": ckpt.best_valid_mrr,
        "tables": [
            {"name": name, "shape": list(arr.shape)}
            for name, arr in ckpt.tables.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in ckpt.tables.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tables: dict[str, np.ndarray] = {}
        for entry in header["tables"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"truncated checkpoint table {entry['name']!r}")
            tables[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise ValueError("trailing bytes after declared tables")
    return Checkpoint(
        config=TrainConfig.from_dict(header["config"]),
        vocab_fingerprints=header["vocab"],
        epoch=header["epoch"],
        best_valid_mrr=header["best_valid_mrr"],
        tables=tables,
    )


def restore_model(ckpt: Checkpoint, corpus: Corpus) -> TypingModel:
    """Rebuild a model from a checkpoint over the same prepared corpus."""
    fps = corpus.vocab.fingerprints()
    if fps != ckpt.vocab_fingerprints:
        bad = sorted(k for k in fps if fps[k] != ckpt.vocab_fingerprints.get(k))
        raise ValueError(f"vocabulary mismatch with checkpoint: {bad}")
    model = TypingModel(corpus, ckpt.config)
    params = dict(model.named_parameters())
    if set(params) != set(ckpt.tables):
        missing = sorted(set(params) ^ set(ckpt.tables))
        raise ValueError(f"parameter table mismatch: {missing}")
    with torch.no_grad():
        for name, arr in ckpt.tables.items():
            if tuple(params[name].shape) != arr.shape:
                raise ValueError(
                    f"shape mismatch for {name}: {tuple(params[name].shape)} vs {arr.shape}"
                )
            params[name].copy_(torch.from_numpy(arr))
    return model
