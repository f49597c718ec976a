"""Corpus handling for entity typing over knowledge graphs.

Covers TSV parsing, label vocabularies, type-cluster extraction, the three
bipartite views (entity-type, cluster-type, entity-cluster), per-entity
neighbor sets, and the corpus mutators used by robustness sweeps.
"""

from __future__ import annotations

import hashlib
import logging
import math
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

HAS_TYPE = "has_type"
HAS_CLUSTER = "has_cluster"
IS_CLUSTER_OF = "is_cluster_of"
# These connect the view graphs and must never appear as corpus relations.
RESERVED_RELATIONS = frozenset((HAS_TYPE, HAS_CLUSTER, IS_CLUSTER_OF))

VIEW_KINDS = ("e2t", "c2t", "e2c")

CACHE_VERSION = 1


class ParseError(ValueError):
    """Malformed corpus file; the message carries path and line number."""


class CorpusError(ValueError):
    """Corpus contents violate a structural invariant."""


class LabelIndex:
    """Bidirectional label <-> dense index map (indices follow sorted labels)."""

    __slots__ = ("labels", "index")

    def __init__(self, labels: Iterable[str]):
        self.labels: tuple[str, ...] = tuple(labels)
        self.index: dict[str, int] = {lbl: i for i, lbl in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise CorpusError("duplicate labels in index")

    @classmethod
    def from_iterable(cls, labels: Iterable[str]) -> "LabelIndex":
        return cls(sorted(set(labels)))

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelIndex) and self.labels == other.labels

    def to_index(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise LookupError(f"unknown label: {label!r}") from None

    def to_label(self, i: int) -> str:
        return self.labels[i]

    def fingerprint(self) -> str:
        digest = hashlib.sha256("\n".join(self.labels).encode("utf-8"))
        return digest.hexdigest()


@dataclass(frozen=True)
class Vocabulary:
    entities: LabelIndex
    relations: LabelIndex
    types: LabelIndex
    clusters: LabelIndex

    def fingerprints(self) -> dict[str, str]:
        return {
            "entities": self.entities.fingerprint(),
            "relations": self.relations.fingerprint(),
            "types": self.types.fingerprint(),
            "clusters": self.clusters.fingerprint(),
        }


@dataclass(frozen=True)
class KnowledgeGraph:
    """Relational triples plus split-tagged type assertions, in index space.

    Triples and assertions are stored sorted and duplicate-free so that
    everything built downstream (neighbor order, batches, fingerprints) is
    reproducible.
    """

    triples: tuple[tuple[int, int, int], ...]
    type_assertions: tuple[tuple[int, int, str], ...]
    num_entities: int
    num_relations: int
    num_types: int

    @classmethod
    def build(
        cls,
        triples: Iterable[tuple[int, int, int]],
        type_assertions: Iterable[tuple[int, int, str]],
        num_entities: int,
        num_relations: int,
        num_types: int,
    ) -> "KnowledgeGraph":
        tri = tuple(sorted({(int(s), int(r), int(o)) for s, r, o in triples}))
        asr = tuple(sorted({(int(e), int(t), str(sp)) for e, t, sp in type_assertions}))
        for s, r, o in tri:
            if not (0 <= s < num_entities and 0 <= o < num_entities):
                raise CorpusError(f"triple entity out of range: {(s, r, o)}")
            if not (0 <= r < num_relations):
                raise CorpusError(f"triple relation out of range: {(s, r, o)}")
        for e, t, sp in asr:
            if sp not in SPLITS:
                raise CorpusError(f"unknown split tag: {sp!r}")
            if not (0 <= e < num_entities and 0 <= t < num_types):
                raise CorpusError(f"assertion out of range: {(e, t, sp)}")
        return cls(tri, asr, num_entities, num_relations, num_types)

    @property
    def has_type_id(self) -> int:
        """Relation id reserved for type neighbors (one past the real relations)."""
        return self.num_relations

    def assertions(self, split: str) -> list[tuple[int, int]]:
        if split not in SPLITS:
            raise ValueError(f"unknown split: {split!r}")
        return [(e, t) for e, t, sp in self.type_assertions if sp == split]

    def entity_types(self, splits: Sequence[str] = SPLITS) -> dict[int, set[int]]:
        wanted = set(splits)
        out: dict[int, set[int]] = {}
        for e, t, sp in self.type_assertions:
            if sp in wanted:
                out.setdefault(e, set()).add(t)
        return out

    def relations_in_use(self) -> list[int]:
        return sorted({r for _, r, _ in self.triples})

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for s, r, o in self.triples:
            h.update(f"{s} {r} {o}\n".encode())
        h.update(b"--\n")
        for e, t, sp in self.type_assertions:
            h.update(f"{e} {t} {sp}\n".encode())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# File parsing


def _read_tsv(path, n_fields: int) -> list[tuple[str, ...]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise ParseError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields, "
                    f"got {len(fields)}"
                )
            rows.append(tuple(fields))
    return rows


def parse_triples(path, column_order: str = "sro") -> list[tuple[str, str, str]]:
    """Read a triple TSV; `column_order` permutes the three columns (e.g. "sor")."""
    if sorted(column_order) != ["o", "r", "s"]:
        raise ValueError(f"column_order must be a permutation of 'sro', got {column_order!r}")
    rows = _read_tsv(path, 3)
    out = []
    for fields in rows:
        rec = dict(zip(column_order, fields))
        out.append((rec["s"], rec["r"], rec["o"]))
    return out


def parse_type_assertions(path, split: str) -> list[tuple[str, str]]:
    """Read an "entity<TAB>type" TSV for the given split tag."""
    if split not in SPLITS:
        raise ValueError(f"unknown split: {split!r}")
    return [(e, t) for e, t in _read_tsv(path, 2)]


# ---------------------------------------------------------------------------
# Cluster extraction


def freebase_clusters(type_label: str) -> set[str]:
    """Clusters of a hierarchical type label: all strict path prefixes.

    "/a/b/c" yields {"a", "/a/b"}; the single-segment prefix drops its
    leading slash.  Labels without a hierarchy yield the empty set.
    """
    if not type_label.startswith("/"):
        return set()
    segments = [s for s in type_label.split("/")[1:] if s]
    if len(segments) < 2:
        return set()
    out = set()
    for k in range(1, len(segments)):
        prefix = "/".join(segments[:k])
        out.add(prefix if k == 1 else "/" + prefix)
    return out


def load_alignment(path) -> dict[str, frozenset[str]]:
    """Load a "type<TAB>concept" TSV; a type may align to several concepts."""
    mapping: dict[str, set[str]] = {}
    for t, c in _read_tsv(path, 2):
        mapping.setdefault(t, set()).add(c)
    return {t: frozenset(cs) for t, cs in mapping.items()}


def alignment_clusters(alignment: Mapping[str, frozenset[str]], type_label: str) -> set[str]:
    """Clusters of a type via a concept alignment; unaligned types get none."""
    return set(alignment.get(type_label, ()))


# ---------------------------------------------------------------------------
# Views


@dataclass(frozen=True)
class ViewGraph:
    """Uni-relational bipartite graph with degree tables.

    `edges` is a sorted, duplicate-free (m, 2) int64 array of
    (left index, right index) pairs.
    """

    kind: str
    left_count: int
    right_count: int
    edges: np.ndarray
    left_degree: np.ndarray
    right_degree: np.ndarray

    @classmethod
    def build(
        cls,
        kind: str,
        left_count: int,
        right_count: int,
        edges: Iterable[tuple[int, int]],
    ) -> "ViewGraph":
        uniq = sorted({(int(a), int(b)) for a, b in edges})
        arr = np.asarray(uniq, dtype=np.int64).reshape(len(uniq), 2)
        if len(uniq):
            if arr[:, 0].min() < 0 or arr[:, 0].max() >= left_count:
                raise CorpusError(f"{kind}: left endpoint out of bounds")
            if arr[:, 1].min() < 0 or arr[:, 1].max() >= right_count:
                raise CorpusError(f"{kind}: right endpoint out of bounds")
        else:
            logger.warning("view %s is empty", kind)
        left_deg = np.bincount(arr[:, 0], minlength=left_count).astype(np.int64)
        right_deg = np.bincount(arr[:, 1], minlength=right_count).astype(np.int64)
        return cls(kind, left_count, right_count, arr, left_deg, right_deg)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])


def build_views(
    kg: KnowledgeGraph,
    cluster_map: Mapping[int, frozenset[int]],
    num_clusters: int,
) -> dict[str, ViewGraph]:
    """Construct the e2t / c2t / e2c views.

    Only train-split assertions become e2t edges; c2t comes from the cluster
    map; e2c is the relational join of the two over shared types.
    """
    e2t_edges = set(kg.assertions("train"))
    c2t_edges = {(c, t) for t, cs in cluster_map.items() for c in cs}
    e2c_edges = {(e, c) for e, t in e2t_edges for c in cluster_map.get(t, ())}
    return {
        "e2t": ViewGraph.build("e2t", kg.num_entities, kg.num_types, e2t_edges),
        "c2t": ViewGraph.build("c2t", num_clusters, kg.num_types, c2t_edges),
        "e2c": ViewGraph.build("e2c", kg.num_entities, num_clusters, e2c_edges),
    }


# ---------------------------------------------------------------------------
# Neighbor sets


@dataclass(frozen=True)
class NeighborSet:
    """Train-split neighbors of one entity, in deterministic sorted order."""

    entity: int
    relational: tuple[tuple[int, int], ...]  # (relation, object)
    typed: tuple[tuple[int, int], ...]  # (has_type id, type)

    def __len__(self) -> int:
        return len(self.relational) + len(self.typed)


def neighbor_set(kg: KnowledgeGraph, entity: int) -> NeighborSet:
    if not 0 <= entity < kg.num_entities:
        raise LookupError(f"entity id out of range: {entity}")
    relational = tuple(sorted((r, o) for s, r, o in kg.triples if s == entity))
    typed = tuple(
        sorted((kg.has_type_id, t) for e, t, sp in kg.type_assertions
               if e == entity and sp == "train")
    )
    return NeighborSet(entity, relational, typed)


def neighbor_arrays(kg: KnowledgeGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten every entity's neighbor list into CSR-style arrays.

    Returns (offsets, rel_ids, node_ids, is_type); entity e owns the slice
    offsets[e]:offsets[e+1].  Order matches NeighborSet: relational pairs
    sorted by (relation, object) first, then type neighbors sorted by type.
    """
    per_entity: list[list[tuple[int, int, int]]] = [[] for _ in range(kg.num_entities)]
    for s, r, o in kg.triples:
        per_entity[s].append((0, r, o))
    for e, t, sp in kg.type_assertions:
        if sp == "train":
            per_entity[e].append((1, kg.has_type_id, t))
    offsets = np.zeros(kg.num_entities + 1, dtype=np.int64)
    rel_ids, node_ids, is_type = [], [], []
    for e, items in enumerate(per_entity):
        items.sort()
        offsets[e + 1] = offsets[e] + len(items)
        for flag, r, n in items:
            is_type.append(flag)
            rel_ids.append(r)
            node_ids.append(n)
    return (
        offsets,
        np.asarray(rel_ids, dtype=np.int64),
        np.asarray(node_ids, dtype=np.int64),
        np.asarray(is_type, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Corpus mutators


def drop_relational_neighbors(kg: KnowledgeGraph, rate: float, seed: int) -> KnowledgeGraph:
    """Keep a uniform sample of ceil((1-rate)*|triples|) triples."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    n = len(kg.triples)
    keep = math.ceil((1.0 - rate) * n)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=keep, replace=False) if n else np.empty(0, dtype=np.int64)
    kept = [kg.triples[i] for i in chosen]
    return KnowledgeGraph.build(
        kept, kg.type_assertions, kg.num_entities, kg.num_relations, kg.num_types
    )


def drop_relation_types(kg: KnowledgeGraph, rate: float, seed: int) -> KnowledgeGraph:
    """Keep a uniform sample of distinct relation ids; drop all other triples."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    rels = kg.relations_in_use()
    keep = math.ceil((1.0 - rate) * len(rels))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(rels), size=keep, replace=False) if rels else np.empty(0, dtype=np.int64)
    kept_rels = {rels[i] for i in chosen}
    kept = [t for t in kg.triples if t[1] in kept_rels]
    return KnowledgeGraph.build(
        kept, kg.type_assertions, kg.num_entities, kg.num_relations, kg.num_types
    )


# ---------------------------------------------------------------------------
# Corpus assembly


@dataclass
class Corpus:
    """Prepared dataset: vocabulary, graph, cluster map, and the three views."""

    vocab: Vocabulary
    kg: KnowledgeGraph
    cluster_map: dict[int, frozenset[int]]
    views: dict[str, ViewGraph]

    @classmethod
    def assemble(
        cls,
        vocab: Vocabulary,
        kg: KnowledgeGraph,
        cluster_map: Mapping[int, frozenset[int]],
    ) -> "Corpus":
        cmap = {int(t): frozenset(int(c) for c in cs) for t, cs in cluster_map.items() if cs}
        views = build_views(kg, cmap, len(vocab.clusters))
        return cls(vocab, kg, cmap, views)

    def with_kg(self, kg: KnowledgeGraph) -> "Corpus":
        """Same vocabulary and clusters over a mutated graph; views rebuilt."""
        return Corpus.assemble(self.vocab, kg, self.cluster_map)

    def known_types(self) -> dict[int, set[int]]:
        """All true types per entity across every split (filtered-ranking sets)."""
        return self.kg.entity_types(SPLITS)

    def stats(self) -> "CorpusStats":
        counts = {sp: 0 for sp in SPLITS}
        for _, _, sp in self.kg.type_assertions:
            counts[sp] += 1
        without = sum(
            1 for t in range(len(self.vocab.types)) if not self.cluster_map.get(t)
        )
        return CorpusStats(
            entities=len(self.vocab.entities),
            relations=len(self.vocab.relations),
            types=len(self.vocab.types),
            clusters=len(self.vocab.clusters),
            train_triples=len(self.kg.triples),
            train_tuples=counts["train"],
            valid_tuples=counts["valid"],
            test_tuples=counts["test"],
            types_without_clusters=without,
        )


def index_corpus(
    raw_triples: Sequence[tuple[str, str, str]],
    raw_assertions: Mapping[str, Sequence[tuple[str, str]]],
    cluster_fn,
) -> Corpus:
    """Index raw string records into a Corpus.

    `cluster_fn` maps a type label to its set of cluster labels; pass
    ``lambda _: set()`` for corpora without cluster information.
    """
    relations = {r for _, r, _ in raw_triples}
    bad = relations & RESERVED_RELATIONS
    if bad:
        raise CorpusError(f"reserved relation labels present in triples: {sorted(bad)}")
    entities = {s for s, _, _ in raw_triples} | {o for _, _, o in raw_triples}
    types: set[str] = set()
    for split, pairs in raw_assertions.items():
        if split not in SPLITS:
            raise ValueError(f"unknown split: {split!r}")
        for e, t in pairs:
            entities.add(e)
            types.add(t)

    cluster_labels: dict[str, set[str]] = {t: set(cluster_fn(t)) for t in types}
    all_clusters = sorted({c for cs in cluster_labels.values() for c in cs})
    unclustered = sum(1 for cs in cluster_labels.values() if not cs)
    if unclustered:
        logger.warning("%d of %d types have no cluster", unclustered, len(types))

    vocab = Vocabulary(
        entities=LabelIndex.from_iterable(entities),
        relations=LabelIndex.from_iterable(relations),
        types=LabelIndex.from_iterable(types),
        clusters=LabelIndex(all_clusters),
    )
    triples = [
        (vocab.entities.to_index(s), vocab.relations.to_index(r), vocab.entities.to_index(o))
        for s, r, o in raw_triples
    ]
    assertions = [
        (vocab.entities.to_index(e), vocab.types.to_index(t), split)
        for split, pairs in raw_assertions.items()
        for e, t in pairs
    ]
    kg = KnowledgeGraph.build(
        triples, assertions, len(vocab.entities), len(vocab.relations), len(vocab.types)
    )
    cluster_map = {
        vocab.types.to_index(t): frozenset(vocab.clusters.to_index(c) for c in cs)
        for t, cs in cluster_labels.items()
        if cs
    }
    return Corpus.assemble(vocab, kg, cluster_map)


DEFAULT_FILES = {
    "triples": "triples.tsv",
    "train": "train.tsv",
    "valid": "valid.tsv",
    "test": "test.tsv",
    "alignment": "alignment.tsv",
}

DATASET_RULES = {"fb15ket": "prefix", "yago43ket": "alignment", "custom": "prefix"}


def load_corpus_dir(
    data_dir,
    dataset: str = "custom",
    column_order: str = "sro",
    cluster_rule: str | None = None,
    files: Mapping[str, str] | None = None,
) -> Corpus:
    """Load a corpus from a directory of TSV files (see DEFAULT_FILES)."""
    if dataset not in DATASET_RULES:
        raise ValueError(f"unknown dataset kind: {dataset!r}")
    rule = cluster_rule or DATASET_RULES[dataset]
    names = dict(DEFAULT_FILES)
    if files:
        names.update(files)
    root = Path(data_dir)

    raw_triples = parse_triples(root / names["triples"], column_order)
    raw_assertions = {
        sp: parse_type_assertions(root / names[sp], sp) for sp in SPLITS
    }
    if rule == "prefix":
        cluster_fn = freebase_clusters
    elif rule == "alignment":
        alignment = load_alignment(root / names["alignment"])
        cluster_fn = lambda t: alignment_clusters(alignment, t)
    elif rule == "none":
        cluster_fn = lambda t: set()
    else:
        raise ValueError(f"unknown cluster rule: {rule!r}")
    return index_corpus(raw_triples, raw_assertions, cluster_fn)


def export_tsv(corpus: Corpus, out_dir) -> None:
    """Write the corpus back out as the TSV file set load_corpus_dir reads.

    Cluster information is not exported; the prefix rule reproduces it for
    hierarchical type labels.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    ents, rels, typs = corpus.vocab.entities, corpus.vocab.relations, corpus.vocab.types
    with open(root / DEFAULT_FILES["triples"], "w", encoding="utf-8") as fh:
        for s, r, o in corpus.kg.triples:
            fh.write(f"{ents.to_label(s)}\t{rels.to_label(r)}\t{ents.to_label(o)}\n")
    for split in SPLITS:
        with open(root / DEFAULT_FILES[split], "w", encoding="utf-8") as fh:
            for e, t in corpus.kg.assertions(split):
                fh.write(f"{ents.to_label(e)}\t{typs.to_label(t)}\n")


def save_cache(corpus: Corpus, path) -> None:
    with open(path, "wb") as fh:
        pickle.dump({"version": CACHE_VERSION, "corpus": corpus}, fh)


def load_cache(path) -> Corpus:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("version") != CACHE_VERSION:
        raise CorpusError(f"unsupported cache version: {payload.get('version')!r}")
    return payload["corpus"]


# ---------------------------------------------------------------------------
# Statistics report


@dataclass(frozen=True)
class CorpusStats:
    entities: int
    relations: int
    types: int
    clusters: int
    train_triples: int
    train_tuples: int
    valid_tuples: int
    test_tuples: int
    types_without_clusters: int = 0


# Published statistics for the two standard corpora; the cluster counts double
# as a check on the cluster extraction rules.
EXPECTED_STATS = {
    "fb15ket": CorpusStats(14951, 1345, 3584, 1081, 483142, 136618, 15848, 15847),
    "yago43ket": CorpusStats(42335, 37, 45182, 1124, 331686, 375853, 43111, 43119),
}

_STAT_FIELDS = (
    "entities", "relations", "types", "clusters",
    "train_triples", "train_tuples", "valid_tuples", "test_tuples",
)


def stats_report(stats: CorpusStats, expected: CorpusStats | None = None) -> str:
    """Render the dataset statistics, with pass/fail marks when expectations exist."""
    lines = ["dataset statistics"]
    for name in _STAT_FIELDS:
        got = getattr(stats, name)
        if expected is None:
            lines.append(f"  {name:<22}{got:>10}")
        else:
            want = getattr(expected, name)
            mark = "ok" if got == want else f"MISMATCH (expected {want})"
            lines.append(f"  {name:<22}{got:>10}  {mark}")
    lines.append(f"  {'types_without_clusters':<22}{stats.types_without_clusters:>10}")
    return "\n".join(lines)


def stats_match(stats: CorpusStats, expected: CorpusStats) -> bool:
    return all(getattr(stats, f) == getattr(expected, f) for f in _STAT_FIELDS)


# ---------------------------------------------------------------------------
# Built-in toy corpus


def toy_corpus() -> Corpus:
    """Six-entity corpus whose neighbor evidence pins down every type.

    Types follow the hierarchical label convention so the prefix rule yields
    two clusters (music, sport).  Small enough to memorize in seconds.
    """
    types = ["/music/genre", "/music/artist", "/sport/team", "/sport/event"]
    train = {
        "e0": [types[0]],
        "e1": [types[1]],
        "e2": [types[2]],
        "e3": [types[3]],
        "e4": [types[0], types[2]],
        "e5": [types[1], types[3]],
    }
    entities = sorted(train)
    triples = []
    for i, e in enumerate(entities):
        triples.append((e, "r0", entities[(i + 1) % len(entities)]))
        triples.append((e, "r1", entities[(i + 2) % len(entities)]))
    assertions = {
        "train": [(e, t) for e, ts in sorted(train.items()) for t in ts],
        "valid": [("e4", types[3]), ("e1", types[0])],
        "test": [("e5", types[2]), ("e0", types[1])],
    }
    return index_corpus(triples, assertions, freebase_clusters)
