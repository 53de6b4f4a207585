"""Synthetic source graphs, BFS subgraph sampling, and labeled pair datasets.

A dataset directory holds: corpus.jsonl, vocab.json, split.json,
pairs_train.csv / pairs_val.csv / pairs_test.csv, and stats.json (which
carries a corpus checksum). The entire bundle is a pure function of the
source graph, the sampler spec, and the seeds involved.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import ged
from .errors import DataError, SearchLimitError, UsageError
from .graphs import HetGraph, TypeVocab, read_corpus, validate_graph, write_corpus

TRAIN_FULL_CROSS_LIMIT = 600      # full train x train product up to this many graphs
TRAIN_PAIR_CAP_DEFAULT = 200_000  # seeded subsample size above that


@dataclass(frozen=True)
class SamplerSpec:
    """BFS sampling knobs: subgraph size budget and a type-diversity floor
    that keeps samples from degrading into single-type graphs."""

    max_nodes: int = 16
    min_node_types: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.max_nodes < 1:
            raise UsageError("max_nodes must be >= 1")
        if self.min_node_types < 1:
            raise UsageError("min_node_types must be >= 1")


@dataclass(frozen=True)
class GraphPair:
    id_a: str
    id_b: str
    hged: int
    norm_score: float


@dataclass
class DatasetBundle:
    vocab: TypeVocab
    corpus: dict[str, HetGraph]
    split: dict[str, list[str]]
    pairs: dict[str, list[GraphPair]]
    stats: dict


def synth_source_graph(n_node_types: int, n_edge_types: int, n_nodes: int,
                       mean_degree: float, seed: int) -> tuple[HetGraph, TypeVocab]:
    """Random typed source graph, deterministic in `seed`.

    Node types follow a fixed Zipf-like weighting (type k has weight
    1/(k+1)); edge types mostly follow an endpoint-type compatibility table
    ((c_u + c_v) mod |R|) with a 25% uniform exception so edge types stay
    informative beyond the endpoint types.
    """
    if n_node_types < 1 or n_edge_types < 1 or n_nodes < 1:
        raise UsageError("type and node counts must be >= 1")
    if mean_degree < 0 or mean_degree > n_nodes - 1:
        raise UsageError(f"mean_degree {mean_degree} impossible for {n_nodes} nodes")
    vocab = TypeVocab(tuple(f"nt{i}" for i in range(n_node_types)),
                      tuple(f"et{i}" for i in range(n_edge_types)))
    rng = random.Random(seed)
    weights = [1.0 / (k + 1) for k in range(n_node_types)]
    types = rng.choices(range(n_node_types), weights=weights, k=n_nodes)

    target = round(mean_degree * n_nodes / 2)
    edges: set[tuple[int, int, int]] = set()
    attempts = 0
    limit = 20 * target + 100
    while len(edges) < target and attempts < limit:
        attempts += 1
        u = rng.randrange(n_nodes)
        v = rng.randrange(n_nodes)
        if u == v:
            continue
        base = (types[u] + types[v]) % n_edge_types
        t = base if rng.random() < 0.75 else rng.randrange(n_edge_types)
        edges.add((min(u, v), max(u, v), t))
    return HetGraph("src", tuple(types), frozenset(edges)), vocab


def bfs_sample(source: HetGraph, spec: SamplerSpec, rng: random.Random,
               n_node_types: int | None = None) -> HetGraph:
    """Sample one connected induced subgraph by randomized-layer BFS.

    Starts from a uniform random seed node and admits frontier nodes one by
    one (shuffled within each layer) until the next admission would exceed
    max_nodes. Samples showing fewer than min_node_types distinct node types
    are rejected and redrawn, up to 100 attempts.
    """
    if source.n_nodes == 0:
        raise DataError("cannot sample from an empty source graph")
    if n_node_types is not None and spec.min_node_types > n_node_types:
        raise UsageError("min_node_types exceeds the vocabulary size")
    adj = source.neighbors()
    for _ in range(100):
        start = rng.randrange(source.n_nodes)
        selected = [start]
        chosen = {start}
        frontier = [start]
        while frontier and len(selected) < spec.max_nodes:
            layer = sorted({m for n in frontier for m, _ in adj[n] if m not in chosen})
            rng.shuffle(layer)
            admitted = []
            for node in layer:
                if len(selected) >= spec.max_nodes:
                    break
                selected.append(node)
                chosen.add(node)
                admitted.append(node)
            frontier = admitted
        present_types = {source.node_type_ids[n] for n in selected}
        if len(present_types) < spec.min_node_types:
            continue
        index = {node: i for i, node in enumerate(selected)}
        edges = frozenset(
            (min(index[s], index[d]), max(index[s], index[d]), t)
            for s, d, t in source.edges if s in chosen and d in chosen)
        return HetGraph("sample", tuple(source.node_type_ids[n] for n in selected), edges)
    raise DataError(
        f"could not draw a sample with >= {spec.min_node_types} node types in 100 attempts")


def build_corpus(source: HetGraph, vocab: TypeVocab, count: int,
                 spec: SamplerSpec) -> tuple[dict[str, HetGraph], dict]:
    """Draw `count` samples with sequential ids plus summary statistics."""
    if count < 1:
        raise UsageError("corpus size must be >= 1")
    rng = random.Random(spec.seed)
    corpus: dict[str, HetGraph] = {}
    total_nodes = 0
    total_edges = 0
    for i in range(count):
        g = bfs_sample(source, spec, rng, n_node_types=len(vocab.node_types))
        g = dataclasses.replace(g, id=f"g{i:05d}")
        bad = validate_graph(g, vocab)
        if bad:
            raise DataError(f"sampler produced an invalid graph: {bad[0]}")
        corpus[g.id] = g
        total_nodes += g.n_nodes
        total_edges += g.n_edges
    stats = {
        "graphs": count,
        "avg_nodes": total_nodes / count,
        "avg_edges": total_edges / count,
        "node_types": len(vocab.node_types),
        "edge_types": len(vocab.edge_types),
        "max_nodes": spec.max_nodes,
    }
    return corpus, stats


def split_corpus(ids, ratios: tuple[int, int, int] = (6, 2, 2),
                 seed: int = 0) -> dict[str, list[str]]:
    """Shuffle then split contiguously; remainders stay in train."""
    ids = list(ids)
    if len(ids) < 5:
        raise UsageError("need at least 5 graphs to split")
    total = sum(ratios)
    n_val = int(len(ids) * ratios[1] / total)
    n_test = int(len(ids) * ratios[2] / total)
    n_train = len(ids) - n_val - n_test
    shuffled = ids[:]
    random.Random(seed).shuffle(shuffled)
    return {
        "train": shuffled[:n_train],
        "val": shuffled[n_train:n_train + n_val],
        "test": shuffled[n_train + n_val:],
    }


def _label_chunk(args):
    chunk, limit = args
    out = []
    for ga, gb in chunk:
        try:
            dist = ged.ged_astar(ga, gb, expansion_limit=limit)
        except SearchLimitError:
            out.append(None)
            continue
        out.append(dist)
    return out


def _label_pairs(id_pairs, corpus, limit, jobs):
    payload = [(corpus[a], corpus[b]) for a, b in id_pairs]
    if jobs <= 1 or len(payload) < 64:
        results = _label_chunk((payload, limit))
    else:
        chunksize = max(1, (len(payload) + jobs * 4 - 1) // (jobs * 4))
        chunks = [(payload[i:i + chunksize], limit)
                  for i in range(0, len(payload), chunksize)]
        results = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_label_chunk, chunks):
                results.extend(part)
    labeled = []
    failures = 0
    for (id_a, id_b), dist in zip(id_pairs, results):
        if dist is None:
            failures += 1
            continue
        score = ged.normalize_score(dist, corpus[id_a].n_nodes, corpus[id_b].n_nodes)
        labeled.append(GraphPair(id_a, id_b, dist, score))
    return labeled, failures


def build_pairs(split: dict[str, list[str]], corpus: dict[str, HetGraph],
                train_pair_cap: int | None = None, seed: int = 0,
                expansion_limit: int | None = None,
                jobs: int = 1) -> tuple[dict[str, list[GraphPair]], int]:
    """Label train/val/test pair lists with exact distances.

    Train pairs are the unordered train x train product, subsampled with
    `seed` down to a cap (explicit, or 200k once the train split exceeds 600
    graphs). Val/test pairs cross each held-out graph with every train
    graph. Pairs whose solve hits the expansion limit are dropped and
    counted.
    """
    train = split["train"]
    train_pairs = list(itertools.combinations(train, 2))
    cap = train_pair_cap
    if cap is None and len(train) > TRAIN_FULL_CROSS_LIMIT:
        cap = TRAIN_PAIR_CAP_DEFAULT
    if cap is not None and len(train_pairs) > cap:
        train_pairs = random.Random(seed).sample(train_pairs, cap)

    pairs = {}
    failures = 0
    for phase, id_pairs in (
            ("train", train_pairs),
            ("val", [(v, t) for v in split["val"] for t in train]),
            ("test", [(w, t) for w in split["test"] for t in train])):
        labeled, failed = _label_pairs(id_pairs, corpus, expansion_limit, jobs)
        pairs[phase] = labeled
        failures += failed
    return pairs, failures


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_dataset(bundle: DatasetBundle, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    corpus_path = os.path.join(out_dir, "corpus.jsonl")
    write_corpus(corpus_path, bundle.corpus.values(), bundle.vocab)
    with open(os.path.join(out_dir, "vocab.json"), "w", encoding="utf-8") as fh:
        fh.write(bundle.vocab.to_json() + "\n")
    with open(os.path.join(out_dir, "split.json"), "w", encoding="utf-8") as fh:
        json.dump(bundle.split, fh)
        fh.write("\n")
    for phase, plist in bundle.pairs.items():
        ged.write_pairs_csv(
            os.path.join(out_dir, f"pairs_{phase}.csv"),
            [(p.id_a, p.id_b, p.hged, p.norm_score) for p in plist])
    stats = dict(bundle.stats)
    stats["corpus_sha256"] = _sha256_file(corpus_path)
    with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, sort_keys=True)
        fh.write("\n")


def read_dataset(data_dir) -> DatasetBundle:
    """Load a dataset directory, naming any missing file and verifying the
    corpus checksum recorded in stats.json."""
    names = ["corpus.jsonl", "vocab.json", "split.json", "stats.json",
             "pairs_train.csv", "pairs_val.csv", "pairs_test.csv"]
    for name in names:
        if not os.path.exists(os.path.join(data_dir, name)):
            raise DataError(f"dataset file missing: {os.path.join(data_dir, name)}")
    with open(os.path.join(data_dir, "vocab.json"), "r", encoding="utf-8") as fh:
        vocab = TypeVocab.from_json(fh.read())
    with open(os.path.join(data_dir, "stats.json"), "r", encoding="utf-8") as fh:
        stats = json.load(fh)
    corpus_path = os.path.join(data_dir, "corpus.jsonl")
    recorded = stats.get("corpus_sha256")
    actual = _sha256_file(corpus_path)
    if recorded is not None and recorded != actual:
        raise DataError(f"corpus checksum mismatch in {corpus_path}")
    corpus = read_corpus(corpus_path, vocab)
    with open(os.path.join(data_dir, "split.json"), "r", encoding="utf-8") as fh:
        split = json.load(fh)
    for phase in ("train", "val", "test"):
        for gid in split.get(phase, []):
            if gid not in corpus:
                raise DataError(f"split references unknown graph id {gid!r}")
    pairs = {}
    for phase in ("train", "val", "test"):
        rows = ged.read_pairs_csv(os.path.join(data_dir, f"pairs_{phase}.csv"))
        for id_a, id_b, _, _ in rows:
            if id_a not in corpus or id_b not in corpus:
                raise DataError(f"pairs_{phase}.csv references unknown graph id")
        pairs[phase] = [GraphPair(a, b, d, s) for a, b, d, s in rows]
    return DatasetBundle(vocab, corpus, split, pairs, stats)
