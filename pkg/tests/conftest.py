import random

import pytest

from hetmatch.graphs import HetGraph, TypeVocab


def random_graph(rng: random.Random, max_nodes: int = 6, n_node_types: int = 3,
                 n_edge_types: int = 2, edge_prob: float = 0.4,
                 min_nodes: int = 1, gid: str = "g") -> HetGraph:
    """Uniform small typed graph for property tests (not BFS-sampled)."""
    n = rng.randint(min_nodes, max_nodes)
    types = tuple(rng.randrange(n_node_types) for _ in range(n))
    edges = set()
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < edge_prob:
                edges.add((u, v, rng.randrange(n_edge_types)))
            if rng.random() < 0.08:  # occasional parallel edge with another type
                edges.add((u, v, rng.randrange(n_edge_types)))
    return HetGraph(gid, types, frozenset(edges))


@pytest.fixture
def vocab3():
    return TypeVocab(("A", "B", "C"), ("r", "s"))


@pytest.fixture(scope="session")
def tiny_bundle():
    """A small labeled dataset bundle shared by harness tests."""
    from hetmatch.datasets import (DatasetBundle, SamplerSpec, build_corpus,
                                   build_pairs, split_corpus,
                                   synth_source_graph)
    source, vocab = synth_source_graph(3, 3, 1500, 3.0, seed=11)
    spec = SamplerSpec(max_nodes=8, min_node_types=2, seed=12)
    corpus, stats = build_corpus(source, vocab, 25, spec)
    split = split_corpus(list(corpus), seed=13)
    pairs, failures = build_pairs(split, corpus, seed=14)
    stats["label_failures"] = failures
    return DatasetBundle(vocab, corpus, split, pairs, stats)
