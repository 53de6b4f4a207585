"""Typed undirected graph data model, validation, serialization, and
isomorphism utilities.

A graph pairs a dense node-type assignment with a set of typed undirected
edges. Edges are stored once as (src, dst, type) with src < dst; converters
from directed sources must symmetrize before emitting the JSON schema.

The JSON schema (one document per graph):

    {"id": "g0",
     "nodes": [{"id": 0, "type": "A"}, ...],
     "edges": [{"src": 0, "dst": 1, "type": "r"}, ...]}

Corpus files are JSON Lines (one graph per line, UTF-8, LF). A vocabulary
file is {"node_types": [...], "edge_types": [...]}.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GraphFormatError, SizeBoundError

ISO_NODE_LIMIT = 8  # brute-force isomorphism enumeration bound


@dataclass(frozen=True)
class TypeVocab:
    """Dataset-global node/edge type vocabularies.

    Vocabularies are fixed at dataset build time so that absent types still
    occupy rows in downstream type-aligned pooling.
    """

    node_types: tuple[str, ...]
    edge_types: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "node_types", tuple(self.node_types))
        object.__setattr__(self, "edge_types", tuple(self.edge_types))
        if len(set(self.node_types)) != len(self.node_types):
            raise GraphFormatError("duplicate node type label in vocabulary")
        if len(set(self.edge_types)) != len(self.edge_types):
            raise GraphFormatError("duplicate edge type label in vocabulary")

    @property
    def is_heterogeneous(self) -> bool:
        return len(self.node_types) + len(self.edge_types) > 2

    def node_index(self, label: str) -> int:
        try:
            return self.node_types.index(label)
        except ValueError:
            raise GraphFormatError(f"unknown node type label {label!r}") from None

    def edge_index(self, label: str) -> int:
        try:
            return self.edge_types.index(label)
        except ValueError:
            raise GraphFormatError(f"unknown edge type label {label!r}") from None

    def to_json(self) -> str:
        return json.dumps(
            {"node_types": list(self.node_types), "edge_types": list(self.edge_types)},
            separators=(", ", ": "),
        )

    @classmethod
    def from_json(cls, text: str) -> "TypeVocab":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"malformed vocabulary JSON: {exc}") from None
        if not isinstance(doc, dict) or "node_types" not in doc or "edge_types" not in doc:
            raise GraphFormatError("vocabulary JSON must contain node_types and edge_types")
        return cls(tuple(doc["node_types"]), tuple(doc["edge_types"]))


@dataclass(frozen=True)
class HetGraph:
    """An undirected graph with typed nodes and typed edges.

    node_type_ids[n] is the type index of node n; edges hold (src, dst,
    edge_type) triples with src < dst. Instances are immutable and therefore
    safe to share across worker processes and threads.
    """

    id: str
    node_type_ids: tuple[int, ...]
    edges: frozenset[tuple[int, int, int]]

    def __post_init__(self):
        object.__setattr__(self, "node_type_ids", tuple(self.node_type_ids))
        object.__setattr__(self, "edges", frozenset(self.edges))

    @property
    def n_nodes(self) -> int:
        return len(self.node_type_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[tuple[int, int, int]]:
        return sorted(self.edges)

    def neighbors(self) -> list[list[tuple[int, int]]]:
        """Adjacency lists: for each node, (neighbor, edge_type) pairs sorted
        by (neighbor, edge_type)."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for s, d, t in self.edges:
            adj[s].append((d, t))
            adj[d].append((s, t))
        for lst in adj:
            lst.sort()
        return adj


def validate_graph(g: HetGraph, vocab: TypeVocab) -> list[str]:
    """Return every invariant violation (empty list means the graph is valid).

    Violations are data, not failures: callers that require validity should
    check for a nonempty result and raise on their own terms. Duplicate
    (src, dst, type) triples cannot occur here because the edge set dedupes
    them by construction; the parser rejects duplicates in documents.
    """
    violations = []
    n = g.n_nodes
    for idx, t in enumerate(g.node_type_ids):
        if not 0 <= t < len(vocab.node_types):
            violations.append(f"node {idx}: type index {t} out of range")
    for s, d, t in g.sorted_edges():
        if s == d:
            violations.append(f"edge ({s},{d}): self-loop")
        if not (0 <= s < n and 0 <= d < n):
            violations.append(f"edge ({s},{d}): endpoint out of range")
        if s > d:
            violations.append(f"edge ({s},{d}): endpoints not stored as src < dst")
        if not 0 <= t < len(vocab.edge_types):
            violations.append(f"edge ({s},{d}): type index {t} out of range")
    return violations


def _require_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise GraphFormatError(f"{what} must be an integer, got {value!r}")
    return value


def infer_vocab(docs: Iterable[Mapping]) -> TypeVocab:
    """Build a vocabulary from parsed graph documents, labels ordered by
    first appearance."""
    node_types: list[str] = []
    edge_types: list[str] = []
    for doc in docs:
        for nd in doc.get("nodes", []):
            if nd.get("type") not in node_types:
                node_types.append(nd["type"])
        for ed in doc.get("edges", []):
            if ed.get("type") not in edge_types:
                edge_types.append(ed["type"])
    return TypeVocab(tuple(node_types), tuple(edge_types))


def parse_graph(text: str, vocab: TypeVocab | None = None) -> HetGraph:
    """Parse one JSON graph document into a validated HetGraph.

    Type labels are resolved against `vocab`; when omitted, a vocabulary is
    inferred from the document itself (labels indexed in order of first
    appearance). Malformed documents raise GraphFormatError naming the
    offending element.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"malformed graph JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a JSON object")
    for key in ("id", "nodes", "edges"):
        if key not in doc:
            raise GraphFormatError(f"graph document missing {key!r}")
    if vocab is None:
        vocab = infer_vocab([doc])

    gid = doc["id"]
    if not isinstance(gid, str):
        raise GraphFormatError(f"graph id must be a string, got {gid!r}")

    nodes = doc["nodes"]
    ids_seen: dict[int, int] = {}
    for nd in nodes:
        nid = _require_int(nd.get("id"), "node id")
        if nid in ids_seen:
            raise GraphFormatError(f"duplicate node id {nid}")
        ids_seen[nid] = vocab.node_index(nd.get("type"))
    n = len(nodes)
    if sorted(ids_seen) != list(range(n)):
        raise GraphFormatError(
            f"node ids must be contiguous 0..{n - 1}, got {sorted(ids_seen)}")
    node_type_ids = tuple(ids_seen[i] for i in range(n))

    edges: set[tuple[int, int, int]] = set()
    for ed in doc["edges"]:
        s = _require_int(ed.get("src"), "edge src")
        d = _require_int(ed.get("dst"), "edge dst")
        if s == d:
            raise GraphFormatError(f"edge ({s},{d}): self-loop")
        if not (0 <= s < n and 0 <= d < n):
            raise GraphFormatError(f"edge ({s},{d}): endpoint out of range")
        t = vocab.edge_index(ed.get("type"))
        key = (min(s, d), max(s, d), t)
        if key in edges:
            raise GraphFormatError(f"edge ({key[0]},{key[1]}) type {ed['type']!r}: duplicate edge")
        edges.add(key)
    return HetGraph(gid, node_type_ids, frozenset(edges))


def serialize_graph(g: HetGraph, vocab: TypeVocab) -> str:
    """Canonical single-line JSON for a graph (nodes by id, edges sorted)."""
    doc = {
        "id": g.id,
        "nodes": [{"id": i, "type": vocab.node_types[t]}
                  for i, t in enumerate(g.node_type_ids)],
        "edges": [{"src": s, "dst": d, "type": vocab.edge_types[t]}
                  for s, d, t in g.sorted_edges()],
    }
    return json.dumps(doc, separators=(",", ":"))


def write_corpus(path, graphs: Iterable[HetGraph], vocab: TypeVocab) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in graphs:
            fh.write(serialize_graph(g, vocab))
            fh.write("\n")


def read_corpus(path, vocab: TypeVocab) -> dict[str, HetGraph]:
    """Read a JSONL corpus into an id -> graph mapping (insertion ordered)."""
    corpus: dict[str, HetGraph] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                g = parse_graph(line, vocab)
            except GraphFormatError as exc:
                raise GraphFormatError(f"{path}:{lineno}: {exc}") from None
            if g.id in corpus:
                raise GraphFormatError(f"{path}:{lineno}: duplicate graph id {g.id!r}")
            corpus[g.id] = g
    return corpus


def one_hot_features(g: HetGraph, vocab: TypeVocab) -> np.ndarray:
    """One-hot node-type feature matrix, shape (n_nodes, |node_types|)."""
    x = np.zeros((g.n_nodes, len(vocab.node_types)), dtype=np.float64)
    x[np.arange(g.n_nodes), list(g.node_type_ids)] = 1.0
    return x


def _hash(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


def wl_color_towers(g: HetGraph, iterations: int) -> list[tuple[str, ...]]:
    """Per-node color histories under typed Weisfeiler-Lehman refinement.

    Colors start from the node type; each round a node's color becomes a
    hash of (own color, sorted multiset of (edge type, neighbor color)
    pairs). Entry n is the tuple (color_0, ..., color_k) for node n; equal
    towers imply the nodes are indistinguishable to any typed message
    passing encoder with that many layers.
    """
    adj = g.neighbors()
    colors = [_hash(f"t{t}") for t in g.node_type_ids]
    towers = [[c] for c in colors]
    for _ in range(iterations):
        nxt = []
        for n in range(g.n_nodes):
            signature = sorted((et, colors[m]) for m, et in adj[n])
            nxt.append(_hash(colors[n] + "|" + repr(signature)))
        colors = nxt
        for n in range(g.n_nodes):
            towers[n].append(colors[n])
    return [tuple(t) for t in towers]


def typed_wl_hash(g: HetGraph, iterations: int | None = None) -> str:
    """Canonical signature of the stable typed-WL color multiset.

    Runs `iterations` refinement rounds (default: node count, enough to
    stabilize) and hashes the sorted multiset of final colors. Invariant
    under any node relabeling of the input graph.
    """
    if iterations is None:
        iterations = g.n_nodes
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    if g.n_nodes == 0:
        return _hash("empty")
    towers = wl_color_towers(g, iterations)
    return _hash(repr(sorted(t[-1] for t in towers)))


def permute_nodes(g: HetGraph, perm: Sequence[int]) -> HetGraph:
    """Relabel nodes so that old node n becomes perm[n]."""
    if sorted(perm) != list(range(g.n_nodes)):
        raise ValueError("perm must be a permutation of 0..n-1")
    types = [0] * g.n_nodes
    for old, new in enumerate(perm):
        types[new] = g.node_type_ids[old]
    edges = frozenset(
        (min(perm[s], perm[d]), max(perm[s], perm[d]), t) for s, d, t in g.edges)
    return HetGraph(g.id, tuple(types), edges)


def brute_isomorphic(g1: HetGraph, g2: HetGraph) -> bool:
    """Exhaustively test for a type-preserving isomorphism.

    Enumerates node bijections restricted to matching node types, so it is
    only usable as a test oracle on small graphs (<= 8 nodes each).
    """
    if max(g1.n_nodes, g2.n_nodes) > ISO_NODE_LIMIT:
        raise SizeBoundError(
            f"brute_isomorphic limited to {ISO_NODE_LIMIT} nodes")
    if g1.n_nodes != g2.n_nodes or g1.n_edges != g2.n_edges:
        return False
    if sorted(g1.node_type_ids) != sorted(g2.node_type_ids):
        return False

    by_type1: dict[int, list[int]] = {}
    by_type2: dict[int, list[int]] = {}
    for n, t in enumerate(g1.node_type_ids):
        by_type1.setdefault(t, []).append(n)
    for n, t in enumerate(g2.node_type_ids):
        by_type2.setdefault(t, []).append(n)

    types = sorted(by_type1)
    groups1 = [by_type1[t] for t in types]
    groups2 = [by_type2[t] for t in types]

    for assignment in itertools.product(*(itertools.permutations(grp) for grp in groups2)):
        mapping = [0] * g1.n_nodes
        for grp1, grp2 in zip(groups1, assignment):
            for a, b in zip(grp1, grp2):
                mapping[a] = b
        mapped = set()
        for s, d, t in g1.edges:
            ms, md = mapping[s], mapping[d]
            mapped.add((min(ms, md), max(ms, md), t))
        if mapped == g2.edges:
            return True
    return False
