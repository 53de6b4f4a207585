"""Exact edit distance between typed graphs.

Unit costs: every elementary operation (insert/delete of a node or an edge)
costs 1. Changing an element's type is never a single operation; it is
priced as delete + insert, so a type mismatch on a matched node or edge
costs exactly 2. Deleting a node does not absorb its incident edges: each
incident edge deletion is charged separately.

Two independent routes compute the same quantity:

* `ged_brute` exhaustively enumerates every injective partial node mapping
  (factorial; capped at 7 nodes) and is the test oracle.
* `ged_astar` runs best-first search over partial assignments with an
  admissible lower bound, exact up to 16-node graphs. Its inner loop is a
  compiled kernel when the C extension is available, with an equivalent
  pure-Python fallback selected at import time (see `backend_name`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import DataError, SearchLimitError, SizeBoundError, UsageError
from ..graphs import HetGraph

BRUTE_NODE_LIMIT = 7
ASTAR_NODE_LIMIT = 16
DEFAULT_EXPANSION_LIMIT = 5_000_000

from . import _astar_py

try:
    from . import _astar_cy
    _DEFAULT_KERNEL = "compiled"
except ImportError:
    _astar_cy = None
    _DEFAULT_KERNEL = "python"

PAIRS_CSV_HEADER = "id_a,id_b,hged,norm_score"


def backend_name() -> str:
    """Which A* kernel newly constructed solvers will use."""
    return _DEFAULT_KERNEL


def _edge_masks(g: HetGraph) -> list[list[int]]:
    """Symmetric n x n table of edge-type bitmasks (bit t set when an edge
    of type t joins the pair)."""
    n = g.n_nodes
    em = [[0] * n for _ in range(n)]
    for s, d, t in g.edges:
        em[s][d] |= 1 << t
        em[d][s] |= 1 << t
    return em


def _edge_type_count(g1: HetGraph, g2: HetGraph) -> int:
    top = -1
    for g in (g1, g2):
        for _, _, t in g.edges:
            top = max(top, t)
    return top + 1


def normalize_score(distance: float, n: int, m: int) -> float:
    """Map an edit distance to a similarity in (0, 1]: exp(-d / mean size)."""
    if distance < 0:
        raise ValueError("distance must be nonnegative")
    if n < 1 or m < 1:
        raise ValueError("node counts must be positive")
    return math.exp(-distance / ((n + m) / 2.0))


def ged_brute_mapping(g1: HetGraph, g2: HetGraph) -> tuple[int, tuple[int, ...]]:
    """Like `ged_brute`, also returning a cost-minimizing node assignment
    (target index per source node, -1 for deletion)."""
    if max(g1.n_nodes, g2.n_nodes) > BRUTE_NODE_LIMIT:
        raise SizeBoundError(f"ged_brute limited to {BRUTE_NODE_LIMIT} nodes")
    t1, t2 = g1.node_type_ids, g2.node_type_ids
    em1, em2 = _edge_masks(g1), _edge_masks(g2)
    n1, n2 = g1.n_nodes, g2.n_nodes
    e2_total = g2.n_edges
    popcount = int.bit_count
    best = [n1 + n2 + g1.n_edges + e2_total + 1]  # above delete-everything
    best_mapping = [tuple([-1] * n1)]
    mapping = [-2] * n1

    def recurse(i: int, used: int, g_cost: int, covered: int) -> None:
        if i == n1:
            total = g_cost + (n2 - popcount(used)) + (e2_total - covered)
            if total < best[0]:
                best[0] = total
                best_mapping[0] = tuple(mapping)
            return
        row1 = em1[i]
        for j in range(n2):
            if used >> j & 1:
                continue
            add = 0 if t1[i] == t2[j] else 2
            cov = 0
            row2 = em2[j]
            for k in range(i):
                sm = row1[k]
                mk = mapping[k]
                if mk < 0:
                    add += popcount(sm)
                else:
                    tm = row2[mk]
                    if sm or tm:
                        add += popcount(sm ^ tm)
                        cov += popcount(tm)
            mapping[i] = j
            recurse(i + 1, used | (1 << j), g_cost + add, covered + cov)
        # deletion branch: node plus every edge to an already-processed node
        add = 1
        for k in range(i):
            add += popcount(row1[k])
        mapping[i] = -1
        recurse(i + 1, used, g_cost + add, covered)
        mapping[i] = -2

    recurse(0, 0, 0, 0)
    return best[0], best_mapping[0]


def ged_brute(g1: HetGraph, g2: HetGraph) -> int:
    """Exact distance by exhaustive enumeration of injective partial mappings.

    Every mapping of source nodes to (distinct target nodes | deletion) is
    visited; the cost of each completion is accumulated incrementally and
    the minimum returned. Bounded to 7 nodes a side.
    """
    return ged_brute_mapping(g1, g2)[0]


@dataclass(frozen=True)
class SearchState:
    """A prefix assignment of source nodes 0..k-1.

    assigned[k] is the matched target index, or -1 when node k is deleted.
    g_cost is the cost already incurred; h_cost never exceeds the true cost
    of the cheapest completion.
    """

    assigned: tuple[int, ...]
    g_cost: int
    h_cost: int


@dataclass(frozen=True)
class EditOp:
    """One elementary edit; every elementary operation costs 1.

    Kinds: insert_node(node_type[, slot]), delete_node(slot),
    insert_edge(src, dst, edge_type), delete_edge(src, dst, edge_type).
    A type modification is never a single op: it appears as a delete_node
    immediately followed by an insert_node on the same slot (total cost 2),
    which substitutes the element in place and keeps incident structure.
    """

    kind: str
    slot: int | None = None
    node_type: int | None = None
    src: int | None = None
    dst: int | None = None
    edge_type: int | None = None

    @property
    def cost(self) -> int:
        return 1


@dataclass(frozen=True)
class EditPath:
    """An ordered edit sequence; applying it to the source graph must yield
    a graph isomorphic (type-preserving) to the target. Internal machinery
    for tests, not a user-facing feature."""

    ops: tuple[EditOp, ...]

    @property
    def total_cost(self) -> int:
        return sum(op.cost for op in self.ops)

    def apply(self, g: HetGraph) -> HetGraph:
        nodes: dict[int, int] = dict(enumerate(g.node_type_ids))
        edges: set[tuple[int, int, int]] = set(g.edges)
        next_slot = g.n_nodes
        for i, op in enumerate(self.ops):
            if op.kind == "delete_node":
                if op.slot not in nodes:
                    raise DataError(f"op {i}: node slot {op.slot} absent")
                incident = any(op.slot in (s, d) for s, d, _ in edges)
                refill = (i + 1 < len(self.ops)
                          and self.ops[i + 1].kind == "insert_node"
                          and self.ops[i + 1].slot == op.slot)
                if incident and not refill:
                    raise DataError(
                        f"op {i}: deleting non-isolated node {op.slot} without "
                        f"an in-place substitution")
                del nodes[op.slot]
            elif op.kind == "insert_node":
                slot = op.slot if op.slot is not None else next_slot
                if slot in nodes:
                    raise DataError(f"op {i}: node slot {slot} already occupied")
                nodes[slot] = op.node_type
                next_slot = max(next_slot, slot + 1)
            elif op.kind == "delete_edge":
                key = (min(op.src, op.dst), max(op.src, op.dst), op.edge_type)
                if key not in edges:
                    raise DataError(f"op {i}: edge {key} absent")
                edges.remove(key)
            elif op.kind == "insert_edge":
                if op.src not in nodes or op.dst not in nodes:
                    raise DataError(f"op {i}: edge endpoint slot missing")
                key = (min(op.src, op.dst), max(op.src, op.dst), op.edge_type)
                if key in edges:
                    raise DataError(f"op {i}: edge {key} already present")
                edges.add(key)
            else:
                raise DataError(f"op {i}: unknown kind {op.kind!r}")
        order = sorted(nodes)
        index = {slot: pos for pos, slot in enumerate(order)}
        return HetGraph(
            g.id + "+edits",
            tuple(nodes[slot] for slot in order),
            frozenset((min(index[s], index[d]), max(index[s], index[d]), t)
                      for s, d, t in edges))


def edit_path_for_mapping(g1: HetGraph, g2: HetGraph,
                          assigned: tuple[int, ...]) -> EditPath:
    """Materialize a complete node assignment as an explicit edit sequence.

    `assigned[i]` is the target node matched to source node i, or -1 for
    deletion. The sequence runs deletions, in-place substitutions for
    type-changed nodes, then insertions; its total cost equals the mapping
    cost that `ged_brute` assigns, and applying it reaches the target.
    """
    if len(assigned) != g1.n_nodes:
        raise ValueError("assignment must cover every source node")
    em1, em2 = _edge_masks(g1), _edge_masks(g2)
    ops: list[EditOp] = []
    target_of = dict(enumerate(assigned))
    source_of = {j: i for i, j in target_of.items() if j >= 0}

    def pair_types(em, a, b):
        mask = em[a][b]
        return {t for t in range(mask.bit_length()) if mask >> t & 1}

    # edge deletions: anything not matched with an equal-typed target edge
    for s, d, t in sorted(g1.edges):
        ms, md = target_of[s], target_of[d]
        keep = ms >= 0 and md >= 0 and t in pair_types(em2, ms, md)
        if not keep:
            ops.append(EditOp("delete_edge", src=s, dst=d, edge_type=t))

    # node deletions (now isolated) and in-place type substitutions
    for i in range(g1.n_nodes):
        if target_of[i] < 0:
            ops.append(EditOp("delete_node", slot=i))
        elif g1.node_type_ids[i] != g2.node_type_ids[target_of[i]]:
            ops.append(EditOp("delete_node", slot=i))
            ops.append(EditOp("insert_node", slot=i,
                              node_type=g2.node_type_ids[target_of[i]]))

    # insertions for unmatched target nodes, slots allocated past the source
    slot_of_target: dict[int, int] = {}
    next_slot = g1.n_nodes
    for j in range(g2.n_nodes):
        if j in source_of:
            slot_of_target[j] = source_of[j]
        else:
            slot_of_target[j] = next_slot
            ops.append(EditOp("insert_node", slot=next_slot,
                              node_type=g2.node_type_ids[j]))
            next_slot += 1

    # edge insertions: target edges with no equal-typed matched source edge
    for u, v, t in sorted(g2.edges):
        su, sv = source_of.get(u), source_of.get(v)
        covered = (su is not None and sv is not None
                   and t in pair_types(em1, su, sv))
        if not covered:
            ops.append(EditOp("insert_edge", src=slot_of_target[u],
                              dst=slot_of_target[v], edge_type=t))
    return EditPath(tuple(ops))


def heuristic_lower_bound(state: SearchState, g1: HetGraph, g2: HetGraph) -> int:
    """Admissible bound on the cost of completing a partial assignment.

    Sums the typed-node multiset difference over the unassigned nodes with a
    per-type count difference over the edges not yet charged: each side's
    surplus must be deleted or inserted at cost >= 1, and a cross-type match
    costs at least as much as the delete + insert it replaces.
    """
    k = len(state.assigned)
    n1, n2 = g1.n_nodes, g2.n_nodes
    if k > n1:
        raise ValueError("state assigns more nodes than the source graph has")
    used = set(j for j in state.assigned if j >= 0)
    if len(used) != sum(1 for j in state.assigned if j >= 0):
        raise ValueError("state mapping is not injective")

    n_types = max(list(g1.node_type_ids) + list(g2.node_type_ids), default=-1) + 1
    a_nodes = [0] * n_types
    b_nodes = [0] * n_types
    for i in range(k, n1):
        a_nodes[g1.node_type_ids[i]] += 1
    for j in range(n2):
        if j not in used:
            b_nodes[g2.node_type_ids[j]] += 1
    node_lb = sum(a + b - 2 * min(a, b) for a, b in zip(a_nodes, b_nodes))

    n_et = _edge_type_count(g1, g2)
    a_edges = [0] * n_et
    b_edges = [0] * n_et
    for s, d, t in g1.edges:
        if max(s, d) >= k:  # charged only once both endpoints are assigned
            a_edges[t] += 1
    for s, d, t in g2.edges:
        if s not in used or d not in used:
            b_edges[t] += 1
    edge_lb = sum(abs(a - b) for a, b in zip(a_edges, b_edges))
    return node_lb + edge_lb


def ged_astar(g1: HetGraph, g2: HetGraph,
              expansion_limit: int | None = None,
              backend: str | None = None) -> int:
    """Exact distance via best-first search over partial assignments.

    Searches from the smaller graph (the distance is symmetric under unit
    costs, and depth drives the branching). Raises SearchLimitError once
    more than `expansion_limit` search states have been generated; the
    result is never an unlabeled approximation.
    """
    if max(g1.n_nodes, g2.n_nodes) > ASTAR_NODE_LIMIT:
        raise SizeBoundError(f"ged_astar limited to {ASTAR_NODE_LIMIT} nodes")
    if expansion_limit is None:
        expansion_limit = DEFAULT_EXPANSION_LIMIT
    if g1.n_nodes > g2.n_nodes:
        g1, g2 = g2, g1

    n_et = _edge_type_count(g1, g2)
    kernel = backend if backend is not None else _DEFAULT_KERNEL
    if kernel == "compiled":
        if _astar_cy is None:
            if backend is not None:
                raise UsageError("compiled solver backend is not available")
            kernel = "python"
        elif n_et > 64:
            kernel = "python"  # bitmask kernel caps at 64 edge types
    elif kernel != "python":
        raise UsageError(f"unknown solver backend {kernel!r}")

    t1, t2 = list(g1.node_type_ids), list(g2.node_type_ids)
    em1, em2 = _edge_masks(g1), _edge_masks(g2)
    if kernel == "compiled":
        cost = _astar_cy.solve(t1, em1, t2, em2, n_et, expansion_limit)
    else:
        cost = _astar_py.solve(t1, em1, t2, em2, n_et, expansion_limit)
    if cost < 0:
        raise SearchLimitError(expansion_limit)
    return cost


def write_pairs_csv(path, rows) -> None:
    """Write (id_a, id_b, distance, norm_score) rows; scores at 6 decimals."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PAIRS_CSV_HEADER + "\n")
        for id_a, id_b, dist, score in rows:
            fh.write(f"{id_a},{id_b},{dist},{score:.6f}\n")


def read_pairs_csv(path) -> list[tuple[str, str, int, float]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != PAIRS_CSV_HEADER:
            raise DataError(f"{path}: expected header {PAIRS_CSV_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields")
            rows.append((parts[0], parts[1], int(parts[2]), float(parts[3])))
    return rows
