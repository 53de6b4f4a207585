"""Pure-Python best-first kernel for exact typed graph edit distance.

Mirrors the compiled kernel in `_astar_cy` operation for operation: states
are prefix assignments of source nodes (in index order) to target nodes or
to deletion, costs accumulate incrementally, and the remaining cost is
bounded below by typed node/edge multiset differences. Selected at import
time when the C extension is unavailable.
"""

from __future__ import annotations

import heapq


def _bits(mask: int) -> list[int]:
    out = []
    t = 0
    while mask:
        if mask & 1:
            out.append(t)
        mask >>= 1
        t += 1
    return out


def solve(t1: list[int], em1: list[list[int]],
          t2: list[int], em2: list[list[int]],
          n_edge_types: int, limit: int) -> int:
    """Return the exact distance, or -1 if `limit` states were generated."""
    n1, n2 = len(t1), len(t2)
    popcount = int.bit_count
    n_nt = max(t1 + t2, default=-1) + 1
    n_et = n_edge_types

    edges2 = [(u, v, _bits(em2[u][v]))
              for u in range(n2) for v in range(u + 1, n2) if em2[u][v]]
    e2_total = sum(len(ts) for _, _, ts in edges2)
    adj2 = [[] for _ in range(n2)]
    for u, v, ts in edges2:
        adj2[u].append((v, ts))
        adj2[v].append((u, ts))

    # Source-side tables indexed by depth d (nodes 0..d-1 already assigned):
    # an edge is charged once its later endpoint is assigned, so the
    # uncharged count at depth d covers edges whose later endpoint is >= d.
    a_nodes = [[0] * n_nt for _ in range(n1 + 1)]
    a_edges = [[0] * n_et for _ in range(n1 + 1)]
    for d in range(n1 - 1, -1, -1):
        a_nodes[d] = a_nodes[d + 1][:]
        a_nodes[d][t1[d]] += 1
        a_edges[d] = a_edges[d + 1][:]
        for k in range(d):
            for t in _bits(em1[d][k]):
                a_edges[d][t] += 1

    # State pool as parallel lists; a state's mapping is recovered by
    # walking the parent chain.
    parent = [-1]
    assign = [-2]
    depth = [0]
    used = [0]
    g_cost = [0]
    covered = [0]
    if n1 == 0:
        g_cost[0] = n2 + e2_total

    heap = [(0, 0, 0, 0)]  # (f, n1 - depth, seq, state index)
    seq = 1
    generated = 1
    mapping = [-2] * n1

    while heap:
        _, _, _, idx = heapq.heappop(heap)
        d = depth[idx]
        if d == n1:
            return g_cost[idx]
        walk = idx
        for back in range(d - 1, -1, -1):
            mapping[back] = assign[walk]
            walk = parent[walk]

        um = used[idx]
        b_edges = [0] * n_et
        for u, v, ts in edges2:
            if not (um >> u & 1 and um >> v & 1):
                for t in ts:
                    b_edges[t] += 1
        b_nodes = [0] * n_nt
        for j in range(n2):
            if not um >> j & 1:
                b_nodes[t2[j]] += 1

        i = d
        dd = d + 1
        row1 = em1[i]
        base_g = g_cost[idx]
        base_cov = covered[idx]
        an, ae = a_nodes[dd], a_edges[dd]

        for j in range(n2):
            if um >> j & 1:
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
            um2 = um | (1 << j)
            g2 = base_g + add
            cov2 = base_cov + cov
            if dd == n1:
                g2 += (n2 - popcount(um2)) + (e2_total - cov2)
                h = 0
            else:
                h = 0
                tj = t2[j]
                for t in range(n_nt):
                    b = b_nodes[t] - (1 if t == tj else 0)
                    a = an[t]
                    h += a + b - 2 * min(a, b)
                delta = [0] * n_et
                for l, ts in adj2[j]:
                    if um >> l & 1:
                        for t in ts:
                            delta[t] += 1
                for t in range(n_et):
                    h += abs(ae[t] - (b_edges[t] - delta[t]))
            parent.append(idx)
            assign.append(j)
            depth.append(dd)
            used.append(um2)
            g_cost.append(g2)
            covered.append(cov2)
            heapq.heappush(heap, (g2 + h, n1 - dd, seq, generated))
            seq += 1
            generated += 1
            if generated > limit:
                return -1

        add = 1
        for k in range(i):
            add += popcount(row1[k])
        g2 = base_g + add
        if dd == n1:
            g2 += (n2 - popcount(um)) + (e2_total - base_cov)
            h = 0
        else:
            h = 0
            for t in range(n_nt):
                a, b = an[t], b_nodes[t]
                h += a + b - 2 * min(a, b)
            for t in range(n_et):
                h += abs(ae[t] - b_edges[t])
        parent.append(idx)
        assign.append(-1)
        depth.append(dd)
        used.append(um)
        g_cost.append(g2)
        covered.append(base_cov)
        heapq.heappush(heap, (g2 + h, n1 - dd, seq, generated))
        seq += 1
        generated += 1
        if generated > limit:
            return -1

    raise AssertionError("search exhausted without reaching a goal state")
