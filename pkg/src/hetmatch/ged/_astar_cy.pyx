# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled best-first kernel for exact typed graph edit distance.

Operation-for-operation twin of ``_astar_py.solve``: prefix assignments of
source nodes explored in (f, depth, insertion) order with typed multiset
lower bounds. The state pool and the priority queue live in flat C arrays;
edge-type sets are 64-bit masks, which caps this kernel at 64 edge types
(the wrapper falls back to the Python kernel beyond that).
"""

from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memset

cdef extern from *:
    """
    #define popcount64(x) __builtin_popcountll((unsigned long long)(x))
    """
    int popcount64(unsigned long long x) nogil

DEF MAXN = 16


cdef struct Pool:
    long cap
    long size
    int *parent
    signed char *assign
    signed char *depth
    unsigned int *used
    int *g
    int *covered


cdef bint pool_reserve(Pool *p, long need) nogil:
    cdef long cap = p.cap
    if need <= cap:
        return True
    while cap < need:
        cap *= 2
    p.parent = <int *> realloc(p.parent, cap * sizeof(int))
    p.assign = <signed char *> realloc(p.assign, cap * sizeof(signed char))
    p.depth = <signed char *> realloc(p.depth, cap * sizeof(signed char))
    p.used = <unsigned int *> realloc(p.used, cap * sizeof(unsigned int))
    p.g = <int *> realloc(p.g, cap * sizeof(int))
    p.covered = <int *> realloc(p.covered, cap * sizeof(int))
    p.cap = cap
    return (p.parent != NULL and p.assign != NULL and p.depth != NULL
            and p.used != NULL and p.g != NULL and p.covered != NULL)


cdef struct Heap:
    long cap
    long size
    unsigned long long *key
    int *idx


cdef bint heap_push(Heap *h, unsigned long long key, int idx) nogil:
    cdef long i, parent
    cdef unsigned long long tk
    cdef int ti
    if h.size == h.cap:
        h.cap *= 2
        h.key = <unsigned long long *> realloc(h.key, h.cap * sizeof(unsigned long long))
        h.idx = <int *> realloc(h.idx, h.cap * sizeof(int))
        if h.key == NULL or h.idx == NULL:
            return False
    i = h.size
    h.key[i] = key
    h.idx[i] = idx
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if h.key[parent] <= h.key[i]:
            break
        tk = h.key[parent]; h.key[parent] = h.key[i]; h.key[i] = tk
        ti = h.idx[parent]; h.idx[parent] = h.idx[i]; h.idx[i] = ti
        i = parent
    return True


cdef int heap_pop(Heap *h) nogil:
    cdef int out = h.idx[0]
    cdef long i = 0, child
    cdef unsigned long long tk
    cdef int ti
    h.size -= 1
    h.key[0] = h.key[h.size]
    h.idx[0] = h.idx[h.size]
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and h.key[child + 1] < h.key[child]:
            child += 1
        if h.key[i] <= h.key[child]:
            break
        tk = h.key[i]; h.key[i] = h.key[child]; h.key[child] = tk
        ti = h.idx[i]; h.idx[i] = h.idx[child]; h.idx[child] = ti
        i = child
    return out


def solve(t1, em1, t2, em2, n_edge_types, limit):
    """Return the exact distance, or -1 if `limit` states were generated."""
    cdef int n1 = len(t1)
    cdef int n2 = len(t2)
    cdef int n_et = n_edge_types
    cdef int i, j, k, l, t, d, dd, idx, walk, back, a, b
    cdef int n_nt = 0
    if n1 > MAXN or n2 > MAXN:
        raise ValueError(f"compiled kernel limited to {MAXN} nodes")
    if n_et > 64:
        raise ValueError("compiled kernel limited to 64 edge types")

    cdef signed char ct1[MAXN]
    cdef signed char ct2[MAXN]
    cdef unsigned long long cem1[MAXN][MAXN]
    cdef unsigned long long cem2[MAXN][MAXN]
    for i in range(n1):
        ct1[i] = t1[i]
        if ct1[i] >= n_nt:
            n_nt = ct1[i] + 1
        for j in range(n1):
            cem1[i][j] = em1[i][j]
    for i in range(n2):
        ct2[i] = t2[i]
        if ct2[i] >= n_nt:
            n_nt = ct2[i] + 1
        for j in range(n2):
            cem2[i][j] = em2[i][j]
    if n_nt > 127:
        raise ValueError("compiled kernel limited to 127 node types")
    if n_et == 0:
        n_et = 1  # keep the edge-count tables nonempty

    cdef int e2_total = 0
    for i in range(n2):
        for j in range(i + 1, n2):
            e2_total += popcount64(cem2[i][j])

    # Tables indexed by depth: uncharged source nodes/edges per type in the
    # suffix starting at that depth.
    cdef int *a_nodes = <int *> malloc((n1 + 1) * n_nt * sizeof(int))
    cdef int *a_edges = <int *> malloc((n1 + 1) * n_et * sizeof(int))
    cdef int b_nodes[128]
    cdef int b_edges[64]
    cdef int delta[64]
    cdef signed char mapping[MAXN]
    if a_nodes == NULL or a_edges == NULL:
        free(a_nodes); free(a_edges)
        raise MemoryError()
    memset(a_nodes + n1 * n_nt, 0, n_nt * sizeof(int))
    memset(a_edges + n1 * n_et, 0, n_et * sizeof(int))
    for d in range(n1 - 1, -1, -1):
        for t in range(n_nt):
            a_nodes[d * n_nt + t] = a_nodes[(d + 1) * n_nt + t]
        a_nodes[d * n_nt + ct1[d]] += 1
        for t in range(n_et):
            a_edges[d * n_et + t] = a_edges[(d + 1) * n_et + t]
        for k in range(d):
            for t in range(n_et):
                if cem1[d][k] >> t & 1:
                    a_edges[d * n_et + t] += 1

    cdef Pool pool
    pool.cap = 4096
    pool.size = 0
    pool.parent = <int *> malloc(pool.cap * sizeof(int))
    pool.assign = <signed char *> malloc(pool.cap * sizeof(signed char))
    pool.depth = <signed char *> malloc(pool.cap * sizeof(signed char))
    pool.used = <unsigned int *> malloc(pool.cap * sizeof(unsigned int))
    pool.g = <int *> malloc(pool.cap * sizeof(int))
    pool.covered = <int *> malloc(pool.cap * sizeof(int))

    cdef Heap heap
    heap.cap = 4096
    heap.size = 0
    heap.key = <unsigned long long *> malloc(heap.cap * sizeof(unsigned long long))
    heap.idx = <int *> malloc(heap.cap * sizeof(int))

    cdef long long climit = limit
    if climit > 2_000_000_000:
        climit = 2_000_000_000
    cdef long long seq = 1, generated = 1
    cdef unsigned int um, um2
    cdef unsigned long long sm, tm, key
    cdef int add, cov, h, base_g, base_cov, g2, cov2, tj, result = -2
    cdef bint ok = True

    try:
        if (pool.parent == NULL or pool.assign == NULL or pool.depth == NULL
                or pool.used == NULL or pool.g == NULL or pool.covered == NULL
                or heap.key == NULL or heap.idx == NULL):
            raise MemoryError()
        pool.parent[0] = -1
        pool.assign[0] = -2
        pool.depth[0] = 0
        pool.used[0] = 0
        pool.g[0] = (n2 + e2_total) if n1 == 0 else 0
        pool.covered[0] = 0
        pool.size = 1
        heap_push(&heap, 0, 0)

        with nogil:
            while heap.size > 0 and result == -2:
                idx = heap_pop(&heap)
                d = pool.depth[idx]
                if d == n1:
                    result = pool.g[idx]
                    break
                walk = idx
                for back in range(d - 1, -1, -1):
                    mapping[back] = pool.assign[walk]
                    walk = pool.parent[walk]

                um = pool.used[idx]
                memset(b_edges, 0, n_et * sizeof(int))
                for i in range(n2):
                    for j in range(i + 1, n2):
                        sm = cem2[i][j]
                        if sm != 0 and not (um >> i & 1 and um >> j & 1):
                            for t in range(n_et):
                                if sm >> t & 1:
                                    b_edges[t] += 1
                memset(b_nodes, 0, n_nt * sizeof(int))
                for j in range(n2):
                    if not um >> j & 1:
                        b_nodes[ct2[j]] += 1

                i = d
                dd = d + 1
                base_g = pool.g[idx]
                base_cov = pool.covered[idx]

                if not pool_reserve(&pool, pool.size + n2 + 1):
                    ok = False
                    break

                for j in range(n2):
                    if um >> j & 1:
                        continue
                    add = 0 if ct1[i] == ct2[j] else 2
                    cov = 0
                    for k in range(i):
                        sm = cem1[i][k]
                        if mapping[k] < 0:
                            add += popcount64(sm)
                        else:
                            tm = cem2[j][mapping[k]]
                            if sm != 0 or tm != 0:
                                add += popcount64(sm ^ tm)
                                cov += popcount64(tm)
                    um2 = um | (1u << j)
                    g2 = base_g + add
                    cov2 = base_cov + cov
                    if dd == n1:
                        g2 += (n2 - popcount64(um2)) + (e2_total - cov2)
                        h = 0
                    else:
                        h = 0
                        tj = ct2[j]
                        for t in range(n_nt):
                            b = b_nodes[t] - (1 if t == tj else 0)
                            a = a_nodes[dd * n_nt + t]
                            h += a + b - 2 * (a if a < b else b)
                        memset(delta, 0, n_et * sizeof(int))
                        for l in range(n2):
                            sm = cem2[j][l]
                            if sm != 0 and um >> l & 1:
                                for t in range(n_et):
                                    if sm >> t & 1:
                                        delta[t] += 1
                        for t in range(n_et):
                            a = a_edges[dd * n_et + t] - (b_edges[t] - delta[t])
                            h += a if a >= 0 else -a
                    pool.parent[pool.size] = idx
                    pool.assign[pool.size] = <signed char> j
                    pool.depth[pool.size] = <signed char> dd
                    pool.used[pool.size] = um2
                    pool.g[pool.size] = g2
                    pool.covered[pool.size] = cov2
                    key = ((<unsigned long long> (g2 + h)) << 44
                           | (<unsigned long long> (n1 - dd)) << 39
                           | <unsigned long long> seq)
                    if not heap_push(&heap, key, <int> pool.size):
                        ok = False
                        break
                    pool.size += 1
                    seq += 1
                    generated += 1
                    if generated > climit:
                        result = -1
                        break
                if result != -2 or not ok:
                    break

                add = 1
                for k in range(i):
                    add += popcount64(cem1[i][k])
                g2 = base_g + add
                if dd == n1:
                    g2 += (n2 - popcount64(um)) + (e2_total - base_cov)
                    h = 0
                else:
                    h = 0
                    for t in range(n_nt):
                        a = a_nodes[dd * n_nt + t]
                        b = b_nodes[t]
                        h += a + b - 2 * (a if a < b else b)
                    for t in range(n_et):
                        a = a_edges[dd * n_et + t] - b_edges[t]
                        h += a if a >= 0 else -a
                pool.parent[pool.size] = idx
                pool.assign[pool.size] = -1
                pool.depth[pool.size] = <signed char> dd
                pool.used[pool.size] = um
                pool.g[pool.size] = g2
                pool.covered[pool.size] = base_cov
                key = ((<unsigned long long> (g2 + h)) << 44
                       | (<unsigned long long> (n1 - dd)) << 39
                       | <unsigned long long> seq)
                if not heap_push(&heap, key, <int> pool.size):
                    ok = False
                    break
                pool.size += 1
                seq += 1
                generated += 1
                if generated > climit:
                    result = -1

        if not ok:
            raise MemoryError()
        if result == -2:
            raise AssertionError("search exhausted without reaching a goal state")
        return result
    finally:
        free(a_nodes)
        free(a_edges)
        free(pool.parent)
        free(pool.assign)
        free(pool.depth)
        free(pool.used)
        free(pool.g)
        free(pool.covered)
        free(heap.key)
        free(heap.idx)
