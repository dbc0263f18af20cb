# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: lazy node expansion and the quenched walk.

Mirrors ``rwtree._purecore`` operation for operation; both produce
bit-identical arenas and walk records for the same seeds.
"""

from libc.math cimport exp, log, log1p, sqrt, cos, INFINITY
from libc.stdint cimport int64_t, uint64_t

import numpy as np

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t STREAM_SALT = 0xD1B54A32D192ED03ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0

BACKEND = "cython"


cdef inline uint64_t mix64(uint64_t x) nogil:
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL
    return x ^ (x >> 31)


cdef inline double unit(uint64_t x) nogil:
    return (<double>(x >> 11) + 0.5) * INV_2_53


cdef inline double node_draw(uint64_t key, int64_t j) nogil:
    return unit(mix64((key ^ STREAM_SALT) + <uint64_t>(j + 1) * GOLDEN))


cdef inline double logaddexp(double a, double b) nogil:
    cdef double t
    if a < b:
        t = a
        a = b
        b = t
    if b == -INFINITY:
        return a
    return a + log1p(exp(b - a))


cdef class _Law:
    cdef int kind
    cdef int64_t nfix
    cdef double p0, p1, p2
    cdef double[::1] cum
    cdef int64_t[::1] off
    cdef double[::1] flat
    cdef int64_t max_children

    def __init__(self, law):
        self.kind = law.kind
        self.nfix = law.nfix
        self.p0 = law.p0
        self.p1 = law.p1
        self.p2 = law.p2
        self.cum = law.cum
        self.off = law.off
        self.flat = law.flat
        self.max_children = law.max_children


cdef int64_t _draw_children(_Law law, uint64_t key, double* out) noexcept nogil:
    """Write the displacements of a node's children into ``out``; return count."""
    cdef int64_t i, k, n
    cdef double u, u1, u2
    if law.kind == 0:
        for i in range(law.nfix):
            u1 = node_draw(key, 2 * i)
            u2 = node_draw(key, 2 * i + 1)
            out[i] = law.p0 + law.p1 * sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)
        return law.nfix
    if law.kind == 1:
        for i in range(law.nfix):
            u = node_draw(key, i)
            out[i] = law.p1 if u < law.p0 else law.p2
        return law.nfix
    u = node_draw(key, 0)
    k = 0
    while k < law.cum.shape[0] - 1 and u > law.cum[k]:
        k += 1
    n = law.off[k + 1] - law.off[k]
    for i in range(n):
        out[i] = law.flat[law.off[k] + i]
    return n


cdef class _ArenaView:
    cdef int64_t[::1] parent, depth, first_child, nchild, epoch
    cdef uint64_t[::1] key
    cdef double[::1] A, V, Vbar, Vmin, dd, lpre, lcm, wsum
    cdef int64_t size, capacity

    def __init__(self, arena):
        self.parent = arena.parent
        self.depth = arena.depth
        self.first_child = arena.first_child
        self.nchild = arena.nchild
        self.epoch = arena.epoch
        self.key = arena.key
        self.A = arena.A
        self.V = arena.V
        self.Vbar = arena.Vbar
        self.Vmin = arena.Vmin
        self.dd = arena.dd
        self.lpre = arena.lpre
        self.lcm = arena.lcm
        self.wsum = arena.wsum
        self.size = arena.size
        self.capacity = arena.capacity


cdef bint _expand(_ArenaView a, _Law law, int64_t node, int64_t frozen_depth, double* buf):
    """Expand ``node`` in place.  Returns False when the arena lacks room."""
    cdef int64_t n, i, c
    cdef double v, vb, s
    if a.first_child[node] >= 0:
        return True
    if frozen_depth >= 0 and a.depth[node] >= frozen_depth:
        a.first_child[node] = a.size
        a.nchild[node] = 0
        a.wsum[node] = 0.0
        return True
    if a.capacity - a.size < law.max_children:
        return False
    n = _draw_children(law, a.key[node], buf)
    a.first_child[node] = a.size
    a.nchild[node] = n
    s = 0.0
    for i in range(n):
        c = a.size + i
        v = a.V[node] + buf[i]
        a.parent[c] = node
        a.depth[c] = a.depth[node] + 1
        a.first_child[c] = -1
        a.nchild[c] = 0
        a.epoch[c] = 0
        a.key[c] = mix64(a.key[node] + <uint64_t>(i + 1) * GOLDEN)
        a.A[c] = buf[i]
        a.V[c] = v
        vb = a.Vbar[node] if a.Vbar[node] > v else v
        a.Vbar[c] = vb
        a.Vmin[c] = a.Vmin[node] if a.Vmin[node] < v else v
        a.dd[c] = a.dd[node] if a.dd[node] > vb - v else vb - v
        a.lpre[c] = logaddexp(a.lpre[node], v)
        a.lcm[c] = a.lcm[node] if a.lcm[node] > a.lpre[c] - v else a.lpre[c] - v
        a.wsum[c] = 0.0
        s += exp(-buf[i])
    a.wsum[node] = s
    a.size += n
    return True


def expand_nodes(arena, law, int64_t[::1] nodes, int64_t frozen_depth):
    """Expand each node in order; return how many were processed before running out of room."""
    cdef _ArenaView a = _ArenaView(arena)
    cdef _Law lw = _Law(law)
    cdef double[::1] buf = np.empty(max(lw.max_children, 1))
    cdef Py_ssize_t i
    for i in range(nodes.shape[0]):
        if not _expand(a, lw, nodes[i], frozen_depth, &buf[0]):
            arena.size = a.size
            return i
    arena.size = a.size
    return nodes.shape[0]


def draw_children_batch(law, uint64_t[::1] keys):
    """Displacements for many node keys at once (no arena).  Returns (counts, flat)."""
    cdef _Law lw = _Law(law)
    cdef Py_ssize_t m = keys.shape[0], i
    cdef int64_t total = 0, n
    counts_np = np.empty(m, dtype=np.int64)
    flat_np = np.empty(m * max(lw.max_children, 1), dtype=np.float64)
    cdef int64_t[::1] counts = counts_np
    cdef double[::1] flat = flat_np
    for i in range(m):
        n = _draw_children(lw, keys[i], &flat[total])
        counts[i] = n
        total += n
    return counts_np, flat_np[:total]


def walk(arena, law, int64_t frozen_depth, st):
    """Advance the walk described by ``st`` until done or a buffer fills.

    Status: 0 finished, 1 arena full, 2 visit buffer full, 3 return buffer full.
    """
    cdef _ArenaView a = _ArenaView(arena)
    cdef _Law lw = _Law(law)
    cdef double[::1] buf = np.empty(max(lw.max_children, 1))
    cdef int64_t node = st.node
    cdef bint virt = st.virtual
    cdef int64_t steps = st.steps, returns = st.returns
    cdef int64_t mode = st.mode, target = st.target, ep = st.epoch
    cdef uint64_t rs = st.rng_state
    cdef int64_t[::1] visits = st.visits
    cdef int64_t[::1] vtimes = st.vtimes
    cdef int64_t[::1] rtimes = st.rtimes
    cdef int64_t nvis = st.nvis, nret = st.nret
    cdef int64_t nxt, c0, nc, i
    cdef int status = 0
    cdef double u, x, w
    cdef bint arrived
    while True:
        if mode == 0 and steps >= target:
            break
        if mode == 1 and returns >= target:
            break
        if nvis >= visits.shape[0]:
            status = 2
            break
        if nret >= rtimes.shape[0]:
            status = 3
            break
        arrived = True
        if virt:
            virt = False
            nxt = 0
        else:
            if a.first_child[node] < 0:
                if not _expand(a, lw, node, frozen_depth, &buf[0]):
                    status = 1
                    break
            rs = rs + GOLDEN
            u = unit(mix64(rs))
            x = u * (1.0 + a.wsum[node])
            if x < 1.0:
                if node == 0:
                    virt = True
                    arrived = False
                    nxt = 0
                else:
                    nxt = a.parent[node]
            else:
                x -= 1.0
                c0 = a.first_child[node]
                nc = a.nchild[node]
                nxt = c0 + nc - 1
                for i in range(nc):
                    w = exp(-a.A[c0 + i])
                    if x < w:
                        nxt = c0 + i
                        break
                    x -= w
        steps += 1
        if arrived:
            node = nxt
            if a.epoch[node] != ep:
                a.epoch[node] = ep
                visits[nvis] = node
                vtimes[nvis] = steps
                nvis += 1
            if node == 0:
                rtimes[nret] = steps
                nret += 1
                returns += 1
    arena.size = a.size
    st.node = node
    st.virtual = virt
    st.steps = steps
    st.returns = returns
    st.rng_state = rs
    st.nvis = nvis
    st.nret = nret
    return status
