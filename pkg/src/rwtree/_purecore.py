"""Pure-Python twin of the compiled core (``rwtree._core``).

Used when the extension is not built or when ``RWTREE_PURE=1``.  Every
floating-point operation is performed in the same order as the Cython code
so the two backends agree bit for bit.
"""

import math

import numpy as np

from ._rng import GOLDEN, MASK64, STREAM_SALT, TWO_PI, mix64, unit

BACKEND = "python"

_NEG_INF = -math.inf


def _node_draw(key, j):
    return unit(mix64(((key ^ STREAM_SALT) + (j + 1) * GOLDEN) & MASK64))


def _logaddexp(a, b):
    if a < b:
        a, b = b, a
    if b == _NEG_INF:
        return a
    return a + math.log1p(math.exp(b - a))


def _draw_children(law, key):
    if law.kind == 0:
        out = []
        for i in range(law.nfix):
            u1 = _node_draw(key, 2 * i)
            u2 = _node_draw(key, 2 * i + 1)
            out.append(law.p0 + law.p1 * math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2))
        return out
    if law.kind == 1:
        return [law.p1 if _node_draw(key, i) < law.p0 else law.p2 for i in range(law.nfix)]
    u = _node_draw(key, 0)
    cum = law.cum
    k = 0
    while k < len(cum) - 1 and u > cum[k]:
        k += 1
    lo, hi = int(law.off[k]), int(law.off[k + 1])
    return [float(x) for x in law.flat[lo:hi]]


def _expand(a, law, node, frozen_depth):
    if a.first_child[node] >= 0:
        return True
    if frozen_depth >= 0 and a.depth[node] >= frozen_depth:
        a.first_child[node] = a.size
        a.nchild[node] = 0
        a.wsum[node] = 0.0
        return True
    if a.capacity - a.size < law.max_children:
        return False
    disp = _draw_children(law, int(a.key[node]))
    size = a.size
    a.first_child[node] = size
    a.nchild[node] = len(disp)
    vp = float(a.V[node])
    vbp = float(a.Vbar[node])
    vmp = float(a.Vmin[node])
    ddp = float(a.dd[node])
    lpp = float(a.lpre[node])
    lcp = float(a.lcm[node])
    kp = int(a.key[node])
    dp = int(a.depth[node])
    s = 0.0
    for i, d in enumerate(disp):
        c = size + i
        v = vp + d
        a.parent[c] = node
        a.depth[c] = dp + 1
        a.first_child[c] = -1
        a.nchild[c] = 0
        a.epoch[c] = 0
        a.key[c] = mix64((kp + (i + 1) * GOLDEN) & MASK64)
        a.A[c] = d
        a.V[c] = v
        vb = vbp if vbp > v else v
        a.Vbar[c] = vb
        a.Vmin[c] = vmp if vmp < v else v
        a.dd[c] = ddp if ddp > vb - v else vb - v
        lp = _logaddexp(lpp, v)
        a.lpre[c] = lp
        a.lcm[c] = lcp if lcp > lp - v else lp - v
        a.wsum[c] = 0.0
        s += math.exp(-d)
    a.wsum[node] = s
    a.size = size + len(disp)
    return True


def expand_nodes(arena, law, nodes, frozen_depth):
    for i, node in enumerate(nodes):
        if not _expand(arena, law, int(node), frozen_depth):
            return i
    return len(nodes)


def draw_children_batch(law, keys):
    counts = np.empty(len(keys), dtype=np.int64)
    flat = []
    for i, k in enumerate(keys):
        d = _draw_children(law, int(k))
        counts[i] = len(d)
        flat.extend(d)
    return counts, np.asarray(flat, dtype=np.float64)


def walk(arena, law, frozen_depth, st):
    a = arena
    # local aliases; numpy element access is the bottleneck here
    first_child, nchild, parent = a.first_child, a.nchild, a.parent
    A, wsum, epoch = a.A, a.wsum, a.epoch
    node, virt = int(st.node), bool(st.virtual)
    steps, returns = int(st.steps), int(st.returns)
    mode, target, ep = int(st.mode), int(st.target), int(st.epoch)
    rs = int(st.rng_state)
    visits, vtimes, rtimes = st.visits, st.vtimes, st.rtimes
    nvis, nret = int(st.nvis), int(st.nret)
    status = 0
    while True:
        if mode == 0 and steps >= target:
            break
        if mode == 1 and returns >= target:
            break
        if nvis >= len(visits):
            status = 2
            break
        if nret >= len(rtimes):
            status = 3
            break
        arrived = True
        if virt:
            virt = False
            nxt = 0
        else:
            if first_child[node] < 0:
                if not _expand(a, law, node, frozen_depth):
                    status = 1
                    break
            rs = (rs + GOLDEN) & MASK64
            u = unit(mix64(rs))
            x = u * (1.0 + float(wsum[node]))
            if x < 1.0:
                if node == 0:
                    virt = True
                    arrived = False
                    nxt = 0
                else:
                    nxt = int(parent[node])
            else:
                x -= 1.0
                c0 = int(first_child[node])
                nc = int(nchild[node])
                nxt = c0 + nc - 1
                for i in range(nc):
                    w = math.exp(-float(A[c0 + i]))
                    if x < w:
                        nxt = c0 + i
                        break
                    x -= w
        steps += 1
        if arrived:
            node = nxt
            if epoch[node] != ep:
                epoch[node] = ep
                visits[nvis] = node
                vtimes[nvis] = steps
                nvis += 1
            if node == 0:
                rtimes[nret] = steps
                nret += 1
                returns += 1
    st.node, st.virtual = node, virt
    st.steps, st.returns = steps, returns
    st.rng_state = rs
    st.nvis, st.nret = nvis, nret
    return status
