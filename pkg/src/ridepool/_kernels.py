"""Compiled hot loops over flat int64 arrays.

Route state lives in succ/pred linked lists plus per-node prefix ("fw")
and suffix ("bw") evaluations of shape (n_nodes, 7). The seven columns
are:

    0 C   - accumulated arc cost
    1 QS  - net load delta of the segment
    2 QM  - peak load within the segment (relative to zero entry load)
    3 TT  - accumulated arc travel time (with service folded in)
    4 EC  - earliest begin-of-service at the segment's last node
    5 LS  - latest begin-of-service at the segment's first node
    6 OK  - 1 while the segment can be scheduled within all windows

Concatenating two evaluated segments is O(1), which makes a full
insertion scan of a route O(length^2) with tiny constants. RNG inside
kernels is a splitmix64 stream carried in a uint64[1] state array so
runs stay reproducible.
"""

from __future__ import annotations

import numpy as np
from numba import njit

C, QS, QM, TT, EC, LS, OK = 0, 1, 2, 3, 4, 5, 6
INF64 = np.int64(1) << np.int64(62)

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


@njit(inline="always")
def _next_u64(state):
    state[0] = state[0] + _SM_GAMMA
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def _cat(ac, aqs, aqm, att, aec, als, aok,
         bc, bqs, bqm, btt, bec, bls, bok, t, c):
    """Evaluation of segment_a + link + segment_b."""
    cc = ac + c + bc
    qs = aqs + bqs
    m = aqs + bqm
    qm = aqm if aqm > m else m
    tt = att + t + btt
    e = aec + t + btt
    ec = e if e > bec else bec
    l = bls - t - att
    ls = als if als < l else l
    ok = 1 if (aok == 1 and bok == 1 and aec + t <= bls) else 0
    return cc, qs, qm, tt, ec, ls, ok


@njit(inline="always")
def _node(x, tw_open, tw_close, dem):
    q = dem[x]
    qm = q if q > 0 else 0
    return np.int64(0), q, qm, np.int64(0), tw_open[x], tw_close[x], np.int64(1)


@njit(cache=True, nogil=True)
def rebuild_route(start, succ, pred, fw, bw, tw_open, tw_close, dem, tau, cost):
    """Recompute fw/bw of one route; returns its last node."""
    c, qs, qm, tt, ec, ls, ok = _node(start, tw_open, tw_close, dem)
    fw[start, C] = c; fw[start, QS] = qs; fw[start, QM] = qm
    fw[start, TT] = tt; fw[start, EC] = ec; fw[start, LS] = ls; fw[start, OK] = ok
    x = start
    while succ[x] >= 0:
        y = succ[x]
        nc, nqs, nqm, ntt, nec, nls, nok = _node(y, tw_open, tw_close, dem)
        c, qs, qm, tt, ec, ls, ok = _cat(
            fw[x, C], fw[x, QS], fw[x, QM], fw[x, TT], fw[x, EC], fw[x, LS], fw[x, OK],
            nc, nqs, nqm, ntt, nec, nls, nok, tau[x, y], cost[x, y])
        fw[y, C] = c; fw[y, QS] = qs; fw[y, QM] = qm
        fw[y, TT] = tt; fw[y, EC] = ec; fw[y, LS] = ls; fw[y, OK] = ok
        x = y
    last = x
    c, qs, qm, tt, ec, ls, ok = _node(last, tw_open, tw_close, dem)
    bw[last, C] = c; bw[last, QS] = qs; bw[last, QM] = qm
    bw[last, TT] = tt; bw[last, EC] = ec; bw[last, LS] = ls; bw[last, OK] = ok
    while x != start:
        y = pred[x]
        nc, nqs, nqm, ntt, nec, nls, nok = _node(y, tw_open, tw_close, dem)
        c, qs, qm, tt, ec, ls, ok = _cat(
            nc, nqs, nqm, ntt, nec, nls, nok,
            bw[x, C], bw[x, QS], bw[x, QM], bw[x, TT], bw[x, EC], bw[x, LS], bw[x, OK],
            tau[y, x], cost[y, x])
        bw[y, C] = c; bw[y, QS] = qs; bw[y, QM] = qm
        bw[y, TT] = tt; bw[y, EC] = ec; bw[y, LS] = ls; bw[y, OK] = ok
        x = y
    return last


@njit(cache=True, nogil=True)
def scan_insert(starts, lasts, p, d, succ, fw, bw, tw_open, tw_close, dem,
                tau, cost, cap, blink_thr, rng, mode):
    """Scan every pickup/delivery insertion position across the given routes.

    mode 0: cheapest feasible position, skipping each feasible candidate
            with probability blink_thr / 2^64 (first-found wins ties);
    mode 1: uniformly random feasible position (reservoir sampling).

    Returns (route_index, after_pickup, after_delivery, delta); the
    delivery anchor equals p when the delivery goes directly after the
    pickup. route_index is -1 when nothing feasible was found.
    """
    best_v = np.int64(-1)
    best_pi = np.int64(-1)
    best_pj = np.int64(-1)
    best_delta = INF64
    count = np.uint64(0)

    pc, pqs, pqm, ptt, pec, pls, pok = _node(p, tw_open, tw_close, dem)
    dc, dqs, dqm, dtt, dec, dls, dok = _node(d, tw_open, tw_close, dem)

    for vi in range(starts.shape[0]):
        s = starts[vi]
        last = lasts[vi]
        rcost = fw[last, C]
        pi = s
        while True:
            # prefix A = route[..pi] + pickup
            ac, aqs, aqm, att, aec, als, aok = _cat(
                fw[pi, C], fw[pi, QS], fw[pi, QM], fw[pi, TT], fw[pi, EC], fw[pi, LS], fw[pi, OK],
                pc, pqs, pqm, ptt, pec, pls, pok, tau[pi, p], cost[pi, p])
            if aok == 1 and aqm <= cap:
                bc, bqs, bqm, btt, bec, bls, bok = ac, aqs, aqm, att, aec, als, aok
                bend = p
                j = pi
                while True:
                    jn = succ[j]
                    # candidate: B + delivery (+ remaining suffix)
                    fc, fqs, fqm, ftt, fec, fls, fok = _cat(
                        bc, bqs, bqm, btt, bec, bls, bok,
                        dc, dqs, dqm, dtt, dec, dls, dok, tau[bend, d], cost[bend, d])
                    if jn >= 0:
                        fc, fqs, fqm, ftt, fec, fls, fok = _cat(
                            fc, fqs, fqm, ftt, fec, fls, fok,
                            bw[jn, C], bw[jn, QS], bw[jn, QM], bw[jn, TT], bw[jn, EC], bw[jn, LS], bw[jn, OK],
                            tau[d, jn], cost[d, jn])
                    if fok == 1 and fqm <= cap:
                        pj = p if j == pi else j
                        if mode == 0:
                            take = True
                            if blink_thr > np.uint64(0):
                                if _next_u64(rng) < blink_thr:
                                    take = False
                            if take:
                                delta = fc - rcost
                                if delta < best_delta:
                                    best_v = vi
                                    best_pi = pi
                                    best_pj = pj
                                    best_delta = delta
                        else:
                            count += np.uint64(1)
                            if _next_u64(rng) % count == np.uint64(0):
                                best_v = vi
                                best_pi = pi
                                best_pj = pj
                                best_delta = fc - rcost
                    if jn < 0:
                        break
                    # push the next original visit into B, delivery moves right
                    nc, nqs, nqm, ntt, nec, nls, nok = _node(jn, tw_open, tw_close, dem)
                    bc, bqs, bqm, btt, bec, bls, bok = _cat(
                        bc, bqs, bqm, btt, bec, bls, bok,
                        nc, nqs, nqm, ntt, nec, nls, nok, tau[bend, jn], cost[bend, jn])
                    bend = jn
                    if bok == 0 or bqm > cap:
                        break
                    j = jn
            if pi == last:
                break
            pi = succ[pi]
    return best_v, best_pi, best_pj, best_delta


@njit(cache=True, nogil=True)
def build_adjacency(tails, n):
    """Linked arc lists: first[u] / nxt[arc] over arcs given by tail node."""
    m = tails.shape[0]
    first = np.full(n, -1, dtype=np.int64)
    nxt = np.full(m, -1, dtype=np.int64)
    for a in range(m):
        u = tails[a]
        nxt[a] = first[u]
        first[u] = a
    return first, nxt


# ----------------------------------------------------------------------
# unit-capacity min-cost flow (successive shortest paths)


@njit(cache=True, nogil=True)
def mcmf_unit(n, first, nxt, to, cap, cst, source, sink, k):
    """Push k units of flow at minimum cost through a unit-capacity DAG.

    Arc i and its residual twin are paired as (2j, 2j+1). Bellman-Ford
    (early exit) sets initial potentials, then each augmentation runs
    Dijkstra on reduced costs. Mutates cap in place; flow on forward arc
    2j afterwards is 1 - cap[2j].

    Returns (status, total_cost): status 0 ok, -1 negative reduced cost
    (potential invariant broken), -2 fewer than k augmenting paths,
    -3 negative cycle in the input.
    """
    n_arcs = to.shape[0]
    dist = np.full(n, INF64, dtype=np.int64)
    dist[source] = 0
    changed = True
    rounds = 0
    while changed:
        if rounds > n + 1:
            return -3, np.int64(0)
        rounds += 1
        changed = False
        for u in range(n):
            du = dist[u]
            if du >= INF64:
                continue
            a = first[u]
            while a >= 0:
                if cap[a] > 0:
                    v = to[a]
                    nd = du + cst[a]
                    if nd < dist[v]:
                        dist[v] = nd
                        changed = True
                a = nxt[a]
    h = dist.copy()

    heap_key = np.empty(n_arcs + n + 1, dtype=np.int64)
    heap_node = np.empty(n_arcs + n + 1, dtype=np.int64)
    parent_arc = np.empty(n, dtype=np.int64)
    total = np.int64(0)

    for _ in range(k):
        for i in range(n):
            dist[i] = INF64
            parent_arc[i] = -1
        dist[source] = 0
        hs = 0
        heap_key[0] = 0
        heap_node[0] = source
        hs = 1
        while hs > 0:
            kd = heap_key[0]
            u = heap_node[0]
            hs -= 1
            heap_key[0] = heap_key[hs]
            heap_node[0] = heap_node[hs]
            i = 0
            while True:
                l = 2 * i + 1
                r = l + 1
                m = i
                if l < hs and heap_key[l] < heap_key[m]:
                    m = l
                if r < hs and heap_key[r] < heap_key[m]:
                    m = r
                if m == i:
                    break
                heap_key[i], heap_key[m] = heap_key[m], heap_key[i]
                heap_node[i], heap_node[m] = heap_node[m], heap_node[i]
                i = m
            if kd > dist[u]:
                continue
            a = first[u]
            while a >= 0:
                if cap[a] > 0:
                    v = to[a]
                    rc = cst[a] + h[u] - h[v]
                    if rc < 0:
                        return -1, np.int64(0)
                    nd = kd + rc
                    if nd < dist[v]:
                        dist[v] = nd
                        parent_arc[v] = a
                        i = hs
                        heap_key[hs] = nd
                        heap_node[hs] = v
                        hs += 1
                        while i > 0:
                            pa = (i - 1) // 2
                            if heap_key[pa] <= heap_key[i]:
                                break
                            heap_key[i], heap_key[pa] = heap_key[pa], heap_key[i]
                            heap_node[i], heap_node[pa] = heap_node[pa], heap_node[i]
                            i = pa
                a = nxt[a]
        if dist[sink] >= INF64:
            return -2, np.int64(0)
        for i in range(n):
            if dist[i] < INF64:
                h[i] += dist[i]
        v = sink
        while v != source:
            a = parent_arc[v]
            cap[a] -= 1
            cap[a ^ 1] += 1
            total += cst[a]
            v = to[a ^ 1]
    return 0, total
