"""Bounded-displacement resequencing of one route.

Explores every reordering of a route's visits in which a visit cannot be
scheduled while another visit originally k or more positions earlier is
still pending; equivalently, visits u and v keep their order whenever
pos(u) + k <= pos(v). The search is a layered DP whose state is (m, mask):
m is the first still-pending original position and mask records which of
the k-1 positions after m were already consumed, so there are at most
2^(k-1) masks per m and the move table depends only on k. Each state
keeps a small set of sequence-evaluation labels; a label is dominated
when another one is no worse in both cost and earliest completion (loads
agree inside a state, so this dominance is exact).
"""

from __future__ import annotations

from functools import lru_cache

from .evaluation import concat, node_eval
from .model import Instance


@lru_cache(maxsize=None)
def move_table(k: int) -> tuple[tuple[int, ...], ...]:
    """For every mask over the k-1 positions after m, the consumable
    offsets: 0 (i.e. m itself, always pending) plus every unconsumed
    offset j in 1..k-1."""
    if k < 1:
        raise ValueError("displacement bound k must be >= 1")
    table = []
    for mask in range(1 << (k - 1)):
        offs = [0] + [j for j in range(1, k) if not mask & (1 << (j - 1))]
        table.append(tuple(offs))
    return tuple(table)


def n_layers(n_visits: int) -> int:
    """Layers of the search graph for a route with n_visits visits after
    the start node: one initial layer plus one per consumed visit."""
    return n_visits + 1


def search(inst: Instance, visits: list[int], k: int, labels: int = 4):
    """Cheapest admissible reordering of a route, or None.

    ``visits`` is the full route including the start node, which stays
    fixed. Returns (new_visits, new_cost) only when strictly cheaper than
    the input; feasibility (windows, capacity, pickup before delivery) is
    enforced during the search. ``labels`` caps how many labels survive
    per state (0 keeps all, making the search exact).
    """
    tail = visits[1:]
    L = len(tail)
    if L < 2 or k < 2:
        return None
    moves = move_table(k)
    cap = inst.capacity

    pos_of_pickup = {}
    for i, node in enumerate(tail):
        if inst.node_kind[node] == 1:
            pos_of_pickup[int(inst.node_request[node])] = i

    def pickup_consumed(node, m, mask):
        if inst.node_kind[node] != 2:
            return True
        pp = pos_of_pickup.get(int(inst.node_request[node]))
        if pp is None:
            return True
        if pp < m:
            return True
        if pp == m or pp >= m + k:
            return False
        return bool(mask & (1 << (pp - m - 1)))

    start = visits[0]
    root = node_eval(inst, start)
    # label: (eval, last_node, parent_step_key, parent_label_idx, consumed_pos)
    layers = [{(0, 0): [(root, start, None, 0, -1)]}]
    for _ in range(L):
        nxt: dict = {}
        for (m, mask), labs in layers[-1].items():
            for j in moves[mask]:
                u = m + j
                if u >= L:
                    continue
                node = tail[u]
                if not pickup_consumed(node, m, mask):
                    continue
                if j == 0:
                    t = 0
                    while mask & (1 << t):
                        t += 1
                    m2, mask2 = m + 1 + t, mask >> (t + 1)
                else:
                    m2, mask2 = m, mask | (1 << (j - 1))
                for li, (ev, last, _, _, _) in enumerate(labs):
                    ev2 = concat(ev, node_eval(inst, node),
                                 int(inst.tau[last, node]), int(inst.cost[last, node]))
                    if not ev2.feasible or ev2.q_max > cap:
                        continue
                    nxt.setdefault((m2, mask2), []).append((ev2, node, (m, mask), li, u))
        for key, labs in nxt.items():
            nxt[key] = _prune(labs, labels)
        if not nxt:
            return None
        layers.append(nxt)

    final = layers[-1].get((L, 0))
    if not final:
        return None
    best = min(range(len(final)), key=lambda i: (final[i][0].cost, final[i][0].earliest_end, i))
    orig_cost = 0
    prev = visits[0]
    for node in tail:
        orig_cost += int(inst.cost[prev, node])
        prev = node
    if final[best][0].cost >= orig_cost:
        return None

    order = []
    key, li = (L, 0), best
    for step in range(L, 0, -1):
        ev, node, pkey, pli, _ = layers[step][key][li]
        order.append(node)
        key, li = pkey, pli
    order.reverse()
    return [start] + order, final[best][0].cost


def _prune(labs, cap_labels):
    """Drop dominated labels, then keep the cap_labels cheapest (ties:
    earlier completion, then insertion order).

    Dominance ((cost, earliest_end) both no better) is only sound between
    labels ending at the same visit: the state fixes which visits are
    consumed, but the cost of the remaining arcs depends on the last one.
    """
    order = sorted(range(len(labs)), key=lambda i: (labs[i][0].cost, labs[i][0].earliest_end, i))
    kept = []
    best_ec: dict[int, int] = {}
    for i in order:
        ec = labs[i][0].earliest_end
        last = labs[i][1]
        cur = best_ec.get(last)
        if cur is not None and ec >= cur:
            continue  # a kept label with this last visit has cost <= and earliest_end <=
        kept.append(labs[i])
        best_ec[last] = ec
    if cap_labels and len(kept) > cap_labels:
        kept = kept[:cap_labels]
    return kept
