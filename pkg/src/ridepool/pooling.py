"""Request pooling: candidate shared rides and their selection.

Requests are ordered by earliest pickup. Each request seeds candidate
pools with later requests whose pickup window opens before the seed's
latest dropoff plus the buffer; a pool is kept when some interleaving of
its pickups and deliveries is feasible (precedence, capacity, windows
under earliest-start propagation), and it stores the cheapest such
sequence. Pool selection solves a set-cover (or set-partition) LP over
pool weights and rounds it, or skips the LP and picks greedily.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .model import Instance
from .params import Params

LP_TOL = 1e-6


@dataclass(frozen=True)
class Pool:
    requests: tuple[int, ...]   # sorted request ids
    seq: tuple[int, ...]        # cheapest feasible visit sequence
    seq_cost: int               # arc cost sum of seq
    weight: float = 0.0


# ----------------------------------------------------------------------
# candidate enumeration


def request_order(inst: Instance) -> list[int]:
    """Requests by ascending earliest pickup, ties by id."""
    return sorted(range(inst.n_requests), key=lambda r: (inst.requests[r].earliest, r))


def neighbor_lists(inst: Instance) -> dict[int, list[int]]:
    """For each request r, the later-ordered requests r2 with
    e_r <= e_r2 <= l_r + buffer. Ties on the earliest pickup are ordered
    by id, so exactly one of two simultaneous requests lists the other."""
    order = request_order(inst)
    out: dict[int, list[int]] = {}
    for i, r in enumerate(order):
        bound = inst.requests[r].latest + inst.buffer
        ns = []
        for r2 in order[i + 1:]:
            if inst.requests[r2].earliest > bound:
                break
            ns.append(r2)
        out[r] = ns
    return out


def cheapest_sequence(inst: Instance, rids) -> tuple[tuple[int, ...], int] | None:
    """Cheapest feasible interleaving of the pool's pickups/deliveries.

    Depth-first over partial sequences with pruning on load, windows
    (earliest-start propagation from the first visit's window open) and
    on the incumbent cost; equal-cost ties resolve to the
    lexicographically smallest sequence. Returns None when no feasible
    interleaving exists.
    """
    rids = sorted(rids)
    pickups = [int(inst.pickup_of[r]) for r in rids]
    deliveries = {int(inst.pickup_of[r]): int(inst.delivery_of[r]) for r in rids}
    cap = inst.capacity
    best: list = [None, None]  # cost, seq

    def extend(seq, time, load, cost, open_pickups, onboard):
        if best[0] is not None and cost >= best[0]:
            # never cheaper: arcs are non-negative
            if cost > best[0]:
                return
        if not open_pickups and not onboard:
            key = tuple(seq)
            if best[0] is None or cost < best[0] or (cost == best[0] and key < best[1]):
                best[0], best[1] = cost, key
            return
        last = seq[-1]
        for node in sorted(open_pickups | onboard):
            is_pick = node in open_pickups
            if is_pick and load + 1 > cap:
                continue
            arr = time + int(inst.tau[last, node])
            if arr > inst.tw_close[node]:
                continue
            b = max(arr, int(inst.tw_open[node]))
            seq.append(node)
            if is_pick:
                extend(seq, b, load + 1, cost + int(inst.cost[last, node]),
                       open_pickups - {node}, onboard | {deliveries[node]})
            else:
                extend(seq, b, load - 1, cost + int(inst.cost[last, node]),
                       open_pickups, onboard - {node})
            seq.pop()

    for p in pickups:
        # a sequence starts at the window open of its first pickup
        extend([p], int(inst.tw_open[p]), 1, 0,
               set(pickups) - {p}, {deliveries[p]})
    if best[0] is None:
        return None
    return best[1], int(best[0])


def singleton_pool(inst: Instance, rid: int) -> Pool | None:
    got = cheapest_sequence(inst, [rid])
    if got is None:
        return None
    seq, cost = got
    return Pool((rid,), seq, cost)


def enumerate_pools(inst: Instance, max_size: int) -> list[Pool]:
    """All feasible pools of 2..max_size requests.

    Grows each seed's pool one neighbor at a time in order; a pool that
    has no feasible interleaving cannot gain one by adding requests
    (restricting a feasible sequence to a subset stays feasible), so
    infeasible branches are cut immediately. Every pool is produced once,
    from its order-minimal request.
    """
    neighbors = neighbor_lists(inst)
    pools: list[Pool] = []
    seen: set[tuple[int, ...]] = set()

    def grow(members: list[int], cands: list[int]):
        if len(members) >= max_size:
            return
        for i, c in enumerate(cands):
            key = tuple(sorted(members + [c]))
            if key in seen:
                continue
            seen.add(key)
            got = cheapest_sequence(inst, key)
            if got is None:
                continue
            seq, cost = got
            pools.append(Pool(key, seq, cost))
            grow(members + [c], cands[i + 1:])

    for r in request_order(inst):
        grow([r], neighbors[r])
    return pools


def all_pools(inst: Instance, max_size: int) -> list[Pool]:
    """Multi-request pools plus every servable request's singleton."""
    pools = enumerate_pools(inst, max_size)
    for r in range(inst.n_requests):
        s = singleton_pool(inst, r)
        if s is not None:
            pools.append(s)
    return pools


# ----------------------------------------------------------------------
# weights


def pool_weight(inst: Instance, pool: Pool, params: Params) -> float:
    """Selection weight of a pool (all variants are <= 0; selecting fewer,
    larger pools scores higher)."""
    lam = params.max_pool_size
    w1 = -lam / len(pool.requests)
    if params.weight_variant == "size":
        return w1
    if params.weight_variant == "travel":
        return pool.seq_cost * w1
    e = [inst.requests[r].earliest for r in pool.requests]
    l = [inst.requests[r].latest for r in pool.requests]
    span_minus_overlap = (max(l) - min(e)) - (min(l) - max(e))
    if params.weight_variant == "slack":
        return span_minus_overlap * w1
    rho = params.blend_rho
    return pool.seq_cost * w1 * (1.0 - rho) + span_minus_overlap * w1 * rho


def weigh_pools(inst: Instance, pools: list[Pool], params: Params) -> list[Pool]:
    return [replace(p, weight=pool_weight(inst, p, params)) for p in pools]


# ----------------------------------------------------------------------
# LP relaxations


def _coverage(pools: list[Pool], n_requests: int):
    rows = []
    cols = []
    for j, pool in enumerate(pools):
        for r in pool.requests:
            rows.append(r)
            cols.append(j)
    covered = sorted(set(rows))
    row_of = {r: i for i, r in enumerate(covered)}
    a = np.zeros((len(covered), len(pools)))
    for r, j in zip(rows, cols):
        a[row_of[r], j] = 1.0
    return a, covered


def solve_cover_lp(pools: list[Pool], n_requests: int) -> np.ndarray:
    """Relaxed weighted set cover: maximize total weight subject to every
    coverable request being covered at least once, 0 <= x <= 1."""
    a, _ = _coverage(pools, n_requests)
    w = np.array([p.weight for p in pools])
    res = linprog(-w, A_ub=-a, b_ub=-np.ones(a.shape[0]), bounds=(0.0, 1.0), method="highs")
    if not res.success:
        raise RuntimeError(f"cover LP failed: {res.message}")
    return np.clip(res.x, 0.0, 1.0)


def solve_partition_lp(pools: list[Pool], n_requests: int) -> np.ndarray:
    """Relaxed weighted set partition: coverage exactly once."""
    a, _ = _coverage(pools, n_requests)
    w = np.array([p.weight for p in pools])
    res = linprog(-w, A_eq=a, b_eq=np.ones(a.shape[0]), bounds=(0.0, 1.0), method="highs")
    if not res.success:
        raise RuntimeError(f"partition LP failed: {res.message}")
    return np.clip(res.x, 0.0, 1.0)


def lp_objective(pools: list[Pool], x: np.ndarray) -> float:
    return float(np.dot([p.weight for p in pools], x))


# ----------------------------------------------------------------------
# roundings / matchings


def _complete_with_singletons(inst: Instance, chosen: list[Pool], params: Params) -> list[Pool]:
    covered = {r for p in chosen for r in p.requests}
    for rid in range(inst.n_requests):
        if rid not in covered:
            s = singleton_pool(inst, rid)
            if s is not None:
                chosen.append(replace(s, weight=pool_weight(inst, s, params)))
    return sorted(chosen, key=lambda p: p.requests)


def select_greedy_weight(inst: Instance, pools: list[Pool], params: Params) -> list[Pool]:
    """Greedy matching by descending weight (ties: lexicographic ids)."""
    chosen: list[Pool] = []
    covered: set[int] = set()
    for pool in sorted(pools, key=lambda p: (-p.weight, p.requests)):
        if covered.isdisjoint(pool.requests):
            chosen.append(pool)
            covered.update(pool.requests)
    return _complete_with_singletons(inst, chosen, params)


def select_greedy_lp(inst: Instance, pools: list[Pool], x: np.ndarray, params: Params) -> list[Pool]:
    """Round an LP point greedily: descending x, ties by descending
    weight then lexicographic ids; keep pools disjoint from the cover so
    far; finish uncovered requests with their singletons."""
    order = sorted(range(len(pools)), key=lambda j: (-x[j], -pools[j].weight, pools[j].requests))
    chosen: list[Pool] = []
    covered: set[int] = set()
    for j in order:
        if x[j] <= LP_TOL:
            continue
        pool = pools[j]
        if covered.isdisjoint(pool.requests):
            chosen.append(pool)
            covered.update(pool.requests)
    return _complete_with_singletons(inst, chosen, params)


def select_randomized(inst: Instance, pools: list[Pool], x: np.ndarray,
                      params: Params, rng: np.random.Generator) -> list[Pool]:
    """Independent randomized rounding with repair.

    Every pool enters with probability x; a request covered by several
    selected pools stays in the highest-weight one (ties broken by the
    RNG) and is dropped from the rest; pools reduced below two requests
    dissolve into singletons; uncovered requests get their singletons.
    Shrunken pools get their cheapest sequence and weight recomputed.
    """
    hits = [j for j in range(len(pools)) if rng.random() < x[j]]
    covering: dict[int, list[int]] = {}
    for j in hits:
        for r in pools[j].requests:
            covering.setdefault(r, []).append(j)
    keeper: dict[int, int] = {}
    for r in sorted(covering):
        js = covering[r]
        if len(js) == 1:
            keeper[r] = js[0]
        else:
            wmax = max(pools[j].weight for j in js)
            top = [j for j in js if pools[j].weight == wmax]
            keeper[r] = top[int(rng.integers(0, len(top)))]
    final_sets: dict[int, list[int]] = {}
    for r, j in keeper.items():
        final_sets.setdefault(j, []).append(r)
    chosen: list[Pool] = []
    for j in sorted(final_sets):
        rids = sorted(final_sets[j])
        if len(rids) < 2:
            continue  # dissolves; singleton completion picks them up
        if len(rids) == len(pools[j].requests):
            chosen.append(pools[j])
        else:
            seq, cost = cheapest_sequence(inst, rids)  # subset stays feasible
            shrunk = Pool(tuple(rids), seq, cost)
            chosen.append(replace(shrunk, weight=pool_weight(inst, shrunk, params)))
    return _complete_with_singletons(inst, chosen, params)


def build_matching(inst: Instance, params: Params, rng: np.random.Generator) -> list[Pool]:
    """Full pooling pipeline: enumerate, weigh, relax, round."""
    pools = weigh_pools(inst, all_pools(inst, params.max_pool_size), params)
    if params.matching == "greedy":
        return select_greedy_weight(inst, pools, params)
    if params.matching == "lp-partition":
        x = solve_partition_lp(pools, inst.n_requests)
        return select_greedy_lp(inst, pools, x, params)
    x = solve_cover_lp(pools, inst.n_requests)
    if params.matching == "lp-random":
        return select_randomized(inst, pools, x, params, rng)
    return select_greedy_lp(inst, pools, x, params)


def check_matching(inst: Instance, matching: list[Pool]) -> None:
    """Raise unless the matching is a partition of the servable requests."""
    seen: set[int] = set()
    for pool in matching:
        for r in pool.requests:
            if r in seen:
                raise ValueError(f"request {r} appears in two pools")
            seen.add(r)
    for rid in range(inst.n_requests):
        if rid not in seen and singleton_pool(inst, rid) is not None:
            raise ValueError(f"servable request {rid} left uncovered")


def dump_matching(matching: list[Pool]) -> str:
    """One line per pool: comma-separated request ids, then the weight."""
    lines = []
    for p in matching:
        ids = ",".join(str(r) for r in p.requests)
        lines.append(f"{ids} {p.weight:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")
