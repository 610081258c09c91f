"""String-removal ruin, blink-insertion recreate, threshold acceptance.

Ruin picks a seed request uniformly, orders the other assigned requests
by pickup-to-pickup travel time from the seed, and removes one string of
consecutive visits from each of a few related routes (at most one string
per route). A string either contains the related pickup outright, or —
with the split variant — preserves an inner substring and removes the
rest around it. Requests with only one node removed are removed fully.

Recreate sorts the unassigned pool by one roulette-chosen criterion and
inserts each request at its cheapest feasible position across all
non-empty routes, skipping candidate positions with a small blink
probability; a request that fits nowhere opens the cheapest new route
(when allowed). Acceptance is record-to-record: any strict hierarchical
improvement is taken, otherwise the relative cost gap to the best must
stay below a threshold that shrinks linearly to zero over the run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import resequence
from .evaluation import WorkingSolution, blink_threshold, seed_rng_state
from .model import Objective
from .params import Params

SORT_NAMES = ("random", "far", "close", "tw-width", "tw-start", "tw-end")


# ----------------------------------------------------------------------
# acceptance


def gap_accept(cand: Objective, best: Objective, t: float) -> bool:
    """Record-to-record acceptance against the best known objective."""
    if cand < best:
        return True
    if cand.unassigned > best.unassigned:
        return False
    if best.cost == 0:
        return cand.cost == 0 and t > 0.0
    return (cand.cost - best.cost) / best.cost < t


@dataclass
class Acceptance:
    """Linearly shrinking acceptance threshold."""

    t: float
    t_dec: float

    @classmethod
    def fresh(cls, params: Params) -> "Acceptance":
        return cls(params.accept_t_init,
                   params.accept_t_init / (params.ls_iterations * params.sub_iterations))

    def snapshot(self) -> "Acceptance":
        return Acceptance(self.t, self.t_dec)

    def accept(self, cand: Objective, best: Objective) -> bool:
        return gap_accept(cand, best, self.t)

    def step(self, n: int = 1) -> None:
        self.t = max(0.0, self.t - n * self.t_dec)


# ----------------------------------------------------------------------
# ruin


@dataclass
class RuinStats:
    seed: int = -1
    k_s: int = 0
    string_cap: int = 0                      # l_s^max after averaging
    strings: list = field(default_factory=list)   # (vehicle, l_sigma, removed visits)
    removed: list = field(default_factory=list)   # request ids


def ruin(ws: WorkingSolution, params: Params, rng: np.random.Generator) -> RuinStats:
    stats = RuinStats()
    if not ws.routed:
        return stats
    inst = ws.inst
    assigned = sorted(ws.routed)
    seed = assigned[int(rng.integers(0, len(assigned)))]
    stats.seed = seed

    lens = ws.route_len[ws.scope]
    lens = lens[lens > 0]
    ls_max = max(1, min(params.ruin_max_string, int(lens.sum()) // lens.size))
    stats.string_cap = ls_max
    ks_bound = 4.0 * params.ruin_mean_removal / (1.0 + ls_max) - 1.0
    k_s = int(rng.uniform(1.0, max(1.0, ks_bound)))
    k_s = max(1, k_s)
    stats.k_s = k_s

    p_seed = int(inst.pickup_of[seed])
    if len(assigned) <= 32:
        trow = inst.time[p_seed]
        pickup_of = inst.pickup_of
        order = sorted(assigned, key=lambda r: (trow[pickup_of[r]], r))
    else:
        arr = np.asarray(assigned, dtype=np.int64)
        d = inst.time[p_seed, inst.pickup_of[arr]]
        order = arr[np.lexsort((arr, d))].tolist()

    for rid in order:
        if len(stats.strings) >= k_s:
            break
        if rid not in ws.routed:
            continue  # removed as a side effect of an earlier string
        vid = int(ws.vehicle_of[inst.pickup_of[rid]])
        if any(v == vid for v, _, _ in stats.strings):
            continue  # one string per route
        tail = ws.route_visits(vid)[1:]
        sz = len(tail)
        l_sigma = int(rng.uniform(1.0, max(1.0, float(min(sz, ls_max)))))
        l_sigma = max(1, l_sigma)
        pp = tail.index(int(inst.pickup_of[rid]))

        window: list[int] | None = None
        if rng.random() >= params.plain_string_prob and sz > l_sigma:
            # split string: remove l_sigma visits around a preserved substring
            m = 1
            while m < sz - l_sigma and rng.random() < params.split_grow_prob:
                m += 1
            total = l_sigma + m
            lo, hi = max(0, pp - total + 1), min(pp, sz - total)
            if lo <= hi:
                wstart = int(rng.integers(lo, hi + 1))
                offs = [o for o in range(l_sigma + 1)
                        if not (wstart + o <= pp < wstart + o + m)]
                if offs:
                    o = offs[int(rng.integers(0, len(offs)))]
                    window = tail[wstart:wstart + o] + tail[wstart + o + m:wstart + total]
        if window is None:
            # plain string of l_sigma consecutive visits containing the pickup
            lo, hi = max(0, pp - l_sigma + 1), min(pp, sz - l_sigma)
            wstart = int(rng.integers(lo, hi + 1))
            window = tail[wstart:wstart + l_sigma]

        hit = sorted({int(inst.node_request[x]) for x in window})
        ws.remove_requests(hit)
        stats.strings.append((vid, l_sigma, len(window)))
        stats.removed.extend(hit)
    return stats


# ----------------------------------------------------------------------
# recreate


def _sorted_pool(ws: WorkingSolution, params: Params, rng: np.random.Generator) -> list[int]:
    pool = sorted(ws.pool)
    if len(pool) <= 1:
        return pool
    w = params.sort_weights
    u = rng.random() * sum(w)
    crit = len(w) - 1
    cum = 0.0
    for i, wi in enumerate(w):
        cum += wi
        if u < cum:
            crit = i
            break
    inst = ws.inst
    if crit == 0:
        rng.shuffle(pool)
    elif crit in (1, 2):
        starts = inst.vehicle_starts[ws.scope]
        pickups = inst.pickup_of[np.asarray(pool, dtype=np.int64)]
        dmin = inst.cost[np.ix_(starts, pickups)].min(axis=0)
        sign = -1 if crit == 1 else 1   # far: descending, close: ascending
        pool = [r for _, r in sorted(zip(sign * dmin, pool))]
    elif crit == 3:
        pool.sort(key=lambda r: (inst.requests[r].latest - inst.requests[r].earliest, r))
    elif crit == 4:
        pool.sort(key=lambda r: (inst.requests[r].earliest, r))
    else:
        pool.sort(key=lambda r: (-inst.requests[r].latest, r))
    return pool


def recreate(ws: WorkingSolution, params: Params, rng: np.random.Generator,
             rng_state: np.ndarray, allow_new_routes: bool = True,
             blink: np.uint64 | None = None) -> list[int]:
    """Insert unassigned requests greedily; returns the inserted ids."""
    pool = _sorted_pool(ws, params, rng)[: params.max_inserts]
    if not pool:
        return []
    if blink is None:
        blink = blink_threshold(params.blink_prob)
    nonempty = ws.nonempty_vehicles()
    empties = ws.empty_vehicles()
    inserted = []
    for rid in pool:
        got = ws.best_insertion(rid, nonempty, blink, rng_state)
        if got is not None:
            vid, pi, pj, _ = got
            ws.insert(rid, vid, pi, pj)
            inserted.append(rid)
            continue
        if allow_new_routes and empties:
            opened = ws.best_empty_insertion(rid, empties)
            if opened is not None:
                vid, start, p, _ = opened
                ws.insert(rid, vid, start, p)
                inserted.append(rid)
                nonempty.append(vid)
                empties.remove(vid)
    return inserted


# ----------------------------------------------------------------------
# the ruin-recreate loop


@dataclass
class RRResult:
    best: WorkingSolution
    iterations: int = 0
    improvements: int = 0
    accepted: int = 0


def run(ws: WorkingSolution, params: Params, rng: np.random.Generator,
        acc: Acceptance, iterations: int, deadline: float | None = None,
        allow_new_routes: bool = True, resequence_on_best: bool = True,
        on_accept=None) -> RRResult:
    """Ruin-recreate loop on one (sub)problem state, mutating ws in place.

    Rejected iterations roll back via the transaction log. Whenever a new
    best appears, every route modified in that iteration is additionally
    resequenced under the displacement-bounded search. Returns the best
    state found (a copy); `on_accept` fires for every accepted candidate.
    """
    best = ws.copy()
    best_obj = best.objective()
    rng_state = seed_rng_state(rng)
    blink = blink_threshold(params.blink_prob)
    res = RRResult(best)
    for _ in range(iterations):
        if deadline is not None and time.monotonic() >= deadline:
            break
        res.iterations += 1
        ws.begin()
        ruin(ws, params, rng)
        recreate(ws, params, rng, rng_state, allow_new_routes, blink)
        obj = ws.objective()
        if obj < best_obj:
            touched = sorted(ws.txn["routes"])
            ws.commit()
            if resequence_on_best:
                for vid in touched:
                    got = resequence.search(ws.inst, ws.route_visits(vid),
                                            params.reseq_k, params.reseq_labels)
                    if got is not None:
                        ws.relink(vid, got[0][1:])
            res.best = ws.copy()
            best_obj = res.best.objective()
            res.improvements += 1
            res.accepted += 1
            if on_accept is not None:
                on_accept(ws)
        elif acc.accept(obj, best_obj):
            ws.commit()
            res.accepted += 1
            if on_accept is not None:
                on_accept(ws)
        else:
            ws.rollback()
        acc.step()
    return res
