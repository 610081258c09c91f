"""Guided-ejection fleet minimization for hierarchical benchmark runs.

One elimination attempt empties the route with the fewest requests onto
a stack and tries to re-place every stacked request: best direct
insertion first, then the best insertion enabled by ejecting one other
request, then by ejecting two. Ejection candidates are ranked by a
penalty counter of failed insertions (smaller first, ties broken
uniformly by reservoir sampling); every failed direct insertion bumps
the popped request's counter. After each ejection-phase attempt the
solution is shaken with a few random moves. An attempt spends at most a
fixed number of such perturbations — the tracker resets whenever the
stack reaches a new minimum size — and reverts the solution when the
budget runs out with the stack non-empty.

The hierarchical driver runs one elimination pass at the top of every
outer search iteration, sharing the (decayed) penalty table across
calls, and otherwise minimizes cost with a route count that never grows.
"""

from __future__ import annotations

import time

import numpy as np

from . import ils
from .evaluation import WorkingSolution, seed_rng_state
from .model import Instance, Solution
from .params import Params


def _route_of(ws: WorkingSolution, rid: int) -> int:
    return int(ws.vehicle_of[ws.inst.pickup_of[rid]])


def _best_single_ejection(ws: WorkingSolution, rid: int, rho: np.ndarray,
                          rng: np.random.Generator, rng_state: np.ndarray):
    """Cheapest insertion of rid enabled by ejecting one request.

    Only the ejected request's own route can have become feasible, so the
    scan stays local. Candidates are visited in increasing penalty; the
    first feasible penalty level wins, sampled uniformly within the level.
    Returns the ejected request id or None.
    """
    order = sorted(ws.routed, key=lambda r: (rho[r], r))
    chosen = None
    level = None
    count = 0
    for cand in order:
        if level is not None and rho[cand] > level:
            break
        vid = _route_of(ws, cand)
        ws.begin()
        ws.remove_requests([cand])
        ok = ws.best_insertion(rid, [vid], np.uint64(0), rng_state) is not None
        ws.rollback()
        if not ok:
            continue
        if level is None:
            level = rho[cand]
        count += 1
        if int(rng.integers(0, count)) == 0:
            chosen = cand
    return chosen


def _best_double_ejection(ws: WorkingSolution, rid: int, rho: np.ndarray,
                          rng: np.random.Generator, rng_state: np.ndarray):
    """Insertion of rid enabled by ejecting a pair, minimal penalty sum.

    Pairs are tested in non-decreasing penalty sum; once a feasible pair
    appears, only its sum level is finished (reservoir-sampled) before
    returning. Returns the pair or None.
    """
    routed = sorted(ws.routed)
    n = len(routed)
    if n < 2:
        return None
    idx = np.triu_indices(n, k=1)
    pen = np.asarray([rho[r] for r in routed])
    sums = pen[idx[0]] + pen[idx[1]]
    order = np.argsort(sums, kind="stable")
    chosen = None
    level = None
    count = 0
    for o in order:
        if level is not None and sums[o] > level:
            break
        r1, r2 = routed[int(idx[0][o])], routed[int(idx[1][o])]
        v1, v2 = _route_of(ws, r1), _route_of(ws, r2)
        ws.begin()
        ws.remove_requests([r1, r2])
        ok = ws.best_insertion(rid, sorted({v1, v2}), np.uint64(0),
                               rng_state) is not None
        ws.rollback()
        if not ok:
            continue
        if level is None:
            level = sums[o]
        count += 1
        if int(rng.integers(0, count)) == 0:
            chosen = (r1, r2)
    return chosen


def eliminate_route(ws: WorkingSolution, params: Params, rho: np.ndarray,
                    rng: np.random.Generator, rng_state: np.ndarray,
                    deadline: float | None = None) -> bool:
    """One elimination attempt; True when a route was removed for good."""
    nonempty = ws.nonempty_vehicles()
    if len(nonempty) <= 1:
        return False
    snapshot = ws.copy()
    counts = ws.route_len[nonempty]
    low = [v for v, c in zip(nonempty, counts) if c == counts.min()]
    victim = low[int(rng.integers(0, len(low)))]
    stack = [int(ws.inst.node_request[x]) for x in ws.route_visits(victim)[1:]
             if ws.inst.node_kind[x] == 1]
    ws.remove_requests(stack)

    perturbs = 0
    min_stack = len(stack)
    while stack:
        if perturbs >= params.fleet_perturbations:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        rid = stack.pop()
        got = ws.best_insertion(rid, ws.nonempty_vehicles(), np.uint64(0), rng_state)
        if got is not None:
            ws.insert(rid, got[0], got[1], got[2])
        else:
            rho[rid] += 1.0
            single = _best_single_ejection(ws, rid, rho, rng, rng_state)
            if single is not None:
                vid = _route_of(ws, single)
                ws.remove_requests([single])
                stack.append(single)
                got = ws.best_insertion(rid, [vid], np.uint64(0), rng_state)
                ws.insert(rid, got[0], got[1], got[2])
            else:
                pair = _best_double_ejection(ws, rid, rho, rng, rng_state)
                if pair is not None:
                    vids = sorted({_route_of(ws, r) for r in pair})
                    ws.remove_requests(list(pair))
                    stack.extend(pair)
                    got = ws.best_insertion(rid, vids, np.uint64(0), rng_state)
                    ws.insert(rid, got[0], got[1], got[2])
                else:
                    stack.insert(0, rid)
            ils.perturb(ws, params.fleet_perturb_moves, params.fleet_relocate_prob,
                        rng, rng_state, allow_empty_targets=False)
            perturbs += 1
            if len(stack) < min_stack:
                min_stack = len(stack)
                perturbs = 0
    if stack:
        ws.adopt(snapshot)
        return False
    return True


def ages(ws: WorkingSolution, params: Params, rho: np.ndarray,
         rng: np.random.Generator, rng_state: np.ndarray,
         deadline: float | None = None) -> int:
    """Route elimination pass: decay penalties, then drop routes until an
    attempt fails. Mutates ws; returns the number of routes removed."""
    np.maximum(rho * params.fleet_penalty_decay, 1.0, out=rho)
    removed = 0
    while eliminate_route(ws, params, rho, rng, rng_state, deadline):
        removed += 1
        if deadline is not None and time.monotonic() >= deadline:
            break
    return removed


def hierarchical_run(inst: Instance, params: Params, rng: np.random.Generator,
                     warm: Solution | None = None,
                     progress=None) -> tuple[Solution, ils.RunStats]:
    """Fleet-size-first search: an elimination pass ahead of each outer
    iteration, cost minimization (never opening routes) in between."""
    rho = np.ones(inst.n_requests, dtype=np.float64)
    rng_state = seed_rng_state(rng)
    deadline = (time.monotonic() + params.time_limit
                if params.time_limit > 0 else None)

    def hook(ws: WorkingSolution) -> None:
        if not ws.pool:
            ages(ws, params, rho, rng, rng_state, deadline)

    return ils.run(inst, params, rng, warm=warm, allow_new_routes=False,
                   fleet_monotone=True, pre_round=hook, progress=progress)
