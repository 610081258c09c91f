"""Decomposition-based iterated local search, plus the sequential pipeline.

One local-search round partitions the working solution's routes into
parts of roughly equal node count, improves every part independently
with the ruin-recreate loop, merges the part results back by part index,
and reassigns the merged solution's blocks to vehicles through the
dispatching graph. A shrinking record-to-record threshold decides
whether the merged candidate replaces the working solution. After a
batch of such rounds the outer loop may revert to the best solution
(probability grows with stagnation) and then shakes the working solution
with random relocations and exchanges.

The sequential pipeline (pool matching followed by graph dispatching)
lives here too, as does the hybrid driver that warm-starts the local
search from the sequential result.
"""

from __future__ import annotations

import concurrent.futures
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import dispatch, pooling
from .evaluation import WorkingSolution, seed_rng_state
from .model import Instance, Route, Solution
from .params import Params
from .ruin_recreate import Acceptance, gap_accept, run as run_rr

PROGRESS_HEADER = "round,unassigned,cost,elapsed_s"


# ----------------------------------------------------------------------
# construction


def _empty_route_feasible(inst: Instance) -> np.ndarray:
    """(vehicles x requests) matrix: can the pair be served alone?"""
    starts = inst.vehicle_starts
    p = inst.pickup_of
    d = inst.delivery_of
    begin_p = np.maximum(inst.tw_open[p][None, :],
                         inst.tw_open[starts][:, None] + inst.tau[np.ix_(starts, p)])
    ok = begin_p <= inst.tw_close[p][None, :]
    begin_d = np.maximum(inst.tw_open[d][None, :], begin_p + inst.tau[p, d][None, :])
    return ok & (begin_d <= inst.tw_close[d][None, :])


def construct_initial(inst: Instance, params: Params, rng: np.random.Generator,
                      scope=None) -> WorkingSolution:
    """Parallel-insertion start: seed each vehicle with one random request
    it can serve alone, then place the rest at their cheapest position."""
    ws = WorkingSolution(inst, scope)
    ws.pool = set(range(inst.n_requests))
    order = rng.permutation(inst.n_requests)
    if inst.n_requests == 0 or len(ws.scope) == 0:
        return ws
    feas = _empty_route_feasible(inst)
    placed = np.zeros(inst.n_requests, dtype=bool)
    for vid in ws.scope:
        cand = order[~placed[order] & feas[vid, order]]
        if len(cand) == 0:
            continue
        rid = int(cand[0])
        ws.insert(rid, int(vid), inst.vehicles[vid].start, int(inst.pickup_of[rid]))
        placed[rid] = True

    rng_state = seed_rng_state(rng)
    nonempty = ws.nonempty_vehicles()
    empties = ws.empty_vehicles()
    for rid in order:
        if placed[rid]:
            continue
        rid = int(rid)
        got = ws.best_insertion(rid, nonempty, np.uint64(0), rng_state)
        opened = ws.best_empty_insertion(rid, empties)
        if got is not None and (opened is None or got[3] <= opened[3]):
            ws.insert(rid, got[0], got[1], got[2])
        elif opened is not None:
            vid, start, p, _ = opened
            ws.insert(rid, vid, start, p)
            nonempty.append(vid)
            empties.remove(vid)
    return ws


# ----------------------------------------------------------------------
# partitioning


class History:
    """Pairwise request counters steering where unassigned requests go.

    after[r, r2] counts how often r2's visit came directly after one of
    r's; same[r, r2] (symmetric) counts shared routes. Updated once per
    accepted solution.
    """

    def __init__(self, n_requests: int):
        self.after = np.zeros((n_requests, n_requests), dtype=np.int64)
        self.same = np.zeros((n_requests, n_requests), dtype=np.int64)

    def update(self, ws: WorkingSolution) -> None:
        inst = ws.inst
        for vid in ws.nonempty_vehicles():
            tail = np.asarray(ws.route_visits(vid)[1:], dtype=np.int64)
            seq = inst.node_request[tail]
            a, b = seq[:-1], seq[1:]
            m = a != b
            np.add.at(self.after, (a[m], b[m]), 1)
            reqs = np.unique(seq)
            if len(reqs) > 1:
                self.same[np.ix_(reqs, reqs)] += 1
                self.same[reqs, reqs] -= 1

    def part_weights(self, rid: int, parts_requests) -> np.ndarray:
        w = np.ones(len(parts_requests), dtype=np.float64)
        for i, reqs in enumerate(parts_requests):
            if len(reqs):
                w[i] += (self.after[rid, reqs].sum() + self.after[reqs, rid].sum()
                         + self.same[rid, reqs].sum())
        return w


@dataclass
class Part:
    vids: list[int] = field(default_factory=list)
    pool: list[int] = field(default_factory=list)


def partition(ws: WorkingSolution, params: Params, history: History,
              rng: np.random.Generator, vids=None) -> list[Part]:
    """Shuffle routes, group greedily to ~part_nodes route nodes each,
    then deal the unassigned pool out by history-weighted roulette."""
    if vids is None:
        vids = [int(v) for v in ws.scope]
    vids = list(vids)
    rng.shuffle(vids)
    parts = [Part()]
    count = 0
    for vid in vids:
        if count >= params.part_nodes and parts[-1].vids:
            parts.append(Part())
            count = 0
        parts[-1].vids.append(vid)
        count += 1 + int(ws.route_len[vid])
    if not parts[-1].vids:
        parts.pop()
    if not parts:
        return [Part(vids=[], pool=sorted(ws.pool))]

    parts_requests = []
    inst = ws.inst
    for part in parts:
        reqs: list[int] = []
        for vid in part.vids:
            tail = ws.route_visits(vid)[1:]
            reqs.extend(int(inst.node_request[x]) for x in tail if inst.node_kind[x] == 1)
        parts_requests.append(np.asarray(sorted(reqs), dtype=np.int64))
    for rid in sorted(ws.pool):
        w = history.part_weights(rid, parts_requests)
        idx = int(rng.choice(len(parts), p=w / w.sum()))
        parts[idx].pool.append(rid)
    return parts


def merge_parts(ws: WorkingSolution, parts: list[Part],
                results: list[WorkingSolution]) -> WorkingSolution:
    """Stitch part solutions back into a full working solution, keeping
    vehicles outside every part as they were."""
    inst = ws.inst
    routes: list[Route] = []
    pool: set[int] = set()
    covered: set[int] = set()
    for part, sub in zip(parts, results):
        for vid in part.vids:
            routes.append(Route(vid, sub.route_visits(vid)))
            covered.add(vid)
        pool |= sub.pool
    for v in ws.scope:
        if int(v) not in covered:
            routes.append(Route(int(v), ws.route_visits(int(v))))
    return WorkingSolution.from_routes(inst, routes, pool, scope=[int(v) for v in ws.scope])


# ----------------------------------------------------------------------
# recombination


def recombine(ws: WorkingSolution, params: Params, vehicles=None) -> WorkingSolution:
    """Reassign the solution's blocks to vehicles via the dispatch graph.

    Block starts come from the current schedules and each route's own
    chain arcs are kept past the connection caps, so the identity
    assignment stays representable and the reassignment never serves
    fewer requests; it may swap blocks between vehicles and drop stale
    chains in favor of denser ones.
    """
    inst = ws.inst
    if vehicles is None:
        vehicles = [int(v) for v in ws.scope]
    routes = [Route(v, ws.route_visits(v)) for v in vehicles if ws.route_len[v] > 0]
    if not routes or not vehicles:
        return ws
    blocks, chains = dispatch.blocks_from_routes(inst, routes)
    own_arcs = [(chain[i], chain[i + 1])
                for chain in chains for i in range(len(chain) - 1)]
    graph = dispatch.build_graph(inst, blocks, vehicles, params, keep_arcs=own_arcs)
    result = dispatch.solve_paths(graph)
    sol = dispatch.assemble(inst, graph, result)
    if len(ws.scope) != inst.n_vehicles:
        routes = [sol.routes[int(v)] for v in ws.scope]
        served = {r for route in routes for r in _route_requests(inst, route)}
        pool = (ws.pool | set().union(*(_route_requests(inst, Route(v, ws.route_visits(v)))
                                        for v in vehicles))) - served
        return WorkingSolution.from_routes(inst, routes, pool,
                                           scope=[int(v) for v in ws.scope])
    return WorkingSolution.from_solution(inst, sol)


def _route_requests(inst: Instance, route: Route) -> set[int]:
    return {int(inst.node_request[x]) for x in route.visits[1:]
            if inst.node_kind[x] == 1}


# ----------------------------------------------------------------------
# perturbation


def perturb(ws: WorkingSolution, moves: int, relocate_prob: float,
            rng: np.random.Generator, rng_state: np.ndarray,
            allow_empty_targets: bool = True) -> int:
    """Random relocations/exchanges; infeasible attempts roll back.

    A relocation draws a routed request and moves it to a uniformly
    random feasible position on some other route; an exchange draws two
    requests on distinct routes and reinserts each into the other's
    route. Returns the number of applied moves.
    """
    inst = ws.inst
    applied = 0
    for _ in range(moves):
        routed = sorted(ws.routed)
        if not routed:
            break
        if rng.random() < relocate_prob:
            rid = routed[int(rng.integers(0, len(routed)))]
            vcur = int(ws.vehicle_of[inst.pickup_of[rid]])
            targets = [v for v in ws.nonempty_vehicles() if v != vcur]
            if allow_empty_targets:
                targets += ws.empty_vehicles()
            if not targets:
                continue
            ws.begin()
            ws.remove_requests([rid])
            got = ws.random_insertion(rid, targets, rng_state)
            if got is None:
                ws.rollback()
                continue
            ws.insert(rid, got[0], got[1], got[2])
            ws.commit()
            applied += 1
        else:
            if len(routed) < 2:
                continue
            r1 = routed[int(rng.integers(0, len(routed)))]
            v1 = int(ws.vehicle_of[inst.pickup_of[r1]])
            others = [r for r in routed if int(ws.vehicle_of[inst.pickup_of[r]]) != v1]
            if not others:
                continue
            r2 = others[int(rng.integers(0, len(others)))]
            v2 = int(ws.vehicle_of[inst.pickup_of[r2]])
            ws.begin()
            ws.remove_requests([r1, r2])
            g1 = ws.random_insertion(r1, [v2], rng_state)
            if g1 is None:
                ws.rollback()
                continue
            ws.insert(r1, g1[0], g1[1], g1[2])
            g2 = ws.random_insertion(r2, [v1], rng_state)
            if g2 is None:
                ws.rollback()
                continue
            ws.insert(r2, g2[0], g2[1], g2[2])
            ws.commit()
            applied += 1
    return applied


# ----------------------------------------------------------------------
# the outer loop


@dataclass
class RunStats:
    rounds: int = 0              # outer iterations
    ls_rounds: int = 0           # partition/merge/recombine rounds
    rr_iterations: int = 0       # total ruin-recreate iterations
    elapsed: float = 0.0


def _default_rank(ws: WorkingSolution) -> tuple:
    return (len(ws.pool), int(ws.total_cost))


def _fleet_rank(ws: WorkingSolution) -> tuple:
    return (len(ws.pool), len(ws.nonempty_vehicles()), int(ws.total_cost))


def rank_accept(cand: tuple, best: tuple, t: float) -> bool:
    """Record-to-record acceptance over hierarchical rank tuples: every
    leading component must hold its ground; the cost tail may give up a
    relative gap below the threshold."""
    if cand < best:
        return True
    if cand[:-1] > best[:-1]:
        return False
    if best[-1] == 0:
        return cand[-1] == 0 and t > 0.0
    return (cand[-1] - best[-1]) / best[-1] < t


def _solve_part(args):
    ws, part, params, t, t_dec, seed, deadline, allow_new = args
    sub = WorkingSolution.from_routes(
        ws.inst, [Route(v, ws.route_visits(v)) for v in part.vids],
        part.pool, scope=part.vids)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    res = run_rr(sub, params, rng, Acceptance(t, t_dec), params.sub_iterations,
                 deadline=deadline, allow_new_routes=allow_new)
    return res.best, res.iterations


def run(inst: Instance, params: Params, rng: np.random.Generator,
        warm: Solution | None = None, *, allow_new_routes: bool = True,
        fleet_monotone: bool = False, pre_round=None,
        progress=None) -> tuple[Solution, RunStats]:
    """Full iterated local search; returns the best solution found.

    `pre_round` may mutate the working solution at the top of each outer
    iteration (fleet minimization hooks in here). With `fleet_monotone`
    the search never opens new routes: parts exclude empty vehicles,
    recreate and perturbation stay on used routes, recombination offers
    only used vehicles, and the rank adds the route count between the
    unassigned count and the cost.
    """
    if params.time_limit <= 0 and params.max_rounds <= 0:
        raise ValueError("need a time limit or a round limit")
    t0 = time.monotonic()
    deadline = t0 + params.time_limit if params.time_limit > 0 else None
    ws = (WorkingSolution.from_solution(inst, warm) if warm is not None
          else construct_initial(inst, params, rng))
    rank = _fleet_rank if fleet_monotone else _default_rank
    best = ws.copy()
    best_rank = rank(best)
    acc = Acceptance.fresh(params)
    history = History(inst.n_requests)
    stats = RunStats()
    rng_state = seed_rng_state(rng)
    pool_exec = None
    if params.workers > 1:
        pool_exec = concurrent.futures.ThreadPoolExecutor(max_workers=params.workers)

    def emit():
        if progress is not None:
            progress.write(f"{stats.ls_rounds},{best_rank[0]},{best_rank[-1]},"
                           f"{time.monotonic() - t0:.3f}\n")

    if progress is not None:
        progress.write(PROGRESS_HEADER + "\n")
    emit()

    i_last = 0
    try:
        while True:
            if deadline is not None and time.monotonic() >= deadline:
                break
            if params.max_rounds and stats.rounds >= params.max_rounds:
                break
            stats.rounds += 1
            improved = False
            if pre_round is not None:
                pre_round(ws)
                r = rank(ws)
                if r < best_rank:
                    best, best_rank, improved = ws.copy(), r, True

            for _ in range(params.ls_iterations):
                if deadline is not None and time.monotonic() >= deadline:
                    break
                vids = ws.nonempty_vehicles() if fleet_monotone else None
                parts = partition(ws, params, history, rng, vids=vids)
                seeds = rng.integers(0, 1 << 62, size=len(parts))
                jobs = [(ws, part, params, acc.t, acc.t_dec, int(seed), deadline,
                         allow_new_routes and not fleet_monotone)
                        for part, seed in zip(parts, seeds)]
                if pool_exec is not None and len(jobs) > 1:
                    outs = list(pool_exec.map(_solve_part, jobs))
                else:
                    outs = [_solve_part(j) for j in jobs]
                stats.rr_iterations += sum(n for _, n in outs)
                cand = merge_parts(ws, parts, [sub for sub, _ in outs])
                cand = recombine(cand, params,
                                 vehicles=cand.nonempty_vehicles() if fleet_monotone else None)
                acc.step(params.sub_iterations)
                stats.ls_rounds += 1
                c_rank = rank(cand)
                if c_rank < best_rank:
                    best, best_rank = cand.copy(), c_rank
                    ws, improved = cand, True
                    history.update(ws)
                elif rank_accept(c_rank, best_rank, acc.t):
                    ws = cand
                    history.update(ws)
                emit()

            if improved:
                i_last = 0
            else:
                i_last += 1
                if rng.random() < i_last / stats.rounds:
                    ws = best.copy()
            moves = math.ceil(params.perturb_factor * inst.n_requests)
            perturb(ws, moves, params.perturb_relocate_prob, rng, rng_state,
                    allow_empty_targets=not fleet_monotone)
    finally:
        if pool_exec is not None:
            pool_exec.shutdown()
    stats.elapsed = time.monotonic() - t0
    return best.to_solution(), stats


# ----------------------------------------------------------------------
# pipelines


def solve_sequential(inst: Instance, params: Params,
                     rng: np.random.Generator) -> Solution:
    """Pool matching followed by graph dispatching."""
    matching = pooling.build_matching(inst, params, rng)
    pooling.check_matching(inst, matching)
    blocks = dispatch.blocks_from_matching(inst, matching, params.start_policy)
    graph = dispatch.build_graph(inst, blocks, list(range(inst.n_vehicles)), params)
    result = dispatch.solve_paths(graph)
    return dispatch.assemble(inst, graph, result)


def solve(inst: Instance, mode: str, params: Params, rng: np.random.Generator,
          progress=None) -> tuple[Solution, RunStats]:
    """Entry point shared by the CLI modes (except classic fleet runs)."""
    if mode == "sequential":
        t0 = time.monotonic()
        sol = solve_sequential(inst, params, rng)
        return sol, RunStats(elapsed=time.monotonic() - t0)
    if mode == "integrated":
        return run(inst, params, rng, progress=progress)
    if mode == "hybrid":
        t0 = time.monotonic()
        warm = solve_sequential(inst, params, rng)
        rest = params
        if params.time_limit > 0:
            rest = params.replace(time_limit=max(0.5, params.time_limit
                                                 - (time.monotonic() - t0)))
        sol, stats = run(inst, rest, rng, warm=warm, progress=progress)
        stats.elapsed = time.monotonic() - t0
        return sol, stats
    raise ValueError(f"unknown mode {mode!r}")
