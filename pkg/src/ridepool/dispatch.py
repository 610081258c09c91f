"""Zero-load blocks and min-cost disjoint-path dispatching.

A block is a visit sequence a vehicle enters and leaves empty — a pooled
ride from the matching, or a maximal zero-load segment of an existing
route. Fixing each block's begin-of-service (within the window the
sequence algebra yields) makes chain feasibility a pairwise check, so
dispatching becomes vertex-disjoint minimum-cost paths on a DAG: source,
one vertex per vehicle, one per block, sink. Serving a block earns a
reward large enough that no cost saving ever beats serving one more
request.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .evaluation import eval_sequence
from .model import Instance, Route, Solution, propagate_schedule, validate
from .params import Params


@dataclass(frozen=True)
class Block:
    bid: int
    seq: tuple[int, ...]        # visit nodes, zero load at entry and exit
    requests: tuple[int, ...]
    start: int                  # fixed begin-of-service at seq[0]
    duration: int               # begin of service -> vehicle free again
    internal_cost: int          # arc cost within the block
    earliest: int               # admissible start window (diagnostics)
    latest: int

    @property
    def first(self) -> int:
        return self.seq[0]

    @property
    def last(self) -> int:
        return self.seq[-1]

    @property
    def completion(self) -> int:
        return self.start + self.duration


def make_block(inst: Instance, seq, bid: int, policy: str,
               start: int | None = None) -> Block:
    """Evaluate a zero-load sequence and pin its start by policy.

    The admissible start window is [min(ec - tt, ls), ls]: the earliest
    begin keeping waiting minimal, up to the latest begin that still
    meets every window. An explicit ``start`` (taken from an existing
    schedule) overrides the policy; it must meet every window, i.e. not
    exceed the latest admissible begin. Duration is measured to the
    moment the vehicle is free, i.e. including the last visit's service.
    """
    se = eval_sequence(inst, seq)
    if not se.feasible or se.q_max > inst.capacity:
        raise ValueError(f"block sequence {tuple(seq)} is not feasible")
    e_b = min(se.earliest_end - se.travel, se.latest_start)
    l_b = se.latest_start
    if start is not None:
        if start > l_b:
            raise ValueError(f"pinned start {start} misses a window (latest {l_b})")
    elif policy == "earliest":
        start = e_b
    elif policy == "average":
        start = (e_b + l_b) // 2
    elif policy == "latest":
        start = l_b
    else:
        raise ValueError(f"unknown start policy {policy!r}")
    dur = max(se.travel, se.earliest_end - start) + int(inst.service[seq[-1]])
    rids = tuple(sorted(int(inst.node_request[x]) for x in seq if inst.node_kind[x] == 1))
    return Block(bid, tuple(int(x) for x in seq), rids, int(start), int(dur),
                 se.cost, int(e_b), int(l_b))


def blocks_from_matching(inst: Instance, matching, policy: str) -> list[Block]:
    return [make_block(inst, p.seq, i, policy) for i, p in enumerate(matching)]


def blocks_from_routes(inst: Instance, routes: list[Route]) -> tuple[list[Block], list[list[int]]]:
    """Split every route at the points where the vehicle runs empty.

    Block starts are pinned from the route's own earliest schedule, not
    by a start policy: pinned that way, every route's chain of blocks
    remains admissible in the dispatch graph, so a reassignment can
    always fall back to the current routes (and never serves fewer
    requests). Returns the blocks and, per route, its chain of block ids.
    """
    blocks: list[Block] = []
    chains: list[list[int]] = []
    for route in routes:
        sched = propagate_schedule(inst, route.visits)
        chain: list[int] = []
        load = 0
        seg: list[int] = []
        first_idx = 0
        for i, node in enumerate(route.visits[1:], start=1):
            if not seg:
                first_idx = i
            seg.append(node)
            load += int(inst.demand[node])
            if load == 0:
                blocks.append(make_block(inst, seg, len(blocks), "",
                                         start=int(sched.begin[first_idx])))
                chain.append(blocks[-1].bid)
                seg = []
        if seg:
            raise ValueError(f"route {route.vehicle} does not end empty")
        chains.append(chain)
    return blocks, chains


# ----------------------------------------------------------------------
# dispatch graph


@dataclass
class DispatchGraph:
    blocks: list[Block]
    vehicles: list[int]                      # vehicle ids
    v_arcs: list[tuple[int, int, int]]       # (vehicle index, block id, weight)
    b_arcs: list[tuple[int, int, int]]       # (block id, block id, weight)
    xi: int


def build_graph(inst: Instance, blocks: list[Block], vehicles, params: Params,
                xi: int | None = None, keep_arcs=None) -> DispatchGraph:
    """Dispatch DAG over fixed-start blocks.

    A vehicle reaches a block iff it can arrive by the block's start. A
    block chains to another iff travel after completion arrives by the
    next start; block-to-block arcs are additionally capped by the
    connection limits (arc cost and idle-plus-travel gap), and carry a
    deterministic (start, id) tie-break so equal-start zero-length
    chains cannot form a cycle. ``keep_arcs`` pairs (bi, bj) are exempt
    from the connection caps (not from timing), letting callers keep the
    chains of existing routes intact. Arc weight is the connection cost
    minus xi per request served by the head block; the default xi makes
    one extra served request outweigh any possible total connection cost.
    """
    vehicles = [int(v) for v in vehicles]
    B = len(blocks)
    v_pairs: list[tuple[int, int, int]] = []   # (vi, bid, cost)
    b_pairs: list[tuple[int, int, int]] = []
    if B:
        firsts = np.array([b.first for b in blocks], dtype=np.int64)
        lasts = np.array([b.last for b in blocks], dtype=np.int64)
        starts = np.array([b.start for b in blocks], dtype=np.int64)
        comp = np.array([b.completion for b in blocks], dtype=np.int64)
        ids = np.arange(B, dtype=np.int64)

        vstarts = inst.vehicle_starts[np.array(vehicles, dtype=np.int64)]
        avail = inst.tw_open[vstarts]
        reach = avail[:, None] + inst.time[np.ix_(vstarts, firsts)] <= starts[None, :]
        vcost = inst.cost[np.ix_(vstarts, firsts)]
        for vi, bid in zip(*np.nonzero(reach)):
            v_pairs.append((int(vi), int(bid), int(vcost[vi, bid])))

        gap = starts[None, :] - comp[:, None]
        link_t = inst.time[np.ix_(lasts, firsts)]
        bcost = inst.cost[np.ix_(lasts, firsts)]
        admissible = comp[:, None] + link_t <= starts[None, :]
        # DAG tie-break on (start, id)
        admissible &= (starts[:, None] < starts[None, :]) | (
            (starts[:, None] == starts[None, :]) & (ids[:, None] < ids[None, :])
        )
        ok = admissible.copy()
        if params.max_connect_cost >= 0:
            ok &= bcost <= params.max_connect_cost
        if params.max_connect_gap >= 0:
            ok &= gap <= params.max_connect_gap
        if keep_arcs is not None:
            for bi, bj in keep_arcs:
                if admissible[bi, bj]:
                    ok[bi, bj] = True
        for bi, bj in zip(*np.nonzero(ok)):
            b_pairs.append((int(bi), int(bj), int(bcost[bi, bj])))

    if xi is None:
        max_cost = 0
        for _, _, c in v_pairs:
            max_cost = max(max_cost, c)
        for _, _, c in b_pairs:
            max_cost = max(max_cost, c)
        xi = (max_cost + 1) * (inst.n_requests + 1)

    nreq = [len(b.requests) for b in blocks]
    v_arcs = [(vi, bid, c - xi * nreq[bid]) for vi, bid, c in v_pairs]
    b_arcs = [(bi, bj, c - xi * nreq[bj]) for bi, bj, c in b_pairs]
    return DispatchGraph(list(blocks), vehicles, v_arcs, b_arcs, int(xi))


def dump_graph(graph: DispatchGraph) -> str:
    """Plain adjacency text: xi, vehicle arcs, block arcs."""
    lines = [f"XI {graph.xi}"]
    for vi, bid, w in graph.v_arcs:
        lines.append(f"VEHICLE {graph.vehicles[vi]} -> {bid} {w}")
    for bi, bj, w in graph.b_arcs:
        lines.append(f"BLOCK {bi} -> {bj} {w}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# k vertex-disjoint min-cost paths


@dataclass
class DispatchResult:
    paths: list[tuple[int, list[int]]]    # (vehicle id, block ids in order)
    total_weight: int
    served: set[int]                      # request ids on selected blocks


def solve_paths(graph: DispatchGraph, k: int | None = None) -> DispatchResult:
    """Minimum-total-weight set of k vertex-disjoint source->sink paths.

    Unit-capacity min-cost flow with node splitting for the block
    vertices; Bellman-Ford initializes potentials (arc weights are
    negative by design), then each augmentation is a Dijkstra run on
    reduced costs. On a DAG the successive-shortest-path optimum is exact
    over k-path sets. Unreachable blocks are pruned up front.
    """
    V = len(graph.vehicles)
    if k is None:
        k = V
    if k > V:
        raise ValueError(f"cannot route {k} paths with {V} vehicles")
    B = len(graph.blocks)

    # forward reachability from the vehicles
    reachable = np.zeros(B, dtype=bool)
    for _, bid, _ in graph.v_arcs:
        reachable[bid] = True
    succ_arcs: dict[int, list[tuple[int, int]]] = {}
    for bi, bj, w in graph.b_arcs:
        succ_arcs.setdefault(bi, []).append((bj, w))
    frontier = [b for b in range(B) if reachable[b]]
    while frontier:
        nxt_frontier = []
        for bi in frontier:
            for bj, _ in succ_arcs.get(bi, ()):
                if not reachable[bj]:
                    reachable[bj] = True
                    nxt_frontier.append(bj)
        frontier = nxt_frontier

    # flow network: 0 source, 1 sink, 2+i vehicle i, block b in/out pair
    def b_in(b): return 2 + V + 2 * b
    def b_out(b): return 2 + V + 2 * b + 1

    n = 2 + V + 2 * B
    us, vs, ws = [], [], []

    def arc(u, v, w):
        us.append(u); vs.append(v); ws.append(w)

    for i in range(V):
        arc(0, 2 + i, 0)
        arc(2 + i, 1, 0)
    for b in range(B):
        if reachable[b]:
            arc(b_in(b), b_out(b), 0)
            arc(b_out(b), 1, 0)
    for vi, bid, w in graph.v_arcs:
        if reachable[bid]:
            arc(2 + vi, b_in(bid), w)
    for bi, bj, w in graph.b_arcs:
        if reachable[bi] and reachable[bj]:
            arc(b_out(bi), b_in(bj), w)

    m = len(us)
    tails = np.empty(2 * m, dtype=np.int64)
    to = np.empty(2 * m, dtype=np.int64)
    cap = np.empty(2 * m, dtype=np.int64)
    cst = np.empty(2 * m, dtype=np.int64)
    tails[0::2] = us
    tails[1::2] = vs
    to[0::2] = vs
    to[1::2] = us
    cap[0::2] = 1
    cap[1::2] = 0
    cst[0::2] = ws
    cst[1::2] = [-w for w in ws]
    first, nxt = _kernels.build_adjacency(tails, n)

    status, total = _kernels.mcmf_unit(n, first, nxt, to, cap, cst, 0, 1, k)
    if status == -1:
        raise AssertionError("negative reduced cost: potential invariant broken")
    if status == -2:
        raise AssertionError(f"fewer than {k} disjoint paths exist")
    if status == -3:
        raise AssertionError("dispatch graph contains a negative cycle")

    # read the paths off the saturated forward arcs
    used: dict[int, int] = {}   # tail flow-node -> head flow-node
    for j in range(m):
        if cap[2 * j] == 0 and us[j] != 0:
            used[us[j]] = vs[j]
    paths: list[tuple[int, list[int]]] = []
    served: set[int] = set()
    for j in range(m):
        if us[j] == 0 and cap[2 * j] == 0:
            vi = vs[j] - 2
            chain: list[int] = []
            node = vs[j]
            while node != 1:
                node = used[node]
                if node >= 2 + V and (node - 2 - V) % 2 == 0:
                    bid = (node - 2 - V) // 2
                    chain.append(bid)
                    served.update(graph.blocks[bid].requests)
            paths.append((graph.vehicles[vi], chain))
    paths.sort(key=lambda pv: pv[0])
    return DispatchResult(paths, int(total), served)


def assemble(inst: Instance, graph: DispatchGraph, result: DispatchResult) -> Solution:
    """Materialize dispatched paths as a full solution.

    Every request outside the selected blocks is unassigned. An assembled
    route that fails validation indicates broken graph construction, so
    it raises instead of returning.
    """
    sol = inst.empty_solution()
    for vid, chain in result.paths:
        visits = [inst.vehicles[vid].start]
        for bid in chain:
            visits.extend(graph.blocks[bid].seq)
        sol.routes[vid] = Route(vid, visits)
    sol.unassigned = set(range(inst.n_requests)) - result.served
    bad = validate(inst, sol)
    if bad:
        raise RuntimeError("assembled solution is infeasible: " + str(bad[0]))
    return sol
