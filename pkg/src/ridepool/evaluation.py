"""Constant-time sequence evaluation and incremental solution state.

A visit sequence is summarized by a seven-field tuple that concatenates
in O(1): cost, net load, peak load, travel time, earliest begin-of-service
at the last visit, latest begin-of-service at the first visit, and a
feasibility flag. Maintaining the summary for every route prefix and
suffix lets an insertion scan test each candidate position in O(1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import Instance, Objective, Route, Solution


@dataclass(frozen=True)
class SeqEval:
    """Evaluation of one visit sequence.

    ``earliest_end`` is the earliest feasible begin-of-service at the
    last visit; ``latest_start`` the latest begin-of-service at the first
    visit that still meets every window downstream. ``feasible`` reports
    whether any begin-of-service schedule fits the windows. Load fields
    are relative to an empty vehicle entering the sequence.
    """

    cost: int
    q_sum: int
    q_max: int
    travel: int
    earliest_end: int
    latest_start: int
    feasible: bool


def node_eval(inst: Instance, node: int) -> SeqEval:
    q = int(inst.demand[node])
    return SeqEval(0, q, max(0, q), 0, int(inst.tw_open[node]), int(inst.tw_close[node]), True)


def concat(a: SeqEval, b: SeqEval, t_link: int, c_link: int) -> SeqEval:
    """Evaluation of (a ++ link ++ b); the link carries the travel time
    from a's last visit to b's first (origin service folded in) and the
    corresponding arc cost."""
    return SeqEval(
        a.cost + c_link + b.cost,
        a.q_sum + b.q_sum,
        max(a.q_max, a.q_sum + b.q_max),
        a.travel + t_link + b.travel,
        max(a.earliest_end + t_link + b.travel, b.earliest_end),
        min(a.latest_start, b.latest_start - t_link - a.travel),
        a.feasible and b.feasible and a.earliest_end + t_link <= b.latest_start,
    )


def eval_sequence(inst: Instance, visits) -> SeqEval:
    """Fold a whole visit sequence through the concatenation algebra."""
    if len(visits) == 0:
        raise ValueError("cannot evaluate an empty sequence")
    acc = node_eval(inst, visits[0])
    prev = visits[0]
    for x in visits[1:]:
        acc = concat(acc, node_eval(inst, x), int(inst.tau[prev, x]), int(inst.cost[prev, x]))
        prev = x
    return acc


def seed_rng_state(rng: np.random.Generator) -> np.ndarray:
    """Derive a kernel RNG state (uint64[1]) from a numpy Generator."""
    return np.array([rng.integers(0, np.iinfo(np.uint64).max, dtype=np.uint64)], dtype=np.uint64)


def blink_threshold(prob: float) -> np.uint64:
    """Map a skip probability to a uint64 comparison threshold."""
    if prob <= 0.0:
        return np.uint64(0)
    if prob >= 1.0:
        return np.uint64(np.iinfo(np.uint64).max)
    return np.uint64(int(prob * 2.0**64))


class WorkingSolution:
    """Mutable routing state over a subset of the instance's vehicles.

    Keeps succ/pred linked lists, per-node prefix and suffix evaluations,
    per-route cost/length, the set of routed and unassigned request ids,
    and an optional transaction log for cheap rollback of a ruin+recreate
    step. Arrays are sized by the full instance so node ids can be used
    as direct indices even when the scope is a partition part.
    """

    SENTINEL = -1

    def __init__(self, inst: Instance, scope=None):
        self.inst = inst
        n = inst.n_nodes
        self.scope = np.array(
            sorted(scope) if scope is not None else range(inst.n_vehicles), dtype=np.int64
        )
        self.succ = np.full(n, -1, dtype=np.int64)
        self.pred = np.full(n, -1, dtype=np.int64)
        self.vehicle_of = np.full(n, inst.n_vehicles, dtype=np.int64)
        self.fw = np.zeros((n, 7), dtype=np.int64)
        self.bw = np.zeros((n, 7), dtype=np.int64)
        self.last = np.full(inst.n_vehicles, -1, dtype=np.int64)
        self.route_cost = np.zeros(inst.n_vehicles, dtype=np.int64)
        self.route_len = np.zeros(inst.n_vehicles, dtype=np.int64)
        self.total_cost = 0
        self.pool: set[int] = set()
        self.routed: set[int] = set()
        self.txn: dict | None = None
        for vid in self.scope:
            start = inst.vehicles[vid].start
            self.succ[start] = -1
            self.pred[start] = -1
            self.vehicle_of[start] = vid
            self.last[vid] = start
            self._rebuild(int(vid))

    # ------------------------------------------------------------------
    @classmethod
    def from_routes(cls, inst: Instance, routes, unassigned, scope=None, check: bool = True):
        ws = cls(inst, scope=scope if scope is not None else [r.vehicle for r in routes])
        for route in routes:
            if len(route.visits) > 1:
                ws.relink(route.vehicle, route.visits[1:], check=check)
            for node in route.visits[1:]:
                rid = int(inst.node_request[node])
                if inst.node_kind[node] == 1:
                    ws.routed.add(rid)
        ws.pool = set(unassigned)
        return ws

    @classmethod
    def from_solution(cls, inst: Instance, sol: Solution, check: bool = True):
        return cls.from_routes(inst, sol.routes, sol.unassigned, scope=None, check=check)

    def to_partial(self) -> tuple[list[Route], set[int]]:
        routes = [Route(int(v), self.route_visits(int(v))) for v in self.scope]
        return routes, set(self.pool)

    def to_solution(self) -> Solution:
        if len(self.scope) != self.inst.n_vehicles:
            raise ValueError("partial state cannot become a full solution")
        routes, pool = self.to_partial()
        return Solution(routes, pool)

    def copy(self) -> "WorkingSolution":
        ws = object.__new__(WorkingSolution)
        ws.inst = self.inst
        ws.scope = self.scope
        ws.succ = self.succ.copy()
        ws.pred = self.pred.copy()
        ws.vehicle_of = self.vehicle_of.copy()
        ws.fw = self.fw.copy()
        ws.bw = self.bw.copy()
        ws.last = self.last.copy()
        ws.route_cost = self.route_cost.copy()
        ws.route_len = self.route_len.copy()
        ws.total_cost = self.total_cost
        ws.pool = set(self.pool)
        ws.routed = set(self.routed)
        ws.txn = None
        return ws

    def adopt(self, other: "WorkingSolution") -> None:
        """Overwrite this state in place from a same-scope sibling."""
        self.succ[:] = other.succ
        self.pred[:] = other.pred
        self.vehicle_of[:] = other.vehicle_of
        self.fw[:] = other.fw
        self.bw[:] = other.bw
        self.last[:] = other.last
        self.route_cost[:] = other.route_cost
        self.route_len[:] = other.route_len
        self.total_cost = other.total_cost
        self.pool = set(other.pool)
        self.routed = set(other.routed)
        self.txn = None

    # ------------------------------------------------------------------
    def route_visits(self, vid: int) -> list[int]:
        x = self.inst.vehicles[vid].start
        out = [x]
        while self.succ[x] >= 0:
            x = int(self.succ[x])
            out.append(x)
        return out

    def nonempty_vehicles(self) -> list[int]:
        return [int(v) for v in self.scope if self.route_len[v] > 0]

    def empty_vehicles(self) -> list[int]:
        return [int(v) for v in self.scope if self.route_len[v] == 0]

    def objective(self) -> Objective:
        return Objective(len(self.pool), int(self.total_cost))

    def route_eval(self, vid: int) -> SeqEval:
        row = self.fw[self.last[vid]]
        return SeqEval(*(int(x) for x in row[:6]), bool(row[6]))

    # ------------------------------------------------------------------
    def _rebuild(self, vid: int) -> None:
        inst = self.inst
        start = inst.vehicles[vid].start
        last = _kernels.rebuild_route(
            start, self.succ, self.pred, self.fw, self.bw,
            inst.tw_open, inst.tw_close, inst.demand, inst.tau, inst.cost,
        )
        self.last[vid] = last
        new_cost = int(self.fw[last, 0])
        self.total_cost += new_cost - int(self.route_cost[vid])
        self.route_cost[vid] = new_cost

    def relink(self, vid: int, tail: list[int], check: bool = True) -> None:
        """Replace route vid's visits (after the start node) wholesale."""
        start = self.inst.vehicles[vid].start
        x = start
        for node in tail:
            self.succ[x] = node
            self.pred[node] = x
            self.vehicle_of[node] = vid
            x = node
        self.succ[x] = -1
        self.route_len[vid] = len(tail)
        self._rebuild(vid)
        if check and len(tail) and not self.feasible_route(vid):
            raise ValueError(f"relinked route {vid} is infeasible")

    def feasible_route(self, vid: int) -> bool:
        row = self.fw[self.last[vid]]
        return bool(row[6]) and int(row[2]) <= self.inst.capacity

    # ------------------------------------------------------------------
    # transactions

    def begin(self) -> None:
        self.txn = {"routes": {}, "pool": set(self.pool), "routed": set(self.routed)}

    def commit(self) -> None:
        self.txn = None

    def rollback(self) -> None:
        tx = self.txn
        self.txn = None
        # walk every touched chain before any relink corrupts shared nodes
        current = {vid: self.route_visits(vid)[1:] for vid in tx["routes"]}
        for tail in current.values():
            for node in tail:
                self.vehicle_of[node] = self.inst.n_vehicles
        for vid, tail in tx["routes"].items():
            self.relink(vid, tail, check=False)
        self.pool = tx["pool"]
        self.routed = tx["routed"]

    def _touch(self, vid: int) -> None:
        if self.txn is not None and vid not in self.txn["routes"]:
            self.txn["routes"][vid] = self.route_visits(vid)[1:]

    # ------------------------------------------------------------------
    # mutations

    def insert(self, rid: int, vid: int, after_pickup: int, after_delivery: int) -> None:
        """Insert request rid into route vid; the anchors are the nodes the
        pickup/delivery go directly after (after_delivery == pickup node
        puts the delivery right behind the pickup)."""
        inst = self.inst
        p = int(inst.pickup_of[rid])
        d = int(inst.delivery_of[rid])
        self._touch(vid)
        self._splice(vid, p, after_pickup)
        self._splice(vid, d, after_delivery)
        self.vehicle_of[p] = vid
        self.vehicle_of[d] = vid
        self.pool.discard(rid)
        self.routed.add(rid)
        self.route_len[vid] += 2
        self._rebuild(vid)

    def _splice(self, vid: int, node: int, after: int) -> None:
        nxt = int(self.succ[after])
        self.succ[after] = node
        self.pred[node] = after
        self.succ[node] = nxt
        if nxt >= 0:
            self.pred[nxt] = node

    def remove_requests(self, rids) -> None:
        """Unroute the given requests (grouped by route, one rebuild each)."""
        inst = self.inst
        by_route: dict[int, list[int]] = {}
        for rid in rids:
            vid = int(self.vehicle_of[inst.pickup_of[rid]])
            by_route.setdefault(vid, []).append(rid)
        for vid, group in by_route.items():
            self._touch(vid)
            for rid in group:
                for node in (int(inst.pickup_of[rid]), int(inst.delivery_of[rid])):
                    pr = int(self.pred[node])
                    nx = int(self.succ[node])
                    self.succ[pr] = nx
                    if nx >= 0:
                        self.pred[nx] = pr
                    self.vehicle_of[node] = inst.n_vehicles
                self.pool.add(rid)
                self.routed.discard(rid)
                self.route_len[vid] -= 2
            self._rebuild(vid)

    # ------------------------------------------------------------------
    # insertion scans

    def _scan(self, rid: int, vids, blink: np.uint64, rng_state: np.ndarray, mode: int):
        inst = self.inst
        if len(vids) == 0:
            return None
        starts = np.fromiter((inst.vehicles[v].start for v in vids), dtype=np.int64, count=len(vids))
        lasts = self.last[np.asarray(vids, dtype=np.int64)]
        vi, pi, pj, delta = _kernels.scan_insert(
            starts, lasts, int(inst.pickup_of[rid]), int(inst.delivery_of[rid]),
            self.succ, self.fw, self.bw, inst.tw_open, inst.tw_close, inst.demand,
            inst.tau, inst.cost, inst.capacity, blink, rng_state, mode,
        )
        if vi < 0:
            return None
        return int(vids[int(vi)]), int(pi), int(pj), int(delta)

    def best_insertion(self, rid: int, vids, blink: np.uint64, rng_state: np.ndarray):
        """Cheapest feasible insertion across the given routes, with blinks.
        Returns (vid, after_pickup, after_delivery, delta) or None."""
        return self._scan(rid, vids, blink, rng_state, 0)

    def random_insertion(self, rid: int, vids, rng_state: np.ndarray):
        """Uniformly random feasible insertion across the given routes."""
        return self._scan(rid, vids, np.uint64(0), rng_state, 1)

    def best_empty_insertion(self, rid: int, vids):
        """Cheapest opening of a fresh route among the given (empty)
        vehicles; no blinks. Returns (vid, start, pickup, delta) anchors
        compatible with insert(), or None."""
        inst = self.inst
        if len(vids) == 0:
            return None
        vids = np.asarray(sorted(vids), dtype=np.int64)
        starts = inst.vehicle_starts[vids]
        p = int(inst.pickup_of[rid])
        d = int(inst.delivery_of[rid])
        begin_p = np.maximum(inst.tw_open[p], inst.tw_open[starts] + inst.tau[starts, p])
        ok = (begin_p <= inst.tw_close[p]) & (begin_p + inst.tau[p, d] <= inst.tw_close[d])
        if not ok.any():
            return None
        costs = inst.cost[starts, p] + inst.cost[p, d]
        costs = np.where(ok, costs, np.iinfo(np.int64).max)
        i = int(np.argmin(costs))
        return int(vids[i]), int(starts[i]), p, int(costs[i])
