"""Problem model: instances, solutions, schedules, validation.

All times are integer seconds, all costs integer meters. A request is a
pickup node plus a delivery node; a vehicle is a start node from which an
open route (no return trip) departs. Time windows constrain the beginning
of service; waiting before a window opens is free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, total_ordering

import numpy as np

# node kinds
VEHICLE = 0
PICKUP = 1
DELIVERY = 2

#: Window close for vehicle start nodes: available from t=0, forever.
BIG_TIME = 1 << 40


@dataclass(frozen=True)
class Request:
    rid: int
    pickup: int       # pickup node id
    delivery: int     # delivery node id
    earliest: int     # earliest pickup time (window open of the pickup)
    latest: int       # latest dropoff time (window close of the delivery)


@dataclass(frozen=True)
class Vehicle:
    vid: int
    start: int        # start node id


@dataclass
class Route:
    """One vehicle's route. visits[0] is always the vehicle's start node."""

    vehicle: int
    visits: list[int]

    def copy(self) -> "Route":
        return Route(self.vehicle, list(self.visits))


@dataclass
class Solution:
    """One route per vehicle (possibly just the start node) plus the ids of
    unassigned requests."""

    routes: list[Route]
    unassigned: set[int]

    def copy(self) -> "Solution":
        return Solution([r.copy() for r in self.routes], set(self.unassigned))


@total_ordering
@dataclass(frozen=True)
class Objective:
    """Hierarchical objective: fewer unassigned requests first, then cost."""

    unassigned: int
    cost: int

    def __lt__(self, other: "Objective") -> bool:
        return (self.unassigned, self.cost) < (other.unassigned, other.cost)


@dataclass(frozen=True)
class Violation:
    kind: str          # structure | pairing | window | capacity | partition
    detail: str
    vehicle: int | None = None

    def __str__(self) -> str:
        where = f" [vehicle {self.vehicle}]" if self.vehicle is not None else ""
        return f"{self.kind}{where}: {self.detail}"


class Instance:
    """Immutable problem data over a fixed node set.

    Nodes are indexed 0..n-1 and carry kind (vehicle start / pickup /
    delivery), time window, demand and service duration. `cost` and `time`
    are dense integer matrices with zero diagonal. `buffer` is the maximum
    extra ride/wait time granted on top of the direct trip.
    """

    def __init__(
        self,
        *,
        name: str,
        capacity: int,
        buffer: int,
        cost: np.ndarray,
        time: np.ndarray,
        node_kind: np.ndarray,
        node_request: np.ndarray,
        tw_open: np.ndarray,
        tw_close: np.ndarray,
        service: np.ndarray,
        requests: list[Request],
        vehicles: list[Vehicle],
        demand: np.ndarray | None = None,
        meta: dict | None = None,
    ):
        self.name = name
        self.capacity = int(capacity)
        self.buffer = int(buffer)
        self.cost = np.ascontiguousarray(cost, dtype=np.int64)
        self.time = np.ascontiguousarray(time, dtype=np.int64)
        self.node_kind = np.ascontiguousarray(node_kind, dtype=np.int8)
        self.node_request = np.ascontiguousarray(node_request, dtype=np.int64)
        self.tw_open = np.ascontiguousarray(tw_open, dtype=np.int64)
        self.tw_close = np.ascontiguousarray(tw_close, dtype=np.int64)
        self.service = np.ascontiguousarray(service, dtype=np.int64)
        self.requests = list(requests)
        self.vehicles = list(vehicles)
        if demand is not None:
            self.demand = np.ascontiguousarray(demand, dtype=np.int64)
        self.meta = dict(meta or {})
        self._check()

    # ------------------------------------------------------------------
    def _check(self) -> None:
        n = self.n_nodes
        for m, label in ((self.cost, "cost"), (self.time, "time")):
            if m.shape != (n, n):
                raise ValueError(f"{label} matrix shape {m.shape}, expected {(n, n)}")
            if np.any(np.diag(m) != 0):
                raise ValueError(f"{label} matrix has a nonzero diagonal entry")
            if np.any(m < 0):
                raise ValueError(f"{label} matrix has negative entries")
        for a in (self.node_request, self.tw_open, self.tw_close, self.service):
            if a.shape != (n,):
                raise ValueError("node attribute arrays must all have length n")
        if np.any(self.tw_open > self.tw_close):
            raise ValueError("window open exceeds window close on some node")
        if np.any(self.service < 0):
            raise ValueError("negative service duration")
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        if self.buffer < 0:
            raise ValueError("buffer must be non-negative")
        if "demand" in self.__dict__:
            d = self.__dict__["demand"]
            if d.shape != (n,):
                raise ValueError("demand array must have length n")
            bad = (
                np.any(d[self.node_kind == VEHICLE] != 0)
                or np.any(d[self.node_kind == PICKUP] <= 0)
                or np.any(d[self.node_kind == DELIVERY] >= 0)
            )
            if bad:
                raise ValueError("demand signs inconsistent with node kinds")
        for r in self.requests:
            if self.node_kind[r.pickup] != PICKUP or self.node_kind[r.delivery] != DELIVERY:
                raise ValueError(f"request {r.rid} node kinds inconsistent")
            if self.node_request[r.pickup] != r.rid or self.node_request[r.delivery] != r.rid:
                raise ValueError(f"request {r.rid} node back-references inconsistent")
        for v in self.vehicles:
            if self.node_kind[v.start] != VEHICLE:
                raise ValueError(f"vehicle {v.vid} start node is not a vehicle node")
        if [r.rid for r in self.requests] != list(range(len(self.requests))):
            raise ValueError("request ids must be 0..R-1 in order")
        if [v.vid for v in self.vehicles] != list(range(len(self.vehicles))):
            raise ValueError("vehicle ids must be 0..K-1 in order")

    # ------------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.node_kind)

    @property
    def n_requests(self) -> int:
        return len(self.requests)

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicles)

    @cached_property
    def demand(self) -> np.ndarray:
        """Per-node load delta: +1 at pickups, -1 at deliveries, 0 at starts."""
        d = np.zeros(self.n_nodes, dtype=np.int64)
        d[self.node_kind == PICKUP] = 1
        d[self.node_kind == DELIVERY] = -1
        return d

    @cached_property
    def tau(self) -> np.ndarray:
        """Travel time with the origin's service duration folded in:
        tau[i, j] = service[i] + time[i, j].

        Folding service into every outgoing arc makes begin-of-service
        propagation a plain shortest-schedule recursion, so the sequence
        algebra never needs a service term.
        """
        return self.service[:, None] + self.time

    @cached_property
    def pickup_of(self) -> np.ndarray:
        a = np.empty(self.n_requests, dtype=np.int64)
        for r in self.requests:
            a[r.rid] = r.pickup
        return a

    @cached_property
    def delivery_of(self) -> np.ndarray:
        a = np.empty(self.n_requests, dtype=np.int64)
        for r in self.requests:
            a[r.rid] = r.delivery
        return a

    @cached_property
    def vehicle_starts(self) -> np.ndarray:
        return np.array([v.start for v in self.vehicles], dtype=np.int64)

    def direct_time(self, rid: int) -> int:
        r = self.requests[rid]
        return int(self.time[r.pickup, r.delivery])

    # ------------------------------------------------------------------
    def with_buffer(self, buffer: int, tw_mode: str = "C") -> "Instance":
        """Re-derive all request windows for a new buffer value.

        Only meaningful for instances whose windows were derived from
        (earliest pickup, direct trip time, buffer) in the first place,
        i.e. generated ride-hailing instances. Window modes:

        * ``A`` - pickup and dropoff both fixed (buffer effect zero),
        * ``B`` - fixed pickup, dropoff may slide by the buffer,
        * ``C`` - both pickup and dropoff may slide by the buffer.
        """
        if tw_mode not in ("A", "B", "C"):
            raise ValueError(f"unknown window mode {tw_mode!r}")
        tw_open = self.tw_open.copy()
        tw_close = self.tw_close.copy()
        requests = []
        for r in self.requests:
            direct = int(self.time[r.pickup, r.delivery])
            eff = 0 if tw_mode == "A" else int(buffer)
            p_slide = eff if tw_mode == "C" else 0
            tw_open[r.pickup] = r.earliest
            tw_close[r.pickup] = r.earliest + p_slide
            tw_open[r.delivery] = r.earliest + direct
            tw_close[r.delivery] = r.earliest + direct + eff
            requests.append(
                Request(r.rid, r.pickup, r.delivery, r.earliest, r.earliest + direct + eff)
            )
        return Instance(
            name=self.name,
            capacity=self.capacity,
            buffer=int(buffer),
            cost=self.cost,
            time=self.time,
            node_kind=self.node_kind,
            node_request=self.node_request,
            tw_open=tw_open,
            tw_close=tw_close,
            service=self.service,
            requests=requests,
            vehicles=self.vehicles,
            demand=self.__dict__.get("demand"),
            meta={**self.meta, "tw_mode": tw_mode},
        )

    def empty_solution(self) -> Solution:
        return Solution(
            [Route(v.vid, [v.start]) for v in self.vehicles],
            set(range(self.n_requests)),
        )


# ----------------------------------------------------------------------
# schedules


@dataclass
class Schedule:
    feasible: bool
    arrival: list[int]
    begin: list[int]      # begin[i] = max(arrival[i], window open)
    depart: list[int]     # begin[i] + service
    first_violation: int = -1   # visit index of the first late arrival


def propagate_schedule(inst: Instance, visits: list[int]) -> Schedule:
    """Earliest-start schedule of a visit sequence, visit by visit.

    The sequence starts at the window open of its first node (a vehicle's
    availability for routes, a pickup window for pooled sequences). A visit
    is infeasible when even the earliest possible arrival misses the window
    close; propagation continues afterwards so callers can report every
    late visit if they want to.
    """
    arrival: list[int] = []
    begin: list[int] = []
    depart: list[int] = []
    feasible = True
    first_bad = -1
    t = 0
    for i, node in enumerate(visits):
        if i == 0:
            arr = int(inst.tw_open[node])
        else:
            arr = t + int(inst.time[visits[i - 1], node])
        b = max(arr, int(inst.tw_open[node]))
        if arr > inst.tw_close[node] and feasible:
            feasible = False
            first_bad = i
        d = b + int(inst.service[node])
        arrival.append(arr)
        begin.append(b)
        depart.append(d)
        t = d
    return Schedule(feasible, arrival, begin, depart, first_bad)


def route_cost(inst: Instance, visits: list[int]) -> int:
    c = 0
    for a, b in zip(visits, visits[1:]):
        c += int(inst.cost[a, b])
    return c


# ----------------------------------------------------------------------
# validation


def validate(inst: Instance, sol: Solution) -> list[Violation]:
    """Full feasibility check. Returns an empty list for a feasible solution.

    Checks, in order: route structure (one route per vehicle, correct start
    nodes, no duplicate visits), request partition (every request either on
    exactly one route with pickup before delivery, or unassigned), time
    windows via earliest-start propagation, and capacity.
    """
    out: list[Violation] = []
    n = inst.n_nodes

    if [r.vehicle for r in sol.routes] != [v.vid for v in inst.vehicles]:
        out.append(Violation("structure", "routes must list every vehicle exactly once, in id order"))
        return out

    seen = np.zeros(n, dtype=bool)
    pickup_pos: dict[int, tuple[int, int]] = {}
    delivery_pos: dict[int, tuple[int, int]] = {}
    for route in sol.routes:
        start = inst.vehicles[route.vehicle].start
        if not route.visits or route.visits[0] != start:
            out.append(Violation("structure", f"route must begin at start node {start}", route.vehicle))
            continue
        for i, node in enumerate(route.visits):
            if not 0 <= node < n:
                out.append(Violation("structure", f"unknown node {node}", route.vehicle))
                continue
            if seen[node]:
                out.append(Violation("structure", f"node {node} visited more than once", route.vehicle))
                continue
            seen[node] = True
            kind = inst.node_kind[node]
            if i == 0:
                continue
            if kind == VEHICLE:
                out.append(Violation("structure", f"start node {node} inside a route", route.vehicle))
            elif kind == PICKUP:
                pickup_pos[int(inst.node_request[node])] = (route.vehicle, i)
            else:
                delivery_pos[int(inst.node_request[node])] = (route.vehicle, i)

    for r in inst.requests:
        has_p = r.rid in pickup_pos
        has_d = r.rid in delivery_pos
        unass = r.rid in sol.unassigned
        if unass:
            if has_p or has_d:
                out.append(Violation("partition", f"request {r.rid} is unassigned but visited"))
            continue
        if not (has_p and has_d):
            out.append(Violation("partition", f"request {r.rid} neither fully routed nor unassigned"))
            continue
        vp, ip = pickup_pos[r.rid]
        vd, id_ = delivery_pos[r.rid]
        if vp != vd:
            out.append(Violation("pairing", f"request {r.rid} split across vehicles {vp} and {vd}"))
        elif ip >= id_:
            out.append(Violation("pairing", f"request {r.rid} delivery before pickup", vp))
    for rid in sol.unassigned:
        if not 0 <= rid < inst.n_requests:
            out.append(Violation("partition", f"unknown request id {rid} in unassigned set"))

    for route in sol.routes:
        if len(route.visits) <= 1:
            continue
        sched = propagate_schedule(inst, route.visits)
        if not sched.feasible:
            i = sched.first_violation
            out.append(
                Violation(
                    "window",
                    f"visit {i} (node {route.visits[i]}) arrives at "
                    f"{sched.arrival[i]} after window close {int(inst.tw_close[route.visits[i]])}",
                    route.vehicle,
                )
            )
        load = 0
        for node in route.visits[1:]:
            load += int(inst.demand[node])
            if load > inst.capacity:
                out.append(Violation("capacity", f"load {load} exceeds capacity {inst.capacity}", route.vehicle))
                break
    return out


def evaluate(inst: Instance, sol: Solution, check: bool = True) -> Objective:
    """Hierarchical objective of a solution; rejects infeasible input."""
    if check:
        bad = validate(inst, sol)
        if bad:
            raise ValueError("infeasible solution: " + "; ".join(str(v) for v in bad[:5]))
    cost = sum(route_cost(inst, r.visits) for r in sol.routes)
    return Objective(len(sol.unassigned), cost)
