"""Instance/solution file formats, the instance generator, CSV reports.

Two instance formats are supported:

* the *benchmark* format used by public pickup-and-delivery test sets
  (``KEY: value`` header, ``NODES`` table with coordinates, demands,
  windows, service durations and pair links, ``EDGES`` travel-time
  matrix) — parsed only;
* a *native* line-oriented format able to express scattered vehicle
  start locations, written by the generator and read back for solving.

Solutions are written in a small block format and can also be read from
the plain ``Route k : ...`` listing that published benchmark solutions
use.
"""

from __future__ import annotations

import csv
import io as _stdio
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .model import (
    BIG_TIME,
    DELIVERY,
    PICKUP,
    VEHICLE,
    Instance,
    Request,
    Route,
    Solution,
    Vehicle,
    propagate_schedule,
    route_cost,
)


class ParseError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line


def _round_array(x: np.ndarray, rounding: str) -> np.ndarray:
    if rounding == "half-up":
        return np.floor(x + 0.5).astype(np.int64)
    if rounding == "floor":
        return np.floor(x).astype(np.int64)
    raise ValueError(f"unknown rounding rule {rounding!r}")


# ======================================================================
# benchmark format


def parse_benchmark(path: str, fleet: int | None = None) -> Instance:
    """Parse a benchmark-format instance file.

    The file has no vehicle count; ``fleet`` chooses how many vehicles to
    create (default: one per request). Every vehicle gets its own replica
    of the depot node so start nodes stay unique. Costs equal the integer
    travel-time matrix.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()

    header: dict[str, str] = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line == "NODES":
            break
        if line and ":" in line:
            key, _, val = line.partition(":")
            header[key.strip().upper()] = val.strip()
        i += 1
    else:
        raise ParseError("missing NODES section", path)

    for key in ("SIZE", "CAPACITY"):
        if key not in header:
            raise ParseError(f"missing header key {key}", path)
    try:
        size = int(header["SIZE"])
        capacity = int(header["CAPACITY"])
    except ValueError as e:
        raise ParseError(f"bad header value: {e}", path) from None
    name = header.get("NAME", os.path.splitext(os.path.basename(path))[0])

    # NODES table: id lat lon demand tw_open tw_close service pair_p pair_d
    i += 1
    rows = np.empty((size, 9), dtype=np.float64)
    for k in range(size):
        if i + k >= len(lines):
            raise ParseError("unexpected end of file in NODES", path, i + k + 1)
        parts = lines[i + k].split()
        if len(parts) != 9:
            raise ParseError(f"expected 9 node fields, got {len(parts)}", path, i + k + 1)
        try:
            rows[k] = [float(p) for p in parts]
        except ValueError:
            raise ParseError("non-numeric node field", path, i + k + 1) from None
        if int(rows[k, 0]) != k:
            raise ParseError(f"node ids must be consecutive, got {int(rows[k, 0])}", path, i + k + 1)
    i += size
    while i < len(lines) and not lines[i].strip():
        i += 1
    if i >= len(lines) or lines[i].strip() != "EDGES":
        raise ParseError("missing EDGES section", path, i + 1 if i < len(lines) else None)
    i += 1
    t = np.empty((size, size), dtype=np.int64)
    for k in range(size):
        parts = lines[i + k].split() if i + k < len(lines) else []
        if len(parts) != size:
            raise ParseError(f"expected {size} matrix entries, got {len(parts)}", path, i + k + 1)
        try:
            t[k] = [int(p) for p in parts]
        except ValueError:
            raise ParseError("non-integer matrix entry", path, i + k + 1) from None

    demand_col = rows[:, 3].astype(np.int64)
    if demand_col[0] != 0:
        raise ParseError("node 0 must be the depot (zero demand)", path)

    # requests from pickup rows, in ascending pickup id order
    requests: list[Request] = []
    pair_d = rows[:, 8].astype(np.int64)
    pair_p = rows[:, 7].astype(np.int64)
    for node in range(1, size):
        if demand_col[node] > 0:
            d = int(pair_d[node])
            if not 0 < d < size:
                raise ParseError(f"pickup node {node} has bad delivery link {d}", path)
            if demand_col[d] != -demand_col[node] or int(pair_p[d]) != node:
                raise ParseError(f"pair {node}/{d} demands or links inconsistent", path)
            requests.append(
                Request(len(requests), node, d, int(rows[node, 4]), int(rows[d, 5]))
            )
        elif demand_col[node] == 0:
            raise ParseError(f"non-depot node {node} has zero demand", path)

    n_req = len(requests)
    if fleet is None:
        fleet = n_req
    if fleet < 1:
        raise ParseError("fleet must be at least 1", path)

    n = size + fleet
    time = np.zeros((n, n), dtype=np.int64)
    time[:size, :size] = t
    # depot replicas: copy the depot row/column; replicas are mutually at 0
    time[size:, :size] = t[0]
    time[:size, size:] = t[:, [0]]

    node_kind = np.zeros(n, dtype=np.int8)
    node_request = np.full(n, -1, dtype=np.int64)
    demand = np.zeros(n, dtype=np.int64)
    tw_open = np.zeros(n, dtype=np.int64)
    tw_close = np.full(n, BIG_TIME, dtype=np.int64)
    service = np.zeros(n, dtype=np.int64)

    tw_open[:size] = rows[:, 4].astype(np.int64)
    tw_close[:size] = rows[:, 5].astype(np.int64)
    service[:size] = rows[:, 6].astype(np.int64)
    demand[:size] = demand_col
    for r in requests:
        node_kind[r.pickup] = PICKUP
        node_kind[r.delivery] = DELIVERY
        node_request[r.pickup] = r.rid
        node_request[r.delivery] = r.rid
    # depot node 0 stays a vehicle-kind node but belongs to no vehicle; it
    # is unreachable from any route because only replicas are start nodes.
    tw_open[size:] = tw_open[0]
    service[size:] = service[0]

    vehicles = [Vehicle(v, size + v) for v in range(fleet)]
    return Instance(
        name=name,
        capacity=capacity,
        buffer=0,
        cost=time.copy(),
        time=time,
        node_kind=node_kind,
        node_request=node_request,
        tw_open=tw_open,
        tw_close=tw_close,
        service=service,
        requests=requests,
        vehicles=vehicles,
        demand=demand,
        meta={"format": "benchmark", "depot": 0, "header": header},
    )


# ======================================================================
# native format


def write_native(inst: Instance, path_or_stream) -> None:
    close = False
    fh = path_or_stream
    if isinstance(path_or_stream, (str, os.PathLike)):
        fh = open(path_or_stream, "w")
        close = True
    try:
        w = fh.write
        w("RIDEPOOL 1\n")
        w(f"NAME {inst.name}\n")
        w(f"CAPACITY {inst.capacity}\n")
        w(f"BUFFER {inst.buffer}\n")
        if "tw_mode" in inst.meta:
            w(f"TWMODE {inst.meta['tw_mode']}\n")
        w(f"NODES {inst.n_nodes}\n")
        for i in range(inst.n_nodes):
            w(
                f"{i} {int(inst.node_kind[i])} {int(inst.node_request[i])} "
                f"{int(inst.tw_open[i])} {int(inst.tw_close[i])} {int(inst.service[i])} "
                f"{int(inst.demand[i])}\n"
            )
        w(f"REQUESTS {inst.n_requests}\n")
        for r in inst.requests:
            w(f"{r.rid} {r.pickup} {r.delivery} {r.earliest} {r.latest}\n")
        w(f"VEHICLES {inst.n_vehicles}\n")
        for v in inst.vehicles:
            w(f"{v.vid} {v.start}\n")
        w("COST\n")
        for row in inst.cost:
            w(" ".join(str(int(x)) for x in row) + "\n")
        w("TIME\n")
        for row in inst.time:
            w(" ".join(str(int(x)) for x in row) + "\n")
        w("END\n")
    finally:
        if close:
            fh.close()


def parse_native(path: str) -> Instance:
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0

    def next_line() -> tuple[int, str]:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ParseError("unexpected end of file", path, len(lines))
        pos += 1
        return pos, lines[pos - 1].strip()

    ln, head = next_line()
    if not head.startswith("RIDEPOOL"):
        raise ParseError("not a native instance file (missing RIDEPOOL header)", path, ln)
    fields: dict[str, str] = {}
    while True:
        ln, line = next_line()
        key, _, val = line.partition(" ")
        if key == "NODES":
            n = int(val)
            break
        fields[key] = val
    node_kind = np.zeros(n, dtype=np.int8)
    node_request = np.full(n, -1, dtype=np.int64)
    tw_open = np.zeros(n, dtype=np.int64)
    tw_close = np.zeros(n, dtype=np.int64)
    service = np.zeros(n, dtype=np.int64)
    demand = np.zeros(n, dtype=np.int64)
    for _ in range(n):
        ln, line = next_line()
        parts = line.split()
        if len(parts) != 7:
            raise ParseError("expected 7 node fields", path, ln)
        i = int(parts[0])
        node_kind[i] = int(parts[1])
        node_request[i] = int(parts[2])
        tw_open[i] = int(parts[3])
        tw_close[i] = int(parts[4])
        service[i] = int(parts[5])
        demand[i] = int(parts[6])
    ln, line = next_line()
    key, _, val = line.partition(" ")
    if key != "REQUESTS":
        raise ParseError("expected REQUESTS section", path, ln)
    requests = []
    for _ in range(int(val)):
        ln, line = next_line()
        a = [int(x) for x in line.split()]
        requests.append(Request(a[0], a[1], a[2], a[3], a[4]))
    ln, line = next_line()
    key, _, val = line.partition(" ")
    if key != "VEHICLES":
        raise ParseError("expected VEHICLES section", path, ln)
    vehicles = []
    for _ in range(int(val)):
        ln, line = next_line()
        a = [int(x) for x in line.split()]
        vehicles.append(Vehicle(a[0], a[1]))

    def matrix(tag: str) -> np.ndarray:
        ln, line = next_line()
        if line != tag:
            raise ParseError(f"expected {tag} section", path, ln)
        m = np.empty((n, n), dtype=np.int64)
        for i in range(n):
            ln, line = next_line()
            row = line.split()
            if len(row) != n:
                raise ParseError(f"expected {n} entries in {tag} row", path, ln)
            m[i] = [int(x) for x in row]
        return m

    cost = matrix("COST")
    time = matrix("TIME")
    meta = {"format": "native"}
    if "TWMODE" in fields:
        meta["tw_mode"] = fields["TWMODE"]
    return Instance(
        name=fields.get("NAME", os.path.splitext(os.path.basename(path))[0]),
        capacity=int(fields.get("CAPACITY", 1)),
        buffer=int(fields.get("BUFFER", 0)),
        cost=cost,
        time=time,
        node_kind=node_kind,
        node_request=node_request,
        tw_open=tw_open,
        tw_close=tw_close,
        service=service,
        requests=requests,
        vehicles=vehicles,
        demand=demand,
        meta=meta,
    )


def load_instance(path: str, fleet: int | None = None) -> Instance:
    """Auto-detect the instance format from the first non-blank line."""
    with open(path) as fh:
        for line in fh:
            if line.strip():
                first = line.strip()
                break
        else:
            raise ParseError("empty instance file", path)
    if first.startswith("RIDEPOOL"):
        return parse_native(path)
    return parse_benchmark(path, fleet=fleet)


# ======================================================================
# generator


@dataclass
class GeneratorConfig:
    n_requests: int
    n_vehicles: int
    capacity: int = 3
    buffer: int = 120           # seconds
    horizon: int = 3600         # latest direct dropoff time
    area: float = 10_000.0      # square side, meters
    speed: float = 10.0         # meters per second
    tw_mode: str = "C"          # A: fixed pickup+dropoff, B: fixed pickup, C: both slide
    service: int = 0
    rounding: str = "half-up"
    seed: int = 0
    name: str | None = None


def generate(cfg: GeneratorConfig) -> Instance:
    """Sample a synthetic ride-hailing instance on a square.

    Pickups and dropoffs are uniform in the square; vehicle start points
    are sampled from the dropoff pool (vehicles idle where earlier trips
    ended). Each request draws a direct dropoff time uniformly from
    [direct trip, horizon]; the request windows then follow from the
    buffer and the window mode.
    """
    if cfg.n_requests < 1 or cfg.n_vehicles < 1:
        raise ValueError("need at least one request and one vehicle")
    rng = np.random.default_rng(cfg.seed)
    R, K = cfg.n_requests, cfg.n_vehicles
    n = 2 * R + K

    pick = rng.uniform(0.0, cfg.area, size=(R, 2))
    drop = rng.uniform(0.0, cfg.area, size=(R, 2))
    starts = drop[rng.integers(0, R, size=K)]
    pts = np.vstack([pick, drop, starts])

    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    cost = _round_array(dist, cfg.rounding)
    time = _round_array(dist / cfg.speed, cfg.rounding)
    np.fill_diagonal(cost, 0)
    np.fill_diagonal(time, 0)

    node_kind = np.concatenate([
        np.full(R, PICKUP, dtype=np.int8),
        np.full(R, DELIVERY, dtype=np.int8),
        np.full(K, VEHICLE, dtype=np.int8),
    ])
    node_request = np.concatenate([
        np.arange(R, dtype=np.int64),
        np.arange(R, dtype=np.int64),
        np.full(K, -1, dtype=np.int64),
    ])
    service = np.zeros(n, dtype=np.int64)
    service[: 2 * R] = int(cfg.service)

    tw_open = np.zeros(n, dtype=np.int64)
    tw_close = np.full(n, BIG_TIME, dtype=np.int64)
    eff = 0 if cfg.tw_mode == "A" else cfg.buffer
    p_slide = eff if cfg.tw_mode == "C" else 0
    requests = []
    for rid in range(R):
        direct = int(time[rid, R + rid])
        drop_at = int(rng.integers(direct, max(cfg.horizon, direct) + 1))
        e = drop_at - direct
        tw_open[rid] = e
        tw_close[rid] = e + p_slide
        tw_open[R + rid] = e + direct
        tw_close[R + rid] = e + direct + eff
        requests.append(Request(rid, rid, R + rid, e, e + direct + eff))

    vehicles = [Vehicle(v, 2 * R + v) for v in range(K)]
    name = cfg.name or f"ride-r{R}-k{K}-b{cfg.buffer}-s{cfg.seed}"
    return Instance(
        name=name,
        capacity=cfg.capacity,
        buffer=cfg.buffer,
        cost=cost,
        time=time,
        node_kind=node_kind,
        node_request=node_request,
        tw_open=tw_open,
        tw_close=tw_close,
        service=service,
        requests=requests,
        vehicles=vehicles,
        meta={"format": "generated", "tw_mode": cfg.tw_mode,
              "generator": {k: v for k, v in asdict(cfg).items()}},
    )


# ======================================================================
# solutions


def write_solution(inst: Instance, sol: Solution, path_or_stream) -> None:
    close = False
    fh = path_or_stream
    if isinstance(path_or_stream, (str, os.PathLike)):
        fh = open(path_or_stream, "w")
        close = True
    try:
        cost = sum(route_cost(inst, r.visits) for r in sol.routes)
        fh.write("SOLUTION\n")
        fh.write(f"INSTANCE {inst.name}\n")
        fh.write(f"COST {cost}\n")
        fh.write("UNASSIGNED" + "".join(f" {r}" for r in sorted(sol.unassigned)) + "\n")
        for route in sol.routes:
            tail = "".join(f" {v}" for v in route.visits[1:])
            fh.write(f"VEHICLE {route.vehicle} :{tail}\n")
        fh.write("END\n")
    finally:
        if close:
            fh.close()


def parse_solution(path: str, inst: Instance) -> Solution:
    """Read a solution in either the native format or the published
    ``Route k : ...`` listing format."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    stripped = [l.strip() for l in lines]
    if any(l == "SOLUTION" for l in stripped):
        return _parse_native_solution(stripped, path, inst)
    return _parse_route_listing(stripped, path, inst)


def _parse_native_solution(lines: list[str], path: str, inst: Instance) -> Solution:
    sol = inst.empty_solution()
    sol.unassigned = set()
    seen_vehicles = set()
    for ln, line in enumerate(lines, 1):
        if line.startswith("UNASSIGNED"):
            sol.unassigned = {int(x) for x in line.split()[1:]}
        elif line.startswith("VEHICLE"):
            head, _, tail = line.partition(":")
            try:
                vid = int(head.split()[1])
            except (IndexError, ValueError):
                raise ParseError("malformed VEHICLE line", path, ln) from None
            if not 0 <= vid < inst.n_vehicles:
                raise ParseError(f"unknown vehicle {vid}", path, ln)
            if vid in seen_vehicles:
                raise ParseError(f"vehicle {vid} listed twice", path, ln)
            seen_vehicles.add(vid)
            visits = [int(x) for x in tail.split()]
            for node in visits:
                if not (0 <= node < inst.n_nodes) or inst.node_request[node] < 0:
                    raise ParseError(f"node {node} is not a request node", path, ln)
            sol.routes[vid] = Route(vid, [inst.vehicles[vid].start] + visits)
    return sol


def _parse_route_listing(lines: list[str], path: str, inst: Instance) -> Solution:
    routes = []
    for ln, line in enumerate(lines, 1):
        if not line.lower().startswith("route"):
            continue
        head, sep, tail = line.partition(":")
        if not sep:
            raise ParseError("malformed Route line", path, ln)
        try:
            visits = [int(x) for x in tail.split()]
        except ValueError:
            raise ParseError("non-integer node id in Route line", path, ln) from None
        for node in visits:
            if not (0 <= node < inst.n_nodes) or inst.node_request[node] < 0:
                raise ParseError(f"node {node} is not a request node", path, ln)
        routes.append(visits)
    if len(routes) > inst.n_vehicles:
        raise ParseError(
            f"{len(routes)} routes but only {inst.n_vehicles} vehicles", path
        )
    sol = inst.empty_solution()
    served = set()
    for vid, visits in enumerate(routes):
        sol.routes[vid] = Route(vid, [inst.vehicles[vid].start] + visits)
        for node in visits:
            served.add(int(inst.node_request[node]))
    sol.unassigned = set(range(inst.n_requests)) - served
    return sol


# ======================================================================
# reports and route statistics


REPORT_FIELDS = [
    "instance", "mode", "seed", "buffer", "unassigned", "cost",
    "wall_time_s", "rounds", "rr_iterations",
]


def append_report(path: str, row: dict) -> None:
    """Append one run summary row to a CSV report, writing the header on
    first use."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, extrasaction="ignore")
        if new:
            writer.writeheader()
        writer.writerow({k: row.get(k, "") for k in REPORT_FIELDS})


def route_stats(inst: Instance, sol: Solution) -> list[dict]:
    """Per-route service statistics: request count, maximum concurrent
    load (how interleaved the route is) and the number of zero-load
    segments (independent passenger groups)."""
    rows = []
    for route in sol.routes:
        load = 0
        max_load = 0
        blocks = 0
        n_req = 0
        for node in route.visits[1:]:
            d = int(inst.demand[node])
            if load == 0 and d > 0:
                blocks += 1
            load += d
            max_load = max(max_load, load)
            if d > 0:
                n_req += 1
        rows.append({
            "vehicle": route.vehicle,
            "requests": n_req,
            "max_load": max_load,
            "blocks": blocks,
            "cost": route_cost(inst, route.visits),
        })
    return rows


def stats_csv(inst: Instance, sol: Solution) -> str:
    """CSV rendering of per-route stats plus mean/max aggregate lines."""
    rows = route_stats(inst, sol)
    buf = _stdio.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["vehicle", "requests", "max_load", "blocks", "cost"])
    for r in rows:
        writer.writerow([r["vehicle"], r["requests"], r["max_load"], r["blocks"], r["cost"]])
    used = [r for r in rows if r["requests"] > 0]
    for agg, fn in (("mean", lambda xs: f"{math.fsum(xs) / len(xs):.3f}"), ("max", lambda xs: str(max(xs)))):
        if used:
            writer.writerow([
                agg,
                fn([r["requests"] for r in used]),
                fn([r["max_load"] for r in used]),
                fn([r["blocks"] for r in used]),
                fn([r["cost"] for r in used]),
            ])
    return buf.getvalue()
