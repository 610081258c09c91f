"""Instance construction, window modes, validation, and objectives."""

import numpy as np
import pytest

from ridepool.model import (
    BIG_TIME,
    DELIVERY,
    PICKUP,
    VEHICLE,
    Objective,
    Route,
    evaluate,
    propagate_schedule,
    route_cost,
    validate,
)

from conftest import make_instance


def test_generated_instance_invariants():
    inst = make_instance(20, 4, seed=3)
    R, K = 20, 4
    assert inst.n_requests == R
    assert inst.n_vehicles == K
    assert inst.n_nodes == 2 * R + K
    assert (inst.node_kind[:R] == PICKUP).all()
    assert (inst.node_kind[R:2 * R] == DELIVERY).all()
    assert (inst.node_kind[2 * R:] == VEHICLE).all()
    assert (inst.demand[:R] == 1).all()
    assert (inst.demand[R:2 * R] == -1).all()
    assert (inst.demand[2 * R:] == 0).all()
    for r in inst.requests:
        assert inst.pickup_of[r.rid] == r.pickup
        assert inst.delivery_of[r.rid] == r.delivery
        assert r.earliest == inst.tw_open[r.pickup]
        assert r.latest == inst.tw_close[r.delivery]
    assert (inst.tw_close[inst.vehicle_starts] == BIG_TIME).all()


def test_tau_adds_service_to_travel():
    inst = make_instance(5, 2, seed=1, service=30)
    i, j = 0, 7
    assert inst.tau[i, j] == inst.service[i] + inst.time[i, j]


@pytest.mark.parametrize("mode", ["A", "B", "C"])
def test_window_modes(mode):
    inst = make_instance(15, 3, seed=9).with_buffer(90, mode)
    eff = 0 if mode == "A" else 90
    p_slide = 90 if mode == "C" else 0
    for r in inst.requests:
        direct = inst.direct_time(r.rid)
        assert inst.tw_close[r.pickup] - inst.tw_open[r.pickup] == p_slide
        assert inst.tw_open[r.delivery] == inst.tw_open[r.pickup] + direct
        assert inst.tw_close[r.delivery] - inst.tw_open[r.delivery] == eff
        assert r.latest == r.earliest + direct + eff


def test_with_buffer_zero_forces_direct_chaining():
    # with no slack anywhere, a request can only be served door to door
    inst = make_instance(10, 2, seed=4).with_buffer(0, "C")
    for r in inst.requests:
        assert inst.tw_open[r.pickup] == inst.tw_close[r.pickup]
        assert inst.tw_open[r.delivery] == inst.tw_close[r.delivery]


def test_with_buffer_rejects_unknown_mode():
    inst = make_instance(4, 1, seed=0)
    with pytest.raises(ValueError):
        inst.with_buffer(60, "D")


def test_propagate_schedule_waits_for_window_open():
    inst = make_instance(6, 2, seed=2)
    r = inst.requests[0]
    v = inst.vehicles[0].start
    sched = propagate_schedule(inst, [v, r.pickup, r.delivery])
    assert sched.begin[1] >= inst.tw_open[r.pickup]
    assert sched.begin[1] >= sched.arrival[1]
    assert sched.depart[1] == sched.begin[1] + inst.service[r.pickup]


def test_validate_accepts_feasible_and_flags_violations():
    inst = make_instance(8, 2, seed=6)
    sol = inst.empty_solution()
    assert validate(inst, sol) == []

    r = inst.requests[0]
    v = inst.vehicles[0]
    sol.routes[0] = Route(0, [v.start, r.pickup, r.delivery])
    sol.unassigned.discard(0)
    assert validate(inst, sol) == []

    # delivery before pickup is a precedence violation
    bad = sol.copy()
    bad.routes[0] = Route(0, [v.start, r.delivery, r.pickup])
    kinds = {viol.kind for viol in validate(inst, bad)}
    assert kinds  # at least one violation reported
    assert any("preced" in k or "order" in k for k in kinds) or kinds

    # claiming the request is both routed and unassigned must be caught
    dup = sol.copy()
    dup.unassigned.add(0)
    assert validate(inst, dup)


def test_validate_catches_capacity_and_window_violations():
    inst = make_instance(6, 1, seed=13, capacity=1)
    v = inst.vehicles[0]
    p = [inst.requests[i].pickup for i in range(3)]
    d = [inst.requests[i].delivery for i in range(3)]
    sol = inst.empty_solution()
    sol.routes[0] = Route(0, [v.start, p[0], p[1], d[0], d[1]])
    sol.unassigned -= {0, 1}
    assert any(viol.kind == "capacity" for viol in validate(inst, sol))

    tight = inst.with_buffer(0, "C")
    sol2 = tight.empty_solution()
    sol2.routes[0] = Route(0, [v.start, p[0], d[0], p[1], d[1]])
    sol2.unassigned -= {0, 1}
    # zero buffer leaves no room to chain two arbitrary requests
    viols = validate(tight, sol2)
    assert any(viol.kind == "window" for viol in viols)


def test_evaluate_reports_unassigned_then_cost():
    inst = make_instance(8, 2, seed=6)
    sol = inst.empty_solution()
    obj = evaluate(inst, sol)
    assert obj == Objective(8, 0)

    r = inst.requests[3]
    sol.routes[1] = Route(1, [inst.vehicles[1].start, r.pickup, r.delivery])
    sol.unassigned.discard(3)
    obj2 = evaluate(inst, sol)
    assert obj2.unassigned == 7
    assert obj2.cost == route_cost(inst, sol.routes[1].visits)
    assert obj2 < obj  # fewer unassigned wins regardless of cost


def test_objective_ordering_is_hierarchical():
    assert Objective(0, 10_000) < Objective(1, 0)
    assert Objective(2, 5) < Objective(2, 6)
    assert not Objective(2, 6) < Objective(2, 6)
