"""Acceptance gate: eleven end-to-end criteria, one test each.

Every test prints a single ``criterion NN (<name>): PASS`` line when it
succeeds (run with ``-v`` to get one PASSED/FAILED line per criterion
either way). Comparisons against the independent references in
oracles.py are exact for integer objectives; the LP bound uses a 1e-6
tolerance; wall-clock budgets are asserted where a criterion pins one.
"""

import math
import time
from collections import Counter
from io import StringIO

import numpy as np

import oracles
from conftest import make_instance
from test_resequence import sample_routes

from ridepool import fleetmin, ils, pooling
from ridepool import ruin_recreate as rr
from ridepool.dispatch import blocks_from_matching, build_graph, solve_paths
from ridepool.evaluation import concat, eval_sequence, seed_rng_state
from ridepool.io import load_instance, parse_solution, write_solution
from ridepool.model import Objective, evaluate, validate
from ridepool.params import Params
from ridepool.resequence import search
from test_cli import BENCH, BENCH_SOL


def _ok(num: int, name: str) -> None:
    print(f"criterion {num:02d} ({name}): PASS")


# ----------------------------------------------------------------------
# 1. sequence algebra vs. from-scratch propagation


def test_criterion_01_concat_matches_propagation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    insts = [make_instance(30, 5, seed=s, service=int(rng.integers(0, 90)),
                           buffer=int(rng.integers(0, 500))) for s in range(10)]
    for i in range(10_000):
        inst = insts[i % len(insts)]
        length = int(rng.integers(1, 41))
        seq = [int(x) for x in rng.integers(0, inst.n_nodes, size=length)]
        ref = oracles.propagate(inst, seq)
        got = eval_sequence(inst, seq)
        if length > 1:
            cut = int(rng.integers(1, length))
            t = int(inst.tau[seq[cut - 1], seq[cut]])
            c = int(inst.cost[seq[cut - 1], seq[cut]])
            joined = concat(eval_sequence(inst, seq[:cut]),
                            eval_sequence(inst, seq[cut:]), t, c)
            assert joined == got
        assert got.cost == ref.cost
        assert got.q_sum == ref.q_sum
        assert got.q_max == ref.q_max
        assert got.travel == ref.travel
        assert got.earliest_end == ref.earliest_end
        assert got.latest_start == ref.latest_start
        assert got.feasible == ref.feasible
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"{elapsed:.1f}s"
    _ok(1, "concat algebra exact on 10^4 sequences")


# ----------------------------------------------------------------------
# 2. disjoint-path dispatching vs. exhaustive enumeration


def test_criterion_02_dispatch_paths_optimal():
    t0 = time.perf_counter()
    params = Params()
    rng = np.random.default_rng(202)
    for _ in range(200):
        inst = make_instance(int(rng.integers(4, 9)), int(rng.integers(1, 4)),
                             seed=int(rng.integers(100_000)),
                             buffer=int(rng.integers(0, 400)))
        matching = pooling.build_matching(inst, params, rng)
        blocks = blocks_from_matching(inst, matching, params.start_policy)[:8]
        graph = build_graph(inst, blocks, range(inst.n_vehicles), params)
        got = solve_paths(graph)
        assert got.total_weight == oracles.best_disjoint_paths(graph)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"{elapsed:.1f}s"
    _ok(2, "k-disjoint paths optimal on 200 graphs")


# ----------------------------------------------------------------------
# 3. micro-instance hierarchical optimality


def test_criterion_03_micro_instance_optimality():
    t0 = time.perf_counter()
    p_int = Params(time_limit=0.0, max_rounds=10, ls_iterations=1,
                   sub_iterations=2000, part_nodes=60, workers=1)
    p_hyb = Params(time_limit=0.0, max_rounds=4, ls_iterations=1,
                   sub_iterations=500, part_nodes=60, workers=1)
    sizes = np.random.default_rng(303)
    n = 100
    unassigned_ok = cost_ok = hybrid_ok = 0
    for i in range(n):
        reqs = int(sizes.integers(2, 5))
        vehs = int(sizes.integers(1, 3))
        inst = make_instance(reqs, vehs, seed=1000 + i,
                             buffer=int(sizes.integers(60, 400)))
        ref = oracles.brute_force_optimum(inst)
        sol, _ = ils.run(inst, p_int, np.random.default_rng(i))
        obj = evaluate(inst, sol)
        unassigned_ok += obj.unassigned == ref[0]
        cost_ok += (obj.unassigned, obj.cost) == ref
        hsol, _ = ils.solve(inst, "hybrid", p_hyb, np.random.default_rng(i))
        hobj = evaluate(inst, hsol)
        hybrid_ok += (hobj.unassigned, hobj.cost) == ref
    elapsed = time.perf_counter() - t0
    assert unassigned_ok == n, f"{unassigned_ok}/{n}"
    assert cost_ok >= math.ceil(0.95 * n), f"{cost_ok}/{n}"
    assert hybrid_ok == n, f"{hybrid_ok}/{n}"
    assert elapsed < 120.0, f"{elapsed:.1f}s"
    _ok(3, f"micro optimum: integrated cost {cost_ok}/{n}, hybrid {hybrid_ok}/{n}")


# ----------------------------------------------------------------------
# 4. bounded-displacement resequencing exactness


def test_criterion_04_bounded_resequence_exact():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    routes = sample_routes(300, rng, min_visits=5, max_requests=4)
    perms = {n: list(oracles.bounded_permutations(n, 3)) for n in range(2, 10)}
    improved = 0
    for inst, visits in routes:
        assert len(visits) <= 10
        tail = visits[1:]
        base = oracles.propagate(inst, visits).cost
        ref = None
        for perm in perms[len(tail)]:
            seq = [visits[0]] + [tail[u] for u in perm]
            if not oracles.route_ok(inst, seq):
                continue
            c = oracles.propagate(inst, seq).cost
            if ref is None or c < ref:
                ref = c
        exact = search(inst, visits, 3, labels=0)
        if ref is not None and ref < base:
            assert exact is not None and exact[1] == ref
            improved += 1
        else:
            assert exact is None
        capped = search(inst, visits, 3, labels=4)
        cost0 = exact[1] if exact is not None else base
        cost4 = capped[1] if capped is not None else base
        assert cost0 <= cost4 <= base
    elapsed = time.perf_counter() - t0
    assert improved > 0
    assert elapsed < 60.0, f"{elapsed:.1f}s"
    _ok(4, f"resequencing exact on 300 routes ({improved} improvable)")


# ----------------------------------------------------------------------
# 5. pooled sequence optimality over all hyperedges


def test_criterion_05_pool_sequences_optimal():
    t0 = time.perf_counter()
    inst = make_instance(50, 8, seed=5, buffer=480)
    pools = pooling.enumerate_pools(inst, 4)
    sizes = Counter(len(p.requests) for p in pools)
    assert sizes[4] > 0  # the largest pool size actually occurs
    for p in pools:
        ref = oracles.cheapest_interleaving(inst, p.requests)
        assert ref is not None
        assert p.seq_cost == ref[0]
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"{elapsed:.1f}s"
    _ok(5, f"all {len(pools)} hyperedge sequences optimal")


# ----------------------------------------------------------------------
# 6. matching validity and the cover-LP bound


def test_criterion_06_matching_partition_and_lp_bound():
    rng = np.random.default_rng(606)
    for variant in ("lp-greedy", "greedy", "lp-partition", "lp-random"):
        for seed in (1, 2):
            inst = make_instance(24, 5, seed=seed, buffer=300)
            matching = pooling.build_matching(
                inst, Params(matching=variant), rng)
            pooling.check_matching(inst, matching)  # raises on overlap/gap
    params = Params()
    bounded = 0
    for s in range(8):
        inst = make_instance(int(rng.integers(3, 7)), 2, seed=600 + s,
                             buffer=300)
        pools = pooling.weigh_pools(
            inst, pooling.all_pools(inst, params.max_pool_size), params)
        servable = {r for r in range(inst.n_requests)
                    if pooling.singleton_pool(inst, r) is not None}
        x = pooling.solve_cover_lp(pools, inst.n_requests)
        lp = pooling.lp_objective(pools, x)
        for matching in oracles.all_matchings(pools, servable):
            integral = sum(pools[j].weight for j in matching)
            assert lp >= integral - 1e-6
            bounded += 1
    assert bounded > 0
    _ok(6, f"4 matching variants partition; LP bounds {bounded} matchings")


# ----------------------------------------------------------------------
# 7. taxi-mode exactness of the sequential pipeline


def _singleton_graph(inst, params):
    singles = [pooling.singleton_pool(inst, r) for r in range(inst.n_requests)]
    matching = [p for p in singles if p is not None]
    blocks = blocks_from_matching(inst, matching, params.start_policy)
    return build_graph(inst, blocks, range(inst.n_vehicles), params)


def test_criterion_07_taxi_mode_exact():
    params = Params(workers=1)
    for s in range(20):
        inst = make_instance(200, 20, seed=700 + s, capacity=1, buffer=0)
        sol = ils.solve_sequential(inst, params, np.random.default_rng(s))
        assert validate(inst, sol) == []
        graph = _singleton_graph(inst, params)
        served = len(solve_paths(graph).served)
        assert len(sol.unassigned) == inst.n_requests - served
    for s in range(10):
        inst = make_instance(10, 3, seed=770 + s, capacity=1, buffer=0)
        sol = ils.solve_sequential(inst, params, np.random.default_rng(s))
        graph = _singleton_graph(inst, params)
        ref_w = oracles.best_disjoint_paths(graph)
        served_opt = math.ceil(-ref_w / graph.xi)
        assert len(sol.unassigned) == inst.n_requests - served_opt
    _ok(7, "unit-capacity, zero-buffer dispatch is assignment-optimal")


# ----------------------------------------------------------------------
# 8. operator feasibility fuzzing


def test_criterion_08_operator_fuzz():
    inst = make_instance(500, 50, seed=808, buffer=240)
    params = Params(workers=1)
    ws = ils.construct_initial(inst, params, np.random.default_rng(0))
    assert validate(inst, ws.to_solution()) == []
    rng = np.random.default_rng(1)
    state = seed_rng_state(rng)
    counts = Counter()
    for step in range(100_000):
        op = int(rng.integers(4))
        counts[op] += 1
        if op == 0:
            routed_before = set(ws.routed)
            lens = ws.route_len[ws.scope]
            lens = lens[lens > 0]
            cap_ref = max(1, min(params.ruin_max_string,
                                 int(lens.sum()) // lens.size))
            st = rr.ruin(ws, params, rng)
            ks_max = max(1.0, 4.0 * params.ruin_mean_removal / (1 + st.string_cap) - 1.0)
            assert st.string_cap == cap_ref
            assert 1 <= st.k_s <= ks_max
            assert len(st.strings) <= st.k_s
            assert len({v for v, _, _ in st.strings}) == len(st.strings)
            for _, l_sigma, removed in st.strings:
                assert 1 <= l_sigma <= st.string_cap
                assert removed == l_sigma
            assert set(st.removed) <= routed_before
        elif op == 1:
            inserted = rr.recreate(ws, params, rng, state)
            assert len(inserted) <= params.max_inserts
        elif op == 2:
            served = set(ws.routed)
            ils.perturb(ws, 4, params.perturb_relocate_prob, rng, state)
            assert set(ws.routed) == served
        else:
            nonempty = ws.nonempty_vehicles()
            vid = nonempty[int(rng.integers(len(nonempty)))]
            got = search(inst, ws.route_visits(vid), params.reseq_k,
                         params.reseq_labels)
            if got is not None:
                before = ws.route_cost[vid]
                ws.relink(vid, got[0][1:])
                assert ws.route_cost[vid] == got[1] < before
        bad = validate(inst, ws.to_solution())
        assert not bad, f"step {step} op {op}: {bad[0]}"
    assert all(counts[o] > 0 for o in range(4))
    _ok(8, "10^5 operator steps, zero validator violations")


# ----------------------------------------------------------------------
# 9. warm-start monotonicity across a buffer sweep


def test_criterion_09_warm_start_monotone():
    p = Params(time_limit=0.0, max_rounds=2, ls_iterations=2,
               sub_iterations=150, part_nodes=150, workers=1)
    for s in range(5):
        base = make_instance(300, 40, seed=900 + s)
        prev = None
        for delta in (0, 60, 120):
            inst = base.with_buffer(delta, "C")
            if prev is None:
                sol, _ = ils.solve(inst, "hybrid", p, np.random.default_rng(s))
            else:
                assert validate(inst, prev) == []  # warm start stays feasible
                warm_obj = evaluate(inst, prev)
                sol, _ = ils.run(inst, p, np.random.default_rng(s), warm=prev)
                obj = evaluate(inst, sol)
                assert (obj.unassigned, obj.cost) <= (warm_obj.unassigned,
                                                      warm_obj.cost)
            assert validate(inst, sol) == []
            prev = sol
    _ok(9, "chained buffer sweep never degrades its warm start")


# ----------------------------------------------------------------------
# 10. fleet minimization


def test_criterion_10_fleet_minimization():
    p = Params(time_limit=0.0, max_rounds=2, ls_iterations=2,
               sub_iterations=60, part_nodes=60, workers=1,
               fleet_perturbations=10_000, fleet_perturb_moves=10)
    for s in range(10):
        inst = make_instance(12, 6, seed=950 + s).with_buffer(10**6, "C")
        sol, _ = fleetmin.hierarchical_run(inst, p, np.random.default_rng(s))
        assert validate(inst, sol) == [] and not sol.unassigned
        used = sum(1 for r in sol.routes if len(r.visits) > 1)
        assert used == 1, f"seed {s}: fleet {used}"
    inst = load_instance(BENCH)
    sol = parse_solution(BENCH_SOL, inst)
    assert validate(inst, sol) == []
    assert evaluate(inst, sol) == Objective(0, 15)  # published value, exact
    _ok(10, "fleet 1 on 10 chainable instances; bundled solution cost exact")


# ----------------------------------------------------------------------
# 11. determinism and throughput


def test_criterion_11_determinism_and_throughput():
    inst = make_instance(60, 10, seed=11)
    p = Params(time_limit=0.0, max_rounds=3, ls_iterations=2,
               sub_iterations=80, part_nodes=60, workers=1)
    outs = []
    for _ in range(3):
        sol, _ = ils.solve(inst, "integrated", p, np.random.default_rng(42))
        buf = StringIO()
        write_solution(inst, sol, buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1] == outs[2]

    big = make_instance(1000, 100, seed=3)
    pt = Params(time_limit=10.0, max_rounds=10**6, ls_iterations=2,
                sub_iterations=200, part_nodes=150, workers=1)
    sol, stats = ils.run(big, pt, np.random.default_rng(0))
    assert validate(big, sol) == []
    assert stats.elapsed <= 60.0
    assert stats.rr_iterations >= 5000, stats.rr_iterations
    _ok(11, f"bit-identical reruns; {stats.rr_iterations} RnR iterations "
            f"in {stats.elapsed:.0f}s")
