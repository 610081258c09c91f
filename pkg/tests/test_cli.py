"""End-to-end command-line runs: every subcommand through cli.main."""

import json
import os

import numpy as np
import pytest

from ridepool import cli, io, model
from ridepool.ils import PROGRESS_HEADER

DATA = os.path.join(os.path.dirname(__file__), "data")
BENCH = os.path.join(DATA, "micro-bench.txt")
BENCH_SOL = os.path.join(DATA, "micro-bench.sol")

FAST = dict(time_limit=0.0, max_rounds=2, ls_iterations=1, sub_iterations=40,
            part_nodes=60, workers=1, fleet_perturbations=60,
            fleet_perturb_moves=4)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A generated instance file plus a config of small search budgets."""
    d = tmp_path_factory.mktemp("cli")
    inst_path = str(d / "inst.txt")
    rc = cli.main(["generate", "--requests", "10", "--vehicles", "3",
                   "--seed", "4", "--out", inst_path])
    assert rc == 0
    cfg_path = str(d / "fast.json")
    with open(cfg_path, "w") as fh:
        json.dump(FAST, fh)
    return d, inst_path, cfg_path


def test_generate_output_loads(workdir):
    _, inst_path, _ = workdir
    inst = io.load_instance(inst_path)
    assert inst.n_requests == 10
    assert inst.n_vehicles == 3


def test_solve_writes_solution_report_progress(workdir, tmp_path, capsys):
    _, inst_path, cfg_path = workdir
    sol_path = str(tmp_path / "out.sol")
    rep_path = str(tmp_path / "report.csv")
    prog_path = str(tmp_path / "progress.csv")
    rc = cli.main(["solve", "--instance", inst_path, "--mode", "hybrid",
                   "--config", cfg_path, "--seed", "1", "--out", sol_path,
                   "--report", rep_path, "--progress", prog_path])
    assert rc == 0
    assert "unassigned=" in capsys.readouterr().err
    inst = io.load_instance(inst_path)
    sol = io.parse_solution(sol_path, inst)
    assert model.validate(inst, sol) == []
    rep = open(rep_path).read().splitlines()
    assert rep[0].startswith("instance,") and len(rep) == 2
    prog = open(prog_path).read().splitlines()
    assert prog[0] == PROGRESS_HEADER and len(prog) >= 2


def test_solve_to_stdout(workdir, capsys):
    _, inst_path, cfg_path = workdir
    rc = cli.main(["solve", "--instance", inst_path, "--mode", "sequential",
                   "--config", cfg_path])
    assert rc == 0
    assert "SOLUTION" in capsys.readouterr().out


@pytest.mark.parametrize("mode", ["sequential", "integrated", "hybrid"])
def test_solve_modes_on_generated(workdir, tmp_path, mode):
    _, inst_path, cfg_path = workdir
    sol_path = str(tmp_path / f"{mode}.sol")
    rc = cli.main(["solve", "--instance", inst_path, "--mode", mode,
                   "--config", cfg_path, "--out", sol_path])
    assert rc == 0
    inst = io.load_instance(inst_path)
    assert model.validate(inst, io.parse_solution(sol_path, inst)) == []


def test_classic_fleetmin_on_benchmark(workdir, tmp_path):
    _, _, cfg_path = workdir
    sol_path = str(tmp_path / "bench.sol")
    rc = cli.main(["solve", "--instance", BENCH, "--mode", "classic-fleetmin",
                   "--config", cfg_path, "--out", sol_path])
    assert rc == 0
    inst = io.load_instance(BENCH)
    sol = io.parse_solution(sol_path, inst)
    assert model.validate(inst, sol) == []
    assert not sol.unassigned


def test_solve_warm_start_never_worse(workdir, tmp_path):
    _, inst_path, cfg_path = workdir
    first = str(tmp_path / "first.sol")
    assert cli.main(["solve", "--instance", inst_path, "--mode", "sequential",
                     "--config", cfg_path, "--out", first]) == 0
    second = str(tmp_path / "second.sol")
    assert cli.main(["solve", "--instance", inst_path, "--mode", "integrated",
                     "--config", cfg_path, "--warm-start", first,
                     "--out", second]) == 0
    inst = io.load_instance(inst_path)
    a = model.evaluate(inst, io.parse_solution(first, inst))
    b = model.evaluate(inst, io.parse_solution(second, inst))
    assert (b.unassigned, b.cost) <= (a.unassigned, a.cost)


def test_validate_feasible_and_infeasible(tmp_path, capsys):
    rc = cli.main(["validate", "--instance", BENCH, "--solution", BENCH_SOL])
    assert rc == 0
    assert "feasible: unassigned=0 cost=15" in capsys.readouterr().out
    bad = tmp_path / "bad.sol"
    bad.write_text("Route 1 : 4 1 2 5\nRoute 2 : 3 6\n")  # delivery first
    rc = cli.main(["validate", "--instance", BENCH, "--solution", str(bad)])
    assert rc == 1
    assert capsys.readouterr().err.strip()


def test_validate_unknown_node_is_a_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.sol"
    bad.write_text("Route 1 : 99\n")
    rc = cli.main(["validate", "--instance", BENCH, "--solution", str(bad)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_stats_writes_csv(workdir, tmp_path):
    out = str(tmp_path / "stats.csv")
    rc = cli.main(["stats", "--instance", BENCH, "--solution", BENCH_SOL,
                   "--out", out])
    assert rc == 0
    lines = open(out).read().splitlines()
    assert lines[0].startswith("vehicle,")
    assert len(lines) >= 4


def test_bench_sweep_chains_warm_starts(workdir, tmp_path, capsys):
    _, inst_path, cfg_path = workdir
    rep = str(tmp_path / "sweep.csv")
    out_dir = str(tmp_path / "cells")
    rc = cli.main(["bench", "--instance", inst_path, "--mode", "integrated",
                   "--config", cfg_path, "--deltas", "60,240", "--report", rep,
                   "--out-dir", out_dir])
    assert rc == 0
    err = capsys.readouterr().err
    assert "delta=60" in err and "warm=no" in err
    assert "delta=240" in err and "warm=yes" in err
    lines = open(rep).read().splitlines()
    assert len(lines) == 3
    assert lines[1].split(",")[3] == "60" and lines[2].split(",")[3] == "240"
    assert len(os.listdir(out_dir)) == 2
    base = io.load_instance(inst_path)
    for delta in (60, 240):
        inst = base.with_buffer(delta, "C")
        sol = io.parse_solution(
            os.path.join(out_dir, f"{inst.name}-d{delta}.sol"), inst)
        assert model.validate(inst, sol) == []


def test_param_precedence(workdir, tmp_path, monkeypatch):
    _, inst_path, _ = workdir
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_rounds": 5}))
    monkeypatch.setenv("RIDEPOOL_MAX_ROUNDS", "7")
    parser = cli.make_parser()

    args = parser.parse_args(["solve", "--instance", inst_path])
    assert cli.build_params(args).max_rounds == 7          # env beats default
    args = parser.parse_args(["solve", "--instance", inst_path,
                              "--config", str(cfg)])
    assert cli.build_params(args).max_rounds == 5          # config beats env
    args = parser.parse_args(["solve", "--instance", inst_path,
                              "--config", str(cfg), "--param", "max_rounds=3"])
    assert cli.build_params(args).max_rounds == 3          # flag beats config
    args = parser.parse_args(["solve", "--instance", inst_path,
                              "--param", "time_limit=9", "--time-limit", "2.5"])
    assert cli.build_params(args).time_limit == 2.5        # dedicated flag last


def test_param_without_equals_aborts(workdir):
    _, inst_path, _ = workdir
    args = cli.make_parser().parse_args(
        ["solve", "--instance", inst_path, "--param", "max_rounds"])
    with pytest.raises(SystemExit):
        cli.build_params(args)


def test_bad_param_value_exits_one(workdir, capsys):
    _, inst_path, _ = workdir
    rc = cli.main(["solve", "--instance", inst_path,
                   "--param", "max_rounds=banana"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_param_key_exits_one(workdir, capsys):
    _, inst_path, _ = workdir
    rc = cli.main(["solve", "--instance", inst_path, "--param", "nope=1"])
    assert rc == 1


def test_missing_instance_exits_one(capsys):
    rc = cli.main(["solve", "--instance", "no-such-file.txt"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
