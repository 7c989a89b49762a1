import json
import os
import subprocess
import sys

import numpy as np
import pytest

from isingms import io
from isingms.cli import main
from isingms.pipeline import PriorMode, RecoveryConfig, run_recovery
from isingms.recovery import recover
from isingms.synth import TopologySpec, gibbs_sample, make_instance


def test_parse_examples():
    np.testing.assert_array_equal(io.parse_samples("1,-1\n-1,1\n"), [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(io.parse_samples("1,0\n0,1\n", "zero_one"), [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(io.parse_samples("1,0\n0,1\n", "01"), [[1, -1], [-1, 1]])
    with pytest.raises(io.InputError) as err:
        io.parse_samples("2,1\n")
    assert (err.value.row, err.value.col) == (1, 1)
    assert "row 1 col 1" in str(err.value)


def test_parse_errors():
    with pytest.raises(io.InputError) as err:
        io.parse_samples("1,-1\n1,-1,1\n")
    assert err.value.row == 2
    with pytest.raises(io.InputError) as err:
        io.parse_samples("1,-1\n1,0\n")
    assert (err.value.row, err.value.col) == (2, 2)
    with pytest.raises(io.InputError):
        io.parse_samples("")
    with pytest.raises(io.InputError):
        io.parse_samples("1\n-1\n")
    with pytest.raises(io.InputError):
        io.parse_samples("1,1\n", "hex")
    assert io.parse_samples("\n1, -1\n\n+1,1\n").tolist() == [[1, -1], [1, 1]]


def test_matrix_round_trip_exact(tmp_path):
    m = np.random.default_rng(0).normal(size=(5, 5)) * 10.0 ** np.arange(-7, 8, 3)
    io.write_matrix(tmp_path / "m.csv", m)
    back = io.read_matrix(tmp_path / "m.csv")
    assert back.tobytes() == m.tobytes()


def test_sample_round_trip(tmp_path):
    x = np.where(np.random.default_rng(1).random((30, 4)) < 0.5, 1, -1).astype(np.int8)
    io.write_samples(tmp_path / "x.csv", x)
    np.testing.assert_array_equal(io.read_samples(tmp_path / "x.csv"), x)
    with pytest.raises(io.InputError):
        io.read_samples(tmp_path / "missing.csv")


def test_json_handles_infinity(tmp_path):
    io.write_json(tmp_path / "a.json", {"ratio": float("inf"), "v": np.float64(0.5), "k": np.int64(3)})
    assert json.loads((tmp_path / "a.json").read_text()) == {"ratio": "inf", "v": 0.5, "k": 3}


def test_prior_mode_parsing():
    assert PriorMode.parse("flat") == PriorMode("flat", 1.0)
    assert PriorMode.parse("fixed=0.05") == PriorMode("fixed", 0.05)
    assert PriorMode.parse("selfcon=1") == PriorMode("selfcon", 1.0)
    assert PriorMode.parse("ndep=0.01") == PriorMode("ndep", 0.01)
    assert str(PriorMode.parse("fixed=0.05")) == "fixed=0.05"
    for bad in ("fixed", "loose=1", "fixed=x", "fixed=-1", "ndep=2"):
        with pytest.raises(ValueError):
            PriorMode.parse(bad)
    with pytest.raises(ValueError):
        RecoveryConfig(correction="max")


@pytest.fixture(scope="module")
def dimer_csv(tmp_path_factory):
    inst = make_instance(TopologySpec("dimers", 16), 1.5, "bimodal", 0)
    x = gibbs_sample(inst, 1000, rng_seed=0)
    path = tmp_path_factory.mktemp("data") / "dimers.csv"
    io.write_samples(path, x)
    return path, x, inst


def test_recover_outputs(dimer_csv, tmp_path):
    path, x, inst = dimer_csv
    assert main(["recover", "--input", str(path), "--out", str(tmp_path / "r"), "--prior", "selfcon=1"]) == 0
    eta = io.read_matrix(tmp_path / "r" / "eta.csv")
    np.testing.assert_array_equal(eta, recover(x).eta)
    edges = json.loads((tmp_path / "r" / "edges.json").read_text())
    assert len(edges) == 16 * 15 // 2
    assert {(e["i"], e["j"]) for e in edges if e["bond"]} == set(inst.edges())
    meta = json.loads((tmp_path / "r" / "meta.json").read_text())
    assert meta["prior"] == "selfcon=1" and meta["converged"]
    assert meta["epsilon_trace"][0] == 1.0
    assert abs(meta["epsilon"] - 8 / 112) < 0.02


def test_flat_prior_on_coins_is_near_empty(tmp_path):
    x = np.where(np.random.default_rng(2).random((500, 10)) < 0.5, 1, -1).astype(np.int8)
    io.write_samples(tmp_path / "coins.csv", x)
    assert main(["recover", "--input", str(tmp_path / "coins.csv"), "--out", str(tmp_path / "o")]) == 0
    meta = json.loads((tmp_path / "o" / "meta.json").read_text())
    assert meta["n_bonds"] <= 2


def test_recover_deterministic_across_jobs(dimer_csv, tmp_path):
    path, _, _ = dimer_csv
    outs = []
    for k, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"o{k}"
        assert main(["recover", "--input", str(path), "--out", str(out), "--prior", "fixed=0.1",
                     "--correct", "prod", "--seed", "3", "--jobs", jobs]) == 0
        outs.append({f: (out / f).read_bytes() for f in ("eta.csv", "edges.json")})
    assert outs[0] == outs[1] == outs[2]


def test_zero_one_encoding(tmp_path):
    x = np.where(np.random.default_rng(3).random((200, 4)) < 0.5, 1, -1)
    (tmp_path / "pm.csv").write_text("\n".join(",".join(str(v) for v in row) for row in x) + "\n")
    (tmp_path / "01.csv").write_text("\n".join(",".join(str((v + 1) // 2) for v in row) for row in x) + "\n")
    assert main(["recover", "--input", str(tmp_path / "pm.csv"), "--out", str(tmp_path / "a")]) == 0
    assert main(["recover", "--input", str(tmp_path / "01.csv"), "--encoding", "01", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "eta.csv").read_bytes() == (tmp_path / "b" / "eta.csv").read_bytes()


def test_input_errors_exit_two(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("1,-1\n1,5\n")
    assert main(["recover", "--input", str(tmp_path / "bad.csv"), "--out", str(tmp_path / "o")]) == 2
    assert "row 2 col 2" in capsys.readouterr().err
    assert main(["recover", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "short.csv").write_text("1,-1\n-1,1\n")
    assert main(["windows", "--input", str(tmp_path / "short.csv"), "--out", str(tmp_path / "w"),
                 "--window", "5"]) == 2
    with pytest.raises(SystemExit) as err:
        main(["recover", "--input", "x", "--out", "y", "--prior", "loose"])
    assert err.value.code == 2


def test_numerical_failure_exit_three(dimer_csv, tmp_path, monkeypatch, capsys):
    from isingms import cli
    from isingms.evidence import SaddlePointError
    from isingms.models import get_model

    def boom(*args, **kwargs):
        raise SaddlePointError(get_model(10))

    monkeypatch.setattr(cli, "run_recovery", boom)
    path, _, _ = dimer_csv
    assert main(["recover", "--input", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_windows_command(dimer_csv, tmp_path):
    path, x, _ = dimer_csv
    out = tmp_path / "w"
    assert main(["windows", "--input", str(path), "--out", str(out), "--window", "250", "--prior", "selfcon=1"]) == 0
    rows = io.read_rows(out / "sparsity.csv")
    assert [int(r["start"]) for r in rows] == [0, 250, 500, 750]
    for r in rows:
        graph, _ = run_recovery(x[int(r["start"]):int(r["start"]) + 250], RecoveryConfig(PriorMode("selfcon", 1.0)))
        assert float(r["ratio"]) == graph.bond_ratio()
        assert int(r["n_bonds"]) == graph.n_bonds
    assert io.read_matrix(out / "mean_eta.csv").shape == (16, 16)


def test_corr_command(dimer_csv, tmp_path):
    path, x, _ = dimer_csv
    out = tmp_path / "c"
    assert main(["corr", "--input", str(path), "--out", str(out), "--window", "100", "--stride", "300",
                 "--tau", "0,1,4"]) == 0
    rows = io.read_rows(out / "delayed_rms.csv")
    assert len(rows) == 3 * 3  # a window at 900 would overrun by the largest delay
    assert all(float(r["c_diag"]) == 1.0 for r in rows if r["tau"] == "0")
    assert len(io.read_rows(out / "connected_rms.csv")) == 3
    assert io.read_matrix(out / "mean_connected.csv").shape == (16, 16)


def test_table_command(tmp_path):
    out = tmp_path / "t" / "table.csv"
    assert main(["table", "--samples", "12", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n_pp,n_pm,n_mp,n_mm,m1,m2,c12,eta"
    assert len(lines) == 1 + 15 * 14 * 13 // 6


def test_bench_dimers(tmp_path):
    out = tmp_path / "b"
    assert main(["bench", "--topology", "dimers", "--nodes", "16", "--beta", "1.5", "--samples", "1000",
                 "--seeds", "5", "--methods", "ms_selfcon", "--out", str(out)]) == 0
    summary = io.read_rows(out / "summary.csv")
    assert float(summary[0]["tpr"]) >= 0.95
    assert len(io.read_rows(out / "metrics.csv")) == 5


def test_bench_sample_sizes_and_determinism(tmp_path):
    args = ["bench", "--topology", "erdos_renyi", "--nodes", "32", "--beta", "0.5", "--samples", "100,2000",
            "--seeds", "3", "--methods", "ms_selfcon,ms_ndep,ms_min,plm", "--roc-points", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("metrics.csv", "summary.csv", "roc.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = {(int(r["N"]), r["method"]): r for r in io.read_rows(tmp_path / "a" / "summary.csv")}
    assert float(summary[2000, "ms_selfcon"]["fnr"]) <= float(summary[100, "ms_selfcon"]["fnr"])


def test_bench_partial_observation(tmp_path):
    out = tmp_path / "p"
    assert main(["bench", "--topology", "erdos_renyi", "--nodes", "250", "--visible", "64", "--beta", "0.5",
                 "--samples", "200", "--seeds", "1", "--methods", "ms_selfcon,plm", "--out", str(out)]) == 0
    rows = io.read_rows(out / "metrics.csv")
    assert {r["method"] for r in rows} == {"ms_selfcon", "plm"}
    assert all(int(r["n"]) == 64 and r["density"] != "" for r in rows)


def test_bench_bad_arguments():
    assert main(["bench", "--topology", "dimers", "--nodes", "7", "--beta", "1", "--samples", "10",
                 "--out", "unused"]) == 2
    assert main(["bench", "--topology", "dimers", "--nodes", "8", "--beta", "1", "--samples", "10",
                 "--methods", "magic", "--out", "unused"]) == 2


def _run_module(args, env_extra=None):
    env = dict(os.environ, **(env_extra or {}))
    return subprocess.run([sys.executable, "-m", "isingms", *args], capture_output=True, text=True, env=env)


def test_module_entry_point_and_env_jobs(dimer_csv, tmp_path):
    path, _, _ = dimer_csv
    ok = _run_module(["recover", "--input", str(path), "--out", str(tmp_path / "e")], {"ISINGMS_JOBS": "2"})
    assert ok.returncode == 0, ok.stderr
    bad = _run_module(["recover", "--input", str(path), "--out", str(tmp_path / "e")], {"ISINGMS_JOBS": "many"})
    assert bad.returncode == 2 and "ISINGMS_JOBS" in bad.stderr
    verbose = _run_module(["recover", "-v", "--input", str(path), "--out", str(tmp_path / "v"), "--prior", "selfcon=1"])
    assert verbose.returncode == 0 and "epsilon trace" in verbose.stderr
