import json
import subprocess
import sys

import numpy as np
import pytest

from ewls import Measurement
from ewls.cli import main
from ewls.config import shipped_config
from ewls.csvio import read_estimates, read_measurement_rows, write_measurements

FIG1 = str(shipped_config("fig1"))
FIG2 = str(shipped_config("fig2"))

KF_TWO_SENSORS = """
seed = 1
duration = 5.0
state_dim = 3

[truth]
kind = "sine"

[[sensors]]
name = "s1"
H = [[1.0, 0.0, 0.0]]
R = 0.5
rate = 10.0

[[sensors]]
name = "s2"
H = [[1.0, 0.0, 0.0]]
R = 0.04
rate = 10.0
delay = 0.2

[[filters]]
name = "kf"
kind = "kf"
model = "ca"
q = 0.1
use_oosm = false
"""


def simulate(tmp_path, config=FIG1, seed=None, tag="m"):
    out, truth = tmp_path / f"{tag}.csv", tmp_path / f"{tag}_truth.csv"
    argv = ["simulate", "--config", config, "--out", str(out), "--truth", str(truth)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    assert main(argv) == 0
    return out, truth


class TestSimulate:
    def test_row_counts(self, tmp_path):
        out, truth = simulate(tmp_path)
        assert len(out.read_text().splitlines()) == 1 + 300
        assert len(truth.read_text().splitlines()) == 1 + 300

    def test_byte_identical(self, tmp_path):
        a, ta = simulate(tmp_path, seed=5, tag="a")
        b, tb = simulate(tmp_path, seed=5, tag="b")
        assert a.read_bytes() == b.read_bytes()
        assert ta.read_bytes() == tb.read_bytes()
        c, _ = simulate(tmp_path, seed=6, tag="c")
        assert c.read_bytes() != a.read_bytes()

    def test_malformed_matrix(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(open(FIG1).read().replace("H = [[1.0, 0.0, 0.0]]", "H = [[1.0, 0.0]]"))
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "m.csv")]) == 2
        assert "sensors.0.H" in capsys.readouterr().err
        assert not (tmp_path / "m.csv").exists()


class TestEstimate:
    def test_batch_matches_ewif(self, tmp_path):
        m, _ = simulate(tmp_path)
        for mode in ("ewif", "batch"):
            assert main(["estimate", str(m), "--mode", mode, "--config", FIG1,
                         "--out", str(tmp_path / f"{mode}.csv")]) == 0
        te, xe, Pe = read_estimates(tmp_path / "ewif.csv")
        tb, xb, Pb = read_estimates(tmp_path / "batch.csv")
        np.testing.assert_array_equal(te, tb)
        np.testing.assert_allclose(xe[-1], xb[-1], rtol=1e-8)
        np.testing.assert_allclose(Pe[-1], Pb[-1], rtol=1e-8)
        np.testing.assert_allclose(xe, xb, rtol=1e-8, atol=1e-12)

    def test_estimate_rows_symmetric(self, tmp_path):
        m, _ = simulate(tmp_path, FIG2)
        assert main(["estimate", str(m), "--mode", "ewif", "--config", FIG2,
                     "--out", str(tmp_path / "e.csv")]) == 0
        _, x, P = read_estimates(tmp_path / "e.csv")
        assert x.shape[1] == 3
        np.testing.assert_allclose(P, np.transpose(P, (0, 2, 1)), atol=1e-9)

    def test_lag(self, tmp_path):
        m, _ = simulate(tmp_path, FIG2)
        assert main(["estimate", str(m), "--mode", "ewif", "--config", FIG2, "--lag", "1.0",
                     "--out", str(tmp_path / "e.csv")]) == 0
        t, _, _ = read_estimates(tmp_path / "e.csv")
        rows = read_measurement_rows(m)
        assert t[-1] == pytest.approx(rows[-1].t_arrival - 1.0)

    def test_order_invariance(self, tmp_path, rng):
        H, R = np.array([[1.0, 0.0, 0.0]]), np.array([[0.5]])
        valid = np.arange(40) * 0.1
        ys = np.sin(valid) + 0.3 * rng.standard_normal(40)
        final = float(valid[-1] + 1.0)
        delays = rng.uniform(0.0, 1.0, 40)
        shuffled = [Measurement([y], H, R, t, min(t + d, final), "s1") for t, y, d in zip(valid, ys, delays)]
        shuffled[-1] = Measurement([ys[-1]], H, R, valid[-1], final, "s1")
        shuffled.sort(key=lambda m: m.arrival_time)
        ordered = [Measurement([y], H, R, t, t, "s1") for t, y in zip(valid, ys)]
        ordered[-1] = Measurement([ys[-1]], H, R, valid[-1], final, "s1")
        assert [m.valid_time for m in shuffled] != sorted(m.valid_time for m in shuffled)
        cfg = tmp_path / "c.toml"
        cfg.write_text(open(FIG2).read())
        finals = []
        for name, ms in (("shuffled", shuffled), ("ordered", ordered)):
            write_measurements(tmp_path / f"{name}.csv", ms)
            assert main(["estimate", str(tmp_path / f"{name}.csv"), "--mode", "ewif", "--config", str(cfg),
                         "--out", str(tmp_path / f"{name}_e.csv")]) == 0
            t, x, P = read_estimates(tmp_path / f"{name}_e.csv")
            finals.append((t[-1], x[-1], P[-1]))
        assert finals[0][0] == finals[1][0] == final
        np.testing.assert_allclose(finals[0][1], finals[1][1], rtol=1e-8)
        np.testing.assert_allclose(finals[0][2], finals[1][2], rtol=1e-8)

    def test_kf_rejects_delayed(self, tmp_path, capsys):
        cfg = tmp_path / "kf.toml"
        cfg.write_text(KF_TWO_SENSORS)
        m, _ = simulate(tmp_path, str(cfg))
        rc = main(["estimate", str(m), "--mode", "kf", "--config", str(cfg), "--out", str(tmp_path / "k.csv")])
        assert rc == 4
        assert "out-of-sequence" in capsys.readouterr().err
        assert not (tmp_path / "k.csv").exists()

    def test_kf_in_sequence(self, tmp_path):
        m, _ = simulate(tmp_path)
        assert main(["estimate", str(m), "--mode", "kf", "--config", FIG1, "--out", str(tmp_path / "k.csv")]) == 0
        t, x, P = read_estimates(tmp_path / "k.csv")
        assert len(t) == 300 and x.shape[1] == 1

    def test_never_full_rank(self, tmp_path, capsys):
        H, R = np.array([[1.0, 0.0, 0.0]]), np.array([[0.5]])
        write_measurements(tmp_path / "m.csv", [Measurement([1.0], H, R, 0.0, 0.0, "s1"),
                                                Measurement([1.1], H, R, 0.1, 0.1, "s1")])
        rc = main(["estimate", str(tmp_path / "m.csv"), "--mode", "ewif", "--config", FIG2,
                   "--out", str(tmp_path / "e.csv")])
        assert rc == 3
        assert "full rank" in capsys.readouterr().err

    def test_bad_csv(self, tmp_path):
        (tmp_path / "m.csv").write_text("nonsense\n")
        assert main(["estimate", str(tmp_path / "m.csv"), "--mode", "ewif", "--config", FIG1,
                     "--out", str(tmp_path / "e.csv")]) == 2

    def test_negative_lag(self, tmp_path):
        m, _ = simulate(tmp_path)
        assert main(["estimate", str(m), "--mode", "ewif", "--config", FIG1, "--lag", "-1",
                     "--out", str(tmp_path / "e.csv")]) == 2


class TestCompare:
    def test_report_schema(self, tmp_path):
        out = tmp_path / "r.json"
        assert main(["compare", "--config", FIG1, "--runs", "3", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["runs"] == 3
        for name in ("ewif", "kf"):
            f = rep["filters"][name]
            assert {"mean_rms", "std_rms", "rms", "seconds"} <= f.keys()
            assert len(f["rms"]) == 3
            assert f["mean_rms"] == pytest.approx(np.mean(f["rms"]))
        assert 0.0 <= rep["win_rates"]["ewif"]["kf"] <= 1.0
        assert rep["wall_clock_seconds"] > 0

    def test_deterministic_rms(self, tmp_path):
        reps = []
        for tag in "ab":
            out = tmp_path / f"{tag}.json"
            assert main(["compare", "--config", FIG2, "--runs", "2", "--seed", "7", "--out", str(out)]) == 0
            reps.append(json.loads(out.read_text()))
        for name in reps[0]["filters"]:
            assert reps[0]["filters"][name]["rms"] == reps[1]["filters"][name]["rms"]

    def test_zero_runs(self, tmp_path, capsys):
        assert main(["compare", "--config", FIG1, "--runs", "0", "--out", str(tmp_path / "r.json")]) == 2
        assert "--runs" in capsys.readouterr().err

    def test_stdout(self, capsys):
        assert main(["compare", "--config", FIG1, "--runs", "1"]) == 0
        assert "mean_rms" in json.loads(capsys.readouterr().out)["filters"]["ewif"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ewls", "simulate", "--config", FIG1,
                           "--out", str(tmp_path / "m.csv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m.csv").exists()
