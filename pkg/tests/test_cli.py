import json
import math
import subprocess
import sys

import numpy as np
import pytest

from luba.cli import main

GOLDEN_LAMBDA_1 = [0.69314718055994531, 0.2676218188444346, 0.038481017141416525,
                   0.00074970235714942298, 2.8109701463574863e-7]


def table(path):
    lines = [l for l in open(path) if not l.startswith("#")]
    header = lines[0].strip().split(",")
    return header, [l.strip().split(",") for l in lines[1:]]


class TestSolve:
    def test_golden(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["solve", "--lambda", "1", "--tail-eps", "1e-9", "-o", str(out)]) == 0
        header, rows = table(out)
        assert header == ["k", "f_k", "p_k", "w_k", "c_k", "payoff_k"]
        np.testing.assert_allclose([float(r[1]) for r in rows], GOLDEN_LAMBDA_1, rtol=1e-12)
        assert all(r[5] == "nan" for r in rows)

    def test_provenance(self, tmp_path):
        out = tmp_path / "s.csv"
        main(["solve", "--lambda", "3", "--seed", "5", "-o", str(out)])
        head = [l for l in open(out) if l.startswith("#")]
        assert head[0].startswith("# command: luba solve --lambda 3")
        assert head[1] == "# seed: 5\n"
        assert head[2].startswith("# version: ")

    def test_finite_value(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["solve", "--lambda", "10", "--v", "100", "-o", str(out)]) == 0
        _, rows = table(out)
        pay = np.array([float(r[5]) for r in rows])
        assert np.ptp(pay) <= 1e-6

    def test_tiny_value(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["solve", "--lambda", "0.5", "--v", "3", "-o", str(out)]) == 0
        _, rows = table(out)
        assert [r[0] for r in rows] == ["1"]

    def test_json(self, tmp_path):
        out = tmp_path / "s.json"
        main(["solve", "--lambda", "2", "--format", "json", "--seed", "1", "-o", str(out)])
        doc = json.loads(out.read_text())
        assert doc["meta"]["seed"] == "1"
        assert doc["rows"][0][5] is None

    def test_strategy_file_feeds_simulate(self, tmp_path):
        strat = tmp_path / "st.txt"
        main(["solve", "--lambda", "5", "-o", str(tmp_path / "s.csv"), "--strategy-out", str(strat)])
        summ = tmp_path / "sum.json"
        assert main(["simulate", "--n", "5", "--auctions", "200", "--seed", "1", "--strategy-file",
                     str(strat), "-o", "none", "--summary", str(summ)]) == 0
        assert json.loads(summ.read_text())["auctions"] == 200

    def test_domain_error(self, capsys):
        assert main(["solve", "--lambda", "-1"]) == 2
        assert "DomainError" in capsys.readouterr().err

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["solve"])
        assert info.value.code == 2


class TestSimulate:
    def test_same_seed_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", "--lambda", "20", "--auctions", "300", "--seed", "77", "-o"]
        main(args + [str(a)])
        first = a.read_bytes()
        main(args + [str(a)])
        assert a.read_bytes() == first
        main(["simulate", "--lambda", "20", "--auctions", "300", "--seed", "78", "-o", str(b)])
        assert b.read_bytes().split(b"\n", 3)[3] != first.split(b"\n", 3)[3]

    def test_dataset_loads(self, tmp_path):
        from luba.analysis import load_dataset
        out = tmp_path / "d.csv"
        main(["simulate", "--players", "4", "--m", "3", "--auctions", "50", "--seed", "2", "-o", str(out)])
        recs = load_dataset(out)
        assert len(recs) == 50 and all(r.n == 12 for r in recs)

    def test_summary_no_winner(self, tmp_path):
        summ = tmp_path / "s.json"
        main(["simulate", "--lambda", "50", "--auctions", "100000", "--seed", "3", "-o", "none",
              "--summary", str(summ)])
        doc = json.loads(summ.read_text())
        assert abs(doc["no_winner_rate"] - 1 / 51) <= 3 * doc["equilibrium_stderr"]
        assert doc["meta"]["seed"] == "3"

    def test_missing_strategy_file(self, tmp_path):
        assert main(["simulate", "--n", "3", "--strategy-file", str(tmp_path / "nope")]) == 3


class TestAdapt:
    def test_zero_rate(self, tmp_path):
        out = tmp_path / "a.csv"
        assert main(["adapt", "--players", "10", "--rounds", "3", "--batch", "100", "--lr", "0",
                     "--numbers", "15", "--seed", "1", "-o", str(out)]) == 0
        _, rows = table(out)
        p = np.array([float(r[1]) for r in rows])
        q = np.exp(-np.arange(1, 16) / 30)
        np.testing.assert_allclose(p, q / q.sum(), atol=1e-15)

    def test_domain(self):
        assert main(["adapt", "--players", "2", "--m", "200", "--rounds", "1"]) == 2


class TestDynamics:
    def test_ordering_and_files(self, tmp_path, capsys):
        assert main(["dynamics", "--lambdas", "100,1000", "--dt", "0.05", "--out-dir", str(tmp_path)]) == 0
        header, rows = table(tmp_path / "sweep.csv")
        t = {float(r[0]): float(r[1]) for r in rows}
        assert t[1000.0] > t[100.0]
        assert (tmp_path / "trajectory_lambda100.csv").exists()

    def test_nash_start(self, tmp_path):
        main(["dynamics", "--lambdas", "200", "--start", "nash", "--out-dir", str(tmp_path)])
        _, rows = table(tmp_path / "sweep.csv")
        assert float(rows[0][1]) == 0.0 and rows[0][4] == "converged"

    def test_halved_dt(self, tmp_path):
        finals = []
        for dt in ("0.02", "0.01"):
            d = tmp_path / dt
            main(["dynamics", "--lambdas", "100", "--dt", dt, "--tmax", "50", "--threshold", "1e-9",
                  "--out-dir", str(d)])
            _, rows = table(d / "sweep.csv")
            finals.append(float(rows[0][3]))
        assert abs(finals[0] - finals[1]) <= 0.01 * finals[1]


class TestAnalyze:
    @pytest.fixture
    def dataset(self, tmp_path):
        path = tmp_path / "d.csv"
        main(["simulate", "--n", "60", "--auctions", "40", "--seed", "4", "-o", str(path)])
        return path

    def test_outputs(self, dataset, tmp_path):
        out = tmp_path / "an"
        assert main(["analyze", "--dataset", str(dataset), "--out-dir", str(out)]) == 0
        for name in ("fig1_histograms", "fig2_distance", "fig3_winning_numbers",
                     "fig4_win_chances", "regime"):
            assert (out / f"{name}.csv").exists()
        _, rows = table(out / "fig2_distance.csv")
        assert len(rows) == 40

    def test_empty_date_range(self, dataset, tmp_path):
        assert main(["analyze", "--dataset", str(dataset), "--date-range", "2000-01-01:2000-02-01",
                     "--out-dir", str(tmp_path / "x")]) == 2

    def test_bad_file(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("# schema=luba-v1\nauction_id,item_value,fee,timestamp,player_id,number\na,1,0,,p,0\n")
        assert main(["analyze", "--dataset", str(bad), "--out-dir", str(tmp_path)]) == 3
        assert main(["analyze", "--dataset", str(tmp_path / "missing.csv")]) == 3


def test_module_entry():
    res = subprocess.run([sys.executable, "-m", "luba", "solve", "--lambda", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "support_end" in res.stderr
