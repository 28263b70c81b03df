import json
import subprocess
import sys
from contextlib import redirect_stdout
from io import StringIO

import pytest

from mvtost.cli import main

TICLO = ["--ticlopidine", "--screen-outcome", "t_half"]
SMALL_MC = ["--mc-draws", "256", "--randomizations", "4"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    return code, json.loads(out)


def capture(argv):
    buf = StringIO()
    with redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


@pytest.fixture(scope="module")
def decide_json():
    return capture(["decide", *TICLO, "--format", "json"])


class TestDecide:
    def test_declarations(self, decide_json):
        code, text = decide_json
        out = json.loads(text)
        assert code == 0
        assert out["nu"] == 19 and out["n_outcomes"] == 4
        assert out["tost"]["equivalence_declared"] is False
        assert out["atost"]["decision"]["equivalence_declared"] is True
        assert abs(out["atost"]["alpha_star"]["alpha_star"] - 0.058) < 0.002
        assert len(out["screen"]["removed"]) == 4

    def test_rows_follow_inclusion(self, decide_json):
        out = json.loads(decide_json[1])
        c = out["c"]
        for dec in (out["tost"], out["atost"]["decision"]):
            for row in dec["outcomes"]:
                assert row["pass"] == (row["ci_lower"] >= -c and row["ci_upper"] <= c)

    def test_deterministic(self, decide_json):
        assert capture(["decide", *TICLO, "--format", "json"]) == decide_json

    def test_table_from_stats(self, capsys, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"theta_hat": [0.01, -0.02], "sigma_hat": [[0.0004, 0.0], [0.0, 0.0009]], "nu": 30}))
        code, out, _ = run(capsys, "decide", "--stats", str(p), *SMALL_MC)
        assert code == 0
        assert "Equivalence (TOST, level 0.05): Yes" in out
        assert out.count("alpha-TOST") >= 2

    def test_csv(self, capsys, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"theta_hat": [0.0], "sigma_hat": [[0.0025]], "nu": 20}))
        code, out, _ = run(capsys, "decide", "--stats", str(p), "--format", "csv")
        lines = out.strip().splitlines()
        assert lines[0] == "method,level,outcome,ci_lower,ci_upper,pass"
        assert len(lines) == 3


class TestCheckExistence:
    def test_case_study_bound(self, capsys):
        code, out, _ = run(capsys, "check-existence", "--m", "4", "--sigma-max", "0.082")
        assert code == 0
        assert "bound 0.2319" in out and "pass" in out

    def test_from_data(self, capsys):
        code, out = run_json(capsys, "check-existence", *TICLO)
        assert out["holds"] is True
        assert abs(out["sigma_max"] - 0.0818) < 1e-3

    def test_without_sigma(self, capsys):
        code, out = run_json(capsys, "check-existence", "--m", "2")
        assert code == 0 and out["holds"] is None


class TestAlphaStar:
    def test_negligible_variance(self, capsys):
        code, out = run_json(capsys, "alpha-star", "--sigma", "[[1e-10, 0], [0, 1e-10]]", "--nu", "20")
        assert code == 0
        assert out["alpha_star"] == 0.05

    def test_known_univariate(self, capsys):
        code, out = run_json(capsys, "alpha-star", "--sigma", "[[0.01]]", "--nu", "known")
        assert code == 0 and out["converged"]
        assert 0.05 < out["alpha_star"] < 0.06


class TestPowerAndSize:
    def test_power_known_diagonal_is_exact(self, capsys):
        code, out = run_json(capsys, "power", "--sigma", "[[0.01, 0], [0, 0.01]]", "--nu", "known", "--theta", "[0.2231435513142098, 0]")
        assert code == 0 and out["exact"] and out["std_error"] == 0.0
        assert abs(out["power"] - 0.0210566) < 1e-6

    def test_size_table(self, capsys):
        code, out, _ = run(capsys, "size", "--sigma", "[[0.01, 0], [0, 0.01]]", "--nu", "known")
        assert code == 0 and out.startswith("size = 0.021057")

    def test_general_margins(self, capsys):
        # margins (-0.3, 0.1) reduce to c = 0.2 around -0.1
        a = run_json(capsys, "power", "--sigma", "[[0.0025]]", "--nu", "known", "--theta", "[-0.1]", "--lower", "-0.3", "--upper", "0.1")[1]
        b = run_json(capsys, "power", "--sigma", "[[0.0025]]", "--nu", "known", "--theta", "[0.0]", "--margin-c", "0.2")[1]
        assert a["power"] == pytest.approx(b["power"], abs=1e-14)


class TestOptions:
    def test_config_and_flag_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"alpha": 0.1, "format": "json"}))
        bound = {a: run_json(capsys, "check-existence", "--m", "1", "--alpha", a)[1]["bound"] for a in ("0.1", "0.05")}
        assert bound["0.1"] != bound["0.05"]
        out = json.loads(run(capsys, "check-existence", "--m", "1", "--config", str(cfg))[1])
        assert out["bound"] == bound["0.1"]
        out = json.loads(run(capsys, "check-existence", "--m", "1", "--config", str(cfg), "--alpha", "0.05")[1])
        assert out["bound"] == bound["0.05"]

    def test_seed_from_environment(self, capsys, monkeypatch):
        argv = ["power", "--sigma", "[[0.01, 0.004], [0.004, 0.01]]", "--nu", "15", "--theta", "[0.1, 0]", *SMALL_MC]
        monkeypatch.setenv("MVTOST_SEED", "7")
        env = run_json(capsys, *argv)[1]
        monkeypatch.delenv("MVTOST_SEED")
        flag = run_json(capsys, *argv, "--seed", "7")[1]
        default = run_json(capsys, *argv)[1]
        assert env == flag
        assert env["power"] != default["power"]

    def test_module_entry_point(self):
        res = subprocess.run(
            [sys.executable, "-m", "mvtost", "check-existence", "--m", "4", "--sigma-max", "0.082"],
            capture_output=True, text=True, check=False,
        )
        assert res.returncode == 0 and "pass" in res.stdout


class TestErrors:
    def test_missing_file(self, capsys):
        code, out = run_json(capsys, "decide", "--data", "/nonexistent.csv")
        assert code == 1
        assert set(out) == {"error", "message"}

    def test_parse_error(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("subject,a_T,a_R\n1,1,0\n2,1,1\n")
        code, out = run_json(capsys, "decide", "--data", str(p))
        assert code == 1 and out["error"] == "ParseError"
        assert "row 2" in out["message"]

    def test_bad_nu(self, capsys):
        code, out = run_json(capsys, "alpha-star", "--sigma", "[[0.01]]", "--nu", "many")
        assert code == 1 and "--nu" in out["message"]

    def test_non_pd_sigma(self, capsys):
        code, out = run_json(capsys, "size", "--sigma", "[[0.01, 0.02], [0.02, 0.01]]", "--nu", "20")
        assert code == 1 and out["error"] == "DomainError"

    def test_plain_error_goes_to_stderr(self, capsys):
        code, out, err = run(capsys, "decide")
        assert code == 1 and out == "" and err.startswith("mvtost: error:")
