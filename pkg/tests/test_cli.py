import json

import pytest

from channelgames.cli import main

from conftest import reference_adbc
from channelgames.channel import channel_to_dict


@pytest.fixture
def adbc_config(tmp_path):
    path = tmp_path / "adbc.json"
    path.write_text(json.dumps(channel_to_dict(reference_adbc())))
    return str(path)


@pytest.fixture
def mac_config(tmp_path):
    doc = {
        "type": "mac",
        "channels": [[[1.0]], [[2.0]]],
        "noise": {"white": 1.0},
        "power": {"sum": 2.0},
    }
    path = tmp_path / "mac.json"
    path.write_text(json.dumps(doc))
    return str(path)


def read_report(path):
    with open(path) as fh:
        return json.load(fh)


class TestValidate:
    def test_valid_config(self, adbc_config, tmp_path):
        out = tmp_path / "report.json"
        assert main(["validate", "--config", adbc_config, "--out", str(out)]) == 0
        report = read_report(out)
        assert report["command"] == "validate"
        assert report["outputs"]["valid"] is True

    def test_malformed_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"type": "bc"}')
        assert main(["validate", "--config", str(bad)]) == 1

    def test_invalid_channel(self, tmp_path):
        doc = {"type": "bc", "channels": [[[1.0]]], "noise": {"white": -1.0},
               "power": {"sum": 10.0}}
        path = tmp_path / "neg.json"
        path.write_text(json.dumps(doc))
        assert main(["validate", "--config", str(path)]) == 1

    def test_missing_file(self):
        assert main(["validate", "--config", "/nonexistent/x.json"]) == 1


class TestUsage:
    def test_unknown_flag_exits_one(self, adbc_config):
        assert main(["solve-noe", "--config", adbc_config, "--bogus"]) == 1

    def test_unknown_subcommand_exits_one(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag(self, adbc_config):
        assert main(["solve-noe", "--config", adbc_config]) == 1


class TestSolveNoe:
    def test_reference_point(self, adbc_config, tmp_path):
        out = tmp_path / "solve.json"
        code = main([
            "solve-noe", "--config", adbc_config, "--weights", "0.35,1",
            "--out", str(out),
        ])
        assert code == 0
        report = read_report(out)
        rates = report["outputs"]["rates"]
        assert rates[0] == pytest.approx(1.5, abs=0.02)
        assert rates[1] == pytest.approx(0.7, abs=0.02)
        assert report["outputs"]["certificate"]["max_residual"] <= 1e-6

    def test_deterministic_reports(self, adbc_config, tmp_path):
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        args = ["solve-noe", "--config", adbc_config, "--weights", "1,1", "--seed", "7"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_nonconvergence_exit_code(self, adbc_config):
        code = main([
            "solve-noe", "--config", adbc_config, "--weights", "0.35,1",
            "--max-iter", "1", "--tol", "1e-15",
        ])
        assert code == 2


class TestCertify:
    def test_certified_profile(self, adbc_config, tmp_path):
        profile = tmp_path / "profile.json"
        profile.write_text(json.dumps({"matrices": [[[10.0]], [[0.0]]]}))
        out = tmp_path / "cert.json"
        code = main([
            "certify", "--config", adbc_config, "--weights", "1,1",
            "--profile", str(profile), "--out", str(out),
        ])
        assert code == 0
        assert read_report(out)["outputs"]["certified"] is True

    def test_non_equilibrium_exits_three(self, adbc_config, tmp_path):
        profile = tmp_path / "profile.json"
        profile.write_text(json.dumps({"matrices": [[[5.0]], [[5.0]]]}))
        assert main([
            "certify", "--config", adbc_config, "--weights", "1,1",
            "--profile", str(profile),
        ]) == 3


class TestSweep:
    def test_grid_rows(self, adbc_config, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main([
            "pareto-sweep", "--config", adbc_config, "--gamma-grid", "9",
            "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("gamma_1,gamma_2,rate_1,rate_2")
        assert len(lines) == 10

    def test_single_gamma_json(self, adbc_config, tmp_path):
        out = tmp_path / "point.json"
        code = main([
            "pareto-sweep", "--config", adbc_config, "--gamma", "0.41,0.59",
            "--format", "json", "--out", str(out),
        ])
        assert code == 0
        rows = read_report(out)["outputs"]["rows"]
        assert len(rows) == 1
        assert rows[0]["rates"][0] == pytest.approx(1.5, abs=0.02)


class TestMapWeights:
    def test_gamma_direction(self, adbc_config, tmp_path):
        out = tmp_path / "map.json"
        code = main([
            "map-weights", "--config", adbc_config, "--gamma", "0.41,0.59",
            "--out", str(out),
        ])
        assert code == 0
        outputs = read_report(out)["outputs"]
        assert outputs["weights_r"][0] == pytest.approx(0.35, abs=0.01)
        assert outputs["eta"] == pytest.approx(0.59, abs=1e-6)

    def test_weights_direction(self, adbc_config, tmp_path):
        out = tmp_path / "map.json"
        code = main([
            "map-weights", "--config", adbc_config, "--weights", "0.35,1",
            "--out", str(out),
        ])
        assert code == 0
        outputs = read_report(out)["outputs"]
        assert outputs["weights_gamma"][0] == pytest.approx(0.41, abs=0.01)

    def test_requires_exactly_one_kind(self, adbc_config):
        assert main(["map-weights", "--config", adbc_config]) == 1
        assert main([
            "map-weights", "--config", adbc_config,
            "--gamma", "0.5,0.5", "--weights", "1,1",
        ]) == 1


class TestDualTransform:
    def test_mac_to_bc(self, mac_config, tmp_path):
        profile = tmp_path / "profile.json"
        profile.write_text(json.dumps({"matrices": [[[1.0]], [[1.0]]]}))
        out = tmp_path / "dual.json"
        code = main([
            "dual-transform", "--config", mac_config, "--profile", str(profile),
            "--out", str(out),
        ])
        assert code == 0
        outputs = read_report(out)["outputs"]
        assert outputs["profile"][0][0][0] == pytest.approx(1.5, abs=1e-9)
        assert outputs["profile"][1][0][0] == pytest.approx(0.5, abs=1e-9)
        assert outputs["dual_channel"]["type"] == "bc"
        assert outputs["target_order"] == [1, 0]
        assert outputs["power_delta"] <= 1e-9


class TestCheckDsc:
    def test_ordered_weights_pass(self, adbc_config, tmp_path):
        out = tmp_path / "dsc.json"
        code = main([
            "check-dsc", "--config", adbc_config, "--weights", "1,0.5",
            "--samples", "150", "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        outputs = read_report(out)["outputs"]
        assert outputs["verdict"] == "no-violation"
        assert outputs["min_gap"] > 0


class TestTraceIneq:
    def test_randomized_check(self, tmp_path):
        out = tmp_path / "trace.json"
        code = main([
            "trace-ineq", "--samples", "200", "--seed", "1", "--users", "3",
            "--dim", "3", "--out", str(out),
        ])
        assert code == 0
        outputs = read_report(out)["outputs"]
        assert outputs["min_chain_value"] >= -1e-10
        assert outputs["min_two_matrix_value"] >= -1e-10


class TestPenaltySim:
    def test_auto_lambda(self, adbc_config, tmp_path):
        out = tmp_path / "pen.json"
        code = main([
            "penalty-sim", "--config", adbc_config, "--weights", "1,1",
            "--out", str(out),
        ])
        assert code == 0
        outputs = read_report(out)["outputs"]
        assert outputs["converged"] is True
        assert outputs["distance_to_reference"] <= 1e-4

    def test_trajectory_csv(self, adbc_config, tmp_path):
        out = tmp_path / "traj.csv"
        code = main([
            "penalty-sim", "--config", adbc_config, "--weights", "1,1",
            "--lambda-star", "0.0909090909", "--format", "csv", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "iteration,trace_1,trace_2,utility_1,utility_2,penalty_1,penalty_2"
        assert len(lines) > 2
