import json

import pytest

from ossslab.cli import EXIT_FINDING, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestExitCodes:
    def test_missing_command(self, capsys):
        with pytest.raises(SystemExit):
            main([])

    def test_bad_graph_spec(self, capsys):
        code, _, err = run(capsys, "verify-osss", "--graph", "nonsense")
        assert code == EXIT_USAGE
        assert "error:" in err

    def test_missing_graph(self, capsys):
        code, _, err = run(capsys, "exact-law")
        assert code == EXIT_USAGE

    def test_cap_needs_ack(self, capsys):
        code, _, err = run(capsys, "exact-law", "--graph", "rect:1:1",
                           "--max-exact-edges", "24")
        assert code == EXIT_USAGE
        assert "ack-exact-cost" in err

    def test_finding_exit_code(self, capsys):
        code, out, _ = run(capsys, "lemma31", "--family-kind", "constant")
        assert code == EXIT_FINDING
        payload = json.loads(out)
        assert payload["refused"] and "witness" in payload


class TestCommands:
    def test_verify_osss(self, capsys):
        code, out, _ = run(capsys, "verify-osss", "--graph", "box:square:1",
                           "--q", "2", "--p", "0.5", "--tree", "hash:1",
                           "--f", "connect:1")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["holds"] is True
        assert payload["slack"] >= -1e-12  # tight instance, rounding allowed

    def test_verify_osss_csv(self, capsys):
        code, out, _ = run(capsys, "verify-osss", "--graph", "box:square:1",
                           "--q", "2", "--p", "0.5", "--format", "csv")
        assert code == EXIT_OK
        assert out.splitlines()[0] == "edge,delta,covariance,influence"

    def test_revealment(self, capsys):
        code, out, _ = run(capsys, "revealment", "--graph", "rect:1:1",
                           "--product", "--p", "0.5", "--f", "dictator:0")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["delta"][0] == 1.0 and sum(payload["delta"][1:]) == 0.0

    def test_exact_law(self, capsys):
        code, out, _ = run(capsys, "exact-law", "--graph", "rect:1:1",
                           "--q", "2", "--p", "0.6", "--tree", "hash:4")
        assert code == EXIT_OK
        assert json.loads(out)["max_abs_error"] <= 1e-12

    def test_sample_counts_deterministic(self, capsys):
        args = ("sample", "--graph", "rect:1:1", "--q", "2", "--p", "0.5",
                "--counts", "--n-samples", "500", "--seed", "9")
        code1, out1, _ = run(capsys, *args)
        code2, out2, _ = run(capsys, *args)
        assert code1 == code2 == EXIT_OK
        assert out1 == out2
        payload = json.loads(out1)
        assert sum(payload["counts"].values()) == 500

    def test_pc_solve_bytes_stable(self, capsys):
        code1, out1, _ = run(capsys, "pc-solve", "--family", "triangular", "--q", "3")
        code2, out2, _ = run(capsys, "pc-solve", "--family", "triangular", "--q", "3")
        assert code1 == code2 == EXIT_OK
        assert out1 == out2
        payload = json.loads(out1)
        assert payload["residual"] < 1e-10
        assert 0 < payload["p_c"] < 1

    def test_duality_check_relation(self, capsys):
        code, out, _ = run(capsys, "duality-check", "--family", "hexagonal",
                           "--q", "2", "--p", "0.4")
        assert code == EXIT_OK
        assert json.loads(out)["pc_pair_residual"] < 1e-12

    def test_duality_check_pushforward(self, capsys):
        code, out, _ = run(capsys, "duality-check", "--graph", "rect:1:1",
                           "--q", "2", "--p", "0.5")
        assert code == EXIT_OK
        assert json.loads(out)["max_abs_deviation"] <= 1e-10

    def test_potts_identity(self, capsys):
        code, out, _ = run(capsys, "potts-identity", "--family", "square",
                           "--n", "1", "--q", "3", "--beta", "0.8")
        assert code == EXIT_OK
        assert json.loads(out)["abs_difference"] <= 1e-10

    def test_sharpness_scan_exact(self, capsys):
        code, out, _ = run(capsys, "sharpness-scan", "--q", "1",
                           "--beta-min", "0.4", "--beta-max", "0.8",
                           "--beta-step", "0.1", "--sizes", "1",
                           "--check-inequality")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["differential_inequality"]["violations"] == 0

    def test_lemma31_toy(self, capsys):
        code, out, _ = run(capsys, "lemma31", "--family-kind", "toy",
                           "--sizes", "2,4,8,16,32")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert not payload["refused"]
        assert abs(payload["beta1"] - 0.5) < 0.05

    def test_out_file(self, capsys, tmp_path):
        target = tmp_path / "result.json"
        code, out, _ = run(capsys, "pc-solve", "--out", str(target))
        assert code == EXIT_OK and out == ""
        assert json.loads(target.read_text())["p_c"] == pytest.approx(0.5)


class TestMonteCarloCommands:
    def test_estimate_theta(self, capsys):
        code, out, _ = run(capsys, "estimate-theta", "--family", "square",
                           "--n", "1", "--q", "1", "--p", "0.3",
                           "--burnin", "1", "--thinning", "1",
                           "--chains", "4", "--samples", "3000")
        assert code == EXIT_OK
        payload = json.loads(out)
        exact = 1 - 0.7 ** 4
        assert abs(payload["estimate"] - exact) < 4 * payload["half_width"] + 1e-9

    def test_crossing(self, capsys):
        code, out, _ = run(capsys, "crossing", "--n", "1", "--k", "2",
                           "--orientation", "vertical", "--q", "1", "--p", "0.5",
                           "--burnin", "1", "--thinning", "1",
                           "--chains", "4", "--samples", "3000")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert abs(payload["estimate"] - 0.5) < 4 * payload["half_width"] + 1e-9


@pytest.mark.parametrize("command", [
    "verify-osss", "revealment", "sample", "exact-law", "estimate-theta",
    "crossing", "sharpness-scan", "pc-solve", "duality-check", "lemma31",
    "potts-identity",
])
def test_selftests(command, capsys):
    assert main([command, "--selftest"]) == EXIT_OK
    assert "ok" in capsys.readouterr().out
