import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conservative_cf.cli import NO_EIF_MSG, parse_grid, run, substream

GOLDEN = Path(__file__).parent / "golden"


def schema(obj):
    """Structure of a JSON value: key sets and leaf types, not values."""
    if isinstance(obj, dict):
        return {k: schema(v) for k, v in sorted(obj.items())}
    if isinstance(obj, list):
        return [schema(obj[0])] if obj else []
    if isinstance(obj, bool) or obj is None:
        return type(obj).__name__
    if isinstance(obj, (int, float)):
        return "number"
    return type(obj).__name__


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["simulate", "--dgp", "hirano", "--n", "300", "--seed", "7",
                "--out", str(d / "hirano.csv")]) == 0
    assert run(["simulate", "--dgp", "binary_gauss", "--n", "600", "--seed", "3",
                "--out", str(d / "binary.csv"), "--truth", str(d / "binary_truth.json")]) == 0
    return d


def run_json(argv, path):
    rc = run(argv + ["--out", str(path)])
    assert rc == 0
    return json.loads(path.read_text())


class TestSimulate:
    def test_outputs(self, workdir):
        lines = (workdir / "hirano.csv").read_text().splitlines()
        assert lines[0] == "x1,x2,a,y" and len(lines) == 301
        truth = json.loads((workdir / "truth.json").read_text())
        assert truth["result"]["value"][0] == 2.0
        assert truth["seed"] == 7 and "version" in truth and "config" in truth

    def test_two_lines_range(self, tmp_path):
        out = tmp_path / "tl.csv"
        assert run(["simulate", "--dgp", "two_lines", "--n", "50", "--a-range", "1", "2",
                    "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "a,y"


class TestPipeline:
    def test_round_trip(self, workdir, tmp_path):
        data = str(workdir / "hirano.csv")
        res = run_json(["fit-cdf", "--in", data, "--a-grid", "0.2:2.5:8", "--y-points", "64"],
                       tmp_path / "field.json")
        assert res["result"]["field"]["provenance"] == "plugin" and len(res["result"]["field"]["laws"]) == 8
        out = tmp_path / "curves.csv"
        assert run(["curve", "--in", data, "--anchors", "5", "--h", "1", "--nu", "1",
                    "--y-points", "128", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# ") and json.loads(lines[0][2:])["seed"] == 0
        assert lines[1] == "anchor_id,a,y_star"
        assert len({row.split(",")[0] for row in lines[2:]}) == 5

    def test_dr_learner_and_barycenter(self, workdir, tmp_path):
        data = str(workdir / "hirano.csv")
        res = run_json(["fit-cdf", "--in", data, "--estimator", "dr_learner",
                        "--a-grid", "0.3:1.5:4", "--y-points", "64"], tmp_path / "dr.json")
        assert res["result"]["field"]["provenance"] == "dr_learner"
        res = run_json(["barycenter", "--in", data, "--a-grid", "0.3:1.5:4",
                        "--y-points", "64"], tmp_path / "bary.json")
        assert "result" in res

    def test_binary_commands(self, workdir, tmp_path):
        data = str(workdir / "binary.csv")
        res = run_json(["bounds", "--in", data, "--t=-1:1:3", "--y-points", "128"],
                       tmp_path / "b.json")
        assert "result" in res
        for method in ("plugin", "one_step"):
            res = run_json(["effect", "--in", data, "--kind", "quadratic", "--method", method,
                            "--y-points", "128"], tmp_path / f"q_{method}.json")
            assert res["result"]["value"] > 0
        res = run_json(["hulc", "--in", data, "--alpha", "0.25", "--y-points", "64"],
                       tmp_path / "h.json")
        assert res["result"]["B"] == 3 and res["result"]["lo"] <= res["result"]["hi"]

    def test_band(self, workdir, tmp_path):
        out = tmp_path / "band.csv"
        assert run(["band", "--in", str(workdir / "hirano.csv"), "--n-boot", "100",
                    "--a-grid", "0.3:2:5", "--y-points", "64", "--threads", "2",
                    "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[1] == "a,center,lo,hi" and len(rows) == 7

    def test_constant_outcome_null_effect(self, tmp_path):
        path = tmp_path / "const.csv"
        rng = np.random.default_rng(0)
        lines = ["x1,a,y"] + [f"{rng.normal()},{k % 2},3.0" for k in range(80)]
        path.write_text("\n".join(lines) + "\n")
        res = run_json(["effect", "--in", str(path), "--kind", "quadratic"],
                       tmp_path / "e.json")
        assert abs(res["result"]["value"]) <= 1e-9


class TestExitCodes:
    def test_malformed_csv(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x1,a,y\n1,0,2\n1,0\n")
        assert run(["fit-cdf", "--in", str(path)]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,a,y\n1,0,2\n")
        assert run(["fit-cdf", "--in", str(path)]) == 2

    def test_unknown_flag_and_command(self):
        assert run(["fit-cdf", "--bogus"]) == 2
        assert run(["transmogrify"]) == 2

    def test_missing_file(self, tmp_path):
        assert run(["fit-cdf", "--in", str(tmp_path / "nope.csv")]) == 2

    def test_one_step_continuous(self, workdir, capsys):
        rc = run(["fit-cdf", "--in", str(workdir / "hirano.csv"), "--estimator", "one_step"])
        assert rc == 2 and "efficient influence function" in capsys.readouterr().err
        assert "efficient influence function" in NO_EIF_MSG

    def test_dr_learner_discrete(self, workdir):
        assert run(["fit-cdf", "--in", str(workdir / "binary.csv"),
                    "--estimator", "dr_learner"]) == 2

    def test_bad_alpha_and_grid(self, workdir):
        assert run(["hulc", "--in", str(workdir / "binary.csv"), "--alpha", "1.5"]) == 2
        assert run(["fit-cdf", "--in", str(workdir / "hirano.csv"), "--a-grid", "2:1:5"]) == 2

    def test_numerical_failure(self, workdir, monkeypatch):
        import conservative_cf.cli as cli

        def boom(args):
            raise FloatingPointError("overflow")

        monkeypatch.setattr(cli, "cmd_fit_cdf", boom)
        assert cli.run(["fit-cdf", "--in", str(workdir / "hirano.csv")]) == 3

    def test_version(self, capsys):
        assert run(["--version"]) == 0


def test_grid_parsing():
    np.testing.assert_allclose(parse_grid("0:1:3"), [0, 0.5, 1])
    np.testing.assert_allclose(parse_grid("1,2,4"), [1, 2, 4])
    assert parse_grid(None) is None
    assert substream(5, 1) == substream(5, 1) != substream(5, 2)


DETERMINISM_CASES = {
    "simulate": ["simulate", "--dgp", "hirano", "--n", "100", "--seed", "11"],
    "curve": ["curve", "--anchors", "3", "--y-points", "64", "--seed", "5"],
    "band": ["band", "--n-boot", "100", "--a-grid", "0.3:2:4", "--y-points", "32",
             "--threads", "3", "--seed", "2"],
    "hulc": ["hulc", "--alpha", "0.25", "--method", "one_step", "--y-points", "64"],
}


@pytest.mark.parametrize("name", sorted(DETERMINISM_CASES))
def test_byte_identical_reruns(name, workdir, tmp_path):
    argv = list(DETERMINISM_CASES[name])
    if name != "simulate":
        data = workdir / ("binary.csv" if name == "hulc" else "hirano.csv")
        argv += ["--in", str(data)]
    out = tmp_path / "out"
    outputs = []
    for _ in range(2):
        assert run(argv + ["--out", str(out)]) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


GOLDEN_CASES = {
    "fit_cdf": (["fit-cdf", "--a-grid", "0.5:1.5:3", "--y-points", "16"], "hirano.csv"),
    "effect": (["effect", "--kind", "quadratic", "--method", "one_step", "--y-points", "64"],
               "binary.csv"),
    "bounds": (["bounds", "--t=-1:1:3", "--y-points", "64"], "binary.csv"),
    "hulc": (["hulc", "--alpha", "0.25", "--y-points", "64"], "binary.csv"),
    "barycenter": (["barycenter", "--y-points", "64"], "binary.csv"),
}


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_golden_schema(name, workdir, tmp_path):
    argv, data = GOLDEN_CASES[name]
    res = run_json(argv + ["--in", str(workdir / data)], tmp_path / "o.json")
    expected = json.loads((GOLDEN / f"{name}.schema.json").read_text())
    assert schema(res) == expected


def test_console_script(tmp_path):
    out = tmp_path / "d.csv"
    proc = subprocess.run([sys.executable, "-m", "conservative_cf.cli", "simulate", "--dgp",
                           "location_gauss", "--n", "20", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().startswith("x1,a,y")
