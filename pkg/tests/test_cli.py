import json

import pytest

from renorm_currents.cli import EXIT_CHECK, EXIT_INPUT, EXIT_OK, main


@pytest.fixture
def hex7(tmp_path):
    path = tmp_path / "hex7.json"
    assert main(["generate", "--kind", "hex", "--n", "7", "--out", str(path)]) == EXIT_OK
    return path


def test_generate_writes_job(hex7):
    job = json.loads(hex7.read_text())
    assert len(job["points"]) == 7
    assert job["background"] == {"kind": "lebesgue"}
    assert job["region"]["kind"] == "ball"


def test_poisson_needs_seed(tmp_path):
    assert main(["generate", "--kind", "poisson", "--n", "5"]) == EXIT_INPUT
    out = tmp_path / "p.json"
    assert main(["generate", "--kind", "poisson", "--n", "5", "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert len(json.loads(out.read_text())["points"]) == 5


def test_grow_annuli_mcr_pipeline(hex7, tmp_path):
    trace, ann, svg = tmp_path / "t.csv", tmp_path / "a.csv", tmp_path / "b.svg"
    assert main(["grow", "--points", str(hex7), "--target", "3", "--out", str(trace), "--svg", str(svg)]) == EXIT_OK
    assert trace.read_text().startswith("time,ball_id")
    assert svg.read_text().startswith("<svg")
    assert main(["annuli", "--trace", str(trace), "--out", str(ann)]) == EXIT_OK
    out = tmp_path / "m.json"
    assert main(["mcr", "--trace", str(trace), "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["K_exact"] <= rep["n"] == 7 and rep["bound_holds"]


def test_energy_command(hex7, tmp_path):
    out = tmp_path / "e.json"
    assert main(["energy", "--points", str(hex7), "--tol", "1e-2", "--out", str(out)]) == EXIT_OK
    assert "W_estimate" in json.loads(out.read_text())


def test_lorentz_command(hex7, tmp_path):
    out, dist = tmp_path / "l.json", tmp_path / "d.csv"
    args = ["lorentz", "--points", str(hex7), "--h", "0.125", "--out", str(out), "--dist-csv", str(dist)]
    assert main(args) == EXIT_OK
    assert dist.read_text().startswith("t,lambda")


def test_verify_command(hex7, tmp_path):
    out, svg = tmp_path / "v.json", tmp_path / "c.svg"
    code = main(["verify", "--points", str(hex7), "--h", "0.125", "--out", str(out), "--svg", str(svg)])
    rep = json.loads(out.read_text())
    assert code == (EXIT_OK if rep["all_hold"] else EXIT_CHECK)
    assert rep["all_hold"]


@pytest.mark.parametrize(
    "argv",
    [
        ["grow", "--points", "/nonexistent.json", "--target", "2"],
        ["generate", "--kind", "hex", "--n", "-3"],
        ["generate", "--kind", "triangle", "--n", "3"],
        ["compare-lattices", "--R", "6,x"],
        ["lorentz", "--points", "/nonexistent.json"],
    ],
)
def test_bad_input_exits_one(argv):
    assert main(argv) == EXIT_INPUT


def test_malformed_job(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"points": [[0, 0], [0, 0]]}')
    assert main(["energy", "--points", str(bad)]) == EXIT_INPUT
    bad.write_text("not json")
    assert main(["energy", "--points", str(bad)]) == EXIT_INPUT


def test_threads_env_validated(hex7, monkeypatch):
    monkeypatch.setenv("RENORM_THREADS", "many")
    assert main(["verify", "--points", str(hex7)]) == EXIT_INPUT


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "generate" in capsys.readouterr().out
