import json
import math

import pytest

import arasim.lindblad
from arasim.cli import EXIT_INVALID, EXIT_OK, EXIT_PARTIAL, main
from arasim.csvout import read_csv, write_csv
from arasim.errors import SolverError


@pytest.fixture
def config_file(tmp_path):
    cfg = {
        "name": "cli",
        "method": "ame_direct",
        "basis": "full",
        "model": {"n_qubits": 2, "up_fraction": "1/2", "anneal_time": 5.0},
        "bath": {"eta": 1e-2, "coupling": "independent"},
        "sweep": {"tau": [2.0, 5.0]},
        "output": str(tmp_path / "out"),
        "s_points": 11,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_spectrum(tmp_path, capsys):
    code = main(["spectrum", "--n", "8", "--c", "7/8", "--points", "51", "--out", str(tmp_path / "s.csv"),
                 "--gap-out", str(tmp_path / "g.csv")])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "min gap" in text and "adiabatic timescale" in text
    _, rows = read_csv(tmp_path / "s.csv")
    assert len(rows) == 51 and "E_0" in rows[0]
    assert (tmp_path / "g.csv").exists()


def test_spectrum_scaling(tmp_path, capsys):
    assert main(["spectrum", "--scaling", "6,8,10", "--c", "1/2", "--out", str(tmp_path / "sc.csv")]) == EXIT_OK
    _, rows = read_csv(tmp_path / "sc.csv")
    assert [r["N"] for r in rows] == ["6", "8", "10"]


def test_sweep_runs_and_reports(config_file, tmp_path, capsys):
    assert main(["sweep", str(config_file)]) == EXIT_OK
    assert "2 sweep point(s)" in capsys.readouterr().out
    _, rows = read_csv(tmp_path / "out" / "summary.csv")
    assert len(rows) == 2


def test_sweep_override_and_dry_run(config_file, capsys):
    assert main(["sweep", str(config_file), "--sweep", "eta=0,0.01", "--dry-run"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "4 sweep point(s)" in out and "eta=0.01" in out


def test_invalid_configuration_exit_code(config_file, capsys):
    assert main(["sweep", str(config_file), "--c", "1.3"]) == EXIT_INVALID
    assert "model.up_fraction" in capsys.readouterr().err
    assert main(["sweep", str(config_file), "--basis", "dicke"]) == EXIT_INVALID
    assert main(["sweep", str(config_file.parent / "missing.json")]) == EXIT_INVALID
    with pytest.raises(SystemExit) as usage:
        main(["sweep"])
    assert usage.value.code == EXIT_INVALID


def test_partial_failure_exit_code(config_file, monkeypatch):
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 1:
            raise SolverError("injected")
        return original(*args, **kwargs)

    original = arasim.lindblad.integrate_ame
    monkeypatch.setattr(arasim.lindblad, "integrate_ame", flaky)
    assert main(["sweep", str(config_file), "--workers", "1"]) == EXIT_PARTIAL


def test_evolve_single_point(tmp_path, capsys):
    out = tmp_path / "one.csv"
    code = main(["evolve", "--n", "2", "--c", "1/2", "--tau", "5", "--eta", "0.01", "--coupling", "independent",
                 "--method", "mcwf", "--trajectories", "4", "--s-points", "6", "--out", str(out)])
    assert code == EXIT_OK
    assert "+/-" in capsys.readouterr().out
    _, rows = read_csv(out)
    assert list(rows[0]) == ["s", "mean_pg", "stderr_pg"] and len(rows) == 6


def test_evolve_rejects_sweeps(config_file):
    assert main(["evolve", str(config_file)]) == EXIT_INVALID


def test_preset_listing_and_dry_run(capsys):
    assert main(["preset", "--list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "fig7" in out and "ara-n8-gamma1-tau250-independent" in out
    assert main(["preset", "fig11", "--dry-run"]) == EXIT_OK
    assert "80 sweep point(s)" in capsys.readouterr().out
    assert main(["preset", "fig8", "--show"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["model"]["n_qubits"] == 4
    assert main(["preset", "fig99"]) == EXIT_INVALID


def test_fit_landau_zener(tmp_path, capsys):
    rows = [(t, 1 - math.exp(-math.pi * t / 200)) for t in (5, 10, 20, 40, 80)]
    write_csv(tmp_path / "d.csv", ("tau", "p_g"), rows)
    assert main(["fit", str(tmp_path / "d.csv"), "--model", "landau_zener"]) == EXIT_OK
    fit = json.loads(capsys.readouterr().out)
    assert fit["parameters"]["tau_ad"] == pytest.approx(50, rel=1e-6)
    assert main(["fit", str(tmp_path / "d.csv"), "--model", "thermal_tail"]) == EXIT_INVALID
