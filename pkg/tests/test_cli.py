"""End-to-end command-line tests: files produced, determinism, exit codes."""

import json
import os
import subprocess

import numpy as np
import pytest

from decayladder import PhysicalParams
from decayladder.cli import main

PHYS = PhysicalParams()
TAU = PHYS.tau_a

SIM_FILES = ["decay_time_stats.json", "ensemble_summary.csv",
             "ensemble_summary.json", "ln_traces.csv", "transition_time.json"]


def write_sim_config(path, **overrides):
    doc = {
        "cloud": {"n_total": 400, "f_exc": 0.5, "od": 0.889, "xi": 0.0},
        "grid": {"t_max": 9.5 * TAU, "n_out": 97, "error_tol": 1e-8},
        "n_realizations": 3,
        "master_seed": 20,
    }
    for key, value in overrides.items():
        section, _, sub = key.partition("__")
        if sub:
            doc[section][sub] = value
        else:
            doc[section] = value
    path.write_text(json.dumps(doc))
    return path


def read_files(out_dir, names):
    return {name: (out_dir / name).read_bytes() for name in names}


def test_simulate_outputs_and_xi_zero_decay(tmp_path):
    config = write_sim_config(tmp_path / "sim.json")
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0

    produced = sorted(p.name for p in out.iterdir())
    assert produced == sorted(SIM_FILES + ["manifest.json"])

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"
    assert manifest["master_seed"] == 20
    assert manifest["outputs"] == sorted(SIM_FILES)
    assert manifest["config"]["cloud"]["xi"] == 0.0

    # With xi = 0 the ladder decays independently: ln E = -t / tau_a.
    table = np.genfromtxt(out / "ln_traces.csv", delimiter=",", names=True)
    t = table["t_ns"] * 1e-9
    assert np.max(np.abs(table["ln_E"] + t / TAU)) < 1e-6

    stats = json.loads((out / "decay_time_stats.json").read_text())
    assert stats["source"] == "energy"
    assert stats["mean_tau_ns"] == pytest.approx(TAU * 1e9, rel=1e-5)
    assert stats["std_tau_ns"] == pytest.approx(0.0, abs=1e-3)

    transition = json.loads((out / "transition_time.json").read_text())
    assert transition["transition_time_ns"] is None  # never faster than tau_a


def test_simulate_deterministic_across_runs_and_threads(tmp_path):
    config = write_sim_config(tmp_path / "sim.json")
    for name, extra in [("a", []), ("b", []), ("c", ["--threads", "2"])]:
        rc = main(["simulate", "--config", str(config),
                   "--out", str(tmp_path / name)] + extra)
        assert rc == 0
    a = read_files(tmp_path / "a", SIM_FILES)
    assert read_files(tmp_path / "b", SIM_FILES) == a
    assert read_files(tmp_path / "c", SIM_FILES) == a

    # Manifests agree on everything except the wall-clock duration.
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    ma.pop("duration_s"), mb.pop("duration_s")
    assert ma == mb


def test_seed_override_changes_data(tmp_path):
    config = write_sim_config(tmp_path / "sim.json", cloud__xi=1.0)
    main(["simulate", "--config", str(config), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(config), "--out", str(tmp_path / "b"),
          "--seed", "123"])
    a = (tmp_path / "a" / "ensemble_summary.csv").read_bytes()
    b = (tmp_path / "b" / "ensemble_summary.csv").read_bytes()
    assert a != b
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["master_seed"] == 123


def test_config_errors_exit_2_without_outputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    out = tmp_path / "out"

    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
    assert "malformed JSON" in capsys.readouterr().err

    bad.write_text(json.dumps({"cloud": {}, "grid": {}, "typo": 1}))
    assert main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
    assert "unknown key" in capsys.readouterr().err

    assert main(["simulate", "--config", str(tmp_path / "absent.json"),
                 "--out", str(out)]) == 2
    assert "cannot read" in capsys.readouterr().err
    assert not out.exists()


def test_unstable_rk4_exits_3(tmp_path, capsys):
    config = write_sim_config(tmp_path / "sim.json",
                              grid__integrator="rk4", grid__dt_internal=1e-8)
    assert main(["simulate", "--config", str(config),
                 "--out", str(tmp_path / "out")]) == 3
    assert "stability" in capsys.readouterr().err


def test_sweep_cli(tmp_path):
    doc = {
        "base": {
            "cloud": {"n_total": 400, "f_exc": 0.5, "od": 0.889, "xi": 0.9},
            "grid": {"t_max": 2.5 * TAU, "n_out": 65, "error_tol": 1e-4},
            "n_realizations": 6,
            "master_seed": 11,
        },
        "points": [{"od": 0.889}, {"od": 0.35}],
    }
    config = tmp_path / "sweep.json"
    config.write_text(json.dumps(doc))
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(config), "--out", str(out)]) == 0

    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "od,f_exc,xi,n_realizations,mean_tau_ns,std_tau_ns,transition_ns"
    assert len(lines) == 3
    for line, od in zip(lines[1:], (0.889, 0.35)):
        cells = line.split(",")
        assert float(cells[0]) == pytest.approx(od, rel=1e-12)
        assert cells[1:4] == ["0.5", "0.9", "6"]

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "sweep"
    assert manifest["config"]["n_points"] == 2
    assert manifest["outputs"] == ["sweep.csv"]

    # stronger coupling at higher OD enhances subradiance, so the windowed
    # mean decay time grows with OD
    tau_dense = float(lines[1].split(",")[4])
    tau_dilute = float(lines[2].split(",")[4])
    assert tau_dense > tau_dilute


def test_sweep_seed_override(tmp_path):
    doc = {
        "base": {
            "cloud": {"n_total": 400, "f_exc": 0.5, "od": 0.889, "xi": 0.9},
            "grid": {"t_max": 2.5 * TAU, "n_out": 65, "error_tol": 1e-4},
            "n_realizations": 4,
            "master_seed": 11,
        },
        "points": [{"od": 0.889}],
    }
    config = tmp_path / "sweep.json"
    config.write_text(json.dumps(doc))
    main(["sweep", "--config", str(config), "--out", str(tmp_path / "a")])
    main(["sweep", "--config", str(config), "--out", str(tmp_path / "b"),
          "--seed", "999"])
    assert ((tmp_path / "a" / "sweep.csv").read_bytes()
            != (tmp_path / "b" / "sweep.csv").read_bytes())


def test_oracle_cli(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["oracle", "--n", "6", "--m", "2", "--trials", "3",
               "--seed", "33", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "oracle_report.json").read_text())
    assert report["N"] == 6 and report["M"] == 2 and report["dim"] == 15
    assert report["max_rel_mismatch"] < 1e-12
    capsys.readouterr()

    assert main(["oracle", "--n", "1", "--m", "1", "--out", str(out)]) == 2
    assert main(["oracle", "--n", "6", "--m", "0", "--out", str(out)]) == 2
    assert main(["oracle", "--n", "6", "--m", "2", "--trials", "0",
                 "--out", str(out)]) == 2
    assert main(["oracle", "--n", "40", "--m", "20", "--out", str(out)]) == 2
    capsys.readouterr()


def write_fit_inputs(tmp_path):
    config = tmp_path / "fit.json"
    config.write_text(json.dumps({
        "cloud": {"n_total": 600, "f_exc": 0.5, "od": 0.889, "xi": 1.0},
        "grid": {"t_max": 9.5 * TAU, "n_out": 97, "error_tol": 1e-4},
        "n_realizations": 6,
        "master_seed": 77,
        "fit": {"xi_bounds": [0.0, 1.5], "xtol": 0.1},
    }))
    pulse = tmp_path / "pulse.csv"
    pulse.write_text("t_ns,I\n" + "".join(
        f"{t},{v}\n" for t, v in zip(range(0, 28, 4),
                                     [0.0, 5.0, 10.0, 9.0, 4.0, 0.9, 0.05])))
    tau_ns = TAU * 1e9
    fluor = tmp_path / "fluor.csv"
    fluor.write_text("t_ns,counts\n" + "".join(
        f"{t},{2.0 if t < 20 else 2.0 + 50.0 * np.exp(-(t - 20) / tau_ns)}\n"
        for t in range(0, 271)))
    (tmp_path / "fluor.json").write_text(json.dumps({"detector": "test"}))
    return config, pulse, fluor


def test_fit_cli_with_pulse_preprocessing(tmp_path):
    config, pulse, fluor = write_fit_inputs(tmp_path)
    out = tmp_path / "out"
    rc = main(["fit", "--config", str(config), "--trace", str(fluor),
               "--pulse", str(pulse), "--out", str(out)])
    assert rc == 0
    result = json.loads((out / "fit_result.json").read_text())
    # the trace is a clean exponential, so the fitted shape factor is small
    assert result["xi_star"] < 0.2
    assert result["background_level"] == 2.0
    assert result["trace_metadata"] == {"detector": "test"}
    assert 5 <= result["n_evaluations"] <= 15
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "fit"
    assert manifest["outputs"] == ["fit_result.json"]


def test_fit_cli_input_errors(tmp_path, capsys):
    config, pulse, fluor = write_fit_inputs(tmp_path)
    out = tmp_path / "out"

    rc = main(["fit", "--config", str(config),
               "--trace", str(tmp_path / "absent.csv"), "--out", str(out)])
    assert rc == 2

    rising = tmp_path / "rising.csv"
    rising.write_text("t_ns,I\n0,0\n1,1\n2,2\n3,3\n")
    rc = main(["fit", "--config", str(config), "--trace", str(fluor),
               "--pulse", str(rising), "--out", str(out)])
    assert rc == 2
    assert "last sample" in capsys.readouterr().err

    bad = tmp_path / "badfit.json"
    doc = json.loads(config.read_text())
    doc["fit"]["algorithm"] = "nelder-mead"
    bad.write_text(json.dumps(doc))
    rc = main(["fit", "--config", str(bad), "--trace", str(fluor),
               "--out", str(out)])
    assert rc == 2
    assert "unknown key(s) in fit" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    result = subprocess.run(
        ["decay-ladder", "oracle", "--n", "5", "--m", "1", "--trials", "1",
         "--out", str(tmp_path)],
        capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    assert "oracle: N=5 M=1" in result.stdout
    assert (tmp_path / "oracle_report.json").exists()
