import argparse
import json

import pytest

from jbsd.cli import main, parse_step


def test_parse_step():
    assert parse_step("linesearch") == ("linesearch", 1.0)
    assert parse_step("fixed") == ("fixed", 1.0)
    assert parse_step("fixed:0.9") == ("fixed", 0.9)
    for bad in ("fixed:x", "newton"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_step(bad)


def test_simulate_solve_recover(tmp_path, capsys):
    assert main(["simulate", "--n", "96", "--seed", "2", "--out", str(tmp_path)]) == 0
    inst = tmp_path / "instance.json"
    doc = json.loads(inst.read_text())
    assert doc["shape"]["n"] == 96 and len(doc["truth"]) == 2
    assert main(["solve", str(inst), "--step", "linesearch", "--tol", "1e-10", "--use-truth",
                 "--out", str(tmp_path)]) == 0
    est = json.loads((tmp_path / "estimates.json").read_text())
    assert est["status"] == "converged"
    assert main(["recover", str(tmp_path / "estimates.json"), "--instance", str(inst),
                 "--out", str(tmp_path)]) == 0
    ch = json.loads((tmp_path / "channels.json").read_text())
    for user in ch["users"]:
        assert max(user["delay_errors"]) <= 1e-4
        assert user["residual"] <= 1e-6
    assert "converged" in capsys.readouterr().out


def test_solve_blind(tmp_path):
    main(["simulate", "--n", "64", "--seed", "3", "--out", str(tmp_path)])
    code = main(["solve", str(tmp_path / "instance.json"), "--out", str(tmp_path)])
    assert code == 0


def test_experiment_and_plot(tmp_path):
    out = tmp_path / "pt"
    assert main(["experiment", "phase-transition", "--small", "--trials", "2", "--seed", "4",
                 "--step", "linesearch", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["spec"]["seed"] == 4 and manifest["spec"]["n_values"] == [64]
    assert (out / "phase_transition.svg").exists()
    again = tmp_path / "again"
    main(["experiment", "phase-transition", "--config", str(out / "manifest.json"), "--out", str(again),
          "--no-plots"])
    assert (out / "phase_transition.csv").read_bytes() == (again / "phase_transition.csv").read_bytes()
    figs = tmp_path / "figs"
    assert main(["plot", "--data", str(again), "--out", str(figs)]) == 0
    assert (figs / "phase_transition.svg").read_bytes() == (out / "phase_transition.svg").read_bytes()


def test_config_file_spec(tmp_path):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"n_values": [32], "trials": 2}))
    main(["experiment", "diagnostics", "--config", str(cfg), "--out", str(tmp_path / "d"), "--threads", "1"])
    assert (tmp_path / "d" / "diagnostics.csv").read_text().startswith("n,trials,median_trip")


def test_bad_arguments():
    with pytest.raises(SystemExit):
        main(["experiment", "nonsense"])
    with pytest.raises(SystemExit):
        main(["solve", "x.json", "--step", "bogus"])
