import csv
import json

import numpy as np
import pytest

from covcpd.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, read_config_file, resolve_config
from covcpd.fbasis import evaluate_basis
from covcpd.io import ingest
from covcpd.detector import DetectorConfig, detect_and_test
from covcpd.longrun import LongRunSpec
from covcpd.simlab import builtin_setting, generate_panel

QUICK = ["--mc-reps", "1000", "--grid-r", "200"]


@pytest.fixture(scope="module")
def grid_file(tmp_path_factory):
    s = builtin_setting(1)
    panel = generate_panel(s, 5)
    t = np.arange(200) / 200
    path = tmp_path_factory.mktemp("data") / "setting1.csv"
    np.savetxt(path, panel.coeffs @ evaluate_basis(s.basis, t).T, delimiter=",", fmt="%.17g")
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_detect_setting1(capsys, grid_file, tmp_path):
    code, out, _ = run(capsys, "detect", "--input", grid_file, "--out", tmp_path, "--emit-plot-data", *QUICK)
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["result"]["reject"] is True
    assert doc["result"]["theta_hat"] == pytest.approx(0.5, abs=0.01)
    assert doc["input"] == {"path": str(grid_file), "layout": "grid", "n": 300, "p": 8, "band": "2:8",
                            "grid_size": 200}
    prov = doc["provenance"]
    assert prov["command"] == "detect" and prov["config"]["mc_reps"] == 1000
    with open(tmp_path / "tn_curve.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["theta", "T_N"] and len(rows) == 300
    assert float(rows[150][0]) == 0.5


def test_detect_to_stdout(capsys, grid_file):
    code, out, _ = run(capsys, "detect", "--input", grid_file, *QUICK)
    assert code == EXIT_OK and json.loads(out)["result"]["k_hat"] > 0


def test_all_zero_file(capsys, tmp_path):
    np.savetxt(tmp_path / "zeros.csv", np.zeros((60, 50)), delimiter=",")
    code, out, _ = run(capsys, "detect", "--input", tmp_path / "zeros.csv", *QUICK)
    res = json.loads(out)["result"]
    assert code == EXIT_OK and res["reject"] is False and res["t_max"] == 0.0


def test_data_errors_exit_2(capsys, tmp_path):
    values = np.ones((40, 30))
    values[7, 3] = np.inf
    np.savetxt(tmp_path / "inf.csv", values, delimiter=",")
    code, _, err = run(capsys, "detect", "--input", tmp_path / "inf.csv")
    assert code == EXIT_DATA and "row 7, column 3" in err
    (tmp_path / "ragged.csv").write_text("1,2,3\n4,5\n")
    assert run(capsys, "detect", "--input", tmp_path / "ragged.csv")[0] == EXIT_DATA
    np.savetxt(tmp_path / "short.csv", np.ones((10, 30)), delimiter=",")
    assert run(capsys, "detect", "--input", tmp_path / "short.csv")[0] == EXIT_DATA
    np.savetxt(tmp_path / "narrow.csv", np.ones((40, 5)), delimiter=",")
    assert run(capsys, "detect", "--input", tmp_path / "narrow.csv")[0] == EXIT_DATA


def test_usage_errors_exit_1(capsys, grid_file, tmp_path):
    assert run(capsys, "detect", "--input", grid_file, "--bogus")[0] == EXIT_USAGE
    assert run(capsys, "detect")[0] == EXIT_USAGE
    assert run(capsys, "detect", "--input", tmp_path / "missing.csv")[0] == EXIT_USAGE
    assert run(capsys, "detect", "--input", grid_file, "--alpha", "1.5")[0] == EXIT_USAGE
    assert run(capsys, "detect", "--input", grid_file, "--kernel", "hann")[0] == EXIT_USAGE
    assert run(capsys, "detect", "--input", grid_file, "--emit-plot-data")[0] == EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys)[0] == EXIT_USAGE


def test_null_quantile(capsys, tmp_path):
    code, out, _ = run(capsys, "null-quantile", "--rho", "1", "--alphas", "0.05,0.01",
                       "--mc-reps", "20000", "--grid-r", "2000")
    doc = json.loads(out)
    assert code == EXIT_OK
    crit = {q["alpha"]: q["crit"] for q in doc["quantiles"]}
    # about three Monte Carlo standard errors at M = 20000
    assert crit[0.05] == pytest.approx(1.8444, abs=0.06)
    assert crit[0.01] > crit[0.05]
    (tmp_path / "rho.json").write_text("[1.0, 0.5]")
    code, out, _ = run(capsys, "null-quantile", "--rho", tmp_path / "rho.json", "--cache-dir", tmp_path / "cache",
                       *QUICK)
    assert code == EXIT_OK and json.loads(out)["rho"] == [1.0, 0.5]
    assert len(list((tmp_path / "cache").iterdir())) == 1
    assert run(capsys, "null-quantile", "--rho", "1,-2")[0] == EXIT_USAGE


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nalpha = 0.01\nseed = 5\nmc-reps = 300\niid = yes\nbandwidth = auto\n")
    values = read_config_file(cfg_file)
    assert values == {"alpha": 0.01, "seed": 5, "mc_reps": 300, "iid": True, "bandwidth": None}
    cfg = resolve_config("detect", {"alpha": 0.1}, values, env={"COVCPD_SEED": "9"})
    assert cfg.alpha == 0.1 and cfg.seed == 5 and cfg.mc_reps == 300 and cfg.iid
    assert resolve_config("detect", {}, {}, env={"COVCPD_SEED": "9"}).seed == 9
    assert resolve_config("detect", {}, {}, env={}).seed == 0
    assert resolve_config("simulate", {}, {}, env={}).iid is True


def test_config_file_on_command_line(capsys, grid_file, tmp_path, monkeypatch):
    (tmp_path / "run.cfg").write_text("alpha = 0.2\nseed = 4\nmc-reps = 500\ngrid-r = 100\n")
    monkeypatch.setenv("COVCPD_SEED", "77")
    code, out, _ = run(capsys, "detect", "--input", grid_file, "--config", tmp_path / "run.cfg", "--seed", "3")
    conf = json.loads(out)["provenance"]["config"]
    assert code == EXIT_OK
    assert (conf["alpha"], conf["seed"], conf["mc_reps"]) == (0.2, 3, 500)
    (tmp_path / "bad.cfg").write_text("colour = blue\n")
    assert run(capsys, "detect", "--input", grid_file, "--config", tmp_path / "bad.cfg")[0] == EXIT_USAGE


def test_env_seed_fallback(capsys, grid_file, monkeypatch):
    monkeypatch.setenv("COVCPD_SEED", "77")
    _, out, _ = run(capsys, "detect", "--input", grid_file, *QUICK)
    assert json.loads(out)["provenance"]["config"]["seed"] == 77


def test_segment(capsys, tmp_path):
    from covcpd.simlab import generate_regimes
    from covcpd.io import write_coefficients

    s = builtin_setting(1)
    panel, truth = generate_regimes([s.sigma1, s.sigma2, s.sigma1], [120, 120, 120], seed=3)
    write_coefficients(tmp_path / "three.csv", panel)
    code, _, _ = run(capsys, "segment", "--input", tmp_path / "three.csv", "--layout", "coefficients",
                     "--out", tmp_path, "--emit-plot-data", *QUICK)
    assert code == EXIT_OK
    seg = json.loads((tmp_path / "segments.json").read_text())["segmentation"]
    assert len(seg["change_points"]) == 2
    assert "none" in seg["multiplicity_correction"]
    assert (tmp_path / "segments.csv").read_text().startswith("start,stop,depth,split,stop_reason")


def test_simulate_round_trip(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", "--settings", "1", "--sigma-sq", "6", "--n-per-group", "40",
                     "--reps", "3", "--seed", "12", "--out", tmp_path, "--emit-panels", "--emit-plot-data",
                     "--mc-reps", "500", "--grid-r", "100")
    assert code == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["provenance"]["config"]["iid"] is True
    row = report["rows"][0]
    with open(tmp_path / "replicates.csv") as fh:
        reps = list(csv.DictReader(fh))
    assert len(reps) == 3 and (tmp_path / "rates.csv").exists()
    cfg = DetectorConfig(mc_reps=500, grid_r=100, seed=row["null_seed"], longrun=LongRunSpec(iid_mode=True))
    for r in reps:
        panel = ingest(tmp_path / "panels" / f"setting1_sigsq6_n40_rep{r['rep']}.csv", "coefficients")
        res = detect_and_test(panel, cfg)
        assert repr(res.t_max) == r["t_max"]
        assert str(res.reject) == r["reject"] and str(res.k_hat) == r["k_hat"]


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
