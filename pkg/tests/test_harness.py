import json
import os

import numpy as np
import pytest

from wavefilter.cli import main
from wavefilter.config import build_config, parse_dotted
from wavefilter.figures import FigureError, read_csv_columns
from wavefilter.harness import run_compare, run_filter, run_riccati, run_simulate

COMPARE_CFG = """
model.kind = ParaxialNLS
model.linear = true
model.modes_per_dim = 4
noise.coupling = additive
noise.wiener.lambdas = 0.05
observation.functionals = mode_re:0, mode_im:1
path.dt = 0.005
path.t_end = 0.1
prior.cov = 0.1
filter.kind = both
filter.particle.n = 200
seed = 11
"""

RICCATI_CFG = """
model.kind = ParaxialNLS
model.linear = true
model.modes_per_dim = 2
noise.coupling = additive
noise.wiener.lambdas = 0.2
observation.functionals = mode_re:0
path.dt = 0.001
path.t_end = 0.5
prior.cov = 0.2
filter.kind = kalman
seed = 3
"""


def cfg(text):
    return build_config(parse_dotted(text))


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def csv_files(out):
    return sorted(f for f in os.listdir(out) if f.endswith(".csv"))


def test_simulate_outputs(tmp_path):
    out = str(tmp_path / "sim")
    payload = run_simulate(cfg(COMPARE_CFG), out, quiet=True)
    assert payload["status"] == "completed"
    cols = read_csv_columns(os.path.join(out, "trajectory.csv"), ["time", "mode0_re", "mode3_im"])
    assert cols["time"].shape[0] == 21
    obs = read_csv_columns(os.path.join(out, "observations.csv"), ["time", "y_1", "y_2"])
    assert obs["time"].shape[0] == 20
    meta = json.loads(read_bytes(os.path.join(out, "trajectory.csv.meta.json")))
    assert {"config_hash", "seed", "version", "command"} <= set(meta)


def test_filter_particle_run(tmp_path):
    flat = parse_dotted(COMPARE_CFG)
    flat["filter.kind"] = "particle"
    flat["noise.coupling"] = "multiplicative"
    out = str(tmp_path / "pf")
    payload = run_filter(build_config(flat), out, quiet=True)
    assert payload["status"] == "completed"
    cols = read_csv_columns(
        os.path.join(out, "filter_pf.csv"), ["time", "mean_0", "cov_trace", "ess", "log_evidence"]
    )
    assert cols["time"].shape[0] == 21
    assert np.all(np.isfinite(cols["ess"]))
    assert np.all(cols["ess"] <= 200 + 1e-9)
    assert os.path.exists(os.path.join(out, "tracking.png"))
    assert os.path.exists(os.path.join(out, "ess.png"))
    assert os.path.exists(os.path.join(out, "innovations.csv"))


def test_compare_run_outputs(tmp_path):
    out = str(tmp_path / "cmp")
    payload = run_compare(cfg(COMPARE_CFG), out, quiet=True)
    assert {"pf", "kf", "max_abs_gap_final"} <= set(payload)
    files = csv_files(out)
    assert files == [
        "comparison.csv",
        "filter_kf.csv",
        "filter_pf.csv",
        "innovations.csv",
        "observations.csv",
        "trajectory.csv",
    ]
    comp = read_csv_columns(os.path.join(out, "comparison.csv"), ["time", "gap_0", "kfstd_0", "max_abs_gap"])
    assert comp["max_abs_gap"].shape[0] == 21
    kf = read_csv_columns(os.path.join(out, "filter_kf.csv"), ["time", "cov_trace"])
    assert np.all(np.diff(kf["time"]) > 0)
    for fig in ("tracking.png", "covariance.png", "ess.png", "innovation.png"):
        assert os.path.getsize(os.path.join(out, fig)) > 0


def test_compare_requires_both(tmp_path):
    flat = parse_dotted(COMPARE_CFG)
    flat["filter.kind"] = "kalman"
    from wavefilter.config import ConfigError

    with pytest.raises(ConfigError):
        run_compare(build_config(flat), str(tmp_path / "x"), quiet=True)


def test_riccati_run_outputs(tmp_path):
    out = str(tmp_path / "ric")
    payload = run_riccati(cfg(RICCATI_CFG), out, quiet=True)
    assert payload["max_rel_gap"] < 1e-4
    cols = read_csv_columns(os.path.join(out, "riccati.csv"), ["time", "P_0_0", "P_3_3"])
    assert cols["P_0_0"][0] == pytest.approx(0.2)
    gain = read_csv_columns(os.path.join(out, "gain.csv"), ["time", "K_0_0"])
    assert gain["time"].shape[0] == cols["time"].shape[0]
    assert os.path.exists(os.path.join(out, "covariance.png"))


def test_byte_identical_reruns(tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    run_compare(cfg(COMPARE_CFG), out1, quiet=True)
    run_compare(cfg(COMPARE_CFG), out2, quiet=True)
    for name in csv_files(out1):
        assert read_bytes(os.path.join(out1, name)) == read_bytes(os.path.join(out2, name)), name


def test_different_seed_changes_output(tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    flat = parse_dotted(COMPARE_CFG)
    run_compare(build_config(flat), out1, quiet=True)
    flat["seed"] = "12"
    run_compare(build_config(flat), out2, quiet=True)
    assert read_bytes(os.path.join(out1, "trajectory.csv")) != read_bytes(
        os.path.join(out2, "trajectory.csv")
    )


def test_guard_stopped_run_partial_outputs(tmp_path):
    flat = parse_dotted(COMPARE_CFG)
    flat["filter.kind"] = "particle"
    flat["noise.coupling"] = "multiplicative"
    flat["path.guard_lambda"] = "0.4"  # below typical prior draws
    flat["x0"] = "1+0j, 0, 0, 0"
    out = str(tmp_path / "guard")
    payload = run_filter(build_config(flat), out, quiet=True)
    assert payload["status"] == "guard_stopped"
    cols = read_csv_columns(os.path.join(out, "trajectory.csv"), ["time"])
    assert cols["time"].shape[0] < 21
    summary = json.loads(read_bytes(os.path.join(out, "summary.json")))
    assert summary["status"] == "guard_stopped"


def test_cli_exit_codes(tmp_path):
    cfg_path = tmp_path / "good.cfg"
    cfg_path.write_text(COMPARE_CFG + "\noutput.dir = " + str(tmp_path / "cli_out") + "\n")
    assert main(["compare", "--config", str(cfg_path), "--quiet"]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text(COMPARE_CFG.replace("observation.functionals = mode_re:0, mode_im:1", ""))
    assert main(["filter", "--config", str(bad), "--out", str(tmp_path / "x"), "--quiet"]) == 2
    assert main(["filter", "--config", str(tmp_path / "missing.cfg"), "--out", "x"]) == 2
    # no output dir anywhere -> config error
    okc = tmp_path / "no_out.cfg"
    okc.write_text(COMPARE_CFG)
    assert main(["simulate", "--config", str(okc), "--quiet"]) == 2


def test_cli_seed_override(tmp_path):
    cfg_path = tmp_path / "c.cfg"
    cfg_path.write_text(COMPARE_CFG)
    out1, out2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    assert main(["simulate", "--config", str(cfg_path), "--out", out1, "--seed", "42", "--quiet"]) == 0
    assert main(["simulate", "--config", str(cfg_path), "--out", out2, "--seed", "42", "--quiet"]) == 0
    assert read_bytes(os.path.join(out1, "trajectory.csv")) == read_bytes(
        os.path.join(out2, "trajectory.csv")
    )


def test_figures_schema_errors(tmp_path):
    from wavefilter.figures import render_covariance, render_ess

    bad = tmp_path / "bad.csv"
    bad.write_text("time,mean_0\n0,1\n")
    with pytest.raises(FigureError) as err:
        render_covariance(str(bad), None, str(tmp_path / "o.png"))
    assert "cov_trace" in str(err.value)
    empty = tmp_path / "empty.csv"
    empty.write_text("time,ess\n")
    with pytest.raises(FigureError):
        render_ess(str(empty), str(tmp_path / "o2.png"))
    assert not os.path.exists(tmp_path / "o2.png")


def test_threads_env_bound(monkeypatch):
    from wavefilter.parallel import max_workers

    monkeypatch.delenv("WAVEFILTER_THREADS", raising=False)
    assert max_workers() == 1
    monkeypatch.setenv("WAVEFILTER_THREADS", "4")
    assert max_workers() == 4
    monkeypatch.setenv("WAVEFILTER_THREADS", "zebra")
    with pytest.raises(ValueError):
        max_workers()
