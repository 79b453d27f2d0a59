import csv
import json
import math

import numpy as np
import pytest
import yaml

from nsplab.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, main, parse_config
from nsplab.core import ValidationError

MINIMAL = """
model: one_fluid
params: {A: 1, n_minus: 1, n_plus: 2, u_minus: 0, eps_smooth: 0.1}
grid: {L: 100}
time: {t_final: 50}
"""

SMALL = {
    "model": "one_fluid",
    "params": {"A": 1, "n_minus": 1, "n_plus": 2, "u_minus": 0, "eps_smooth": 0.1},
    "grid": {"L": 220, "dx": 0.5},
    "time": {"t_final": 0.5, "output_stride": 5},
    "perturbation": {"amplitude": 0.02},
}


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def write(tmp_path, obj, name="job.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(obj) if not isinstance(obj, str) else obj)
    return p


def test_minimal_config_derives_u_plus():
    job = parse_config(MINIMAL)
    assert job.settings["params"]["u_plus"] == pytest.approx(math.sqrt(2) * math.log(2), rel=1e-14)
    assert job.settings["params"]["u_plus"] == pytest.approx(0.980258, abs=1e-6)
    assert job.settings["time"]["cfl_number"] == 0.4  # defaults are materialised


def test_inconsistent_u_plus_rejected_with_expected_value():
    text = MINIMAL.replace("eps_smooth: 0.1}", "eps_smooth: 0.1, u_plus: 1.0}")
    with pytest.raises(ValidationError, match="0.98025"):
        parse_config(text)


def test_empty_text_lists_all_missing_keys():
    with pytest.raises(ValidationError) as exc:
        parse_config("")
    msg = str(exc.value)
    for key in ("model", "params.A", "params.n_minus", "params.n_plus", "grid.L", "time.t_final"):
        assert key in msg


@pytest.mark.parametrize("bad", [
    MINIMAL.replace("L: 100", "L: 100, dxx: 0.1"),
    MINIMAL + "extra: {a: 1}\n",
    MINIMAL.replace("t_final: 50", "t_final: fifty"),
    MINIMAL.replace("model: one_fluid", "model: three_fluid"),
])
def test_invalid_configs(bad):
    with pytest.raises(ValidationError):
        parse_config(bad)


def test_identical_configs_hash_identically():
    assert parse_config(MINIMAL).digest == parse_config(MINIMAL + "\n").digest
    assert parse_config(MINIMAL).digest != parse_config(MINIMAL.replace("L: 100", "L: 90")).digest


def test_profile_job_monotone_density(tmp_path):
    cfg = {k: SMALL[k] for k in ("model", "params", "grid")}
    cfg["profile"] = {"times": [10]}
    out = tmp_path / "prof"
    assert main(["profile", "--config", str(write(tmp_path, cfg)), "--out", str(out)]) == EXIT_OK
    files = list(out.glob("profile_t*.csv"))
    assert len(files) == 1
    header, data = read_csv(files[0])
    assert header == ["x", "nr", "ur", "phir", "dnr", "dur", "dphir"]
    assert np.all(np.diff(data[:, 1]) >= 0)
    manifest = json.loads((out / "manifest.json").read_text())
    assert sorted(manifest["outputs"]) == sorted(p.name for p in out.iterdir())


def test_simulate_rerun_is_byte_identical_and_energy_replays(tmp_path):
    cfg = dict(SMALL, outputs={"dump_states": True, "dump_stride": 1})
    path = write(tmp_path, cfg)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(path), "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", str(path), "--out", str(b)]) == EXIT_OK
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert "energy.csv" in csvs and any(n.startswith("state_") for n in csvs)
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()

    e = tmp_path / "e"
    assert main(["energy", str(a), "--out", str(e)]) == EXIT_OK
    h1, d1 = read_csv(a / "energy.csv")
    h2, d2 = read_csv(e / "energy.csv")
    assert h1 == h2
    assert np.allclose(d1, d2, rtol=1e-12, atol=1e-15)


def test_sweep_creates_isolated_runs(tmp_path):
    cfg = dict(SMALL, sweep={"param": "params.eps_smooth", "values": [0.05, 0.1, 0.2]})
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(write(tmp_path, cfg)), "--out", str(out), "--workers", "2"])
    assert code == EXIT_OK
    runs = sorted(p for p in out.iterdir() if p.is_dir())
    assert len(runs) == 3
    summary = json.loads((out / "summary.json").read_text())
    assert [r["value"] for r in summary["runs"]] == [0.05, 0.1, 0.2]
    assert len({r["config_hash"] for r in summary["runs"]}) == 3
    for r in runs:
        assert (r / "energy.csv").exists() and (r / "manifest.json").exists()


def test_linear_job_outputs(tmp_path):
    cfg = {"linear": {"xi": [0.0, 1.0, 2.0]}}
    out = tmp_path / "lin"
    assert main(["linear", "--config", str(write(tmp_path, cfg)), "--out", str(out), "--greens", "0"]) == EXIT_OK
    header, data = read_csv(out / "spectrum.csv")
    assert header[:5] == ["xi", "re_lp", "im_lp", "re_lm", "im_lm"]
    assert data[1, 1] == pytest.approx(-0.5) and data[1, 2] == pytest.approx(math.sqrt(5) / 2)
    gh, g = read_csv(out / "greens.csv")
    assert gh[:4] == ["xi", "t", "re_G11", "im_G11"]
    assert np.all(g[:, 2] == 1.0)  # G(0) = I
    assert json.loads((out / "config.json").read_text())["coefficient_mode"] == "consistent"


def test_exit_codes(tmp_path):
    bad = write(tmp_path, MINIMAL.replace("L: 100", "L: -5"), "bad.yaml")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    missing = tmp_path / "nope.yaml"
    assert main(["simulate", "--config", str(missing), "--out", str(tmp_path / "y")]) == EXIT_IO
    assert main(["check", "--criteria", "0"]) == EXIT_VALIDATION


def test_check_subcommand_writes_report(tmp_path, capsys):
    assert main(["check", "--criteria", "9", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "check.json").read_text())
    assert rep[0]["number"] == 9 and rep[0]["passed"]
    assert "criterion 9 PASS" in capsys.readouterr().out
