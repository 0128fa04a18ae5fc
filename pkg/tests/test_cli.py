import json
import subprocess
import sys

import pytest

from lfpp.cli import main
from lfpp.config import ConfigError, dump_config, load_config, parse_config
from lfpp.io import read_csv, read_field


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_config_parsing_rules():
    vals = parse_config("# comment\nn = 64  # inline\n\nepsilons = 0.1, 0.05\nbridge = no\n")
    assert vals == {"n": 64, "epsilons": (0.1, 0.05), "bridge": False}
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("nn = 3")
    with pytest.raises(ConfigError, match="repeated"):
        parse_config("n = 3\nn = 4")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("n = many")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config("just words")


def test_config_dump_round_trip():
    cfg = load_config(None)
    assert parse_config(dump_config(cfg.values)) == cfg.values
    assert cfg.replace(seed=5).seeds[0] == 5
    with pytest.raises(ConfigError):
        cfg.replace(bogus=1)


def test_build_kernel_deterministic_bytes(tmp_path):
    cfg = _cfg(tmp_path, "epsilon = 0.25\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--config", cfg, "--out-dir", str(a), "build-kernel"]) == 0
    assert main(["build-kernel", "--config", cfg, "--out-dir", str(b)]) == 0
    assert (a / "kernel.lfpk").read_bytes() == (b / "kernel.lfpk").read_bytes()
    assert (a / "build_kernel.json").read_bytes() == (b / "build_kernel.json").read_bytes()
    rep = json.loads((a / "build_kernel.json").read_text())
    assert rep["mass_residual"] < 1e-6
    man = _manifest(a)
    import hashlib
    assert man["config_hash"] == hashlib.sha256(open(cfg, "rb").read()).hexdigest()
    assert man["exit_code"] == 0 and "wall_seconds" in man


def test_sample_writes_field_and_trace(tmp_path):
    cfg = _cfg(tmp_path, "n = 64\nbox_size = 2\nseed = 4\n")
    assert main(["--config", cfg, "--out-dir", str(tmp_path), "sample"]) == 0
    f = read_field(tmp_path / "field_seed4.lfpf")
    assert f["n"] == 64 and f["seed"] == 4
    header, rows = read_csv(tmp_path / "sphere_trace_seed4.csv")
    assert header == ["r", "h_r"] and rows


def test_distance_and_csv_format(tmp_path):
    cfg = _cfg(tmp_path, "n = 64\nbox_size = 2\nepsilon = 0.125\nsrc = 10,10\ndst = 20,30\n")
    assert main(["--config", cfg, "--out-dir", str(tmp_path), "--format", "csv", "distance"]) == 0
    header, rows = read_csv(tmp_path / "distance.csv")
    d = dict(rows)
    assert float(d["value"]) > 0 and d["kind"] == "point_point"


def test_fit_exponent_from_file(tmp_path):
    data = tmp_path / "med.csv"
    data.write_text("epsilon,median\n0.2,0.4472135954999579\n0.1,0.31622776601683794\n"
                    "0.05,0.22360679774997896\n0.025,0.15811388300841897\n")
    cfg = _cfg(tmp_path, f"input = {data}\n")
    assert main(["--config", cfg, "--out-dir", str(tmp_path), "fit-exponent"]) == 0
    rep = json.loads((tmp_path / "fit_exponent.json").read_text())
    assert rep["slope"] == pytest.approx(0.5, abs=1e-12)


def test_gw_tails_small(tmp_path):
    cfg = _cfg(tmp_path, "n_samples = 10000\nhorizon_T = 8\ndt = 0.02\ny_list = 0.5,1,1.5\n"
                         "x_list = 1,2,4\nhorizon_T_integral = 30\n")
    assert main(["--config", cfg, "--out-dir", str(tmp_path), "gw-tails"]) == 0
    rep = json.loads((tmp_path / "gw_tails.json").read_text())
    assert abs(rep["sup"]["relative_error"]) < 0.15


@pytest.mark.parametrize("cfg_text,argv_extra,code", [
    ("", ["nonsense"], 1),
    ("", ["build-kernel", "--bogus"], 1),
    ("nn = 3\n", ["build-kernel"], 2),
    ("bump_norm = 2\n", ["build-kernel"], 2),
    ("n = 64\nsrc = 70,3\n", ["distance"], 2),
    ("dimension = 3\nn = 8192\n", ["sample"], 3),
    ("input = /nonexistent/file.csv\n", ["fit-exponent"], 1),
])
def test_exit_codes(tmp_path, capsys, cfg_text, argv_extra, code):
    cfg = _cfg(tmp_path, cfg_text)
    assert main(["--config", cfg, "--out-dir", str(tmp_path)] + argv_extra) == code
    assert capsys.readouterr().err


def test_missing_config_and_no_subcommand(tmp_path):
    assert main(["--config", str(tmp_path / "none.cfg"), "build-kernel"]) == 1
    assert main([]) == 1


def test_bump_normalization_message(tmp_path, capsys):
    cfg = _cfg(tmp_path, "bump_norm = 2\n")
    main(["--config", cfg, "--out-dir", str(tmp_path), "build-kernel"])
    err = capsys.readouterr().err
    assert "bump normalization violated" in err and "2.000000" in err
    assert _manifest(tmp_path)["exit_code"] == 2


def test_verify_single_criterion_subprocess(tmp_path):
    out = subprocess.run([sys.executable, "-m", "lfpp.cli", "--out-dir", str(tmp_path), "--threads", "1",
                          "verify", "--criteria", "3", "--no-determinism"], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert out.stdout.startswith("[PASS] criterion  3")
    assert json.loads((tmp_path / "verify.json").read_text())["all_passed"]
    assert (tmp_path / "criterion_3.json").exists()
