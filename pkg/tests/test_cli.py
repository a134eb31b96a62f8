import json
import os

import pytest

from chainflux.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_PASS, main, output_dir
from chainflux.config import ExperimentConfig

SMALL_SCALING = ["--set", "n_grid=[32, 64, 128]", "--set", "block_size=2", "--samples", "8"]


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("CHAINFLUX_OUT", str(tmp_path / "env"))
    return tmp_path


def _files(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))
            if f.endswith((".csv", ".json", ".toml"))}


def _only_dir(root):
    (d,) = [os.path.join(root, x) for x in os.listdir(root)]
    return d


def test_env_var_sets_output_root(out):
    assert main(["scaling", *SMALL_SCALING]) in (EXIT_PASS, EXIT_FAIL)
    d = _only_dir(out / "env")
    assert os.path.basename(d).startswith("scaling-")
    assert {"config.toml", "summary.json", "timing.log", "scaling.csv"} <= set(os.listdir(d))


def test_csv_has_metadata_block_and_header(out):
    main(["scaling", *SMALL_SCALING, "--out", str(out / "o")])
    d = _only_dir(out / "o")
    lines = open(os.path.join(d, "scaling.csv")).read().splitlines()
    meta = [l for l in lines if l.startswith("#")]
    assert any("config_hash:" in l for l in meta)
    assert any("numpy" in l for l in meta)
    assert lines[len(meta)].startswith("n,mean,stderr")


def test_single_sample_has_no_gate(out):
    assert main(["scaling", "--samples", "1", "--set", "n_grid=[32, 64]", "--out", str(out)]) == EXIT_PASS
    s = json.load(open(os.path.join(_only_dir(out), "summary.json")))
    assert s["passed"] is None
    assert s["stderr"] == "unavailable"


def test_gate_failure_exit_code(out):
    # tiny chains are nowhere near the asymptotic slope
    code = main(["scaling", *SMALL_SCALING, "--set", "slope_tol=0.01", "--out", str(out)])
    assert code == EXIT_FAIL
    assert json.load(open(os.path.join(_only_dir(out), "summary.json")))["passed"] is False


@pytest.mark.parametrize("argv", [
    ["scaling", "--set", "n_grid=[]"],
    ["verify", "--set", "n_grid=[]"],
    ["scaling", "--seed", "-3"],
    ["scaling", "--set", "nonsense=1"],
    ["crosscheck", "--set", "n=40"],
    ["density", "--stop-after", "1"],
    ["scaling", "--threads", "0"],
])
def test_config_errors(out, argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_crosscheck_limit_message(out, capsys):
    assert main(["crosscheck", "--set", "n=64"]) == EXIT_CONFIG
    assert "32" in capsys.readouterr().err


def test_missing_config_file(out, tmp_path):
    assert main(["scaling", "--config", str(tmp_path / "nope.toml")]) == EXIT_CONFIG


def test_numeric_guard_exit_code(out, capsys):
    argv = ["crosscheck", "--set", "n=4", "--set", "configs=1", "--set", "scheme=em", "--set", "dt=3.0",
            "--set", "t_total=30000.0", "--set", "blocks=2", "--set", "equilibrium=false"]
    assert main(argv) == EXIT_NUMERIC
    assert "numeric guard" in capsys.readouterr().err


def test_print_config(out, capsys):
    assert main(["lyapunov", "--seed", "18446744073709551615", "--samples", "12", "--print-config"]) == EXIT_PASS
    text = capsys.readouterr().out
    assert 'seed = "18446744073709551615"' in text
    assert "samples = 12" in text
    assert not os.path.exists(out / "env")


def test_config_file_and_flag_precedence(out, tmp_path, capsys):
    p = tmp_path / "run.toml"
    p.write_text('command = "lyapunov"\nseed = 5\n[params]\nsamples = 40\n')
    main(["lyapunov", "--config", str(p), "--print-config"])
    assert "seed = 5" in capsys.readouterr().out
    main(["lyapunov", "--config", str(p), "--seed", "6", "--samples", "41", "--print-config"])
    text = capsys.readouterr().out
    assert "seed = 6" in text and "samples = 41" in text
    assert main(["scaling", "--config", str(p)]) == EXIT_CONFIG


def test_output_dir_is_named_by_hash(tmp_path):
    cfg = ExperimentConfig("density", 3)
    assert output_dir(cfg, str(tmp_path)) == os.path.join(str(tmp_path), f"density-{cfg.hash()}")


def test_rerun_is_byte_identical(out):
    a, b = out / "a", out / "b"
    main(["scaling", *SMALL_SCALING, "--seed", "11", "--out", str(a)])
    main(["scaling", *SMALL_SCALING, "--seed", "11", "--out", str(b), "--threads", "1"])
    fa, fb = _files(_only_dir(a)), _files(_only_dir(b))
    assert fa == fb and len(fa) == 3


def test_resume_is_byte_identical(out):
    full, part = out / "full", out / "part"
    main(["scaling", *SMALL_SCALING, "--out", str(full)])
    assert main(["scaling", *SMALL_SCALING, "--out", str(part), "--stop-after", "2"]) == 130
    assert main(["scaling", *SMALL_SCALING, "--out", str(part), "--resume"]) in (EXIT_PASS, EXIT_FAIL)
    assert _files(_only_dir(full)) == _files(_only_dir(part))


def test_verify_passes_and_detects_fault(out):
    assert main(["verify", "--out", str(out / "ok"), "--set", "seeds=2"]) == EXIT_PASS
    assert main(["verify", "--out", str(out / "bad"), "--set", "seeds=2", "--inject-fault"]) == EXIT_FAIL
    rep = json.load(open(os.path.join(_only_dir(out / "bad"), "summary.json")))
    checks = {c["name"]: c["passed"] for c in rep["checks"]}
    assert checks["representation_residual"] is False
