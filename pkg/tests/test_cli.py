import json

import numpy as np
import pytest

from doublephase.cli import RunConfig, main
from doublephase.grid import ScalarField
from doublephase.imageio import quantize, read_image, write_image


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_synth_ramp(tmp_path, capsys):
    path = tmp_path / "ramp.pgm"
    code, out, _ = run(capsys, "synth", "ramp", 64, "--out", path)
    assert code == 0 and str(path) in out
    values = read_image(path).values
    expected = quantize(np.tile(np.arange(64) / 63, (64, 1)), 16) / 65535
    np.testing.assert_array_equal(values, expected)


def test_synth_step_seed_independent(tmp_path, capsys):
    for seed in (0, 7):
        run(capsys, "synth", "step", 64, "--seed", seed, "--out", tmp_path / f"s{seed}.pgm")
    a, b = (tmp_path / "s0.pgm").read_bytes(), (tmp_path / "s7.pgm").read_bytes()
    assert a == b
    v = read_image(tmp_path / "s0.pgm").values
    assert np.all(v[:, :32] == 0) and np.all(v[:, 32:] == 1)


def test_synth_noise_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "synth", "ramp+noise", 32, "--seed", 3, "--out", tmp_path / f"{name}.pgm")
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()


def test_synth_unknown_kind(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "plaid", "--out", tmp_path / "x.pgm")
    assert code == 1 and "unknown kind" in err
    assert not (tmp_path / "x.pgm").exists()


def test_denoise_constant_image(tmp_path, capsys):
    src = tmp_path / "flat.pgm"
    write_image(src, ScalarField.constant((16, 16), 0.5))
    code, _, _ = run(capsys, "denoise", src, "-o", tmp_path / "out")
    assert code == 0
    assert (tmp_path / "out" / "restored.pgm").read_bytes() == src.read_bytes()
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert all(v == 0 for v in report["energy"].values())
    assert report["converged"] is True
    header = (tmp_path / "out" / "trace.csv").read_text().splitlines()[0]
    assert header == "iter,energy,certificate"
    assert (tmp_path / "out" / "weight.pgm").exists()


def test_denoise_step_noise_staircases_less_than_rof(tmp_path, capsys):
    img = tmp_path / "step.pgm"
    run(capsys, "synth", "step", 64, "--noise", 0.1, "--seed", 3, "--out", img)
    code, out, _ = run(capsys, "denoise", img, "--model", "double_phase", "--set", "run.spacing=4",
                       "-o", tmp_path / "dp")
    assert code == 0
    report = json.loads((tmp_path / "dp" / "report.json").read_text())
    assert report["staircase_metric"] < report["rof_staircase_metric"]
    assert "staircase metric" in out


def test_denoise_missing_file(tmp_path, capsys):
    out_dir = tmp_path / "never"
    code, _, err = run(capsys, "denoise", tmp_path / "missing.pgm", "-o", out_dir)
    assert code == 1 and "missing.pgm" in err
    assert not out_dir.exists()


def test_denoise_invalid_config(tmp_path, capsys):
    src = tmp_path / "flat.pgm"
    write_image(src, ScalarField.constant((8, 8), 0.5))
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[solve]\ntol = -1\n")
    code, _, err = run(capsys, "denoise", src, "--config", cfg, "-o", tmp_path / "o")
    assert code == 1 and "tol" in err
    code, _, err = run(capsys, "denoise", src, "--set", "nonsense=1", "-o", tmp_path / "o")
    assert code == 1 and "unknown setting" in err
    assert not (tmp_path / "o").exists()


def test_denoise_nonconvergence_exit_code(tmp_path, capsys):
    src = tmp_path / "n.pgm"
    run(capsys, "synth", "disk", 16, "--noise", 0.1, "--out", src)
    code, _, _ = run(capsys, "denoise", src, "--set", "max_iters=10", "--set", "check_every=5",
                     "--set", "compare_rof=false", "-o", tmp_path / "o")
    assert code == 2
    assert (tmp_path / "o" / "restored.pgm").exists()


def test_config_file_and_flag_precedence(tmp_path):
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text("[denoise]\nepsilon = 0.5\nmode = weight\n[gamma]\neps_list = 0.1, 0.01\n")
    cfg = RunConfig()
    cfg.load_ini(str(cfg_path))
    assert cfg.epsilon == 0.5 and cfg.mode == "weight" and cfg.eps_list == (0.1, 0.01)
    cfg.set("epsilon", "0.25")
    assert cfg.epsilon == 0.25


def test_gamma_sweep_single_eps(tmp_path, capsys):
    code, out, _ = run(capsys, "gamma-sweep", "--eps", "0.01", "--set", "size=16",
                       "--set", "max_iters=200", "-o", tmp_path / "g")
    assert code == 0
    assert "insufficient sweep" in out
    summary = json.loads((tmp_path / "g" / "summary.json").read_text())
    assert set(summary["checks"].values()) == {"insufficient sweep"}


def test_gamma_sweep_boundary_hypothesis(tmp_path, capsys):
    f = tmp_path / "f.pgm"
    run(capsys, "synth", "two-region", 16, "--out", f)
    w = np.ones((16, 16))
    w[:, 0] = 0
    write_image(tmp_path / "w.pgm", ScalarField(w))
    code, _, err = run(capsys, "gamma-sweep", f, "--weight", tmp_path / "w.pgm", "-o", tmp_path / "g")
    assert code == 1 and "boundary" in err and "hypothesis" in err
    assert not (tmp_path / "g").exists()


def test_gamma_sweep_default_instance(tmp_path, capsys):
    code, out, _ = run(capsys, "gamma-sweep", "--set", "max_iters=20000", "-o", tmp_path / "g")
    assert "recovery bound: PASS" in out
    assert code == 0
    rows = (tmp_path / "g" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 5 and rows[0].startswith("epsilon,delta,")


def test_maximal_threshold_print(tmp_path, capsys):
    code, out, _ = run(capsys, "maximal", "--p", "2", "--resolutions", "16,32", "-o", tmp_path / "m")
    assert code == 0
    assert "p* = 1 + alpha/(n - sigma - alpha) = 4" in out
    assert (tmp_path / "m" / "lp.csv").read_text().splitlines()[0] == "resolution,p,integral"


def test_maximal_parameter_error(tmp_path, capsys):
    code, _, err = run(capsys, "maximal", "--alpha", "1.5", "-o", tmp_path / "m")
    assert code == 1 and "alpha" in err


def test_maximal_verdict_matches_slope(tmp_path, capsys):
    code, out, _ = run(capsys, "maximal", "--p", "3", "-o", tmp_path / "m")
    assert code == 0
    line = next(x for x in out.splitlines() if x.startswith("p = 3: slope"))
    slope = float(line.split()[4].rstrip(";"))
    if slope <= 0.05:
        assert "integrable side" in line
    elif slope >= 0.2:
        assert "divergent side" in line
    else:
        assert "inconclusive" in line


def test_maximal_divergent_side(tmp_path, capsys):
    code, out, _ = run(capsys, "maximal", "--p", "4.5", "-o", tmp_path / "m")
    assert code == 0
    assert "slope > 0: divergent side" in out
