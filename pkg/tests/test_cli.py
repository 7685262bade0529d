import numpy as np
import pytest

from qsi import fileio
from qsi.cli import EXIT_COMPROMISED, EXIT_CONFIG, EXIT_OK, main
from qsi.config import default_config_path


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    import os
    for name in list(os.environ):
        if name.startswith("QSI_"):
            monkeypatch.delenv(name)


def write_config(path, **values):
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


def run(*args):
    return main([str(a) for a in args])


def test_analyze(tmp_path, capsys):
    assert run("analyze", "--out", tmp_path) == EXIT_OK
    rows = fileio.read_csv(tmp_path / "overlap.csv")
    two = rows[1]
    assert two["n"] == "2"
    assert [float(two[k]) for k in ("c0", "c1", "c2", "c3")] == pytest.approx([0.5, 2 ** -0.5, 0.5, 0.0], abs=1e-12)
    assert float(two["e_min"]) == pytest.approx(0.1464466, abs=1e-6)
    summary = {r["quantity"]: r["value"] for r in fileio.read_csv(tmp_path / "analyze.csv")}
    assert float(summary["e_nu_lower_bound"]) == pytest.approx(0.1461, abs=5e-4)
    assert summary["inequality_ratio"] == "true"
    assert (tmp_path / "error_floors.png").stat().st_size > 0
    assert "decoy inequalities" in capsys.readouterr().out


def test_analyze_rejects_nu_above_mu(tmp_path):
    cfg = write_config(tmp_path / "c.ini", **{"source.mu": 0.1, "source.nu": 0.2})
    assert run("analyze", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG


def test_bad_config_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini", **{"source.rho": 1})
    assert run("simulate", "--config", cfg) == EXIT_CONFIG
    assert "unknown config key" in capsys.readouterr().err


def test_simulate_secure_and_reproducible(tmp_path):
    names = ("observables.csv", "frames.csv", "verdict.txt", "verdict.csv", "config.ini", "manifest.txt")
    assert run("simulate", "--seed", 7, "--out", tmp_path) == EXIT_OK
    first = {name: (tmp_path / name).read_bytes() for name in names}
    assert run("simulate", "--seed", 7, "--out", tmp_path) == EXIT_OK
    for name in names:
        assert (tmp_path / name).read_bytes() == first[name], name
    v = fileio.parse_kv(first["verdict.txt"].decode())
    assert v["decision"] == "secure"
    manifest = fileio.parse_kv(first["manifest.txt"].decode())
    assert manifest["seed"] == "7" and "sha256.verdict.csv" in manifest


def test_simulate_seed_matters(tmp_path):
    run("simulate", "--frames", 20, "--seed", 1, "--out", tmp_path / "a")
    run("simulate", "--frames", 20, "--seed", 2, "--out", tmp_path / "b")
    assert (tmp_path / "a" / "frames.csv").read_bytes() != (tmp_path / "b" / "frames.csv").read_bytes()


def test_simulate_attack_is_compromised(tmp_path):
    cfg = default_config_path().parent / "attack.ini"
    assert run("simulate", "--config", cfg, "--out", tmp_path) == EXIT_COMPROMISED
    assert fileio.parse_kv((tmp_path / "verdict.txt").read_text())["decision"] == "compromised"


def test_truncated_run_is_inconclusive(tmp_path):
    assert run("simulate", "--frames", 1, "--pulses", 1000, "--out", tmp_path) == EXIT_OK
    v = fileio.parse_kv((tmp_path / "verdict.txt").read_text())
    assert v["decision"] == "inconclusive"


def test_infeasible_calibration_exit(tmp_path):
    cfg = write_config(tmp_path / "c.ini", **{"observed.q_mu": 1e-6})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 3


def test_image_analytic_noiseless(tmp_path):
    cfg = write_config(tmp_path / "c.ini", **{"imaging.counts": "analytic", "imaging.scale": 100,
                                               "imaging.object": default_config_path().parent / "plus_20x20.pgm"})
    assert run("image", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    snr = fileio.read_csv(tmp_path / "o" / "snr.csv")[0]
    assert float(snr["pearson"]) > 0.999
    pgm = fileio.read_pgm(tmp_path / "o" / "image.pgm")
    assert pgm.shape == (20, 20) and pgm.max() == 1.0
    assert len((tmp_path / "o" / "patterns.txt").read_text().split()) == 400


def test_image_montecarlo_default(tmp_path):
    assert run("image", "--out", tmp_path) == EXIT_OK
    snr = fileio.read_csv(tmp_path / "snr.csv")[0]
    assert 17 <= float(snr["snr_db"]) <= 29
    assert len(fileio.read_csv(tmp_path / "counts.csv")) == 400
    assert (tmp_path / "reconstruction.png").stat().st_size > 0


def test_image_two_by_two(tmp_path):
    (tmp_path / "o.txt").write_text("1 0\n0 0.5\n")
    cfg = write_config(tmp_path / "c.ini", **{"imaging.width": 2, "imaging.height": 2, "imaging.object": "o.txt",
                                               "imaging.counts": "analytic", "imaging.scale": 10,
                                               "imaging.leakage": 0})
    assert run("image", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    counts = [float(r["count"]) for r in fileio.read_csv(tmp_path / "o" / "counts.csv")]
    assert counts == [10, 0, 0, 5]
    raw = fileio.read_grid(tmp_path / "o" / "image_raw.txt")
    assert np.allclose(raw, [[1.5625, -0.9375], [-0.9375, 0.3125]])


def test_image_empty_object(tmp_path):
    (tmp_path / "o.txt").write_text("0 0 0\n0 0 0\n0 0 0\n")
    cfg = write_config(tmp_path / "c.ini", **{"imaging.width": 3, "imaging.height": 3, "imaging.object": "o.txt",
                                               "imaging.counts": "analytic", "imaging.leakage": 0})
    assert run("image", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    pgm = fileio.read_pgm(tmp_path / "o" / "image.pgm")
    assert np.all(pgm == pgm.flat[0])
    assert fileio.read_csv(tmp_path / "o" / "snr.csv")[0]["snr_db"] == "nan"


@pytest.mark.parametrize("obj,w", [("missing.pgm", 20), ("plus.txt", 20)])
def test_image_bad_object(tmp_path, obj, w):
    (tmp_path / "plus.txt").write_text("1 0\n0 1\n")  # grid size mismatch
    cfg = write_config(tmp_path / "c.ini", **{"imaging.object": obj, "imaging.width": w})
    assert run("image", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG


@pytest.mark.slow
def test_attack_sweep(tmp_path, capsys):
    from scipy.stats import spearmanr
    assert run("attack-sweep", "--frames", 2000, "--out", tmp_path) == EXIT_OK
    rows = fileio.read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 11 and rows[5]["fraction"] == "0.5"
    assert rows[0]["decision"] == "secure" and rows[-1]["decision"] == "compromised"
    e = [float(r["e_nu"]) for r in rows]
    assert spearmanr([float(r["fraction"]) for r in rows], e).statistic > 0.95
    assert "spearman" in capsys.readouterr().out
