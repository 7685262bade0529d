"""Command-line entry point: ``qsi analyze | simulate | image | attack-sweep``.

Exit codes: 0 success, 2 configuration error, 3 runtime/infeasible
calibration, 4 simulated verdict "compromised".
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
from scipy.stats import spearmanr

from . import __version__, cgi, fileio, plotting
from .attack import min_error_rate, overlap_coefficients, srm_attack_profile
from .config import RunConfig, load_config
from .decoy import CLASS_NAMES, decoy_inequality_check, joint_yield_lower_bound, qber_lower_bound
from .errors import CalibrationError, ConfigError, DomainError
from .protocol import run_session
from .security import COMPROMISED, secret_key_rate, verdict

logger = logging.getLogger("qsi")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_COMPROMISED = 0, 2, 3, 4

VERDICT_FIELDS = ["decision", "measured_e_nu", "bound_e_nu_l", "standard_error", "sifted_decoy",
                  "decoy_errors", "key_rate_bps", "bound_clamped"]


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: RunConfig, files: list[str]) -> None:
    items = {
        "command": command,
        "seed": cfg["sim.seed"],
        "config_sha256": cfg.digest(),
        "qsi_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    for name in files:
        items[f"sha256.{name}"] = hashlib.sha256((out / name).read_bytes()).hexdigest()
    fileio.write_text(out / "config.ini", cfg.serialize())
    fileio.write_text(out / "manifest.txt", fileio.format_kv(items))


def _key_rate(cfg: RunConfig, obs) -> float:
    ic = cfg.intensities()
    return secret_key_rate(obs, ic, cfg["sim.pulse_rate"], ic.class_probabilities[0],
                           cfg["key.sifting_factor"], cfg["key.f_ec"])


# -- analyze ---------------------------------------------------------------

def cmd_analyze(cfg: RunConfig) -> int:
    ic = cfg.intensities()
    obs = cfg.observed()
    out = _outdir(cfg)
    rows = []
    for n in range(1, 11):
        c = overlap_coefficients(n).c
        rows.append([n, *c, min_error_rate(n).error])
    fileio.write_csv(out / "overlap.csv", ["n", "c0", "c1", "c2", "c3", "e_min"], rows)

    report = decoy_inequality_check(ic.mu, ic.nu)
    e1, e2 = min_error_rate(1).error, min_error_rate(2).error
    summary = {
        "mu": ic.mu,
        "nu": ic.nu,
        "e1": e1,
        "e2": e2,
        "joint_yield_lower_bound": joint_yield_lower_bound(obs, ic),
        "e_nu_lower_bound": qber_lower_bound(obs, ic, e2),
        "measured_e_nu": obs.e_nu,
        "inequality_ratio": report.ratio_ok,
        "inequality_p1": report.p1_ok,
        "inequality_p2": report.p2_ok,
        "key_rate_bps": _key_rate(cfg, obs),
    }
    fileio.write_csv(out / "analyze.csv", ["quantity", "value"], [[k, v] for k, v in summary.items()])
    plotting.plot_error_floors([r[0] for r in rows], [r[-1] for r in rows], out / "error_floors.png")

    lines = ["photon-number table (n, c0..c3, minimum SRM error)"]
    lines += ["  " + "  ".join(f"{v:.4f}" if isinstance(v, float) else f"{v:>2d}" for v in r) for r in rows]
    lines.append("decoy inequalities (n <= %d): %s" % (report.n_max, "pass" if report.all_pass else "FAIL"))
    lines += [f"{k} = {fileio.fmt(v)}" for k, v in summary.items() if not k.startswith("inequality")]
    text = "\n".join(lines) + "\n"
    fileio.write_text(out / "analyze.txt", text)
    _write_manifest(out, "analyze", cfg, ["overlap.csv", "analyze.csv", "analyze.txt", "error_floors.png"])
    sys.stdout.write(text)
    return EXIT_OK


# -- simulate --------------------------------------------------------------

def _observables_rows(obs):
    rows = []
    for name in CLASS_NAMES:
        c = obs.counts[name]
        rows.append([name, c.sent, c.detected, c.sifted, c.errors, c.gain, c.qber])
    return rows


def cmd_simulate(cfg: RunConfig) -> int:
    sim = cfg.simulation()
    result = run_session(sim, cfg["sim.frames"], cfg["sim.pulses_per_frame"],
                         engine=cfg["sim.engine"], workers=cfg["sim.workers"])
    obs = result.observables
    v = verdict(obs, sim.intensities, key_rate_bps=_key_rate(cfg, obs))
    out = _outdir(cfg)
    fileio.write_csv(out / "observables.csv", ["class", "sent", "detected", "sifted", "errors", "gain", "qber"],
                     _observables_rows(obs))
    fileio.write_csv(out / "frames.csv", ["frame", "signal_sifted"], [[i, int(c)] for i, c in enumerate(result.frame_counts)])
    items = v.as_dict()
    fileio.write_text(out / "verdict.txt", fileio.format_kv({k: items[k] for k in VERDICT_FIELDS}))
    fileio.write_csv(out / "verdict.csv", VERDICT_FIELDS, [[items[k] for k in VERDICT_FIELDS]])
    _write_manifest(out, "simulate", cfg, ["observables.csv", "frames.csv", "verdict.txt", "verdict.csv"])
    print(f"E_nu = {fileio.fmt(v.measured_e_nu)} (SE {v.standard_error:.4g}), "
          f"bound = {fileio.fmt(v.bound_e_nu_l)}, key rate = {v.key_rate_bps:.1f} bps")
    print(f"decision: {v.decision}")
    return EXIT_COMPROMISED if v.decision == COMPROMISED else EXIT_OK


# -- image -----------------------------------------------------------------

def cmd_image(cfg: RunConfig) -> int:
    width, height = cfg["imaging.width"], cfg["imaging.height"]
    try:
        obj = cgi.ObjectMask(fileio.read_object(cfg.object_path()))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    if obj.shape != (height, width):
        raise ConfigError(f"object grid {obj.shape[1]}x{obj.shape[0]} does not match imaging grid {width}x{height}")
    mode = cfg["imaging.mode"]
    n = width * height if mode == cgi.RASTER else cfg["imaging.n_patterns"]
    patterns = cgi.generate_patterns(mode, width, height, n, seed=cfg["imaging.seed"])

    if cfg["imaging.counts"] == "montecarlo":
        session = cgi.montecarlo_counts(obj, patterns, cfg.simulation(), cfg["sim.pulses_per_frame"],
                                        leakage=cfg["imaging.leakage"], engine=cfg["sim.engine"])
        counts = cgi.bucket_counts(obj, patterns, session.frame_counts)
    else:
        rng = np.random.default_rng(cfg["sim.seed"])
        counts = cgi.bucket_counts(obj, patterns, scale=cfg["imaging.scale"], leakage=cfg["imaging.leakage"],
                                   shot_noise=cfg["imaging.shot_noise"], rng=rng)
    image = cgi.reconstruct(patterns, counts)

    out = _outdir(cfg)
    fileio.write_pgm(out / "image.pgm", cgi.render_8bit(image))
    fileio.write_grid(out / "image_raw.txt", image.values)
    fileio.write_csv(out / "counts.csv", ["pattern", "count"], [[i, c] for i, c in enumerate(counts)])
    fileio.write_patterns(out / "patterns.txt", patterns.patterns)
    flat = np.all(obj.transmission == obj.transmission.flat[0])
    row = {"n_patterns": patterns.n, "mode": mode, "counts": cfg["imaging.counts"]}
    if flat:
        row.update(signal_mean="nan", background_variance="nan", snr_db="nan", infinite=False, pearson="nan")
    else:
        rep = cgi.snr_db(image, *cgi.default_regions(obj))
        row.update(signal_mean=rep.signal_mean, background_variance=rep.background_variance,
                   snr_db=rep.snr_db, infinite=rep.infinite, pearson=cgi.pearson(image.values, obj.transmission))
    fileio.write_csv(out / "snr.csv", list(row), [list(row.values())])
    plotting.plot_reconstruction(obj.transmission, image.values, out / "reconstruction.png",
                                 title=f"{mode}, N={patterns.n}")
    _write_manifest(out, "image", cfg, ["image.pgm", "image_raw.txt", "counts.csv", "patterns.txt", "snr.csv",
                                        "reconstruction.png"])
    print(", ".join(f"{k} = {fileio.fmt(v)}" for k, v in row.items()))
    return EXIT_OK


# -- attack sweep ----------------------------------------------------------

def cmd_attack_sweep(cfg: RunConfig) -> int:
    ic = cfg.intensities()
    fractions = np.round(np.linspace(0.0, 1.0, cfg["sweep.points"]), 12)
    srm_attack_profile(cfg["attack.n_max"])  # warm the optimizer cache once
    rows = []
    for f in fractions:
        sim = cfg.simulation(attack_fraction=float(f))
        obs = run_session(sim, cfg["sim.frames"], cfg["sim.pulses_per_frame"], engine=cfg["sim.engine"],
                          workers=cfg["sim.workers"]).observables
        v = verdict(obs, ic)
        rows.append([float(f), v.measured_e_nu, v.bound_e_nu_l, v.standard_error, v.decision])
    out = _outdir(cfg)
    fileio.write_csv(out / "sweep.csv", ["fraction", "e_nu", "e_nu_l", "standard_error", "decision"], rows)
    plotting.plot_sweep([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], out / "sweep.png",
                        errors=[r[3] for r in rows])
    _write_manifest(out, "attack-sweep", cfg, ["sweep.csv", "sweep.png"])
    for r in rows:
        print(f"fraction {r[0]:.2f}: E_nu = {r[1]:.4f}, bound = {r[2]:.4f}, {r[4]}")
    if len(rows) > 2:
        print(f"spearman(fraction, E_nu) = {spearmanr(fractions, [r[1] for r in rows]).statistic:.3f}")
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "image": cmd_image,
    "attack-sweep": cmd_attack_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsi", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", type=Path, help="config file (default: shipped no-attack example)")
    parser.add_argument("--seed", help="RNG seed (unsigned 64-bit)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--pulses", help="pulses per frame")
    parser.add_argument("--frames", help="number of frames")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        for key, value in (("sim.seed", args.seed), ("output.dir", args.out),
                           ("sim.pulses_per_frame", args.pulses), ("sim.frames", args.frames)):
            if value is not None:
                cfg.set(key, value)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DomainError) as exc:
        print(f"qsi: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationError, RuntimeError) as exc:
        print(f"qsi: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
