"""Flat ``section.key = value`` run configuration.

Every key has a type and a default; unknown keys are rejected.  Values can
be overridden from the environment with ``QSI_<SECTION>__<KEY>`` (e.g.
``QSI_SOURCE__MU=0.5``).
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .attack import srm_attack_profile
from .cgi import PATTERN_MODES
from .decoy import ChannelModel, DecoyObservables, IntensityConfig, TABLE1
from .errors import ConfigError, DomainError
from .protocol import ENGINES, RESEND_POLICIES, AttackConfig, SimulationConfig, calibrate_channel

ENV_PREFIX = "QSI_"


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


SCHEMA: dict[str, tuple] = {
    "source.mu": (float, 0.68),
    "source.nu": (float, 0.18),
    "source.p_signal": (float, 13 / 16),
    "source.p_decoy": (float, 2 / 16),
    "source.p_vacuum": (float, 1 / 16),
    "observed.q_mu": (float, TABLE1.q_mu),
    "observed.q_nu": (float, TABLE1.q_nu),
    "observed.y0": (float, TABLE1.y0),
    "observed.e_mu": (float, TABLE1.e_mu),
    "observed.e_nu": (float, TABLE1.e_nu),
    "channel.calibrate": (_bool, True),
    "channel.transmittance": (float, 0.0),
    "channel.background_yield": (float, TABLE1.y0),
    "channel.misalignment_error": (float, 0.0),
    "sim.pulse_rate": (float, 40e6),
    "sim.pulses_per_frame": (int, 200_000),
    "sim.frames": (int, 400),
    "sim.seed": (_u64, 1),
    "sim.engine": (_choice(*ENGINES), "aggregate"),
    "sim.workers": (int, 1),
    "attack.enabled": (_bool, False),
    "attack.policy": (_choice(*RESEND_POLICIES), "lossless-resend"),
    "attack.fraction": (float, 1.0),
    "attack.n_max": (int, 10),
    "key.f_ec": (float, 1.16),
    "key.sifting_factor": (float, 0.5),
    "imaging.width": (int, 20),
    "imaging.height": (int, 20),
    "imaging.mode": (_choice(*PATTERN_MODES), "raster"),
    "imaging.n_patterns": (int, 400),
    "imaging.object": (str, "plus_20x20.pgm"),
    "imaging.counts": (_choice("analytic", "montecarlo"), "montecarlo"),
    "imaging.scale": (float, 1.0),
    "imaging.shot_noise": (_bool, False),
    "imaging.leakage": (float, 0.1),
    "imaging.seed": (_u64, 0),
    "sweep.points": (int, 11),
    "output.dir": (str, "out"),
}


def _env_name(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "__")


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})
    base_dir: Path = field(default=Path("."), compare=False)

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, text) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        conv = SCHEMA[key][0]
        try:
            self.values[key] = conv(text) if isinstance(text, str) else conv(str(text))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc

    # -- domain objects --------------------------------------------------

    def intensities(self) -> IntensityConfig:
        v = self.values
        try:
            return IntensityConfig(v["source.mu"], v["source.nu"],
                                   (v["source.p_signal"], v["source.p_decoy"], v["source.p_vacuum"]))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    def observed(self) -> DecoyObservables:
        v = self.values
        try:
            return DecoyObservables(v["observed.q_mu"], v["observed.q_nu"], v["observed.y0"],
                                    v["observed.e_mu"], v["observed.e_nu"])
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    def channel(self) -> ChannelModel:
        """Explicit channel, or the calibration against the observed targets."""
        v = self.values
        if v["channel.calibrate"]:
            return calibrate_channel(self.observed(), self.intensities())
        try:
            return ChannelModel(v["channel.transmittance"], v["channel.background_yield"],
                                v["channel.misalignment_error"])
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    def attack(self, fraction: float | None = None) -> AttackConfig | None:
        v = self.values
        if fraction is None:
            if not v["attack.enabled"]:
                return None
            fraction = v["attack.fraction"]
        return AttackConfig(srm_attack_profile(v["attack.n_max"]), v["attack.policy"], fraction)

    def simulation(self, attack_fraction: float | None = None) -> SimulationConfig:
        v = self.values
        return SimulationConfig(self.intensities(), self.channel(), v["sim.pulse_rate"],
                                v["sim.pulses_per_frame"], self.attack(attack_fraction), v["sim.seed"])

    def object_path(self) -> Path:
        p = Path(self.values["imaging.object"])
        return p if p.is_absolute() else self.base_dir / p

    # -- text form -------------------------------------------------------

    def serialize(self) -> str:
        from .fileio import fmt
        return "".join(f"{k} = {fmt(self.values[k])}\n" for k in SCHEMA)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    cfg = RunConfig(base_dir=Path(base_dir))
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        cfg.set(key.strip(), value.strip())
    return cfg


def default_config_path() -> Path:
    return Path(str(resources.files("qsi") / "data" / "default.ini"))


def load_config(path: Path | None = None, environ: dict | None = None) -> RunConfig:
    """Read a config file (the shipped default when ``path`` is None) and apply env overrides."""
    path = Path(path) if path is not None else default_config_path()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text, base_dir=path.parent)
    apply_env(cfg, os.environ if environ is None else environ)
    return cfg


def apply_env(cfg: RunConfig, environ) -> None:
    known = {_env_name(k): k for k in SCHEMA}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        if name not in known:
            raise ConfigError(f"unknown config override {name}")
        cfg.set(known[name], value)
