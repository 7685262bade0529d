"""Seeded Monte Carlo simulation of weak+vacuum decoy-state BB84.

The model works on outcome statistics: each pulse has an intensity class,
an encoding phase index and a Poisson photon number; detection, error
origin and sifting are drawn from the probabilities the yield and error
models induce.  Two engines share those probabilities:

* ``"pulse"`` draws every pulse explicitly (vectorised per frame);
* ``"aggregate"`` draws the per-(class, photon number) tallies directly via
  multinomial/binomial thinning, which has the same joint distribution of
  counts and costs O(1) per frame.

Every frame owns an RNG substream derived from ``(seed, frame index)``, so
results do not depend on how frames are scheduled across workers.
"""
from __future__ import annotations

import enum
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .attack import AttackProfile, srm_attack_profile
from .decoy import (CLASS_NAMES, ChannelModel, ClassCounts, DecoyObservables,
                    IntensityConfig, overall_gain, truncation_order)
from .errors import CalibrationError, ConfigError

RESEND_POLICIES = ("lossless-resend", "always-detected")


class IntensityClass(enum.IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2


def basis_of(phase_index: int) -> str:
    # phases 0 and pi encode in Z, pi/2 and 3pi/2 in X
    return "Z" if phase_index % 2 == 0 else "X"


@dataclass(frozen=True)
class PulseState:
    intensity_class: IntensityClass
    phase_index: int
    photon_number: int

    @property
    def basis(self) -> str:
        return basis_of(self.phase_index)


@dataclass(frozen=True)
class DetectionEvent:
    detected: bool
    bob_basis: str
    bit_error: bool | None
    intensity_class: IntensityClass

    @property
    def sifted(self) -> bool:
        return self.bit_error is not None


@dataclass(frozen=True)
class AttackConfig:
    profile: AttackProfile = field(default_factory=srm_attack_profile)
    policy: str = "lossless-resend"
    fraction: float = 1.0

    def __post_init__(self):
        if self.policy not in RESEND_POLICIES:
            raise ConfigError(f"unknown resend policy {self.policy!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError(f"attack fraction {self.fraction} outside [0, 1]")


@dataclass(frozen=True)
class SimulationConfig:
    intensities: IntensityConfig
    channel: ChannelModel
    pulse_rate: float = 40e6
    n_pulses: int = 200_000
    attack: AttackConfig | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_pulses < 1:
            raise ConfigError("n_pulses must be >= 1")
        if not self.pulse_rate > 0:
            raise ConfigError("pulse_rate must be > 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")

    @property
    def frame_rate(self) -> float:
        return self.pulse_rate / self.n_pulses


def frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


# -- outcome probabilities ------------------------------------------------

def _detection_model(channel: ChannelModel, n: np.ndarray, attack: AttackConfig | None, attacked: bool):
    """Return (P(detect), P(background origin | detect), P(flip | signal origin)) per photon number."""
    n = np.asarray(n)
    y0 = channel.background_yield
    p_det = 1.0 - (1.0 - channel.transmittance) ** n * (1.0 - y0)
    p_det = np.where(n == 0, y0, np.clip(p_det, 0.0, 1.0))
    if attacked:
        if attack.policy == "always-detected":
            p_det = np.where(n == 0, y0, 1.0)
        e_sig = np.array([attack.profile.error_rate(int(k)) for k in np.ravel(n)]).reshape(n.shape)
    else:
        e_sig = np.full(n.shape, channel.misalignment_error)
    with np.errstate(divide="ignore", invalid="ignore"):
        bg = np.where(p_det > 0, np.minimum(1.0, y0 / p_det), 1.0)
    return p_det, bg, e_sig


# -- single-pulse reference path -----------------------------------------

def sample_pulse(rng: np.random.Generator, cfg: SimulationConfig) -> PulseState:
    cls = IntensityClass(int(rng.choice(3, p=cfg.intensities.class_probabilities)))
    mean = cfg.intensities.means[cls]
    return PulseState(cls, int(rng.integers(4)), int(rng.poisson(mean)))


def _outcome(pulse, p_det, bg, e_sig, rng) -> DetectionEvent:
    bob = "Z" if rng.integers(2) == 0 else "X"
    if rng.random() >= p_det:
        return DetectionEvent(False, bob, None, pulse.intensity_class)
    from_background = rng.random() < bg
    if bob != pulse.basis:
        return DetectionEvent(True, bob, None, pulse.intensity_class)
    flip = rng.random() < (0.5 if from_background else e_sig)
    return DetectionEvent(True, bob, bool(flip), pulse.intensity_class)


def transmit(pulse: PulseState, channel: ChannelModel, rng: np.random.Generator) -> DetectionEvent:
    """Propagate one pulse through the unattacked channel to Bob."""
    p_det, bg, e_sig = (float(x) for x in _detection_model(channel, np.array(pulse.photon_number), None, False))
    return _outcome(pulse, p_det, bg, e_sig, rng)


def eve_intercept(pulse: PulseState, profile: AttackProfile, rng: np.random.Generator,
                  channel: ChannelModel, policy: str = "lossless-resend") -> DetectionEvent:
    """Intercept-resend: Eve learns n, guesses with error e_n and resends to Bob."""
    attack = AttackConfig(profile=profile, policy=policy)
    p_det, bg, e_sig = (float(x) for x in _detection_model(channel, np.array(pulse.photon_number), attack, True))
    return _outcome(pulse, p_det, bg, e_sig, rng)


# -- frame engines --------------------------------------------------------

@dataclass
class FrameTally:
    """Per-class (sent, detected, sifted, errors) counts as a (3, 4) integer array."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((3, 4), dtype=np.int64))

    def __iadd__(self, other: "FrameTally"):
        self.counts += other.counts
        return self


def _thin(rng, n, p_det, bg, e_sig):
    det = rng.binomial(n, p_det)
    from_bg = rng.binomial(det, bg)
    from_sig = det - from_bg
    sift_bg = rng.binomial(from_bg, 0.5)
    sift_sig = rng.binomial(from_sig, 0.5)
    errors = rng.binomial(sift_bg, 0.5) + rng.binomial(sift_sig, e_sig)
    return det.sum(), (sift_bg + sift_sig).sum(), errors.sum()


def transmit_batch(classes: np.ndarray, photons: np.ndarray, phases: np.ndarray, attacked: np.ndarray,
                   channel: ChannelModel, attack: AttackConfig | None, rng: np.random.Generator) -> FrameTally:
    """Pulse-by-pulse outcomes for arrays of pulses, tallied per class."""
    size = classes.size
    p_det, bg, e_sig = _detection_model(channel, photons, None, False)
    if attack is not None and attacked.any():
        a_det, a_bg, a_sig = _detection_model(channel, photons[attacked], attack, True)
        p_det, bg, e_sig = p_det.copy(), bg.copy(), e_sig.astype(float)
        p_det[attacked], bg[attacked], e_sig[attacked] = a_det, a_bg, a_sig
    bob = rng.integers(2, size=size)
    detected = rng.random(size) < p_det
    from_bg = rng.random(size) < bg
    sifted = detected & (bob == phases % 2)
    flip = rng.random(size) < np.where(from_bg, 0.5, e_sig)
    errors = sifted & flip
    tally = FrameTally()
    for c in range(3):
        m = classes == c
        tally.counts[c] = (m.sum(), (detected & m).sum(), (sifted & m).sum(), (errors & m).sum())
    return tally


def sample_pulses(rng: np.random.Generator, cfg: SimulationConfig, size: int):
    """Vectorised ``sample_pulse``: arrays of (class, phase index, photon number)."""
    ic = cfg.intensities
    classes = rng.choice(3, size=size, p=ic.class_probabilities)
    phases = rng.integers(4, size=size)
    photons = rng.poisson(np.asarray(ic.means)[classes])
    return classes, phases, photons


def _pulse_frame(cfg: SimulationConfig, channel: ChannelModel, n_pulses: int, rng) -> FrameTally:
    classes, phases, photons = sample_pulses(rng, cfg, n_pulses)
    fraction = cfg.attack.fraction if cfg.attack is not None else 0.0
    attacked = rng.random(n_pulses) < fraction
    return transmit_batch(classes, photons, phases, attacked, channel, cfg.attack, rng)


@functools.lru_cache(maxsize=64)
def _photon_pmfs(means: tuple[float, ...]) -> tuple[np.ndarray, ...]:
    n_cut = truncation_order(max(means))
    n = np.arange(n_cut + 1)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    out = []
    for mean in means:
        pmf = np.exp(-mean + n * math.log(mean) - log_fact) if mean > 0 else (n == 0).astype(float)
        pmf[-1] += max(0.0, 1.0 - pmf.sum())  # lump the (< 1e-15) tail into the last bin
        out.append(pmf / pmf.sum())
    return tuple(out)


@functools.lru_cache(maxsize=4096)
def _frame_models(channel: ChannelModel, attack: AttackConfig | None, n_cut: int):
    n = np.arange(n_cut + 1)
    clean = _detection_model(channel, n, None, False)
    attacked = _detection_model(channel, n, attack, True) if attack is not None else None
    return clean, attacked


def _aggregate_frame(cfg: SimulationConfig, channel: ChannelModel, n_pulses: int, rng) -> FrameTally:
    ic = cfg.intensities
    pmfs = _photon_pmfs(ic.means)
    clean_model, attack_model = _frame_models(channel, cfg.attack, pmfs[0].size - 1)
    fraction = cfg.attack.fraction if cfg.attack is not None else 0.0
    tally = FrameTally()
    class_sent = rng.multinomial(n_pulses, ic.class_probabilities)
    for c, pmf in enumerate(pmfs):
        by_n = rng.multinomial(class_sent[c], pmf)
        hit = rng.binomial(by_n, fraction) if fraction > 0 else np.zeros_like(by_n)
        det, sift, err = _thin(rng, by_n - hit, *clean_model)
        if attack_model is not None:
            d2, s2, e2 = _thin(rng, hit, *attack_model)
            det, sift, err = det + d2, sift + s2, err + e2
        tally.counts[c] = (class_sent[c], det, sift, err)
    return tally


ENGINES = {"aggregate": _aggregate_frame, "pulse": _pulse_frame}


@dataclass(frozen=True)
class SessionResult:
    observables: DecoyObservables
    frame_counts: np.ndarray
    frame_tallies: np.ndarray

    def __iter__(self):
        yield self.observables
        yield self.frame_counts


def run_session(cfg: SimulationConfig, n_frames: int, pulses_per_frame: int | None = None,
                frame_transmittance: np.ndarray | None = None, engine: str = "aggregate",
                workers: int = 1) -> SessionResult:
    """Simulate ``n_frames`` frames and accumulate decoy observables.

    ``frame_transmittance`` optionally scales the channel transmittance per
    frame (the imaging layer passes each pattern's transmitted-energy
    fraction).  ``frame_counts`` holds the sifted signal-class detections of
    each frame; ``frame_tallies`` the full (frames, 3, 4) tally array.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}")
    per_frame = cfg.n_pulses if pulses_per_frame is None else int(pulses_per_frame)
    if per_frame < 1:
        raise ConfigError("pulses_per_frame must be >= 1")
    if frame_transmittance is not None:
        frame_transmittance = np.asarray(frame_transmittance, dtype=float)
        if frame_transmittance.shape != (n_frames,):
            raise ConfigError("frame_transmittance must have one entry per frame")
    step = ENGINES[engine]

    def one(i):
        channel = cfg.channel if frame_transmittance is None else cfg.channel.scaled(frame_transmittance[i])
        return step(cfg, channel, per_frame, frame_rng(cfg.rng_seed, i)).counts

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            tallies = list(pool.map(one, range(n_frames)))
    else:
        tallies = [one(i) for i in range(n_frames)]
    tallies = np.stack(tallies)
    total = tallies.sum(axis=0)
    counts = {name: ClassCounts(*(int(x) for x in total[c])) for c, name in enumerate(CLASS_NAMES)}
    return SessionResult(DecoyObservables.from_counts(counts), tallies[:, 0, 2].copy(), tallies)


def calibrate_channel(target: DecoyObservables, cfg: IntensityConfig) -> ChannelModel:
    """Channel whose signal gain and QBER reproduce ``target`` under the yield/error model."""
    y0 = target.y0
    if target.q_mu < y0:
        raise CalibrationError(f"signal gain {target.q_mu} below background yield {y0}")
    if target.q_mu == y0:
        eta = 0.0
    else:
        gain = lambda eta: overall_gain(ChannelModel(eta, y0), cfg.mu) - target.q_mu
        if gain(1.0) < 0:
            raise CalibrationError(f"signal gain {target.q_mu} unreachable even with a lossless channel")
        eta = bisect(gain, 0.0, 1.0, xtol=1e-300, rtol=1e-12, maxiter=2000)
    signal = target.q_mu - y0
    e_d = 0.0 if signal == 0 else (target.e_mu * target.q_mu - 0.5 * y0) / signal
    if math.isnan(e_d) or not 0.0 <= e_d <= 0.5:
        raise CalibrationError(f"signal QBER {target.e_mu} implies misalignment {e_d} outside [0, 0.5]")
    return ChannelModel(transmittance=eta, background_yield=y0, misalignment_error=e_d)
