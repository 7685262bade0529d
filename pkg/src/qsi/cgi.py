"""Computational ghost imaging on a block grid.

Binary DMD patterns illuminate an object; a bucket detector records one
count per pattern and the image is the covariance between counts and
per-block pattern intensities:

    O(x, y) = 1/N sum_i (B_i - <B>) (I_i(x, y) - <I(x, y)>)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

RASTER, RANDOM = "raster", "random"
PATTERN_MODES = (RASTER, RANDOM)


@dataclass(frozen=True)
class PatternSet:
    """``patterns`` has shape (N, height, width) with entries in {0, 1}."""

    patterns: np.ndarray
    mode: str
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.patterns.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.patterns.shape[1:]


@dataclass(frozen=True)
class ObjectMask:
    transmission: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transmission, dtype=float)
        if t.ndim != 2:
            raise DomainError("object transmission must be a 2-D grid")
        if np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
            raise DomainError("object transmission must lie in [0, 1]")
        object.__setattr__(self, "transmission", t)

    @property
    def shape(self) -> tuple[int, int]:
        return self.transmission.shape


@dataclass(frozen=True)
class ImageGrid:
    values: np.ndarray
    n_patterns: int
    mode: str
    seed: int | None = None


@dataclass(frozen=True)
class SnrReport:
    signal_mean: float
    background_variance: float
    snr_db: float
    infinite: bool = False


def plus_object(width: int = 20, height: int = 20, arm: int = 4, margin: int = 3) -> ObjectMask:
    """A centred "+" of bar thickness ``arm`` leaving ``margin`` closed blocks at each edge."""
    t = np.zeros((height, width))
    r0, c0 = (height - arm) // 2, (width - arm) // 2
    t[r0:r0 + arm, margin:width - margin] = 1.0
    t[margin:height - margin, c0:c0 + arm] = 1.0
    return ObjectMask(t)


def generate_patterns(mode: str, width: int, height: int, n: int | None = None,
                      seed: int | None = None) -> PatternSet:
    """Raster scan (one block on per pattern, row-major order) or i.i.d. fair-coin masks."""
    size = width * height
    if mode == RASTER:
        if n is not None and n != size:
            raise ConfigError(f"raster scan needs exactly {size} patterns, got {n}")
        pats = np.eye(size, dtype=np.uint8).reshape(size, height, width)
        return PatternSet(pats, RASTER, seed)
    if mode == RANDOM:
        if n is None or n < 1:
            raise ConfigError("random patterns need n >= 1")
        rng = np.random.default_rng(seed)
        return PatternSet(rng.integers(0, 2, size=(n, height, width), dtype=np.uint8), RANDOM, seed)
    raise ConfigError(f"unknown pattern mode {mode!r}")


def transmitted_fraction(obj: ObjectMask, patterns: PatternSet) -> np.ndarray:
    """Per-pattern share of the illuminated energy that passes the object."""
    pats = patterns.patterns.astype(float)
    on = pats.sum(axis=(1, 2))
    through = np.einsum("ihw,hw->i", pats, obj.transmission)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(on > 0, through / np.maximum(on, 1), 0.0)


def analytic_counts(obj: ObjectMask, patterns: PatternSet, scale: float = 1.0, leakage: float = 0.0,
                    shot_noise: bool = False, rng: np.random.Generator | None = None,
                    round_counts: bool = True) -> np.ndarray:
    """B_i = scale * (sum T I_i + leakage), optionally Poisson-noised and rounded."""
    if obj.shape != patterns.shape:
        raise ConfigError(f"object grid {obj.shape} does not match patterns {patterns.shape}")
    mean = scale * (np.einsum("ihw,hw->i", patterns.patterns.astype(float), obj.transmission) + leakage)
    if shot_noise:
        rng = rng if rng is not None else np.random.default_rng(0)
        return rng.poisson(mean).astype(float)
    return np.round(mean) if round_counts else mean


def montecarlo_counts(obj: ObjectMask, patterns: PatternSet, sim_config, pulses_per_frame: int | None = None,
                      leakage: float = 0.0, engine: str = "aggregate"):
    """Sifted signal-class detections per pattern frame from the QKD simulator.

    Each frame's channel transmittance is scaled by the pattern's
    transmitted-energy fraction plus a constant ``leakage`` (stray light
    reaching the detector regardless of the pattern).  Returns the session
    result; its ``frame_counts`` are the bucket counts.
    """
    from .protocol import run_session

    if obj.shape != patterns.shape:
        raise ConfigError(f"object grid {obj.shape} does not match patterns {patterns.shape}")
    scale = transmitted_fraction(obj, patterns) + leakage
    return run_session(sim_config, patterns.n, pulses_per_frame, frame_transmittance=scale, engine=engine)


def bucket_counts(obj: ObjectMask, patterns: PatternSet, session_counts: np.ndarray | None = None,
                  **analytic) -> np.ndarray:
    """Counts aligned with ``patterns``: given per-frame counts, or the analytic model."""
    if session_counts is None:
        return analytic_counts(obj, patterns, **analytic)
    counts = np.asarray(session_counts)
    if counts.shape != (patterns.n,):
        raise ConfigError(f"{counts.size} frame counts for {patterns.n} patterns")
    if np.any(counts < 0):
        raise DomainError("counts must be nonnegative")
    return counts.astype(float)


def reconstruct(patterns: PatternSet, counts: np.ndarray) -> ImageGrid:
    b = np.asarray(counts, dtype=float)
    n = patterns.n
    if n < 2:
        raise DomainError("reconstruction needs at least two patterns")
    if b.shape != (n,):
        raise ConfigError(f"{b.size} counts for {n} patterns")
    pats = patterns.patterns.astype(float)
    centred_b = b - b.mean()
    centred_i = pats - pats.mean(axis=0)
    values = np.tensordot(centred_b, centred_i, axes=(0, 0)) / n
    return ImageGrid(values, n, patterns.mode, patterns.seed)


def snr_db(image: ImageGrid, signal_region: np.ndarray, background_region: np.ndarray) -> SnrReport:
    """SNR = s^2 / sigma_n with s the bright-minus-dark mean and sigma_n the dark variance."""
    sig = np.asarray(signal_region, dtype=bool)
    bg = np.asarray(background_region, dtype=bool)
    if not sig.any() or not bg.any():
        raise DomainError("signal and background regions must be nonempty")
    if np.any(sig & bg):
        raise DomainError("signal and background regions overlap")
    v = image.values
    s = float(v[sig].mean() - v[bg].mean())
    var = float(v[bg].var())
    if var == 0.0:
        return SnrReport(s, 0.0, math.inf, infinite=True)
    return SnrReport(s, var, 10.0 * math.log10(s * s / var))


def default_regions(obj: ObjectMask, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    open_ = obj.transmission > threshold
    return open_, ~open_


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.corrcoef(np.ravel(a), np.ravel(b))[0, 1])


def render_8bit(image: ImageGrid) -> np.ndarray:
    """Linear map of [min, max] onto [0, 255]; a flat image renders as zeros."""
    v = image.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.round((v - lo) / (hi - lo) * 255).astype(np.uint8)
