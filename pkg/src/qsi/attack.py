"""Error floors of the filtered square-root-measurement intercept-resend attack.

For an n-photon pulse the four phase-encoded states have overlap
coefficients c_j(n).  Eve filters them with weights alpha_j and applies the
square-root measurement; with gamma_j = alpha_j c_j the induced error is

    e = 1/2 - (|g0| + |g2|)(|g1| + |g3|) / (2 sum_j g_j^2)

which we minimize numerically over alpha in [0, 1]^4.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateFilterError, DomainError

DEFAULT_N_MAX = 10


@dataclass(frozen=True)
class OverlapCoefficients:
    n: int
    c: tuple[float, float, float, float]

    def __post_init__(self):
        if abs(sum(x * x for x in self.c) - 1.0) > 1e-12:
            raise DomainError(f"overlap coefficients for n={self.n} are not normalized")


@dataclass(frozen=True)
class FilterWeights:
    alpha: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.alpha) != 4 or any(abs(a) > 1 for a in self.alpha):
            raise DomainError(f"filter weights must be four values with |alpha| <= 1, got {self.alpha}")


def overlap_coefficients(n: int) -> OverlapCoefficients:
    if n < 1 or int(n) != n:
        raise DomainError(f"overlap coefficients need an integer n >= 1, got {n}")
    amp = 2.0 ** -(1.0 + n / 2.0)
    cos, sin = math.cos(math.pi * n / 4), math.sin(math.pi * n / 4)
    # cos/sin of multiples of pi/4 leave ~1e-17 residue where the radicand should be 0
    radicands = [0.25 + amp * cos, 0.25 + amp * sin, 0.25 - amp * cos, 0.25 - amp * sin]
    c = tuple(math.sqrt(r) if r > 1e-15 else 0.0 for r in radicands)
    return OverlapCoefficients(n=int(n), c=c)


def _error_from_gamma(g: np.ndarray) -> np.ndarray:
    g = np.abs(g)
    norm = np.sum(g * g, axis=-1)
    overlap = (g[..., 0] + g[..., 2]) * (g[..., 1] + g[..., 3])
    with np.errstate(invalid="ignore", divide="ignore"):
        return 0.5 - overlap / (2.0 * norm)


def srm_error_rate(coeffs: OverlapCoefficients, weights: FilterWeights) -> float:
    gamma = np.asarray(weights.alpha, dtype=float) * np.asarray(coeffs.c, dtype=float)
    if not np.any(gamma):
        raise DegenerateFilterError("all filtered amplitudes vanish")
    return float(_error_from_gamma(gamma))


@dataclass(frozen=True)
class SrmMinimum:
    n: int
    error: float
    alpha: tuple[float, float, float, float]


def _starts(n_starts: int) -> np.ndarray:
    # fixed start list: the all-ones point, the cube corners with >= 2 ones, then a Halton-like fill
    base = [np.ones(4)]
    for mask in range(16):
        bits = np.array([(mask >> k) & 1 for k in range(4)], dtype=float)
        if bits.sum() >= 2 and bits.sum() < 4:
            base.append(0.1 + 0.9 * bits)
    k = 1
    primes = (2, 3, 5, 7)
    while len(base) < n_starts:
        point = []
        for p in primes:
            f, x, i = 1.0, 0.0, k
            while i:
                f /= p
                x += f * (i % p)
                i //= p
            point.append(0.05 + 0.95 * x)
        base.append(np.array(point))
        k += 1
    return np.array(base[:max(n_starts, 16)])


@functools.lru_cache(maxsize=None)
def _min_error(n: int, n_starts: int) -> SrmMinimum:
    c = np.asarray(overlap_coefficients(n).c)

    def objective(alpha):
        g = alpha * c
        norm = float(g @ g)
        if norm == 0.0:
            return 0.5, np.zeros(4)
        a, b = g[0] + g[2], g[1] + g[3]
        d_overlap = np.array([b, a, b, a])
        grad_g = -(d_overlap * norm - 2.0 * a * b * g) / (2.0 * norm * norm)
        return 0.5 - a * b / (2.0 * norm), grad_g * c

    best = None
    for x0 in _starts(n_starts):
        res = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * 4,
                       options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
        x = np.clip(res.x, 0.0, 1.0)
        val = objective(x)[0]
        if best is None or val < best[0] - 1e-10:
            best = (val, x)
    val, x = best
    return SrmMinimum(n=n, error=float(max(0.0, min(0.5, val))), alpha=tuple(float(a) for a in x))


def min_error_rate(n: int, n_starts: int = 16) -> SrmMinimum:
    """Minimum SRM error over filter weights for an ``n``-photon pulse."""
    if n < 1 or int(n) != n:
        raise DomainError(f"n must be an integer >= 1, got {n}")
    return _min_error(int(n), int(n_starts))


def grid_min_error_rate(n: int, step: float = 0.02, refine_to: float = 1e-6) -> float:
    """Brute-force minimum over a coarse alpha grid, zoomed around the best cell."""
    c = np.asarray(overlap_coefficients(n).c)
    lo, hi = np.zeros(4), np.ones(4)
    h = step
    best = 0.5
    while True:
        axes = [np.clip(np.arange(lo[k], hi[k] + h / 2, h), 0, 1) for k in range(4)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
        err = _error_from_gamma(grid * c)
        err = np.where(np.isnan(err), 0.5, err)
        i = int(np.argmin(err))
        best = min(best, max(0.0, float(err[i])))
        if h <= refine_to:
            return best
        centre = grid[i]
        lo, hi = np.clip(centre - 2 * h, 0, 1), np.clip(centre + 2 * h, 0, 1)
        h /= 10.0


@dataclass(frozen=True)
class AttackProfile:
    """Per-photon-number error floors e_1..e_{n_max}; larger n are resent error-free."""

    error_rates: tuple[float, ...]

    def __post_init__(self):
        if any(not 0.0 <= e <= 0.5 for e in self.error_rates):
            raise DomainError("attack error rates must lie in [0, 0.5]")

    @property
    def n_max(self) -> int:
        return len(self.error_rates)

    def error_rate(self, n: int) -> float:
        if n <= 0:
            return 0.5
        if n > self.n_max:
            return 0.0
        return self.error_rates[n - 1]

    def as_array(self, n_max: int) -> np.ndarray:
        """Error rates indexed by photon number 0..n_max (index 0 is background)."""
        return np.array([self.error_rate(n) for n in range(n_max + 1)])


def srm_attack_profile(n_max: int = DEFAULT_N_MAX) -> AttackProfile:
    return AttackProfile(tuple(min_error_rate(n).error for n in range(1, n_max + 1)))
