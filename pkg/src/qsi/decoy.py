"""Weak+vacuum decoy-state statistics.

Closed-form pieces used by the security monitor: Poisson photon-number
statistics, the independent-photon yield model, overall gains, the
single+two-photon yield bound and the lower bound on the decoy-class QBER
that an intercept-resend attacker must induce.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .errors import DecoyPreconditionError, DomainError, UndefinedBoundError

logger = logging.getLogger(__name__)

# residual Poisson mass at which gain series are cut off
TAIL_TOL = 1e-15
E2_SRM = (2.0 - math.sqrt(2.0)) / 4.0
BACKGROUND_ERROR = 0.5


@dataclass(frozen=True)
class IntensityConfig:
    """Mean photon numbers and emission probabilities of the three classes."""

    mu: float = 0.68
    nu: float = 0.18
    class_probabilities: tuple[float, float, float] = (13 / 16, 2 / 16, 1 / 16)

    def __post_init__(self):
        object.__setattr__(self, "class_probabilities", tuple(float(p) for p in self.class_probabilities))
        if len(self.class_probabilities) != 3:
            raise DomainError("class_probabilities must be a (signal, decoy, vacuum) triple")
        if any(p < 0 for p in self.class_probabilities):
            raise DomainError("class probabilities must be nonnegative")
        if abs(sum(self.class_probabilities) - 1.0) > 1e-12:
            raise DomainError(f"class probabilities sum to {sum(self.class_probabilities)!r}, not 1")
        check_intensities(self.mu, self.nu)

    @property
    def means(self) -> tuple[float, float, float]:
        return (self.mu, self.nu, 0.0)


def check_intensities(mu: float, nu: float) -> None:
    if not (0.0 < nu < mu <= 1.0):
        raise DecoyPreconditionError(f"decoy method requires 0 < nu < mu <= 1, got mu={mu}, nu={nu}")


@dataclass(frozen=True)
class ChannelModel:
    """End-to-end transmittance, background yield and misalignment error."""

    transmittance: float
    background_yield: float = 3.0e-6
    misalignment_error: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.transmittance <= 1.0:
            raise DomainError(f"transmittance {self.transmittance} outside [0, 1]")
        if not 0.0 <= self.background_yield <= 1.0:
            raise DomainError(f"background_yield {self.background_yield} outside [0, 1]")
        if not 0.0 <= self.misalignment_error <= 0.5:
            raise DomainError(f"misalignment_error {self.misalignment_error} outside [0, 0.5]")

    def scaled(self, factor: float) -> "ChannelModel":
        """Same channel with transmittance multiplied by ``factor`` (capped at 1)."""
        return ChannelModel(min(1.0, self.transmittance * factor), self.background_yield, self.misalignment_error)


@dataclass(frozen=True)
class ClassCounts:
    sent: int = 0
    detected: int = 0
    sifted: int = 0
    errors: int = 0

    def __post_init__(self):
        if min(self.sent, self.detected, self.sifted, self.errors) < 0:
            raise DomainError("counts must be nonnegative")
        if not (self.errors <= self.sifted <= self.detected <= self.sent):
            raise DomainError(f"inconsistent counts {self}")

    def __add__(self, other: "ClassCounts") -> "ClassCounts":
        return ClassCounts(self.sent + other.sent, self.detected + other.detected,
                           self.sifted + other.sifted, self.errors + other.errors)

    @property
    def gain(self) -> float:
        return self.detected / self.sent if self.sent else 0.0

    @property
    def qber(self) -> float:
        return self.errors / self.sifted if self.sifted else math.nan


CLASS_NAMES = ("signal", "decoy", "vacuum")


@dataclass(frozen=True)
class DecoyObservables:
    """Measured gains and QBERs of the three intensity classes.

    QBERs are NaN when a class has no sifted detections; ``undefined``
    lists those classes. ``counts`` is ``None`` for observables quoted
    without raw tallies (e.g. a published table).
    """

    q_mu: float
    q_nu: float
    y0: float
    e_mu: float
    e_nu: float
    counts: dict[str, ClassCounts] | None = field(default=None, compare=True)

    def __post_init__(self):
        for name in ("q_mu", "q_nu", "y0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name}={v} outside [0, 1]")
        for name in ("e_mu", "e_nu"):
            v = getattr(self, name)
            if not (math.isnan(v) or 0.0 <= v <= 1.0):
                raise DomainError(f"{name}={v} outside [0, 1]")
        if self.counts is not None:
            expect = {"q_mu": self.counts["signal"].gain, "q_nu": self.counts["decoy"].gain,
                      "y0": self.counts["vacuum"].gain, "e_mu": self.counts["signal"].qber,
                      "e_nu": self.counts["decoy"].qber}
            for name, want in expect.items():
                got = getattr(self, name)
                same = (math.isnan(want) and math.isnan(got)) or abs(got - want) <= 1e-12
                if not same:
                    raise DomainError(f"{name}={got} inconsistent with raw counts ({want})")

    @classmethod
    def from_counts(cls, counts: dict[str, ClassCounts]) -> "DecoyObservables":
        s, d, v = (counts[k] for k in CLASS_NAMES)
        # a class that was never sent contributes a zero rate
        return cls(q_mu=s.gain, q_nu=d.gain, y0=v.gain, e_mu=s.qber, e_nu=d.qber, counts=dict(counts))

    @property
    def undefined(self) -> tuple[str, ...]:
        out = []
        if math.isnan(self.e_mu):
            out.append("signal")
        if math.isnan(self.e_nu):
            out.append("decoy")
        return tuple(out)


# Published experimental observables at mu=0.68, nu=0.18.
TABLE1 = DecoyObservables(q_mu=2.69e-4, q_nu=7.32e-5, y0=3.0e-6, e_mu=0.0213, e_nu=0.0399)


def poisson_pmf(mu: float, n: int) -> float:
    """Probability of ``n`` photons in a coherent pulse of mean ``mu``."""
    if mu < 0:
        raise DomainError(f"mean photon number must be >= 0, got {mu}")
    if n < 0 or int(n) != n:
        raise DomainError(f"photon number must be a nonnegative integer, got {n}")
    n = int(n)
    if mu == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


def poisson_vector(mu: float, n_max: int) -> np.ndarray:
    return np.array([poisson_pmf(mu, n) for n in range(n_max + 1)])


def yield_n(channel: ChannelModel, n: int) -> float:
    """Detection probability given ``n`` photons: 1 - (1-eta)^n (1-Y0)."""
    if n < 0:
        raise DomainError(f"photon number must be >= 0, got {n}")
    if n == 0:
        return channel.background_yield
    y = 1.0 - (1.0 - channel.transmittance) ** n * (1.0 - channel.background_yield)
    return min(1.0, max(0.0, y))


def yields(channel: ChannelModel, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    y = 1.0 - (1.0 - channel.transmittance) ** n * (1.0 - channel.background_yield)
    y[0] = channel.background_yield
    return np.clip(y, 0.0, 1.0)


def truncation_order(mu: float, tol: float = TAIL_TOL) -> int:
    """Smallest N with P(n > N) < tol for a Poisson(mu) source."""
    n = 0
    while poisson.sf(n, mu) >= tol:
        n += 1
    return n


def overall_gain(channel: ChannelModel, mu: float) -> float:
    """Gain sum_n P_n(mu) Y_n, truncated once the Poisson tail is below 1e-15."""
    if mu < 0:
        raise DomainError(f"mean photon number must be >= 0, got {mu}")
    n_max = truncation_order(mu)
    return float(np.dot(poisson_vector(mu, n_max), yields(channel, n_max)))


@dataclass(frozen=True)
class InequalityReport:
    mu: float
    nu: float
    n_max: int
    ratio_ok: bool
    first_violation: int | None
    p1_ok: bool
    p2_ok: bool

    @property
    def all_pass(self) -> bool:
        return self.ratio_ok and self.p1_ok and self.p2_ok


def decoy_inequality_check(mu: float, nu: float, n_max: int = 100) -> InequalityReport:
    """Check P_n(mu)/P_n(nu) >= P_3(mu)/P_3(nu) for 3 <= n <= n_max and P_1, P_2 ordering."""
    check_intensities(mu, nu)
    # ratio P_n(mu)/P_n(nu) = exp(nu - mu) (mu/nu)^n, compared in log space
    log_ratio = lambda n: (nu - mu) + n * (math.log(mu) - math.log(nu))
    ref = log_ratio(3)
    first_violation = None
    for n in range(3, n_max + 1):
        if log_ratio(n) < ref - 1e-12:
            first_violation = n
            break
    return InequalityReport(
        mu=mu, nu=nu, n_max=n_max,
        ratio_ok=first_violation is None,
        first_violation=first_violation,
        p1_ok=poisson_pmf(mu, 1) > poisson_pmf(nu, 1),
        p2_ok=poisson_pmf(mu, 2) > poisson_pmf(nu, 2),
    )


def _decoy_terms(cfg: IntensityConfig):
    mu, nu = cfg.mu, cfg.nu
    p3_mu, p3_nu = poisson_pmf(mu, 3), poisson_pmf(nu, 3)
    denom = p3_mu - p3_nu
    if denom == 0:
        raise DomainError("P_3(mu) == P_3(nu); decoy bound undefined")
    cross = poisson_pmf(nu, 0) * p3_mu - poisson_pmf(mu, 0) * p3_nu
    return p3_mu, p3_nu, denom, cross


def joint_yield_lower_bound(obs: DecoyObservables, cfg: IntensityConfig, clamp: bool = True) -> float:
    """Lower bound on P_1(nu) Y_1 + P_2(nu) Y_2 from the decoy/signal gains."""
    check_intensities(cfg.mu, cfg.nu)
    p3_mu, p3_nu, denom, cross = _decoy_terms(cfg)
    bound = (p3_mu * obs.q_nu - p3_nu * obs.q_mu - cross * obs.y0) / denom
    if clamp and bound < 0:
        logger.debug("joint yield bound %.3e clamped to 0", bound)
        return 0.0
    return bound


def qber_lower_bound(obs: DecoyObservables, cfg: IntensityConfig, e2: float | None = None,
                     clamp: bool = True) -> float:
    """Minimum decoy-class QBER compatible with an intercept-resend attack.

    ``e2`` is the attacker's two-photon error floor; by default the SRM
    minimum (2 - sqrt 2)/4. With ``clamp`` the result is restricted to
    [0, 0.5].
    """
    if e2 is None:
        e2 = E2_SRM
    if not 0.0 <= e2 <= 0.5:
        raise DomainError(f"e2={e2} outside [0, 0.5]")
    if not obs.q_nu > 0:
        raise UndefinedBoundError("decoy gain is zero; QBER bound undefined")
    check_intensities(cfg.mu, cfg.nu)
    p3_mu, p3_nu, denom, cross = _decoy_terms(cfg)
    total = (BACKGROUND_ERROR * poisson_pmf(cfg.nu, 0) * obs.y0
             + e2 * (p3_mu * obs.q_nu - p3_nu * obs.q_mu) / denom
             - e2 * obs.y0 * cross / denom)
    value = total / obs.q_nu
    if clamp:
        clamped = min(0.5, max(0.0, value))
        if clamped != value:
            logger.debug("QBER bound %.6f clamped to %.6f", value, clamped)
        return clamped
    return value
