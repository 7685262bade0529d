"""Security verdicts and secret-key-rate estimates from decoy observables."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .decoy import DecoyObservables, IntensityConfig, qber_lower_bound
from .errors import UndefinedBoundError

SECURE, COMPROMISED, INCONCLUSIVE = "secure", "compromised", "inconclusive"
MIN_SIFTED_DECOY = 100
MARGIN_SIGMA = 3.0
F_EC = 1.16


@dataclass(frozen=True)
class SecurityVerdict:
    measured_e_nu: float
    bound_e_nu_l: float
    decision: str
    key_rate_bps: float
    sifted_decoy: int | None
    decoy_errors: int | None
    standard_error: float
    bound_clamped: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def verdict(obs: DecoyObservables, cfg: IntensityConfig, e2: float | None = None,
            key_rate_bps: float = 0.0, min_sifted: int = MIN_SIFTED_DECOY,
            margin_sigma: float = MARGIN_SIGMA) -> SecurityVerdict:
    """Compare the measured decoy QBER with the intercept-resend lower bound.

    Secure when E_nu + k*SE lies below the bound, compromised when
    E_nu - k*SE reaches it, inconclusive otherwise or when fewer than
    ``min_sifted`` sifted decoy bits exist.  Observables without raw counts
    are judged with SE = 0.
    """
    try:
        raw = qber_lower_bound(obs, cfg, e2, clamp=False)
        bound = min(0.5, max(0.0, raw))
        clamped = bound != raw
    except UndefinedBoundError:
        bound, clamped = math.nan, False

    sifted = errors = None
    if obs.counts is not None:
        sifted, errors = obs.counts["decoy"].sifted, obs.counts["decoy"].errors
    e = obs.e_nu
    se = 0.0
    if sifted:
        se = math.sqrt(e * (1 - e) / sifted)

    def result(decision):
        return SecurityVerdict(measured_e_nu=e, bound_e_nu_l=bound, decision=decision,
                               key_rate_bps=key_rate_bps, sifted_decoy=sifted, decoy_errors=errors,
                               standard_error=se, bound_clamped=clamped)

    if math.isnan(e) or math.isnan(bound) or (sifted is not None and sifted < min_sifted):
        return result(INCONCLUSIVE)
    if e + margin_sigma * se < bound:
        return result(SECURE)
    if e - margin_sigma * se >= bound:
        return result(COMPROMISED)
    return result(INCONCLUSIVE)


@dataclass(frozen=True)
class SinglePhotonBounds:
    y1_lower: float
    q1_lower: float
    e1_upper: float


def single_photon_bounds(obs: DecoyObservables, cfg: IntensityConfig) -> SinglePhotonBounds:
    """Weak+vacuum decoy estimates of the single-photon yield, gain and error rate."""
    mu, nu, y0 = cfg.mu, cfg.nu, obs.y0
    y1 = mu / (mu * nu - nu * nu) * (obs.q_nu * math.exp(nu) - obs.q_mu * math.exp(mu) * nu * nu / (mu * mu)
                                     - (mu * mu - nu * nu) / (mu * mu) * y0)
    y1 = max(0.0, y1)
    q1 = y1 * mu * math.exp(-mu)
    if y1 > 0 and not math.isnan(obs.e_nu):
        e1 = (obs.e_nu * obs.q_nu * math.exp(nu) - 0.5 * y0) / (y1 * nu)
        e1 = min(0.5, max(0.0, e1))
    else:
        e1 = 0.5
    return SinglePhotonBounds(y1, q1, e1)


def secret_key_rate(obs: DecoyObservables, cfg: IntensityConfig, pulse_rate: float,
                    signal_fraction: float, sifting_factor: float = 0.5, f_ec: float = F_EC) -> float:
    """Asymptotic key rate in bits per second, floored at zero.

    R = q * (Q1_L * (1 - H2(e1_U)) - f_ec * Q_mu * H2(E_mu)) * pulse_rate with
    q = sifting_factor * signal_fraction.
    """
    if math.isnan(obs.e_mu) or obs.e_mu >= 0.5:
        return 0.0
    sp = single_photon_bounds(obs, cfg)
    per_pulse = sp.q1_lower * (1 - binary_entropy(sp.e1_upper)) - f_ec * obs.q_mu * binary_entropy(obs.e_mu)
    return max(0.0, sifting_factor * signal_fraction * per_pulse * pulse_rate)
