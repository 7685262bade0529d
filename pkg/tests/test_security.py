import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsi.decoy import TABLE1, ClassCounts, DecoyObservables, IntensityConfig
from qsi.security import (COMPROMISED, INCONCLUSIVE, SECURE, binary_entropy, secret_key_rate,
                          single_photon_bounds, verdict)


def with_e_nu(e):
    return DecoyObservables(TABLE1.q_mu, TABLE1.q_nu, TABLE1.y0, TABLE1.e_mu, e)


def counted(e_mu_err, e_nu_err, sifted):
    # gains match the published table
    counts = {"signal": ClassCounts(10**9, 269000, sifted, e_mu_err),
              "decoy": ClassCounts(10**8, 7320, sifted, e_nu_err),
              "vacuum": ClassCounts(10**8, 300, 150, 75)}
    return DecoyObservables.from_counts(counts)


class TestVerdict:
    def test_table1_secure(self, intensities):
        v = verdict(TABLE1, intensities)
        assert v.decision == SECURE
        assert v.bound_e_nu_l == pytest.approx(0.146, abs=0.005)
        assert v.sifted_decoy is None and v.standard_error == 0.0

    def test_half_error_compromised(self, intensities):
        assert verdict(with_e_nu(0.5), intensities).decision == COMPROMISED

    def test_threshold_is_monotone(self, intensities):
        order = {SECURE: 0, INCONCLUSIVE: 1, COMPROMISED: 2}
        ranks = [order[verdict(with_e_nu(e), intensities).decision] for e in np.linspace(0, 0.5, 101)]
        assert ranks == sorted(ranks)

    def test_margin(self, intensities):
        bound = verdict(TABLE1, intensities).bound_e_nu_l
        # ~0.14 SE below the bound with 1000 bits: neither side clears 3 sigma
        near = counted(200, round(bound * 1000) - 5, 1000)
        assert verdict(near, intensities).decision == INCONCLUSIVE

    def test_too_few_bits(self, intensities):
        obs = counted(1, 40, 80)
        v = verdict(obs, intensities)
        assert v.decision == INCONCLUSIVE and v.sifted_decoy == 80

    def test_undefined_bound(self, intensities):
        obs = DecoyObservables(0.0, 0.0, 0.0, math.nan, math.nan)
        v = verdict(obs, intensities)
        assert v.decision == INCONCLUSIVE and math.isnan(v.bound_e_nu_l)

    def test_dict_keys(self, intensities):
        d = verdict(TABLE1, intensities, key_rate_bps=12.0).as_dict()
        assert d["key_rate_bps"] == 12.0 and d["decision"] == SECURE


class TestKeyRate:
    def test_binary_entropy(self):
        assert binary_entropy(0.5) == 1.0
        assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0
        assert binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-4)

    def test_table1_rate(self, intensities):
        r = secret_key_rate(TABLE1, intensities, 40e6, 13 / 16)
        assert 571 / 3 <= r <= 571 * 3

    def test_perfect_channel_by_hand(self):
        mu, nu = 0.5, 0.1
        cfg = IntensityConfig(mu, nu)
        obs = DecoyObservables(1 - math.exp(-mu), 1 - math.exp(-nu), 0.0, 0.0, 0.0)
        y1 = mu / (mu * nu - nu ** 2) * (math.expm1(nu) - math.expm1(mu) * nu ** 2 / mu ** 2)
        sp = single_photon_bounds(obs, cfg)
        assert sp.y1_lower == pytest.approx(y1, rel=1e-12)
        assert sp.e1_upper == 0.0
        expected = 0.5 * 0.8 * y1 * mu * math.exp(-mu) * 1e6
        assert secret_key_rate(obs, cfg, 1e6, 0.8) == pytest.approx(expected, rel=1e-12)

    def test_background_only_gives_zero(self, intensities):
        obs = DecoyObservables(3e-6, 3e-6, 3e-6, 0.5, 0.5)
        assert secret_key_rate(obs, intensities, 40e6, 13 / 16) == 0.0

    def test_undefined_signal_gives_zero(self, intensities):
        obs = DecoyObservables(0.0, 0.0, 0.0, math.nan, math.nan)
        assert secret_key_rate(obs, intensities, 40e6, 13 / 16) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 0.2), st.floats(0.0, 0.2), st.floats(1e-4, 0.05))
    def test_nonincreasing_in_errors(self, e_mu, e_nu, step):
        cfg = IntensityConfig()
        rate = lambda a, b: secret_key_rate(DecoyObservables(TABLE1.q_mu, TABLE1.q_nu, TABLE1.y0, a, b),
                                            cfg, 40e6, 13 / 16)
        base = rate(e_mu, e_nu)
        assert rate(e_mu + step, e_nu) <= base + 1e-9
        assert rate(e_mu, e_nu + step) <= base + 1e-9
