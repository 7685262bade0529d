import math

import numpy as np
import pytest

from conftest import within_sigma
from qsi.attack import srm_attack_profile
from qsi.decoy import TABLE1, ChannelModel, DecoyObservables, IntensityConfig, overall_gain, qber_lower_bound
from qsi.errors import CalibrationError, ConfigError
from qsi.protocol import (AttackConfig, IntensityClass, PulseState, SimulationConfig, calibrate_channel,
                          eve_intercept, run_session, sample_pulse, sample_pulses, transmit, transmit_batch)

E2 = (2 - math.sqrt(2)) / 4


@pytest.fixture
def sim(intensities, table1_channel):
    return SimulationConfig(intensities, table1_channel, rng_seed=5)


class TestSampling:
    def test_class_frequencies(self, sim):
        classes, phases, photons = sample_pulses(np.random.default_rng(1), sim, 10**6)
        for c, p in enumerate((13 / 16, 2 / 16, 1 / 16)):
            assert within_sigma((classes == c).sum(), 10**6, p)
        for k in range(4):
            assert within_sigma((phases == k).sum(), 10**6, 0.25)

    def test_signal_mean_photon_number(self, table1_channel):
        cfg = SimulationConfig(IntensityConfig(0.68, 0.18, (1.0, 0.0, 0.0)), table1_channel)
        _, _, photons = sample_pulses(np.random.default_rng(2), cfg, 10**6)
        assert abs(photons.mean() - 0.68) < 5 * math.sqrt(0.68 / 10**6)

    def test_scalar_sampler(self, sim):
        rng = np.random.default_rng(3)
        pulses = [sample_pulse(rng, sim) for _ in range(20000)]
        assert all(p.photon_number == 0 for p in pulses if p.intensity_class is IntensityClass.VACUUM)
        assert all(0 <= p.phase_index < 4 for p in pulses)
        assert within_sigma(sum(p.intensity_class is IntensityClass.SIGNAL for p in pulses), 20000, 13 / 16)

    def test_basis_mapping(self):
        assert [PulseState(IntensityClass.SIGNAL, k, 1).basis for k in range(4)] == ["Z", "X", "Z", "X"]


class TestTransmit:
    def test_ideal_channel(self):
        rng = np.random.default_rng(0)
        ch = ChannelModel(1.0, 0.0, 0.0)
        events = [transmit(PulseState(IntensityClass.SIGNAL, k % 4, 1 + k % 3), ch, rng) for k in range(2000)]
        assert all(e.detected for e in events)
        assert not any(e.bit_error for e in events if e.sifted)
        assert all(e.sifted == (e.bob_basis == PulseState(IntensityClass.SIGNAL, k % 4, 1).basis)
                   for k, e in enumerate(events))

    def test_background_only(self, table1_channel):
        cfg = SimulationConfig(IntensityConfig(0.68, 0.18, (0.0, 0.0, 1.0)), table1_channel, n_pulses=10**7,
                               rng_seed=9)
        vac = run_session(cfg, 100).observables.counts["vacuum"]
        assert vac.sent == 10**9
        assert within_sigma(vac.detected, vac.sent, 3.0e-6)
        assert within_sigma(vac.errors, vac.sifted, 0.5)

    def test_calibrated_signal_qber(self, sim):
        # 1e9 pulses: ~1.1e5 sifted signal bits put the 0.2pp tolerance at ~4.5 SE
        obs = run_session(sim, 5000).observables
        assert obs.e_mu == pytest.approx(0.0213, abs=0.002)


class TestEve:
    @pytest.mark.parametrize("n,expected", [(1, 0.25), (2, E2)])
    def test_forced_photon_number(self, table1_channel, n, expected):
        rng = np.random.default_rng(n)
        size = 10**7
        attack = AttackConfig(srm_attack_profile(), "always-detected", 1.0)
        tally = transmit_batch(np.zeros(size, dtype=int), np.full(size, n), rng.integers(4, size=size),
                               np.ones(size, dtype=bool), table1_channel, attack, rng)
        sent, det, sifted, errors = tally.counts[0]
        assert det == size
        p = expected + table1_channel.background_yield * (0.5 - expected)
        assert within_sigma(errors, sifted, p)

    def test_scalar_intercept(self, table1_channel):
        rng = np.random.default_rng(4)
        profile = srm_attack_profile()
        events = [eve_intercept(PulseState(IntensityClass.SIGNAL, k % 4, 1), profile, rng, table1_channel,
                                "always-detected") for k in range(40000)]
        sifted = [e for e in events if e.sifted]
        assert within_sigma(sum(e.bit_error for e in sifted), len(sifted), 0.25 + 3e-6 * 0.25)

    def test_eve_sends_nothing_on_vacuum(self):
        rng = np.random.default_rng(5)
        ev = [eve_intercept(PulseState(IntensityClass.VACUUM, 0, 0), srm_attack_profile(), rng,
                            ChannelModel(0.5, 0.0), "always-detected") for _ in range(1000)]
        assert not any(e.detected for e in ev)

    def test_full_attack_exceeds_bound(self, intensities, table1_channel):
        cfg = SimulationConfig(intensities, table1_channel, attack=AttackConfig(), rng_seed=21)
        obs = run_session(cfg, 500).observables
        assert obs.e_nu >= qber_lower_bound(obs, intensities)

    def test_lossless_resend_preserves_gain(self, intensities, table1_channel):
        clean = run_session(SimulationConfig(intensities, table1_channel, rng_seed=2), 500).observables
        hit = run_session(SimulationConfig(intensities, table1_channel, attack=AttackConfig(), rng_seed=2),
                          500).observables
        sent = hit.counts["signal"].sent
        assert within_sigma(hit.counts["signal"].detected, sent, clean.q_mu, k=6)


class TestSession:
    def test_table1_gains(self, sim):
        obs = run_session(sim, 500).observables
        assert obs.q_mu == pytest.approx(2.69e-4, rel=0.03)
        assert obs.q_nu == pytest.approx(7.32e-5, rel=0.05)

    def test_dead_channel(self, intensities):
        cfg = SimulationConfig(intensities, ChannelModel(0.0, 0.0))
        obs = run_session(cfg, 3, 1000).observables
        assert obs.q_mu == obs.q_nu == obs.y0 == 0.0
        assert obs.undefined == ("signal", "decoy")

    def test_deterministic(self, sim):
        a, b = run_session(sim, 20), run_session(sim, 20)
        assert a.observables == b.observables
        assert np.array_equal(a.frame_tallies, b.frame_tallies)

    def test_worker_independent(self, sim):
        a, b = run_session(sim, 16), run_session(sim, 16, workers=4)
        assert np.array_equal(a.frame_tallies, b.frame_tallies)

    def test_seed_changes_result(self, sim, intensities, table1_channel):
        other = SimulationConfig(intensities, table1_channel, rng_seed=6)
        assert not np.array_equal(run_session(sim, 5).frame_tallies, run_session(other, 5).frame_tallies)

    @pytest.mark.parametrize("engine", ["aggregate", "pulse"])
    def test_gains_match_analytic(self, intensities, engine):
        ch = ChannelModel(0.02, 1e-4, 0.03)
        obs = run_session(SimulationConfig(intensities, ch, rng_seed=8), 10, 10**6, engine=engine).observables
        s, d = obs.counts["signal"], obs.counts["decoy"]
        assert within_sigma(s.detected, s.sent, overall_gain(ch, 0.68))
        assert within_sigma(d.detected, d.sent, overall_gain(ch, 0.18))
        # sifting keeps half
        assert within_sigma(s.sifted, s.detected, 0.5)

    def test_engines_agree_under_attack(self, intensities):
        ch = ChannelModel(0.05, 1e-4, 0.02)
        attack = AttackConfig(fraction=0.5)
        agg = run_session(SimulationConfig(intensities, ch, attack=attack, rng_seed=1), 10, 10**6).observables
        pul = run_session(SimulationConfig(intensities, ch, attack=attack, rng_seed=1), 10, 10**6,
                          engine="pulse").observables
        for name in ("signal", "decoy"):
            a, p = agg.counts[name], pul.counts[name]
            # difference of two independent binomial proportions
            pa, pp = a.errors / a.sifted, p.errors / p.sifted
            se = math.sqrt(pa * (1 - pa) / a.sifted + pp * (1 - pp) / p.sifted)
            assert abs(pa - pp) < 5 * se

    def test_frame_counts_are_signal_sifted(self, sim):
        r = run_session(sim, 7)
        assert r.frame_counts.sum() == r.observables.counts["signal"].sifted
        obs, counts = r
        assert counts.shape == (7,)

    def test_frame_transmittance_shape(self, sim):
        with pytest.raises(ConfigError):
            run_session(sim, 3, frame_transmittance=[1.0, 1.0])


class TestCalibration:
    def test_table1(self, intensities):
        ch = calibrate_channel(TABLE1, intensities)
        closed = -math.log(1 - (TABLE1.q_mu - TABLE1.y0) / (1 - TABLE1.y0)) / 0.68
        assert ch.transmittance == pytest.approx(closed, rel=1e-11)
        assert ch.transmittance == pytest.approx(3.9e-4, rel=0.01)
        assert abs(overall_gain(ch, 0.68) - TABLE1.q_mu) < 1e-10
        assert ch.misalignment_error == pytest.approx(0.016, abs=5e-4)

    def test_background_only_target(self, intensities):
        target = DecoyObservables(3e-6, 3e-6, 3e-6, 0.5, 0.5)
        assert calibrate_channel(target, intensities).transmittance == 0.0

    def test_infeasible(self, intensities):
        with pytest.raises(CalibrationError):
            calibrate_channel(DecoyObservables(1e-6, 1e-6, 3e-6, 0.02, 0.02), intensities)
