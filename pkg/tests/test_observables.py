import warnings

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from conftest import mask_momentum_matrix
from ringclock import (
    ConfigError,
    ModelConfig,
    build_amplitude_table,
    correlator_ss,
    current_expectation,
    dominant_period,
    histogram,
    ipr,
    momentum_state,
    peak_angle_series,
    position_state,
    power_spectral_density,
    uniform_state,
)
from ringclock.liouville import DenseLiouvillian
from ringclock.model import MOMENTUM, POSITION, PureState, to_momentum_amps
from ringclock.trajectory import TrajectoryRecord


def _record(times, phi, sample_dt):
    return TrajectoryRecord(
        seed=0,
        sample_dt=sample_dt,
        times=times,
        current=np.zeros_like(times),
        ipr=np.ones_like(times),
        phi=phi,
        jump_times=np.array([]),
        jump_sites=np.array([], dtype=int),
        norm_defect=0.0,
    )


class TestCorrelator:
    def test_normalization_and_trace(self):
        cfg = ModelConfig(12, 1.0, 1.2, 1.0)
        table = build_amplitude_table(cfg)
        series = correlator_ss(cfg, table, 3, np.arange(0.0, 6.01, 0.25))
        assert series.c_norm[0] == pytest.approx(1.0, abs=1e-9)
        assert series.c_raw[0].real == pytest.approx(1.0 / 12, rel=1e-12)
        assert series.t_ref == pytest.approx(6.0)

    def test_decays_to_zero(self):
        cfg = ModelConfig(10, 1.0, 1.0, 2.0)
        table = build_amplitude_table(cfg)
        series = correlator_ss(cfg, table, 0, np.arange(0.0, 40.01, 0.5))
        assert abs(series.c_norm[-1]) < 1e-3

    def test_matches_dense_superoperator_oracle(self):
        # quantum regression through the explicit superoperator exponential
        n = 8
        cfg = ModelConfig(n, 1.1, 0.9, 0.7)
        table = build_amplitude_table(cfg)
        tau = np.array([0.0, 0.8, 1.6, 2.4, 3.2])
        series = correlator_ss(cfg, table, 2, tau)

        mat = DenseLiouvillian(cfg, table).matrix
        d_op = mask_momentum_matrix(table, 2)
        x0 = (d_op / n).reshape(-1)
        for i, t in enumerate(tau):
            x_t = (scipy.linalg.expm(mat * t) @ x0).reshape(n, n)
            oracle = np.trace(d_op @ x_t)
            assert abs(series.c_raw[i] - oracle) < 1e-8

    def test_site_independence(self):
        cfg = ModelConfig(10, 1.0, 1.0, 1.0)
        table = build_amplitude_table(cfg)
        tau = np.arange(0.0, 3.01, 0.5)
        s0 = correlator_ss(cfg, table, 0, tau)
        s4 = correlator_ss(cfg, table, 4, tau)
        assert_allclose(s0.c_norm, s4.c_norm, atol=1e-12)

    def test_flat_mask_rejected(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = ModelConfig(8, 1.0, 1e4, 1.0)
        table = build_amplitude_table(cfg)
        with pytest.raises(ConfigError, match="variance"):
            correlator_ss(cfg, table, 0, np.array([0.0, 1.0]))

    def test_correlator_is_real_for_this_model(self):
        cfg = ModelConfig(16, 1.0, 1.6, 0.8)
        table = build_amplitude_table(cfg)
        series = correlator_ss(cfg, table, 5, np.arange(0.0, 8.01, 0.5))
        assert series.im_max < 1e-12


class TestCurrent:
    def test_real_amplitudes_carry_no_current(self):
        assert current_expectation(uniform_state(10)) == 0.0
        assert current_expectation(position_state(10, 4)) == 0.0

    def test_momentum_eigenstate(self):
        # plane wave psi_b = e^{ikb}/sqrt(N): direct loop evaluation gives sin k
        n = 12
        for m in (1, 3, -2):
            k = 2 * np.pi * m / n
            plane = np.exp(1j * k * np.arange(n)) / np.sqrt(n)
            loop = sum(
                (np.conj(plane[a]) * plane[(a + 1) % n]).imag for a in range(n)
            )
            assert loop == pytest.approx(np.sin(k), abs=1e-12)
            assert current_expectation(momentum_state(n, m)) == pytest.approx(
                np.sin(k), abs=1e-12
            )

    def test_momentum_basis_identity(self):
        # J = sum_k sin(k) |psi_k|^2
        rng = np.random.default_rng(3)
        n = 14
        amps = rng.normal(size=n) + 1j * rng.normal(size=n)
        amps /= np.linalg.norm(amps)
        psi = PureState(amps, POSITION)
        k = 2 * np.pi * np.fft.fftfreq(n)
        mom = np.abs(to_momentum_amps(amps)) ** 2
        assert current_expectation(psi) == pytest.approx(np.sum(np.sin(k) * mom), abs=1e-12)

    def test_current_bound(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            amps = rng.normal(size=16) + 1j * rng.normal(size=16)
            amps /= np.linalg.norm(amps)
            assert abs(current_expectation(PureState(amps, POSITION))) <= 1.0 + 1e-12


class TestIpr:
    def test_extreme_states(self):
        assert ipr(position_state(30, 7)) == pytest.approx(1.0, rel=1e-12)
        assert ipr(momentum_state(30, 2)) == pytest.approx(30.0, rel=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            amps = rng.normal(size=25) + 1j * rng.normal(size=25)
            amps /= np.linalg.norm(amps)
            value = ipr(PureState(amps, POSITION))
            assert 1.0 - 1e-12 <= value <= 25.0 + 1e-12


class TestPeakAngle:
    def test_stationary_packet(self):
        times = np.arange(20) * 0.5
        phi = np.full(20, 2 * np.pi * 7 / 50)
        t, y = peak_angle_series(_record(times, phi, 0.5))
        assert_allclose(y, np.sin(2 * np.pi * 7 / 50), atol=0)
        assert np.all(np.abs(y) <= 1.0)

    def test_uniform_motion_single_tone(self):
        # one lap per period T: y is a pure tone at 2 pi / T
        n, T, dt = 50, 10.0, 0.1
        times = np.arange(0.0, 200.0, dt)
        sites = np.floor(n * times / T).astype(int) % n
        phi = 2 * np.pi * sites / n
        t, y = peak_angle_series(_record(times, phi, dt))
        spec = power_spectral_density(y, dt)
        assert spec.peak_omega() == pytest.approx(2 * np.pi / T, rel=0.02)

    def test_from_snapshots(self):
        dens = np.zeros((4, 10))
        dens[:, 3] = 1.0
        rec = _record(np.arange(4.0), None, 1.0)
        rec.snapshot_times = np.arange(4.0)
        rec.snapshots_position = dens
        t, y = peak_angle_series(rec)
        assert_allclose(y, np.sin(2 * np.pi * 3 / 10), atol=0)


class TestSpectrum:
    def test_pure_tone_on_grid(self):
        dt = 0.25
        n_t = 256
        t = np.arange(n_t) * dt
        omega0 = 2 * np.pi * 8 / (n_t * dt)
        spec = power_spectral_density(np.sin(omega0 * t), dt)
        assert spec.peak_omega() == pytest.approx(omega0, rel=1e-12)
        # all other bins are empty for an on-grid tone
        others = spec.s[np.abs(spec.omega - omega0) > 1e-9]
        assert np.max(others) < 1e-20

    def test_zero_signal(self):
        spec = power_spectral_density(np.zeros(32), 0.1, remove_mean=False)
        assert np.max(spec.s) == 0.0

    def test_too_few_samples(self):
        with pytest.raises(ConfigError):
            power_spectral_density(np.ones(7), 0.1)

    def test_parseval(self):
        rng = np.random.default_rng(6)
        y = rng.normal(size=200)
        dt = 0.05
        spec = power_spectral_density(y, dt)
        centered = y - y.mean()
        assert spec.total_power() == pytest.approx(
            dt * np.sum(centered**2), rel=1e-8
        )

    def test_nonnegative(self):
        spec = power_spectral_density(np.random.default_rng(0).normal(size=64), 0.3)
        assert np.min(spec.s) >= 0.0

    def test_welch_averaging_suppresses_fluctuations(self):
        # tone + noise: the averaged estimate puts the argmax on the tone
        rng = np.random.default_rng(12)
        dt = 0.1
        t = np.arange(4096) * dt
        omega0 = 2 * np.pi * 0.8
        y = np.sin(omega0 * t) + 1.5 * rng.normal(size=len(t))
        spec = power_spectral_density(y, dt, segments=16)
        assert spec.n_t == 256
        assert spec.peak_omega() == pytest.approx(omega0, rel=0.05)

    def test_welch_rejects_oversegmentation(self):
        with pytest.raises(ConfigError):
            power_spectral_density(np.ones(32), 0.1, segments=10)


def test_dominant_period_damped_cosine():
    t = np.arange(0.0, 100.0, 0.05)
    y = np.exp(-t / 40.0) * np.cos(2 * np.pi * t / 10.0)
    assert dominant_period(t, y, max_period=25.0) == pytest.approx(10.0, rel=0.02)


class TestHistogram:
    def test_two_gaussian_mixture_dips(self):
        rng = np.random.default_rng(7)
        values = np.concatenate(
            [rng.normal(-1.0, 0.2, 4000), rng.normal(1.0, 0.2, 4000)]
        )
        hist = histogram(values, 41)
        assert hist.dip_ratio < 1.0
        assert hist.left_mode == pytest.approx(-1.0, abs=0.2)
        assert hist.right_mode == pytest.approx(1.0, abs=0.2)

    def test_single_value_occupies_one_bin(self):
        hist = histogram(np.full(10, 3.7), 5)
        assert np.sum(hist.counts > 0) == 1
        assert hist.counts.sum() == 10

    def test_needs_two_values(self):
        with pytest.raises(ConfigError):
            histogram(np.array([1.0]), 5)
