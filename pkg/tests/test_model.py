import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ringclock import ConfigError, ModelConfig, apply_D, build_amplitude_table, dispersion
from ringclock.model import (
    MOMENTUM,
    POSITION,
    PureState,
    hamiltonian_phases,
    momentum_state,
    position_state,
    to_momentum_amps,
    to_position_amps,
    uniform_state,
)


def test_dispersion_values():
    assert dispersion(ModelConfig(8, 1.0, 1.0, 0.0), 0.0) == pytest.approx(-2.0)
    assert dispersion(ModelConfig(8, 1.0, 1.0, 0.0), np.pi / 2) == pytest.approx(0.0, abs=1e-15)
    # pi is equivalent to -pi on the even grid
    assert dispersion(ModelConfig(8, 25.0, 1.0, 0.0), np.pi) == pytest.approx(50.0)


def test_dispersion_rejects_off_grid_k():
    cfg = ModelConfig(10, 1.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        dispersion(cfg, 0.3)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(3, 1.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        ModelConfig(8, 1.0, 0.0, 0.0)
    with pytest.raises(ConfigError):
        ModelConfig(8, 1.0, 1.0, -0.1)
    with pytest.raises(ConfigError):
        ModelConfig(8, 1.0, 1.0, [0.1] * 7)
    with pytest.warns(UserWarning, match="two-image"):
        ModelConfig(8, 1.0, 3.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(min_value=4, max_value=40),
    sigma=st.floats(min_value=0.05, max_value=5.0),
)
def test_mask_normalization(n, sigma):
    # sum_a h_a(b)^2 = 1 for every b
    table = build_amplitude_table(ModelConfig(n, 1.0, min(sigma, 0.25 * n), 0.0))
    assert_allclose(np.sum(table.h**2, axis=0), 1.0, atol=1e-12)


def test_sigma_to_zero_limit():
    table = build_amplitude_table(ModelConfig(4, 1.0, 1e-3, 0.0))
    assert_allclose(table.h, np.eye(4), atol=1e-14)
    assert_allclose(table.eta, 0.5, atol=1e-14)  # flat spectrum 1/sqrt(N)


def test_eta_matches_direct_dft():
    # independent oracle: plain double-loop DFT of the first mask row
    cfg = ModelConfig(10, 1.0, 1.0, 0.0)
    table = build_amplitude_table(cfg)
    n = 10
    oracle = np.zeros(n, dtype=complex)
    for q in range(n):
        for b in range(n):
            oracle[q] += table.h[0, b] * np.exp(2j * np.pi * q * b / n)
    oracle /= np.sqrt(n)
    assert np.max(np.abs(oracle.imag)) < 1e-12
    assert_allclose(table.eta, oracle.real, atol=1e-12)


def test_eta_parity():
    table = build_amplitude_table(ModelConfig(12, 1.0, 1.5, 0.0))
    flipped = table.eta[(-np.arange(12)) % 12]
    assert np.max(np.abs(table.eta - flipped)) < 1e-12


def test_translation_covariance():
    table = build_amplitude_table(ModelConfig(9, 1.0, 1.2, 0.0))
    n = 9
    for s in (1, 4):
        rolled = table.h[(np.arange(n) + s) % n][:, (np.arange(n) + s) % n]
        assert_allclose(rolled, table.h, atol=0)


@pytest.mark.parametrize("n,sigma", [(8, 0.7), (20, 2.0), (50, 5.0)])
def test_completeness(n, sigma):
    # sum_a D_a^dagger D_a = identity (masks are position-diagonal)
    table = build_amplitude_table(ModelConfig(n, 1.0, sigma, 0.0))
    total = np.zeros((n, n))
    for a in range(n):
        total += np.diag(table.h[a]) @ np.diag(table.h[a])
    assert np.max(np.abs(total - np.eye(n))) < 1e-12


def test_basis_round_trip():
    rng = np.random.default_rng(5)
    for n in (6, 11, 16):
        amps = rng.normal(size=n) + 1j * rng.normal(size=n)
        back = to_position_amps(to_momentum_amps(amps))
        assert np.max(np.abs(back - amps)) < 1e-12
        # the transform is unitary
        assert np.linalg.norm(to_momentum_amps(amps)) == pytest.approx(
            np.linalg.norm(amps), rel=1e-12
        )


def test_plane_wave_is_momentum_eigenstate():
    # e^{+ikb}/sqrt(N) must map onto the single grid point k
    n = 12
    m = 3
    b = np.arange(n)
    plane = np.exp(2j * np.pi * m * b / n) / np.sqrt(n)
    mom = to_momentum_amps(plane)
    expected = np.zeros(n)
    expected[m] = 1.0
    assert_allclose(np.abs(mom), expected, atol=1e-12)


def test_apply_D_position_eigenstate():
    cfg = ModelConfig(10, 1.0, 1.0, 0.0)
    table = build_amplitude_table(cfg)
    psi = position_state(10, 3)
    out = apply_D(table, 2, psi)
    expected = np.zeros(10, dtype=complex)
    expected[3] = table.h[2, 3]
    assert_allclose(out.amps, expected, atol=0)


def test_apply_D_weights_sum_to_one():
    rng = np.random.default_rng(7)
    cfg = ModelConfig(14, 1.0, 1.5, 0.0)
    table = build_amplitude_table(cfg)
    amps = rng.normal(size=14) + 1j * rng.normal(size=14)
    psi = PureState(amps / np.linalg.norm(amps), POSITION)
    total = sum(apply_D(table, a, psi).norm() ** 2 for a in range(14))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_apply_D_momentum_state_ipr():
    cfg = ModelConfig(20, 1.0, 2.0, 0.0)
    table = build_amplitude_table(cfg)
    out = apply_D(table, 5, momentum_state(20, 2)).normalized()
    dens = out.position_density()
    assert 1.0 / np.sum(dens**2) == pytest.approx(1.0 / table.h4sum[5], rel=1e-12)


def test_apply_D_basis_flag():
    cfg = ModelConfig(8, 1.0, 1.0, 0.0)
    table = build_amplitude_table(cfg)
    psi = momentum_state(8, 1)
    out_mom = apply_D(table, 0, psi)
    out_pos = apply_D(table, 0, psi, to_position=True)
    assert out_mom.basis == MOMENTUM
    assert out_pos.basis == POSITION
    assert_allclose(out_pos.in_momentum().amps, out_mom.amps, atol=1e-12)


def test_hamiltonian_phases():
    cfg = ModelConfig(8, 1.3, 1.0, 0.0)
    assert_allclose(hamiltonian_phases(cfg, 0.0), np.ones(8), atol=0)
    ph = hamiltonian_phases(cfg, 0.7)
    assert_allclose(np.abs(ph), 1.0, atol=1e-15)
    # at k = pi/2 (index N/4) the energy vanishes
    assert ph[2] == pytest.approx(1.0, abs=1e-15)


def test_uniform_state_is_k0():
    psi = uniform_state(10)
    dens = psi.momentum_density()
    assert dens[0] == pytest.approx(1.0, abs=1e-12)
