"""Shared oracles and helpers for the test suite.

The oracles here are deliberately written with explicit loops and textbook
constructions (DFT matrices, operator-form dissipators) so they stay
independent of the package's FFT-based production paths.
"""

import numpy as np

from ringclock.model import AmplitudeTable, ModelConfig, dispersion_grid


def random_density(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random Hermitian trace-1 matrix (not necessarily positive)."""
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a + a.conj().T
    return rho / np.trace(rho)


def dft_matrix(n: int) -> np.ndarray:
    """Position -> momentum unitary, U[q, b] = e^{-i 2 pi q b / N} / sqrt(N)."""
    q = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(q, q) / n) / np.sqrt(n)


def mask_momentum_matrix(table: AmplitudeTable, a: int) -> np.ndarray:
    """Momentum-basis matrix of the site-``a`` mask via the DFT unitary."""
    u = dft_matrix(table.n_sites)
    return u @ np.diag(table.h[a]) @ u.conj().T


def operator_form_liouvillian(
    config: ModelConfig, table: AmplitudeTable, rho: np.ndarray
) -> np.ndarray:
    """Textbook Lindblad right-hand side built from explicit operators."""
    ham = np.diag(dispersion_grid(config))
    out = -1j * (ham @ rho - rho @ ham)
    for a, rate in enumerate(config.rate_vector):
        d = mask_momentum_matrix(table, a)
        dd = d @ d
        out = out + rate * (d @ rho @ d - 0.5 * (dd @ rho + rho @ dd))
    return out
