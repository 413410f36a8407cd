"""Master-equation evolution of the density matrix in the momentum basis.

Three routes are provided:

* ``DenseLiouvillian`` — the full N^2 x N^2 superoperator with the explicit
  matrix elements (three dissipative sums with site-phase factors).  It
  supports arbitrary per-site rates and exists as the correctness reference;
  a memory guard refuses N > 32.
* ``UniformLiouvillian`` — the fast path for uniform rates.  The site sum
  collapses to a Kronecker delta that conserves the offset d = k - k', so the
  mixing term is a convolution along the diagonal direction of rho and the
  whole application is two 2D FFTs, O(N^2 log N).
* ``OffsetSectors`` — the same uniform-rate generator restricted to a chosen
  set of offsets d, stepping the decoupled length-N sectors as one block.
  This is what makes steady-state correlators at N = 200 cheap.

The diagonal sector (d = 0) additionally has a closed-form solution: its
generator eta^2(k - alpha) - delta is circulant, hence diagonalized by the
DFT (``solve_diagonal_exact``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .model import AmplitudeTable, ModelConfig, PureState, dispersion_grid

DENSE_MAX_SITES = 32

TRACE_DRIFT_LIMIT = 1e-6


@dataclass
class DensityMatrix:
    """N x N momentum-basis density matrix with its current time."""

    rho: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.ndim != 2 or self.rho.shape[0] != self.rho.shape[1]:
            raise ConfigError(f"rho must be square, got shape {self.rho.shape}")

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityMatrix":
        amps = state.in_momentum().amps
        return cls(np.outer(amps, amps.conj()), state.time)

    @classmethod
    def maximally_mixed(cls, n_sites: int) -> "DensityMatrix":
        return cls(np.eye(n_sites, dtype=complex) / n_sites)

    @classmethod
    def from_diagonal(cls, p: np.ndarray, time: float = 0.0) -> "DensityMatrix":
        return cls(np.diag(np.asarray(p, dtype=complex)), time)

    @property
    def n_sites(self) -> int:
        return self.rho.shape[0]

    def diagonal(self) -> np.ndarray:
        return self.rho.diagonal().real.copy()

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def trace_defect(self) -> float:
        return float(abs(np.trace(self.rho) - 1.0))

    def validate(self, tol: float = 1e-9, check_psd: bool = False) -> None:
        """Raise if the state violates Hermiticity, unit trace, or (on
        request, for initial states) positive semidefiniteness."""
        if self.hermiticity_defect() > tol:
            raise ConfigError(f"rho is not Hermitian (defect {self.hermiticity_defect():.2e})")
        if self.trace_defect() > tol:
            raise ConfigError(f"rho is not trace-1 (defect {self.trace_defect():.2e})")
        if check_psd:
            lo = float(np.min(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))))
            if lo < -tol:
                raise ConfigError(f"rho has a negative eigenvalue {lo:.2e}")


@dataclass
class DiagonalDistribution:
    """Populations p[k] = rho_kk of the diagonal sector."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)

    def validate(self, tol: float = 1e-9) -> None:
        if np.min(self.p) < -tol:
            raise ConfigError(f"population {np.min(self.p):.2e} below -{tol}")
        if abs(self.p.sum() - 1.0) > tol:
            raise ConfigError(f"populations sum to {self.p.sum()!r}, not 1")

    def clamped(self, tol: float = 1e-9) -> np.ndarray:
        """Copy with tiny round-off negatives zeroed (output-time only)."""
        if np.min(self.p) < -tol:
            raise NumericalError(f"population {np.min(self.p):.2e} below -{tol}")
        return np.where(self.p < 0.0, 0.0, self.p)


def _rk4_step(apply_fn, y, dt):
    k1 = apply_fn(y)
    k2 = apply_fn(y + (0.5 * dt) * k1)
    k3 = apply_fn(y + (0.5 * dt) * k2)
    k4 = apply_fn(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class DenseLiouvillian:
    """Explicit superoperator on vec(rho) (row-major), any rate profile.

    Writing the element as the coefficient of rho_{alpha beta} in
    d rho_{k k'} / dt, everything depends on the source offsets
    u = alpha - k and v = beta - k' only, through the site-phase sums
    P[D] = sum_a gamma_a e^{+i a 2 pi D / N} (the rates' reversed DFT) and
    the self-convolution of eta; this keeps the build fully vectorized:

        gain[u, v]       = eta(u) eta(v) P[u - v] / N       (all alpha, beta)
        loss_right[u]    = (eta*eta)(u) P[u] / (2N)         (columns beta = k')
        loss_left[v]     = (eta*eta)(v) conj(P[v]) / (2N)   (rows alpha = k)

    plus the unitary diagonal -i(eps_k - eps_k').  For uniform rates P is
    N gamma delta[D] and the offsets collapse to u = v.
    """

    def __init__(self, config: ModelConfig, table: AmplitudeTable):
        n = config.n_sites
        if n > DENSE_MAX_SITES:
            raise ConfigError(
                f"dense superoperator refused for N={n} > {DENSE_MAX_SITES}; "
                "use uniform rates and the fast path"
            )
        eps = dispersion_grid(config)
        eta = table.eta
        rate_phases = n * np.fft.ifft(config.rate_vector)  # P[D], reversed DFT
        conv2 = np.fft.ifft(np.fft.fft(eta) ** 2).real  # (eta * eta)[x], even

        grid = np.arange(n)
        off = (grid[None, :] - grid[:, None]) % n  # off[k, alpha] = alpha - k
        gain = (eta[:, None] * eta[None, :]) * rate_phases[
            (grid[:, None] - grid[None, :]) % n
        ] / n  # gain[u, v]
        loss_right = 0.5 / n * rate_phases * conv2  # multiplies rho_{alpha k'}
        loss_left = 0.5 / n * np.conj(rate_phases) * conv2  # multiplies rho_{k beta}

        u = off[:, None, :, None]  # (k, k', alpha, beta) broadcast
        v = off[None, :, None, :]
        mat = gain[u, v].astype(complex)
        mat -= loss_right[u] * (v == 0)
        mat -= loss_left[v] * (u == 0)
        unit = (-1j) * (eps[:, None] - eps[None, :])
        mat += unit[:, :, None, None] * ((u == 0) & (v == 0))
        self.n_sites = n
        self.matrix = mat.reshape(n * n, n * n)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        n = self.n_sites
        return (self.matrix @ np.asarray(rho, dtype=complex).reshape(n * n)).reshape(n, n)


def apply_liouvillian_dense(
    config: ModelConfig, table: AmplitudeTable, rho: np.ndarray
) -> np.ndarray:
    """d rho / dt through the explicit superoperator (reference path)."""
    return DenseLiouvillian(config, table).apply(rho)


class UniformLiouvillian:
    """Uniform-rate generator applied in O(N^2 log N).

    L[rho] = (-i(eps_k - eps_k') - gamma) rho + gamma * M with
    M[k, k'] = sum_m eta^2(m) rho[k+m, k'+m], a convolution along the
    diagonal direction, evaluated as ifft2(ghat(q1+q2) * fft2(rho)).
    """

    def __init__(self, config: ModelConfig, table: AmplitudeTable):
        gamma = config.gamma
        n = config.n_sites
        eps = dispersion_grid(config)
        self.linear = -1j * (eps[:, None] - eps[None, :]) - gamma
        ghat = np.fft.fft(table.eta2).real  # real: eta^2 is even
        q = np.arange(n)
        self.mix_hat = gamma * ghat[(q[:, None] + q[None, :]) % n]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        mix = np.fft.ifft2(self.mix_hat * np.fft.fft2(rho))
        return self.linear * rho + mix


def apply_liouvillian_uniform(
    config: ModelConfig, table: AmplitudeTable, rho: np.ndarray
) -> np.ndarray:
    """d rho / dt on the uniform-rate fast path."""
    return UniformLiouvillian(config, table).apply(np.asarray(rho, dtype=complex))


class OffsetSectors:
    """Decoupled evolution of selected offsets d = k - k' (uniform rates).

    The sector vectors v_d[k] = rho[k, (k - d) mod N] obey
    dv/dt = (-i(eps_k - eps_{k-d}) - gamma) v + gamma (eta^2 conv v)
    independently per d; all requested offsets step together as an
    (n_offsets, N) block.
    """

    def __init__(self, config: ModelConfig, table: AmplitudeTable, offsets):
        gamma = config.gamma
        n = config.n_sites
        eps = dispersion_grid(config)
        self.offsets = np.asarray(offsets, dtype=int) % n
        k = np.arange(n)[None, :]
        d = self.offsets[:, None]
        self.linear = -1j * (eps[k] - eps[(k - d) % n]) - gamma
        self.kernel_hat = gamma * np.fft.fft(table.eta2).real

    def apply(self, v: np.ndarray) -> np.ndarray:
        mix = np.fft.ifft(self.kernel_hat * np.fft.fft(v, axis=-1), axis=-1)
        return self.linear * v + mix

    def rk4_step(self, v: np.ndarray, dt: float) -> np.ndarray:
        return _rk4_step(self.apply, v, dt)


def default_step(config: ModelConfig) -> float:
    """Fixed RK4 step 0.05 * min(1/gamma_max, 1/(2 t_hop))."""
    scales = []
    if config.max_rate > 0:
        scales.append(1.0 / config.max_rate)
    if config.t_hop != 0:
        scales.append(1.0 / (2.0 * abs(config.t_hop)))
    if not scales:
        raise ConfigError("cannot pick a step size with t_hop = 0 and gamma = 0")
    return 0.05 * min(scales)


@dataclass
class DensityMatrixSeries:
    """Sampled master-equation evolution."""

    times: np.ndarray
    diagonals: np.ndarray  # (n_samples, N), real populations
    rhos: np.ndarray | None  # (n_samples, N, N) when stored
    max_trace_drift: float
    max_hermiticity_defect: float
    max_offdiagonal: float


def integrate(
    config: ModelConfig,
    table: AmplitudeTable,
    rho0: DensityMatrix,
    t_final: float,
    sample_dt: float,
    dt: float | str = "auto",
    method: str = "rk4",
    store: str = "auto",
) -> DensityMatrixSeries:
    """Advance rho0 with fixed-step RK4, sampling every ``sample_dt``.

    After each step the matrix is re-symmetrized, and the trace is
    monitored; drift beyond 1e-6 aborts with a step-size diagnostic.
    ``store`` in {"auto", "full", "diagonal"} controls whether full sampled
    matrices are kept ("auto" keeps them up to N = 128).
    """
    if method != "rk4":
        raise ConfigError(f"unknown integration method {method!r}")
    if not sample_dt > 0:
        raise ConfigError(f"sample_dt must be > 0, got {sample_dt}")
    if t_final < 0:
        raise ConfigError(f"t_final must be >= 0, got {t_final}")
    if dt == "auto":
        dt_max = default_step(config)
    else:
        dt_max = float(dt)
        if not dt_max > 0:
            raise ConfigError(f"dt must be > 0, got {dt}")
    n_sub = max(1, math.ceil(sample_dt / dt_max - 1e-12))
    step = sample_dt / n_sub

    gen = (
        UniformLiouvillian(config, table)
        if config.is_uniform
        else DenseLiouvillian(config, table)
    )

    n = config.n_sites
    n_samples = int(np.floor(t_final / sample_dt + 1e-9)) + 1
    # "auto" keeps full matrices while the sampled stack stays below ~64 MB
    keep_full = store == "full" or (store == "auto" and n_samples * n * n <= 4_000_000)
    times = np.arange(n_samples) * sample_dt
    diagonals = np.empty((n_samples, n))
    rhos = np.empty((n_samples, n, n), dtype=complex) if keep_full else None

    rho = np.array(rho0.rho, dtype=complex)
    drift = 0.0
    herm = 0.0
    offdiag = 0.0

    def record(i, mat):
        nonlocal drift, herm, offdiag
        diagonals[i] = mat.diagonal().real
        if rhos is not None:
            rhos[i] = mat
        drift = max(drift, float(abs(np.trace(mat) - 1.0)))
        offdiag = max(offdiag, float(np.max(np.abs(mat - np.diag(mat.diagonal())))))
        if drift > TRACE_DRIFT_LIMIT:
            raise NumericalError(
                f"trace drift {drift:.2e} beyond {TRACE_DRIFT_LIMIT}; "
                f"step size dt={step:.3e} is too large"
            )

    record(0, rho)
    for i in range(1, n_samples):
        for _ in range(n_sub):
            rho = _rk4_step(gen.apply, rho, step)
            # re-symmetrize so round-off cannot accumulate over long runs
            rho = 0.5 * (rho + rho.conj().T)
        herm = max(herm, float(np.max(np.abs(rho - rho.conj().T))))
        record(i, rho)

    return DensityMatrixSeries(
        times=times,
        diagonals=diagonals,
        rhos=rhos,
        max_trace_drift=drift,
        max_hermiticity_defect=herm,
        max_offdiagonal=offdiag,
    )


def diagonal_generator_eigenvalues(table: AmplitudeTable) -> np.ndarray:
    """Eigenvalues lambda_m - 1 of the circulant diagonal-sector generator.

    The generator L[k, alpha] = eta^2(alpha -k) - delta is circulant, so its
    eigenvalues are the DFT of the eta^2 sequence minus one; they are real,
    non-positive, and exactly one vanishes (population conservation).
    """
    lam = np.fft.fft(table.eta2)
    if np.max(np.abs(lam.imag)) > 1e-12:
        raise NumericalError("diagonal-sector eigenvalues are not real; eta^2 not even")
    return lam.real - 1.0


def solve_diagonal_exact(
    table: AmplitudeTable,
    p0: DiagonalDistribution | np.ndarray,
    gamma: float,
    times: np.ndarray,
) -> np.ndarray:
    """Closed-form populations p(t) of the diagonal sector, uniform rates.

    dp_k/dt = gamma (sum_alpha eta^2(alpha-k) p_alpha - p_k) is circulant,
    so p(t) = IDFT(exp(gamma (lambda - 1) t) * DFT(p0)).
    """
    vec = p0.p if isinstance(p0, DiagonalDistribution) else np.asarray(p0, dtype=float)
    decay = diagonal_generator_eigenvalues(table)
    phat = np.fft.fft(vec)
    t = np.asarray(times, dtype=float)[:, None]
    out = np.fft.ifft(np.exp(gamma * decay[None, :] * t) * phat[None, :], axis=1)
    return out.real
