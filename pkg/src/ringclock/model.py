"""Ring lattice, dispersion, and quasi-local measurement operators.

The system is a one-dimensional ring of ``N`` sites (lattice constant 1,
hbar = 1) with nearest-neighbour hopping ``t_hop``.  In the quasi-momentum
basis the Hamiltonian is diagonal with dispersion ``eps(k) = -2 t_hop cos k``
on the grid ``k_m = 2 pi m / N``.

Measurement back-action enters through one Hermitian operator per site.  In
the position basis the operator attached to site ``a`` is the multiplication
mask ``D_a = diag(h_a(b))`` where ``h_a(b)`` is a periodicised Gaussian of
width ``sigma`` centred at ``a``, normalised so that ``sum_a h_a(b)^2 = 1``
for every ``b`` (equivalently ``sum_a D_a^2 = identity``).

Conventions used throughout the package:

* Momentum-space arrays are stored in FFT order: index ``j`` carries
  ``k_j = 2 pi j / N`` understood modulo ``2 pi``, i.e. the signed value is
  ``2 pi m / N`` with ``m`` as in ``numpy.fft.fftfreq``.  Every formula in
  this package is periodic in the integer index, so no shifting is needed.
* Basis change: ``psi_k = fft(psi_b) / sqrt(N)`` and
  ``psi_b = ifft(psi_k) * sqrt(N)``, which makes the plane wave
  ``psi_b = exp(i k b) / sqrt(N)`` the momentum eigenstate ``|k>``.
* ``eta(q) = (1/sqrt(N)) sum_b h_0(b) exp(i q b)`` is the momentum profile
  of the mask; it is real and even because ``h_0`` is real and even.

Site indices are 0-based internally and 1-based in user-facing output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError

POSITION = "position"
MOMENTUM = "momentum"

GRID_TOL = 1e-9


@dataclass(frozen=True)
class ModelConfig:
    """Physical parameters of one run; immutable single source of truth.

    ``rates`` is either a scalar (uniform dissipation rate ``gamma``) or a
    length-``n_sites`` sequence of per-site rates.
    """

    n_sites: int
    t_hop: float
    sigma: float
    rates: float | np.ndarray

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 4:
            raise ConfigError(f"n_sites must be an integer >= 4, got {self.n_sites}")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        if not np.isfinite(self.t_hop):
            raise ConfigError(f"t_hop must be finite, got {self.t_hop}")
        if not (self.sigma > 0):
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if np.ndim(self.rates) == 0:
            if not (float(self.rates) >= 0):
                raise ConfigError(f"rates must be >= 0, got {self.rates}")
            object.__setattr__(self, "rates", float(self.rates))
        else:
            vec = np.asarray(self.rates, dtype=float)
            if vec.shape != (self.n_sites,):
                raise ConfigError(
                    f"per-site rates must have length {self.n_sites}, got shape {vec.shape}"
                )
            if not np.all(vec >= 0):
                raise ConfigError("per-site rates must all be >= 0")
            vec.setflags(write=False)
            object.__setattr__(self, "rates", vec)
        if self.sigma > 0.25 * self.n_sites:
            # the two-image Gaussian truncates the periodic sum; beyond
            # sigma ~ N/4 the neglected images are no longer negligible
            warnings.warn(
                f"sigma={self.sigma} exceeds 0.25*n_sites={0.25 * self.n_sites}; "
                "the two-image Gaussian mask becomes inaccurate",
                stacklevel=2,
            )

    @property
    def is_uniform(self) -> bool:
        return np.ndim(self.rates) == 0

    @property
    def gamma(self) -> float:
        """Uniform rate; raises if the config carries per-site rates."""
        if not self.is_uniform:
            raise ConfigError("config has per-site rates, no single gamma")
        return float(self.rates)

    @property
    def rate_vector(self) -> np.ndarray:
        """Per-site rates as a length-N vector (broadcast if uniform)."""
        if self.is_uniform:
            return np.full(self.n_sites, float(self.rates))
        return np.asarray(self.rates)

    @property
    def max_rate(self) -> float:
        return float(np.max(self.rate_vector))

    def momentum_grid(self) -> np.ndarray:
        """Signed momentum values k_j in FFT order, in [-pi, pi)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_sites)

    @property
    def ring_period(self) -> float:
        """Time for one ring lap at the maximal group velocity 2*t_hop."""
        if self.t_hop == 0:
            return np.inf
        return self.n_sites / (2.0 * abs(self.t_hop))


def dispersion(config: ModelConfig, k: float) -> float:
    """Single-band energy -2 t_hop cos(k) for ``k`` on the momentum grid."""
    m = k * config.n_sites / (2.0 * np.pi)
    if abs(m - round(m)) > GRID_TOL * config.n_sites:
        raise ConfigError(f"k={k} is not on the grid 2*pi*m/{config.n_sites}")
    return -2.0 * config.t_hop * np.cos(k)


def dispersion_grid(config: ModelConfig) -> np.ndarray:
    """eps(k_j) over the full grid, FFT order."""
    j = np.arange(config.n_sites)
    return -2.0 * config.t_hop * np.cos(2.0 * np.pi * j / config.n_sites)


def hamiltonian_phases(config: ModelConfig, dt: float) -> np.ndarray:
    """Free propagator exp(-i eps_k dt) per grid point (momentum basis)."""
    if not np.isfinite(dt):
        raise ConfigError(f"dt must be finite, got {dt}")
    return np.exp(-1j * dispersion_grid(config) * dt)


def to_momentum_amps(amps: np.ndarray) -> np.ndarray:
    """Position -> momentum amplitudes (unitary)."""
    return np.fft.fft(amps) / np.sqrt(len(amps))


def to_position_amps(amps: np.ndarray) -> np.ndarray:
    """Momentum -> position amplitudes (unitary)."""
    return np.fft.ifft(amps) * np.sqrt(len(amps))


@dataclass
class PureState:
    """Single-particle wave function with a basis tag."""

    amps: np.ndarray
    basis: str = POSITION
    time: float = 0.0

    def __post_init__(self):
        if self.basis not in (POSITION, MOMENTUM):
            raise ConfigError(f"unknown basis {self.basis!r}")
        self.amps = np.asarray(self.amps, dtype=complex)

    @property
    def n_sites(self) -> int:
        return len(self.amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "PureState":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero state")
        return PureState(self.amps / n, self.basis, self.time)

    def in_position(self) -> "PureState":
        if self.basis == POSITION:
            return self
        return PureState(to_position_amps(self.amps), POSITION, self.time)

    def in_momentum(self) -> "PureState":
        if self.basis == MOMENTUM:
            return self
        return PureState(to_momentum_amps(self.amps), MOMENTUM, self.time)

    def position_density(self) -> np.ndarray:
        return np.abs(self.in_position().amps) ** 2

    def momentum_density(self) -> np.ndarray:
        return np.abs(self.in_momentum().amps) ** 2


def momentum_state(n_sites: int, m: int) -> PureState:
    """Momentum eigenstate |k> with k = 2*pi*m/n_sites."""
    amps = np.zeros(n_sites, dtype=complex)
    amps[m % n_sites] = 1.0
    return PureState(amps, MOMENTUM)


def position_state(n_sites: int, site: int) -> PureState:
    """Position eigenstate |b> (0-based site index)."""
    amps = np.zeros(n_sites, dtype=complex)
    amps[site % n_sites] = 1.0
    return PureState(amps, POSITION)


def uniform_state(n_sites: int) -> PureState:
    """Equal-amplitude superposition over all sites (equals |k=0>)."""
    return PureState(np.full(n_sites, 1.0 / np.sqrt(n_sites), dtype=complex), POSITION)


@dataclass(frozen=True)
class AmplitudeTable:
    """Precomputed measurement-mask data for one (N, sigma).

    ``h[a, b]`` is the mask value of the operator at site ``a`` evaluated at
    site ``b``; ``eta`` is the momentum profile of ``h[0]`` (real, even, FFT
    order); ``eta2 = eta**2``; ``h4sum[a] = sum_b h[a, b]**4``.
    """

    h: np.ndarray
    eta: np.ndarray
    eta2: np.ndarray
    h4sum: np.ndarray

    def __post_init__(self):
        for name in ("h", "eta", "eta2", "h4sum"):
            getattr(self, name).setflags(write=False)

    @property
    def n_sites(self) -> int:
        return len(self.eta)


def build_amplitude_table(config: ModelConfig) -> AmplitudeTable:
    """Build the Gaussian masks, their normalization, and eta(q).

    The mask is the two-image periodicised Gaussian
    ``h_0(r) ~ exp(-r^2/(2 sigma^2)) + exp(-(N-r)^2/(2 sigma^2))`` for the
    cyclic distance ``r = (b - a) mod N``, scaled by ``1/sqrt(N_h)`` with
    ``N_h = sum_r (...)^2`` so that ``sum_a h_a(b)^2 = 1`` for every ``b``.
    """
    n = config.n_sites
    r = np.arange(n, dtype=float)
    raw = np.exp(-0.5 * (r / config.sigma) ** 2) + np.exp(
        -0.5 * ((n - r) / config.sigma) ** 2
    )
    h0 = raw / np.sqrt(np.sum(raw**2))

    # row a is h0 cyclically shifted so that h[a, b] = h0[(b - a) mod N]
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    h = h0[idx]

    eta_c = np.sqrt(n) * np.fft.ifft(h0)  # (1/sqrt(N)) sum_b h0[b] e^{+iqb}
    im_max = float(np.max(np.abs(eta_c.imag)))
    if im_max > 1e-12:
        raise NumericalError(
            f"eta(q) acquired an imaginary part {im_max:.3e}; h_0 is not even"
        )
    eta = eta_c.real.copy()
    eta2 = eta**2
    h4sum = np.sum(h**4, axis=1)
    return AmplitudeTable(h=h, eta=eta, eta2=eta2, h4sum=h4sum)


def apply_D(
    table: AmplitudeTable, a: int, psi: PureState, to_position: bool = False
) -> PureState:
    """Apply the site-``a`` mask; output is intentionally unnormalized.

    The squared norm of the result is the jump weight ``||D_a psi||^2``.
    With ``to_position=True`` the result keeps the position-basis tag
    instead of being converted back to the input basis.
    """
    pos = psi.in_position()
    masked = PureState(table.h[a % table.n_sites] * pos.amps, POSITION, psi.time)
    if to_position or psi.basis == POSITION:
        return masked
    return masked.in_momentum()
