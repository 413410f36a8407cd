"""Diagnostics: steady-state correlator, current, IPR, peak angle, PSD.

The steady-state two-time correlator of a mask uses quantum regression: with
the maximally mixed steady state, ``C(tau) = Tr{D_a X(tau)}`` where
``X(0) = D_a / N`` is propagated by the uniform-rate generator.  Offsets
d = k - k' are conserved, the initial matrix is constant along each offset
with weight ``eta(d)``, and the trace weight of an offset is again
``eta(d)``; offsets whose squared weight is negligible are dropped (the
sector propagator is a 2-norm contraction, so the truncation error is
bounded by the dropped initial weight).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .liouville import OffsetSectors, default_step
from .model import AmplitudeTable, ModelConfig, PureState
from .trajectory import TrajectoryRecord

log = logging.getLogger(__name__)

TRACE_TOL = 1e-9


@dataclass
class CorrelationSeries:
    """Steady-state two-time correlator of one measurement mask."""

    tau: np.ndarray
    c_raw: np.ndarray  # complex, before subtraction/normalization
    c_norm: np.ndarray  # real part of the normalized correlator
    im_max: float  # diagnostic: largest |Im| of the normalized correlator
    site: int
    gamma: float
    sigma: float
    n_sites: int
    t_hop: float
    t_ref: float  # ring lap period N / (2 t_hop)


def correlator_ss(
    config: ModelConfig,
    table: AmplitudeTable,
    a: int,
    tau_grid: np.ndarray,
    dt: float | str = "auto",
    keep_threshold: float = 1e-14,
) -> CorrelationSeries:
    """Normalized steady-state correlator of the site-``a`` mask.

    Propagates X(0) = D_a / N with RK4 on the decoupled offset sectors,
    traces against D_a at each requested tau, subtracts the uncorrelated
    long-time limit, and normalizes the tau = 0 value to one.
    """
    gamma = config.gamma  # uniform rates only: the steady state must be 1/N
    n = config.n_sites
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or len(tau) == 0 or tau[0] < 0 or np.any(np.diff(tau) <= 0):
        raise ConfigError("tau_grid must be non-empty, ascending, non-negative")
    if dt == "auto":
        dt_max = default_step(config)
    else:
        dt_max = float(dt)
        if not dt_max > 0:
            raise ConfigError(f"dt must be > 0, got {dt}")

    eta = table.eta
    weight2 = eta**2
    offsets = np.nonzero(weight2 >= keep_threshold * weight2.max())[0]
    sectors = OffsetSectors(config, table, offsets)
    zero_row = int(np.nonzero(offsets == 0)[0][0])  # eta(0) is maximal, always kept

    site_phase = np.exp(-2j * np.pi * (a % n) * offsets / n)
    v = (eta[offsets] * site_phase / (n * math.sqrt(n)))[:, None] * np.ones((1, n))
    trace_weight = eta[offsets] * np.conj(site_phase) / math.sqrt(n)

    c_raw = np.empty(len(tau), dtype=complex)
    trace0 = v[zero_row].sum()

    t = 0.0
    for i, t_target in enumerate(tau):
        gap = t_target - t
        if gap > 0:
            n_sub = max(1, math.ceil(gap / dt_max - 1e-12))
            step = gap / n_sub
            for _ in range(n_sub):
                v = sectors.rk4_step(v, step)
            t = t_target
        c_raw[i] = trace_weight @ v.sum(axis=1)
        drift = abs(v[zero_row].sum() - trace0)
        if drift > TRACE_TOL:
            raise NumericalError(
                f"propagated matrix lost trace ({drift:.2e}) at tau={t_target}"
            )

    c0 = np.sum(weight2[offsets]) / n  # Tr(D_a^2)/N restricted to kept offsets
    c_inf = eta[0] ** 2 / n  # (Tr D_a)^2 / N^2
    den = c0 - c_inf
    if abs(den) <= 1e-10 * abs(c0):
        raise ConfigError(
            "the mask variance vanishes in the steady state (flat mask); "
            "the normalized correlator is undefined"
        )
    c_complex = (c_raw - c_inf) / den
    im_max = float(np.max(np.abs(c_complex.imag)))
    if im_max > 1e-6 * np.max(np.abs(c_complex)):
        log.info("correlator imaginary part up to %.3e (model diagnostic)", im_max)
    else:
        log.debug("correlator imaginary part up to %.3e", im_max)

    return CorrelationSeries(
        tau=tau,
        c_raw=c_raw,
        c_norm=c_complex.real,
        im_max=im_max,
        site=int(a % n),
        gamma=gamma,
        sigma=config.sigma,
        n_sites=n,
        t_hop=config.t_hop,
        t_ref=config.ring_period,
    )


def current_expectation(psi: PureState) -> float:
    """Net probability current J = sum_a Im(conj(psi_a) psi_{a+1})."""
    pos = psi.in_position().amps
    return float(np.imag(np.sum(np.conj(pos) * np.roll(pos, -1))))


def ipr(psi: PureState) -> float:
    """Inverse participation ratio 1 / sum_b |psi_b|^4 (position basis)."""
    dens = psi.position_density()
    return float(1.0 / np.sum(dens**2))


def peak_angle_series(record: TrajectoryRecord) -> tuple[np.ndarray, np.ndarray]:
    """Projection y_j = sin(phi_j) of the peak-position angle over time.

    Uses the angles sampled during the run; recomputes them from stored
    position snapshots when only those are available.
    """
    if record.phi is not None:
        return record.times, np.sin(record.phi)
    if record.snapshots_position is None:
        raise ConfigError("record carries neither angles nor position snapshots")
    n = record.snapshots_position.shape[1]
    peaks = np.argmax(record.snapshots_position, axis=1)  # first index on ties
    return record.snapshot_times, np.sin(2.0 * np.pi * peaks / n)


@dataclass
class SpectrumSeries:
    """One-sided power spectral density of a uniformly sampled signal."""

    omega: np.ndarray
    s: np.ndarray
    dt: float
    n_t: int
    mean_removed: bool = True

    def total_power(self) -> float:
        """Two-sided bin sum; equals dt * sum(y^2) by Parseval."""
        w = np.full(len(self.s), 2.0)
        w[0] = 1.0
        if self.n_t % 2 == 0:
            w[-1] = 1.0
        return float(np.sum(w * self.s))

    def peak_omega(self, omega_min: float = 0.0) -> float:
        """Frequency of the largest bin above ``omega_min``."""
        mask = self.omega > omega_min
        if not np.any(mask):
            raise ConfigError(f"no spectrum bins above omega_min={omega_min}")
        return float(self.omega[mask][np.argmax(self.s[mask])])


def power_spectral_density(
    y: np.ndarray, dt: float, remove_mean: bool = True, segments: int = 1
) -> SpectrumSeries:
    """S(omega) = dt^2 / T * |sum_j y_j e^{-i omega j dt}|^2 on the DFT grid.

    ``segments > 1`` switches to Welch averaging: the series is split into
    50%-overlapping rectangular segments of length len(y)//segments, each
    mean-removed, and the periodograms are averaged.  That trades frequency
    resolution for a consistent spectrum estimate (the single-window
    periodogram fluctuates by its own magnitude per bin).  The Parseval
    identity of ``total_power`` holds for segments == 1 only.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) < 8:
        raise ConfigError(f"need at least 8 samples for a spectrum, got {y.shape}")
    if not dt > 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    if segments < 1 or len(y) // segments < 8:
        raise ConfigError(f"cannot split {len(y)} samples into {segments} segments")

    length = len(y) // segments
    starts = range(0, len(y) - length + 1, max(1, length // 2)) if segments > 1 else (0,)
    acc = np.zeros(length // 2 + 1)
    count = 0
    for s in starts:
        seg = y[s : s + length]
        if remove_mean:
            seg = seg - seg.mean()
        acc += (dt * dt / (length * dt)) * np.abs(np.fft.rfft(seg)) ** 2
        count += 1
    omega = 2.0 * np.pi * np.fft.rfftfreq(length, dt)
    return SpectrumSeries(
        omega=omega, s=acc / count, dt=dt, n_t=length, mean_removed=remove_mean
    )


def dominant_period(
    t: np.ndarray, y: np.ndarray, max_period: float | None = None, pad_factor: int = 8
) -> float:
    """Period of the strongest oscillation in a uniformly sampled series.

    Zero-pads the mean-removed series for fine frequency resolution and
    returns 2 pi / argmax.  ``max_period`` excludes slower components (for
    example a decaying envelope) from the search.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) != len(y) or len(t) < 8:
        raise ConfigError("need matching series with at least 8 samples")
    steps = np.diff(t)
    dt = steps[0]
    if np.max(np.abs(steps - dt)) > 1e-9 * max(dt, 1.0):
        raise ConfigError("series must be uniformly sampled")
    padded = np.zeros(pad_factor * len(y))
    padded[: len(y)] = y - y.mean()
    power = np.abs(np.fft.rfft(padded)) ** 2
    omega = 2.0 * np.pi * np.fft.rfftfreq(len(padded), dt)
    mask = omega > 0 if max_period is None else omega >= 2.0 * np.pi / max_period
    if not np.any(mask):
        raise ConfigError("no admissible frequencies in the search window")
    peak = omega[mask][np.argmax(power[mask])]
    return 2.0 * np.pi / peak


@dataclass
class HistogramResult:
    """Equal-width histogram with a mechanical bimodality report.

    Modes are the largest bins left (center < 0) and right (center >= 0) of
    zero; the dip ratio compares the bin nearest zero against the mean mode
    count.
    """

    counts: np.ndarray
    edges: np.ndarray
    centers: np.ndarray = field(init=False)
    left_mode: float | None = field(init=False)
    right_mode: float | None = field(init=False)
    dip_ratio: float = field(init=False)

    def __post_init__(self):
        self.centers = 0.5 * (self.edges[:-1] + self.edges[1:])
        mode_counts = []
        self.left_mode = None
        self.right_mode = None
        left = self.centers < 0
        if np.any(left):
            i = int(np.argmax(self.counts[left]))
            self.left_mode = float(self.centers[left][i])
            mode_counts.append(self.counts[left][i])
        right = ~left
        if np.any(right):
            i = int(np.argmax(self.counts[right]))
            self.right_mode = float(self.centers[right][i])
            mode_counts.append(self.counts[right][i])
        central = int(np.argmin(np.abs(self.centers)))
        mean_mode = float(np.mean(mode_counts)) if mode_counts else 0.0
        self.dip_ratio = float(self.counts[central] / mean_mode) if mean_mode > 0 else math.nan


def histogram(values: np.ndarray, bins: int) -> HistogramResult:
    """Equal-width binning over the data range plus the bimodality report."""
    vals = np.asarray(values, dtype=float)
    if vals.size < 2:
        raise ConfigError(f"need at least 2 values to histogram, got {vals.size}")
    counts, edges = np.histogram(vals, bins=bins)
    return HistogramResult(counts=counts, edges=edges)
