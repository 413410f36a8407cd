"""Quantum-jump unraveling of the master equation (uniform rates).

Because the masks resolve the identity, ``sum_a D_a^dagger D_a = 1``, the
no-jump non-Hermitian evolution is unitary evolution times the global norm
factor ``exp(-gamma t / 2)``: the normalized state between jumps evolves
purely unitarily and the waiting time to the next jump is exactly
exponential with the state-independent rate ``gamma``.  The stochastic
process is therefore sampled event by event with no time-discretization
error: draw the waiting time, advance with momentum-space phases, apply the
selected mask, renormalize.

Channel weights at a jump, ``w_a = ||D_a psi||^2 = sum_b h_a^2(b) |psi_b|^2``,
are a circular correlation of the position density with the squared mask and
are computed for all sites at once with one FFT pair.

Ensembles use one RNG stream per trajectory, a Philox generator keyed by
``SeedSequence((master_seed, trajectory_index))``, and a fixed chunk size for
the reduction, so aggregate results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .model import (
    MOMENTUM,
    AmplitudeTable,
    ModelConfig,
    PureState,
    dispersion_grid,
)

# chunk size is part of the determinism contract: partial sums are formed
# per chunk and combined in chunk order, independent of the worker count
ENSEMBLE_CHUNK = 16

WEIGHT_TOL = 1e-10


@dataclass
class TrajectoryRecord:
    """Sampled observables and the jump log of one trajectory."""

    seed: object
    sample_dt: float
    times: np.ndarray
    current: np.ndarray  # net probability current J at sample times
    ipr: np.ndarray
    phi: np.ndarray  # peak-position angle 2*pi*argmax/N
    jump_times: np.ndarray
    jump_sites: np.ndarray  # 0-based sites
    norm_defect: float
    snapshot_times: np.ndarray | None = None
    snapshots_position: np.ndarray | None = None  # (n_snap, N) densities
    snapshots_momentum: np.ndarray | None = None
    momentum_density: np.ndarray | None = None  # (n_samples, N) on request

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def jump_counts_at(self, times: np.ndarray) -> np.ndarray:
        """Cumulative number of jumps up to each requested time."""
        return np.searchsorted(self.jump_times, np.asarray(times), side="right")


def step_no_jump(config: ModelConfig, psi: PureState, dt: float) -> PureState:
    """Advance the normalized no-jump state: pure phase evolution.

    The non-Hermitian norm loss is a global factor (the masks resolve the
    identity), so it cancels on renormalization and only the free propagator
    acts on the state direction.
    """
    mom = psi.in_momentum()
    amps = mom.amps * np.exp(-1j * dispersion_grid(config) * dt)
    return PureState(amps, MOMENTUM, psi.time + dt)


def _jump_weights(pos_density: np.ndarray, mask_sq_rfft: np.ndarray) -> np.ndarray:
    """w_a = sum_b h_a^2(b) |psi_b|^2 for all a via one FFT pair."""
    n = len(pos_density)
    w = np.fft.irfft(np.fft.rfft(pos_density) * mask_sq_rfft, n)
    return np.where(w < 0.0, 0.0, w)  # clip FFT round-off


def _select_channel(weights: np.ndarray, rng: np.random.Generator) -> int:
    total = weights.sum()
    if total <= 0.0:
        raise NumericalError("all jump weights vanished for a normalized state")
    if abs(total - 1.0) > WEIGHT_TOL:
        raise NumericalError(f"jump weights sum to {total!r}, expected 1")
    cum = np.cumsum(weights)
    site = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(site, len(weights) - 1)


def sample_jump(
    table: AmplitudeTable, psi: PureState, rng: np.random.Generator
) -> tuple[int, PureState]:
    """Draw a jump channel with weight ||D_a psi||^2 and collapse the state.

    Returns the 0-based site and the normalized post-jump state in the
    position basis.
    """
    pos = psi.in_position()
    mask_sq_rfft = np.fft.rfft(table.h[0] ** 2)
    weights = _jump_weights(np.abs(pos.amps) ** 2, mask_sq_rfft)
    site = _select_channel(weights, rng)
    new = table.h[site] * pos.amps
    nrm = np.linalg.norm(new)
    if nrm == 0.0:
        raise NumericalError(f"mask at site {site} annihilated the state")
    return site, PureState(new / nrm, "position", psi.time)


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox generator keyed by the seed (int or tuple)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _current(pos_amps: np.ndarray) -> float:
    return float(np.imag(np.sum(np.conj(pos_amps) * np.roll(pos_amps, -1))))


def run_trajectory(
    config: ModelConfig,
    table: AmplitudeTable,
    psi0: PureState,
    t_final: float,
    sample_dt: float,
    seed,
    snapshot_stride: int = 0,
    keep_momentum_density: bool = False,
) -> TrajectoryRecord:
    """Event-driven quantum-jump trajectory with sampling every sample_dt.

    ``snapshot_stride > 0`` additionally stores |psi|^2 in both bases every
    that many sample points; ``keep_momentum_density`` stores |psi_k|^2 at
    every sample point (used by the ensemble average).  The run ends at the
    last sample point on the grid (t_final rounded down to a multiple of
    sample_dt).
    """
    gamma = config.gamma  # raises on per-site rates: no global-rate identity
    if not sample_dt > 0:
        raise ConfigError(f"sample_dt must be > 0, got {sample_dt}")
    n = config.n_sites
    psi = psi0.in_momentum()
    if abs(psi.norm() - 1.0) > 1e-8:
        raise ConfigError(f"initial state norm {psi.norm()!r} is not 1")
    amps = psi.amps / psi.norm()

    eps = dispersion_grid(config)
    mask_sq_rfft = np.fft.rfft(table.h[0] ** 2)
    sqrt_n = np.sqrt(n)
    rng = make_rng(seed)

    n_samples = int(np.floor(t_final / sample_dt + 1e-9)) + 1
    times = np.arange(n_samples) * sample_dt
    current = np.empty(n_samples)
    ipr = np.empty(n_samples)
    phi = np.empty(n_samples)
    jump_times: list[float] = []
    jump_sites: list[int] = []
    keep_snaps = snapshot_stride > 0
    snap_idx = range(0, n_samples, snapshot_stride) if keep_snaps else range(0)
    snaps_pos = np.empty((len(snap_idx), n)) if keep_snaps else None
    snaps_mom = np.empty((len(snap_idx), n)) if keep_snaps else None
    snap_count = 0
    mom_density = np.empty((n_samples, n)) if keep_momentum_density else None
    norm_defect = 0.0

    t = 0.0
    next_jump = t + rng.exponential(1.0 / gamma) if gamma > 0 else np.inf
    for i in range(n_samples):
        t_target = times[i]
        while next_jump <= t_target:
            amps = amps * np.exp(-1j * eps * (next_jump - t))
            t = next_jump
            pos = np.fft.ifft(amps) * sqrt_n
            weights = _jump_weights(np.abs(pos) ** 2, mask_sq_rfft)
            site = _select_channel(weights, rng)
            pos = table.h[site] * pos
            pos /= np.linalg.norm(pos)
            amps = np.fft.fft(pos) / sqrt_n
            jump_times.append(t)
            jump_sites.append(site)
            next_jump = t + rng.exponential(1.0 / gamma)
        amps = amps * np.exp(-1j * eps * (t_target - t))
        t = t_target

        pos = np.fft.ifft(amps) * sqrt_n
        dens = np.abs(pos) ** 2
        current[i] = _current(pos)
        ipr[i] = 1.0 / np.sum(dens**2)
        phi[i] = 2.0 * np.pi * int(np.argmax(dens)) / n
        norm_defect = max(norm_defect, abs(math.sqrt(dens.sum()) - 1.0))
        if keep_snaps and i % snapshot_stride == 0:
            snaps_pos[snap_count] = dens
            snaps_mom[snap_count] = np.abs(amps) ** 2
            snap_count += 1
        if mom_density is not None:
            mom_density[i] = np.abs(amps) ** 2

    return TrajectoryRecord(
        seed=seed,
        sample_dt=sample_dt,
        times=times,
        current=current,
        ipr=ipr,
        phi=phi,
        jump_times=np.asarray(jump_times),
        jump_sites=np.asarray(jump_sites, dtype=int),
        norm_defect=norm_defect,
        snapshot_times=times[list(snap_idx)] if keep_snaps else None,
        snapshots_position=snaps_pos,
        snapshots_momentum=snaps_mom,
        momentum_density=mom_density,
    )


@dataclass
class EnsembleResult:
    """Deterministic aggregate over independent trajectories."""

    times: np.ndarray
    mean_momentum_density: np.ndarray  # (n_samples, N)
    hist_times: np.ndarray
    current_values: np.ndarray  # (n_hist_times, n_traj), ordered by index
    ipr_values: np.ndarray
    records: list  # TrajectoryRecord for the first keep_records indices
    n_traj: int
    master_seed: int


def _hist_sample_indices(hist_times, sample_dt, n_samples) -> np.ndarray:
    idx = []
    for t in hist_times:
        i = int(round(t / sample_dt))
        if i < 0 or i >= n_samples or abs(i * sample_dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(
                f"histogram time {t} is not on the sample grid "
                f"(sample_dt={sample_dt}, last={(n_samples - 1) * sample_dt})"
            )
        idx.append(i)
    return np.asarray(idx, dtype=int)


def _run_chunk(args):
    (
        config,
        table,
        psi0_amps,
        t_final,
        sample_dt,
        master_seed,
        start,
        stop,
        keep_records,
        snapshot_stride,
        hist_idx,
    ) = args
    psi0 = PureState(psi0_amps, MOMENTUM)
    density_sum = None
    cur = []
    ipr = []
    records = []
    for idx in range(start, stop):
        stride = snapshot_stride if idx < keep_records else 0
        rec = run_trajectory(
            config,
            table,
            psi0,
            t_final,
            sample_dt,
            (master_seed, idx),
            snapshot_stride=stride,
            keep_momentum_density=True,
        )
        if density_sum is None:
            density_sum = np.zeros_like(rec.momentum_density)
        density_sum += rec.momentum_density
        cur.append(rec.current[hist_idx])
        ipr.append(rec.ipr[hist_idx])
        if idx < keep_records:
            rec.momentum_density = None  # kept records stay lightweight
            records.append(rec)
    return density_sum, np.asarray(cur), np.asarray(ipr), records


def run_ensemble(
    config: ModelConfig,
    table: AmplitudeTable,
    psi0: PureState,
    t_final: float,
    sample_dt: float,
    n_traj: int,
    master_seed: int,
    threads: int = 1,
    keep_records: int = 0,
    snapshot_stride: int = 0,
    hist_times=None,
) -> EnsembleResult:
    """Run ``n_traj`` independent trajectories and aggregate deterministically.

    Every trajectory owns the RNG stream ``(master_seed, index)``; the work
    is split into fixed-size chunks whose partial sums are combined in index
    order, so the output is identical for every ``threads`` value.
    ``hist_times`` (default: the final sample point) selects the sample
    times at which per-trajectory J and IPR values are collected.
    """
    if n_traj < 1:
        raise ConfigError(f"n_traj must be >= 1, got {n_traj}")
    if int(master_seed) != master_seed or master_seed < 0:
        raise ConfigError(f"master_seed must be a non-negative integer, got {master_seed}")
    n_samples = int(np.floor(t_final / sample_dt + 1e-9)) + 1
    if hist_times is None:
        hist_times = [(n_samples - 1) * sample_dt]
    hist_idx = _hist_sample_indices(hist_times, sample_dt, n_samples)

    psi0_amps = psi0.in_momentum().amps
    chunks = [
        (
            config,
            table,
            psi0_amps,
            t_final,
            sample_dt,
            int(master_seed),
            start,
            min(start + ENSEMBLE_CHUNK, n_traj),
            keep_records,
            snapshot_stride,
            hist_idx,
        )
        for start in range(0, n_traj, ENSEMBLE_CHUNK)
    ]

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_chunk, chunks))
    else:
        results = [_run_chunk(c) for c in chunks]

    density = np.zeros((n_samples, config.n_sites))
    cur_parts = []
    ipr_parts = []
    records = []
    for dens_sum, cur, iprs, recs in results:  # chunk order == index order
        density += dens_sum
        cur_parts.append(cur)
        ipr_parts.append(iprs)
        records.extend(recs)
    density /= n_traj

    return EnsembleResult(
        times=np.arange(n_samples) * sample_dt,
        mean_momentum_density=density,
        hist_times=np.asarray(hist_times, dtype=float),
        current_values=np.concatenate(cur_parts, axis=0).T,
        ipr_values=np.concatenate(ipr_parts, axis=0).T,
        records=records,
        n_traj=n_traj,
        master_seed=int(master_seed),
    )
