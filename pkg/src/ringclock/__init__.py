"""Lindblad and quantum-trajectory simulator for a measured tight-binding ring."""

__version__ = "0.1.0"

from .errors import ConfigError, NumericalError
from .model import (
    AmplitudeTable,
    ModelConfig,
    PureState,
    apply_D,
    build_amplitude_table,
    dispersion,
    hamiltonian_phases,
    momentum_state,
    position_state,
    uniform_state,
)
from .liouville import (
    DensityMatrix,
    DiagonalDistribution,
    apply_liouvillian_dense,
    apply_liouvillian_uniform,
    integrate,
    solve_diagonal_exact,
)
from .observables import (
    correlator_ss,
    current_expectation,
    dominant_period,
    histogram,
    ipr,
    peak_angle_series,
    power_spectral_density,
)
from .trajectory import run_ensemble, run_trajectory, sample_jump, step_no_jump

__all__ = [
    "AmplitudeTable",
    "ConfigError",
    "DensityMatrix",
    "DiagonalDistribution",
    "ModelConfig",
    "NumericalError",
    "PureState",
    "apply_D",
    "apply_liouvillian_dense",
    "apply_liouvillian_uniform",
    "build_amplitude_table",
    "correlator_ss",
    "current_expectation",
    "dispersion",
    "dominant_period",
    "hamiltonian_phases",
    "histogram",
    "integrate",
    "ipr",
    "momentum_state",
    "peak_angle_series",
    "position_state",
    "power_spectral_density",
    "run_ensemble",
    "run_trajectory",
    "sample_jump",
    "solve_diagonal_exact",
    "step_no_jump",
    "uniform_state",
]
