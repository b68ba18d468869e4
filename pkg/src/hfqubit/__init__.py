"""Simulation and fitting toolkit for high-field pulsed EPR/ENDOR spin qubits."""

from ._accel import BACKEND
from .config import ConfigError, ExperimentConfig, load_config, parse_config, serialize_config
from .results import ResultTable
from .spin import (
    DensityState,
    SpinSpecies,
    SpinSystem,
    electron,
    lab_hamiltonian,
    nucleus,
    polarization,
    spin_operators,
    thermal_state,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DensityState",
    "ExperimentConfig",
    "ResultTable",
    "SpinSpecies",
    "SpinSystem",
    "electron",
    "lab_hamiltonian",
    "load_config",
    "nucleus",
    "parse_config",
    "polarization",
    "serialize_config",
    "spin_operators",
    "thermal_state",
    "__version__",
]
