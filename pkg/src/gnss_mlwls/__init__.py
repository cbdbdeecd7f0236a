"""Machine-learning weighted least squares for urban GNSS positioning.

Signals are scored by per-constellation tree ensembles trained on best-subset
labels; an activation maps scores to weights for a weighted least-squares fix.
"""

from .activation import Activation, ActivationSpec, apply_activation, weighted_fix
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .evaluation import EvalReport, error_3d, rmse_3d
from .measurements import Constellation, Measurement, MeasurementSet, SatelliteState, SignalObservation
from .solver import SolverError, solve_ols, solve_wls

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "ActivationSpec",
    "ConfigError",
    "Constellation",
    "EvalReport",
    "ExperimentConfig",
    "Measurement",
    "MeasurementSet",
    "SatelliteState",
    "SignalObservation",
    "SolverError",
    "apply_activation",
    "config_from_dict",
    "error_3d",
    "load_config",
    "rmse_3d",
    "solve_ols",
    "solve_wls",
    "weighted_fix",
]
