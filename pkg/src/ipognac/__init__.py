"""Simulator of a self-compensating Sagnac polarization encoder and a three-state QKD link."""

from .config import ConfigError, ExperimentConfig, load_config
from .harness import QberSample, RunSummary, compare_encoders, qber_estimate, run_experiment
from .polarization import JonesVector, fidelity, make_state

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "JonesVector",
    "QberSample",
    "RunSummary",
    "compare_encoders",
    "fidelity",
    "load_config",
    "make_state",
    "qber_estimate",
    "run_experiment",
]
__version__ = "0.1.0"
