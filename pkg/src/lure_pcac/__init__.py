"""Predictive cost adaptive control of discrete-time Lur'e systems.

Online ARX identification with variable-rate forgetting, a receding-horizon
Riccati controller acting on the identified model, and frozen-time circle
and Tsypkin certificates for the resulting closed loop.
"""
from .config import ConfigError, load_config, load_experiment
from .lure import Nonlinearity, PerturbationSchedule, SimulationConfig, simulate
from .stability import SectorSpec, analyze_trajectory

__all__ = [
    "ConfigError",
    "load_config",
    "load_experiment",
    "Nonlinearity",
    "PerturbationSchedule",
    "SimulationConfig",
    "simulate",
    "SectorSpec",
    "analyze_trajectory",
]
