"""Deterministic lattice surface growth: drivers, limit operators and convergence checks."""

from growthlab.drivers import Driver, DriverKind, Potential, detect_scaling
from growthlab.harness import ConvergenceReport, ExperimentConfig, run_experiment, self_convergence
from growthlab.lattice import HeightField, InitialData, ScalingMode, evaluate_scaled, init_field, simulate, step
from growthlab.operators import LimitOperator, limit_operator_for

__all__ = [
    "ConvergenceReport",
    "Driver",
    "DriverKind",
    "ExperimentConfig",
    "HeightField",
    "InitialData",
    "LimitOperator",
    "Potential",
    "ScalingMode",
    "detect_scaling",
    "evaluate_scaled",
    "init_field",
    "limit_operator_for",
    "run_experiment",
    "self_convergence",
    "simulate",
    "step",
]

__version__ = "0.1.0"
