"""Scalability prediction for iterative master/worker algorithms under the BSF cost model."""

from .cost_model import (
    BsfMCosts,
    BsfMRCosts,
    MachineConstants,
    PredictionCurve,
    Variant,
    optimal_workers,
    predict_curve,
)
from .jacobi import LinearSystem, SolveConfig, SolveResult, solve

__version__ = "0.1.0"
