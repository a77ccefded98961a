"""Retraction-free optimisation on the Stiefel manifold."""

from landingopt._backend import BACKEND
from landingopt.baselines import BaselineConfig, run_expen, run_penalty, run_rgd
from landingopt.landing import LandingConfig, landing_field, run_landing, safe_step
from landingopt.manifold import StiefelParams, feasibility_gap, riemannian_grad
from landingopt.objectives import PcaObjective, optimum_oracle
from landingopt.rng import Rng
from landingopt.trace import IterateTrace, RunReport, fit_linear_rate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BaselineConfig",
    "IterateTrace",
    "LandingConfig",
    "PcaObjective",
    "Rng",
    "RunReport",
    "StiefelParams",
    "feasibility_gap",
    "fit_linear_rate",
    "landing_field",
    "optimum_oracle",
    "riemannian_grad",
    "run_expen",
    "run_landing",
    "run_penalty",
    "run_rgd",
    "safe_step",
]
