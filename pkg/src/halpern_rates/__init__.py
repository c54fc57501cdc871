"""Halpern iterations of nonexpansive maps and certified rates of asymptotic regularity."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .bounds import h_liu, phi_bounded, phi_general, phi_harmonic, psi_decreasing
from .exact import BoundIndex
from .iteration import Trajectory, first_crossing, halpern_run, km_run
from .moduli import (Schedule, alpha_of, beta_of, constant, custom, harmonic, inverse_sqrt,
                     lambda_at, shifted_harmonic, theta_of, verify_moduli)
from .operators import NonexpansiveOp, check_nonexpansive, norm_of

__all__ = [
    "BACKEND",
    "BoundIndex",
    "NonexpansiveOp",
    "Schedule",
    "Trajectory",
    "alpha_of",
    "beta_of",
    "check_nonexpansive",
    "constant",
    "custom",
    "first_crossing",
    "h_liu",
    "halpern_run",
    "harmonic",
    "inverse_sqrt",
    "km_run",
    "lambda_at",
    "norm_of",
    "phi_bounded",
    "phi_general",
    "phi_harmonic",
    "psi_decreasing",
    "shifted_harmonic",
    "theta_of",
    "verify_moduli",
]
