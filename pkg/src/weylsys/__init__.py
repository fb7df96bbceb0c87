"""Weyl-type solutions, characteristic functions and scattering data for
y' = (A/x + rho B + q(x)) y on (0, inf)."""

from .config import ProblemConfig, load_config, parse_config
from .errors import NumericalError, ValidationError, WeylSysError
from .exterior import (Tensor, compound_derivation, compound_power, wedge, wedge_divide,
                       wedge_vectors)
from .pipeline import RunResult, emit, load_result, run_pipeline
from .potentials import (BumpPotential, ExpDecayPotential, GridPotential, SumPotential,
                         ZeroPotential)
from .scattering import (boundary_values, compare, psi_matrix, scattering_matrix,
                         spectral_mapping, sweep)
from .sectors import SectorData, compute_sectors
from .system import SystemSpec, validate_assumption1
from .unperturbed import build_frame, eval_at_rho
from .volterra import RhoContext, default_grid, solve_all
from .weyl import WeylFrame, build_weyl

__version__ = "0.1.0"

__all__ = [
    "BumpPotential", "ExpDecayPotential", "GridPotential", "NumericalError", "ProblemConfig",
    "RhoContext", "RunResult", "SectorData", "SumPotential", "SystemSpec", "Tensor",
    "ValidationError", "WeylFrame", "WeylSysError", "ZeroPotential", "boundary_values",
    "build_frame", "build_weyl", "compare", "compound_derivation", "compound_power",
    "compute_sectors", "default_grid", "emit", "eval_at_rho", "load_config", "load_result",
    "parse_config", "psi_matrix", "run_pipeline", "scattering_matrix", "solve_all",
    "spectral_mapping", "sweep", "validate_assumption1", "wedge", "wedge_divide",
    "wedge_vectors",
]
