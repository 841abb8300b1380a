"""Stability certificates for droop-controlled grids, with oracle cross-checks."""

__version__ = "0.1.0"

from .certificate import CertificateReport, ContourConfig, certify, required_alpha
from .grid import Branch, Grid, OperatingPoint, load_case, operating_point
from .nodes import GeneralizedDroop, ThirdOrderInverter, ThirdOrderMachine
from .oracle import assemble_jacobian, find_alpha_crit, simulate, spectral_verdict
from .powerflow import PowerFlowSpec, solve

__all__ = [
    "Branch", "CertificateReport", "ContourConfig", "GeneralizedDroop", "Grid",
    "OperatingPoint", "PowerFlowSpec", "ThirdOrderInverter", "ThirdOrderMachine",
    "assemble_jacobian", "certify", "find_alpha_crit", "load_case",
    "operating_point", "required_alpha", "simulate", "solve", "spectral_verdict",
    "__version__",
]
