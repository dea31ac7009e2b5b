"""Weyl-Titchmarsh m-functions and local Borg-Marchenko uniqueness probes.

The package computes m-functions of one-dimensional Schrodinger operators
(half-line, finite interval, full line, matrix-valued) and of Jacobi
matrices, and estimates how far two potentials agree from the rate at which
their m-functions approach each other high up the spectral axis.
"""

from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    InputError,
    MProbeError,
    NumericalError,
    PoleError,
    ValidationError,
)
from .model import (
    DIRICHLET,
    FINITE_INTERVAL,
    FULL_LINE,
    HALF_LINE,
    BoundaryCondition,
    HermitianMatrixPotential,
    PiecewisePotential,
    ProblemSpec,
    emit_problem,
    parse_problem,
    validate,
)
from .numerics import DEFAULT_FLOOR, DEFAULT_PROBE_RAY, DecayFit, SpectralRay, log_linear_fit, principal_sqrt, ray_points
from .probe import AgreementReport, probe_agreement
from .weyl import MTrace, evaluate_m, m_trace

__version__ = "0.1.0"
