"""Latent-variable Gaussian graphical models with sparse low-rank factors.

The marginal precision of the observed variables is modelled as ``S - L``
with ``S`` sparse and ``L`` a sum of sparse rank-one PSD atoms, one per
latent variable. See :func:`fit_lvggm` for the estimator and
:func:`build_dual` for identifiability certificates.
"""

from .core import (
    Atom,
    AtomicPSD,
    DomainError,
    Estimate,
    GroundTruthModel,
    LossKind,
    NumericalError,
    StructuralError,
    as_symmetric,
    materialize,
    read_matrix,
    write_matrix,
)
from .gauge import GaugeSpec, omega_value, polar, polar_exact, polar_tpi, polar_weighted
from .losses import QuadraticLoss, lipschitz_const, loss_grad, loss_value
from .solver import SolverConfig, fit_baseline, fit_decomposition, fit_lvggm
from .certificate import CertificateReport, build_dual, find_certified_gamma, theorem_constants
from .metrics import match_atoms, reconstruct_complete, support_metrics
from .synth import ModelSpec, gen_model, generate, marginal_precision, sample_covariance, sparse_wishart

__version__ = "0.1.0"

__all__ = [
    "Atom", "AtomicPSD", "DomainError", "Estimate", "GroundTruthModel", "LossKind",
    "NumericalError", "StructuralError", "as_symmetric", "materialize", "read_matrix",
    "write_matrix", "GaugeSpec", "omega_value", "polar", "polar_exact", "polar_tpi",
    "polar_weighted", "QuadraticLoss", "lipschitz_const", "loss_grad", "loss_value",
    "SolverConfig", "fit_baseline", "fit_decomposition", "fit_lvggm", "CertificateReport",
    "build_dual", "find_certified_gamma", "theorem_constants", "match_atoms",
    "reconstruct_complete", "support_metrics", "ModelSpec", "gen_model", "generate",
    "marginal_precision", "sample_covariance", "sparse_wishart",
]
