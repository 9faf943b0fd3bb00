"""Joint-diagonalization decompositions of multiway arrays and nonparametric
estimation of multivariate finite mixtures and hidden Markov models."""

__version__ = "0.1.0"

from .multiway import QadDecomposition, compose, khatri_rao, submodel, unfold_to_three  # noqa: E402
from .jointdiag import JointDiagProblem, JointDiagResult, solve  # noqa: E402
from .decompose import DecomposeReport, DeficientRankError, recover_all_factors  # noqa: E402
from .basis import HermiteFunctions, Legendre, get_basis  # noqa: E402
from .models import fit_continuous_mixture, fit_discrete_mixture, fit_hmm  # noqa: E402

__all__ = [
    "QadDecomposition", "compose", "khatri_rao", "submodel", "unfold_to_three",
    "JointDiagProblem", "JointDiagResult", "solve",
    "DecomposeReport", "DeficientRankError", "recover_all_factors",
    "HermiteFunctions", "Legendre", "get_basis",
    "fit_continuous_mixture", "fit_discrete_mixture", "fit_hmm",
]
