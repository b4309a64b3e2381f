"""Design-based ATE estimation with series-corrected OLS regression adjustment."""

__version__ = "0.1.0"

from .design import NormalizedDesign, RawCovariates, leverage, normalize, winsorize
from .estimators import (
    Assignment,
    ObservedData,
    PotentialOutcomes,
    arm_ols,
    corrections,
    decomposition_audit,
    dim,
    observe,
    ols_ra,
    population_ols,
)
from .folding import (
    GramContext,
    NeumannWeightVector,
    closed_form_weights_d0,
    neumann_weights,
    scalar_expectation,
)
from .weights_io import WeightStore, design_fingerprint

__all__ = [
    "Assignment",
    "GramContext",
    "NeumannWeightVector",
    "NormalizedDesign",
    "ObservedData",
    "PotentialOutcomes",
    "RawCovariates",
    "WeightStore",
    "arm_ols",
    "closed_form_weights_d0",
    "corrections",
    "decomposition_audit",
    "design_fingerprint",
    "dim",
    "leverage",
    "neumann_weights",
    "normalize",
    "observe",
    "ols_ra",
    "population_ols",
    "scalar_expectation",
    "winsorize",
    "__version__",
]
