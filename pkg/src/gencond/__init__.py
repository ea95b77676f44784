"""Condition numbers of the generalized inverse ``C^+_A`` and their statistical estimation."""

from .condition import exact_condition_numbers, normwise_kron_free, upper_bounds
from .errors import (
    CapacityError,
    DegenerateOutputError,
    GenCondError,
    GenerationFailure,
    InvalidProblemError,
    NumericalFailure,
    ParameterError,
    ShapeError,
)
from .geninv import (
    GenInvBundle,
    ProblemPair,
    Signature,
    build_bundle,
    generalized_inverse,
    validate,
)
from .estimators import (
    EstimatorConfig,
    estimate_mixed_componentwise_ssce,
    estimate_normwise_probabilistic,
    estimate_normwise_ssce,
)
from .testgen import GenSpec, generate

__version__ = "0.1.0"
