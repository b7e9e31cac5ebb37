"""Streaming inference for growing-dimensional linear regression.

One pass of least-squares SGD produces both the iterate and, from the second
half of the stream, block-based variance estimates for linear functionals of
it, in O(d) memory per functional. Confidence intervals and Wald tests come
from the normal approximation; a dyadic variant covers streams of unknown
length; a Monte Carlo harness and a batch least-squares comparator support
validation studies.
"""

__version__ = "0.1.0"

from .baseline import OlsAccumulator, ols_fit, sandwich_variance
from .datagen import NoiseLaw, PopulationQuantities, StreamHandle, population_quantities
from .engine import SgdState, load_checkpoint, run_sgd, save_checkpoint, sgd_step
from .estimator import SGDInferenceRegressor
from .inference import (
    ConfidenceInterval,
    WaldResult,
    confidence_interval,
    normal_cdf,
    normal_quantile,
    wald_test,
)
from .model import (
    Functional,
    ProblemSpec,
    RunConfig,
    StepSchedule,
    StreamSample,
    coordinate_functional,
    identity_gram,
    ones_functional,
    toeplitz_gram,
)
from .oracle import (
    EigenSystem,
    bias,
    eigendecompose,
    martingale_terms,
    product_form_iterate,
    spectral_condition,
    theoretical_variance,
)
from .validation import NumericFailure
from .variance import (
    BlockPolicy,
    BlockVarianceEstimator,
    DyadicVarianceEstimator,
    RunResult,
    block_size,
    dyadic_extrapolate,
    run_dyadic,
    run_with_variance,
)

__all__ = [
    "__version__",
    "BlockPolicy",
    "BlockVarianceEstimator",
    "ConfidenceInterval",
    "DyadicVarianceEstimator",
    "EigenSystem",
    "Functional",
    "NoiseLaw",
    "NumericFailure",
    "OlsAccumulator",
    "PopulationQuantities",
    "ProblemSpec",
    "RunConfig",
    "RunResult",
    "SGDInferenceRegressor",
    "SgdState",
    "StepSchedule",
    "StreamHandle",
    "StreamSample",
    "WaldResult",
    "bias",
    "block_size",
    "confidence_interval",
    "coordinate_functional",
    "dyadic_extrapolate",
    "eigendecompose",
    "identity_gram",
    "load_checkpoint",
    "martingale_terms",
    "normal_cdf",
    "normal_quantile",
    "ones_functional",
    "population_quantities",
    "product_form_iterate",
    "run_dyadic",
    "run_sgd",
    "run_with_variance",
    "sandwich_variance",
    "save_checkpoint",
    "sgd_step",
    "spectral_condition",
    "theoretical_variance",
    "toeplitz_gram",
    "wald_test",
]
