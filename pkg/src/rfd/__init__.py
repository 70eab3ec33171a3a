"""Gradient descent with step sizes computed from covariance models of the
loss landscape, plus an incremental Gaussian random function simulator used
as a synthetic optimizer benchmark."""

from .covariance import (
    CovBlocks,
    IsotropicModel,
    Kind,
    MaternCoefficients,
    UnboundedDerivative,
    cov_blocks,
    matern_coeffs,
    sqc_eval,
    variogram_eval,
)
from .estimators import (
    BlueCoeffs,
    NoiseSpec,
    SecondOrderCoeffs,
    conditional_variance,
    gradient_blue_coeff,
    predict_curve,
    second_order_blue,
    stationary_blue_coeffs,
)
from .harness import (
    ExperimentConfig,
    SimilarityMatrix,
    grad_similarity,
    run_experiment,
    toy_linear_loss,
)
from .optimizers import (
    BaselineHyper,
    GrfOracle,
    Observation,
    OptimizerConfig,
    Trajectory,
    rfd_step,
    run,
    run_baseline,
    run_conservative,
    run_regularized,
    run_rfd,
    run_rfm_star,
)
from .simulator import DegenerateCovariance, GrfSampler
from .stepsize import (
    NoFiniteStep,
    NumericFailure,
    StationarySample,
    StepContext,
    StepResult,
    closed_form_step,
    compute_xi,
    conservative_step,
    gradient_only_step,
    numeric_step,
    regularized_gradient,
    regularized_step,
    step_objective,
    xi_noise_factor,
)

__version__ = "0.1.0"
