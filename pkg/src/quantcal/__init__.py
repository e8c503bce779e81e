"""Calibrate stochastic multivariate simulators with quantile-augmented GP emulation.

The pipeline: space-filling design over the simulator parameters, replicated
stochastic runs, pointwise quantile curves indexed by a quantile level, a
principal-component emulator over the (parameters, quantile) input space, and
Bayesian calibration against observed time series with a kernel-basis
discrepancy term.
"""

__version__ = "0.1.0"

from quantcal.design import (
    AugmentedDesign,
    DesignMatrix,
    ParameterSpace,
    augment_with_quantiles,
    generate_lhs,
)
from quantcal.simulator import SimParams, TrajectoryEnsemble, run_ensemble, simulate
from quantcal.quantiles import QuantileEnsemble, build_quantile_ensemble, pointwise_quantile
from quantcal.basis import (
    BasisDecomposition,
    DiscrepancyBasis,
    ProjectedOutputs,
    build_basis,
    build_discrepancy_basis,
    project,
)
from quantcal.gp import GPHyperparams, correlation, log_marginal_w, predict_weights
from quantcal.likelihood import (
    CalibrationState,
    Observations,
    PriorConfig,
    build_sigma_y,
    log_likelihood,
    log_prior,
)
from quantcal.mcmc import PosteriorDraws, SamplerConfig, log_posterior, run_chain
