"""Empirical-Bayes estimation of unit means from replicated measurements."""
from .core import (
    ReplicateMatrix,
    SplitView,
    TargetKernel,
    aurora_estimate,
    aurora_general_target,
    half_squared_difference,
    identity_kernel,
    power_kernel,
    split_and_order,
    validate_matrix,
)
from .estimators import (
    METHODS,
    AuroraWeights,
    MethodOptions,
    aurora_knn,
    auroral,
    auroral_single,
    ccl,
    ccl_single,
    james_stein,
    location_baseline,
    pareto_mle,
    run_method,
)
from .oracles import (
    NormalNormalSpec,
    discrete_posterior_mean,
    lstat_weights,
    nn_oracle_risks,
    nn_posterior_mean,
    nn_single_holdout_risks,
    van_trees_bound,
)
from .regressors import knn_index, knn_predict_in_sample, knn_select_k, ols_fit, ols_predict
from .simlab import ScenarioConfig, mse, run_scenario, sample_scenario

__all__ = [
    "ReplicateMatrix", "SplitView", "TargetKernel", "aurora_estimate", "aurora_general_target",
    "half_squared_difference", "identity_kernel", "power_kernel", "split_and_order",
    "validate_matrix", "METHODS", "AuroraWeights", "MethodOptions", "aurora_knn", "auroral",
    "auroral_single", "ccl", "ccl_single", "james_stein", "location_baseline", "pareto_mle",
    "run_method", "NormalNormalSpec", "discrete_posterior_mean", "lstat_weights",
    "nn_oracle_risks", "nn_posterior_mean", "nn_single_holdout_risks", "van_trees_bound",
    "knn_index", "knn_predict_in_sample", "knn_select_k", "ols_fit", "ols_predict",
    "ScenarioConfig", "mse", "run_scenario", "sample_scenario",
]
