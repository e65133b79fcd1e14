"""suffmdp: low-dimensional sufficient state representations for MDPs.

Builds reduced state representations from batch trajectory data via
distance-covariance screening and an alternating network with group-lasso
input sparsity, then validates them by Q-learning policy value on fully
specified synthetic decision processes.
"""

from .adnn import (
    AdnnModel,
    Architecture,
    ConvergenceError,
    FitConfig,
    PipelineConfig,
    PipelineResult,
    active_inputs,
    adnn_cost,
    adnn_forward,
    adnn_subgradient,
    construct_sufficient_features,
    cross_validate_adnn,
    default_grid,
    feature_forward,
    fit_adnn,
    residual_independence_pvalue,
    select_feature_dimension,
)
from .baselines import TnnResult, fit_tnn, pca_feature_map
from .core import (
    CsvSchema,
    DataValidationError,
    TrajectoryDataset,
    Transition,
    flatten_transitions,
    load_dataset_csv,
    regroup_transitions,
    save_dataset_csv,
)
from .dcov import (
    InsufficientDataError,
    TestReport,
    dcov_permutation_pvalue,
    dcov_statistic,
    default_pool_order,
    lrt_independence_pvalue,
    pooled_pvalue,
    stratified_pooled_test,
)
from .experiment import ExperimentConfig, ExperimentResult, run_experiment
from .features import (
    ConcatFeatureMap,
    CoordinateFeatureMap,
    FeatureMap,
    IdentityFeatureMap,
    LinearFeatureMap,
    NetworkFeatureMap,
    TruncatedGFeatureMap,
    feature_map_from_jsonable,
)
from .qlearn import (
    LinearQ,
    NeuralQ,
    PolicyValue,
    evaluate_policy,
    fit_q_linear,
    fit_q_nn,
    greedy_action,
    greedy_actions,
)
from .screening import ScreenResult, screen
from .simgen import (
    GenerativeModelSpec,
    g_function,
    oracle_feature_map,
    sample_trajectories,
    step_process,
    transition_mean,
)

__version__ = "0.1.0"
