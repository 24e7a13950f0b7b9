"""fairsplit: decoupled group-wise classification.

Train one classifier per group with any black-box learner, pick the
combination minimizing a monotonic joint loss, and optionally borrow
out-group data through down-weighted transfer learning.  The ``pipeline``
module runs the semi-synthetic cross-validation protocol over CSV data
and emits JSON/CSV reports; see the ``fairsplit`` CLI.
"""

__version__ = "0.1.0"

from .core import (
    CandidateClassifier,
    ColumnMeta,
    Dataset,
    DecoupledClassifier,
    GroupStats,
    Prediction,
    predict_decoupled,
    validate_dataset,
)
from .losses import (
    Instance,
    LossSpec,
    find_monotonicity_counterexample,
    group_stats,
    joint_loss,
    parse_loss_spec,
    swap_increases_loss,
)
from .learners import (
    FiniteClass,
    LinearModel,
    WeightedSample,
    enumerate_linear_separators_2d,
    exhaustive_learn,
    fit_weighted_least_squares,
    sweep_thresholds,
)
from .decouple import CandidateTable, build_candidate_table, decouple, general_decouple, product_search
from .transfer import (
    BoundInputs,
    TransferConfig,
    f_bound,
    generalization_bound,
    select_theta_cv,
    theta_star,
    transfer_fit,
)
from .analysis import Fixture, empirical_coupling_gap, make_figure1_fixture, make_parity_fixture

__all__ = [
    "__version__",
    "CandidateClassifier",
    "CandidateTable",
    "ColumnMeta",
    "Dataset",
    "DecoupledClassifier",
    "FiniteClass",
    "Fixture",
    "GroupStats",
    "Instance",
    "LinearModel",
    "LossSpec",
    "Prediction",
    "BoundInputs",
    "TransferConfig",
    "WeightedSample",
    "build_candidate_table",
    "decouple",
    "empirical_coupling_gap",
    "enumerate_linear_separators_2d",
    "exhaustive_learn",
    "f_bound",
    "find_monotonicity_counterexample",
    "fit_weighted_least_squares",
    "general_decouple",
    "generalization_bound",
    "group_stats",
    "joint_loss",
    "make_figure1_fixture",
    "make_parity_fixture",
    "parse_loss_spec",
    "predict_decoupled",
    "product_search",
    "select_theta_cv",
    "swap_increases_loss",
    "sweep_thresholds",
    "theta_star",
    "transfer_fit",
    "validate_dataset",
]
