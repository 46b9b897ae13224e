"""Model averaging over latent space models of different dimensions for link prediction."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    IncompletePredictionsError,
    IntegrityError,
    InvalidQPError,
    NetmaError,
    NumericError,
    ParseError,
)
from .graph import (
    AdjacencyView,
    EdgePartition,
    FoldAssignment,
    MaskedAdjacency,
    PairSet,
    assign_folds,
    egocentric_split,
    enumerate_pairs,
    mask,
    split_pairs,
)
from .lsm import FitConfig, FitTrace, LsmParams, gradients, nll_objective, pgd_fit, sigmoid, spectral_init, theta_matrix
from .metrics import (
    CandidatePredictions,
    MetricReport,
    aupr,
    auroc,
    average_predictions,
    evaluate,
    full_fit_candidates,
    mlogf,
    mse,
    predict_pairs,
    relative_risk,
)
from .qp import QpProblem, WeightVector, project_simplex, solve_simplex_qp
from .simulate import ExperimentResult, GroundTruth, SimConfig, gen_network, run_case, run_replication, run_sweep
from .weights import (
    CandidateSet,
    FoldPredictions,
    build_cv_qp,
    cv_criterion,
    ecv_select,
    equal_weights,
    fold_fit_predict,
    netma_weights,
)
