"""Decentralized constrained min-max optimization (PRECISION / PRECISION+)."""

from .algorithms import (CSV_COLUMNS, DivergenceError, HyperParams, IterationRecord, NetworkState,
                         Recorder, RunResult, StepSizeReport, check_stepsize_conditions,
                         feasible_hyperparams, min_c_gamma, prox_x, prox_y, run_precision,
                         run_prox_dsgda, run_prox_gt_sgda)
from .data import (DataFormatError, Dataset, generate_synthetic_classification, load_libsvm,
                   parse_libsvm, partition_equal, serialize_libsvm)
from .estimator import DecentralizedMinMaxClassifier
from .estimators import (AdaptiveBatchConfig, ComplexityCounters, EstimatorState, Mode,
                         estimate_sigma2, estimator_step, gamma_update, refresh_batch_size)
from .metrics import (MetricBreakdown, compute_metric, global_loss, potential_diagnostic,
                      projected_ascent, y_star)
from .problems import (AUCMaximization, BoxSet, MinMaxProblem, Regularizer, RobustRegression,
                       SyntheticSaddle, build_auc_maximization, build_robust_regression,
                       build_synthetic_saddle)
from .runner import ConfigError, ExperimentConfig, load_config, parse_config, run_experiment
from .topology import (ConsensusMatrix, NetworkTopology, TopologyError, check_consensus_matrix,
                       generate_erdos_renyi, laplacian_consensus_matrix, read_edge_list,
                       spectral_gap, write_edge_list)

__version__ = "0.1.0"
