"""feedforest: feedback-tuned isolation-forest anomaly detection workbench."""

__version__ = "0.1.0"

from .data import Dataset, SynthSpec, load_dataset, simulated_oracle, \
    synth_generator, synth_stream
from .forest import (EnsembleModel, IsolationTree, SparseScoreVector,
                     build_forest, load_model, rank_instances, replace_trees,
                     save_model, score, transform, transform_all)
from .learner import (LabeledStore, LearnerConfig, SessionLog, TauAnchor,
                      batch_active_learn, hinge_loss, learn_weights,
                      objective, objective_gradient, select_top, tau_anchor)
from .describe import (CoverProblem, Description, Subspace,
                       build_cover_problem, leaf_subspace, select_diverse,
                       solve_cover_exact, solve_cover_greedy,
                       top_relevant_subspaces)
from .stream import (DriftState, LeafDistribution, StreamConfig,
                     detect_drift, ensemble_distribution, kl_divergence,
                     kl_threshold, merge_and_retain, stream_active_learn,
                     tree_distribution, update_model)
from .metrics import (MetricSeries, aggregate_runs, angle_histogram,
                      anomalies_seen_curve, class_diversity_series,
                      mean_angles)
from .experiment import ExperimentConfig, run_arm, run_experiment
