"""Tree-partitioned probability calibration with exact ranking metrics."""

from .calibrators import (Composed, Histogram, Identity, Isotonic, PerPartition, Platt, Table, Transform,
                          apply, fit_histogram, fit_isotonic, fit_platt, transform_from_dict)
from .metrics import (RocCurve, RocThreshold, auc, calibrated_auc, empirical_auc, empirical_report,
                      expected_calibration_error, log_loss, partition_calibrated_auc, pr_auc, roc_curve, roc_point)
from .oracle import (brute_force_max_auc, check_ordering_equivalence, check_refinement_monotonicity,
                     optimal_transform)
from .partitioner import (LeafStats, PartitionTree, TreeConfig, fit_forest, fit_tree, gaussian_calibrated_auc,
                          gaussian_platt_params, gini_gain)
from .pipeline import HetCalConfig, HeterogeneousCalibrator, evaluate, fit, fit_boosted, predict
from .score_model import (Dataset, DiscreteDistribution, LabeledExample, empirical_distribution, load_csv,
                          split_dataset, write_csv)
from .synth import figure2_sweep, gen_heterogeneous, gen_overconfident, true_auc_heterogeneous

__version__ = "0.1.0"
