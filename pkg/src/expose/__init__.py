"""EXPoSE anomaly detection with a constant-time SGD estimate of the kernel mean embedding."""

__version__ = "0.1.0"

from .data import Dataset, load_csv, load_idx, make_anomaly_split, preprocess_kdd
from .embedding import ModelState, empirical_embedding, load_model, objective_gap, save_model
from .kernel import KernelSpec, RksFeatureMap, approx_kernel, build_rks_map, embed, evaluate_kernel
from .scoring import calibrate_threshold, classification_error, score, score_batch
from .sgd import SgdConfig, iterations_for_accuracy, run_sgd, theoretical_bounds
