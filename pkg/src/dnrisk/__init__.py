"""Explainable binary risk prediction: LASSO screening, tree ensembles,
discrimination/utility/calibration statistics and exact tree SHAP."""

__version__ = "0.1.0"

from .cohort import (ColumnSpec, Dataset, baseline_table, compute_egfr, drop_incomplete_rows,
                     drop_sparse_features, load_csv, load_schema, one_hot, standardize)
from .evaluation import (auc_mann_whitney, calibration_curve, delong_test, net_benefit_curve,
                         platt_recalibrate, roc_points)
from .explain import brute_force_shap, shap_interactions, tree_shap
from .lasso import cv_select_lambda, fit_l1_logistic, lambda_path
from .learners import fit_cart, fit_gbdt, fit_logistic, fit_random_forest, predict_proba
from .model_selection import grid_search, stratified_kfold
from .synth import generate_cohort, load_cohort_spec
