"""From-scratch tree ensembles producing per-signal quality scores in [0, 1]."""

from .models import (
    AdaBoostConfig,
    BoostingConfig,
    EnsembleModel,
    ForestConfig,
    accuracy,
    adaboost_alpha,
    fit_adaboost,
    fit_gradient_boosting,
    fit_model,
    fit_random_forest,
    initial_log_odds,
    log_loss,
    predict_adaboost_margin,
    predict_adaboost_score,
    predict_forest_score,
    predict_gb_log_odds,
    predict_gb_score,
    pseudo_residuals,
)
from .tree import TreeConfig, TreeNode, entropy, fit_tree, gini, predict_tree

__all__ = [
    "AdaBoostConfig",
    "BoostingConfig",
    "EnsembleModel",
    "ForestConfig",
    "TreeConfig",
    "TreeNode",
    "accuracy",
    "adaboost_alpha",
    "entropy",
    "fit_adaboost",
    "fit_gradient_boosting",
    "fit_model",
    "fit_random_forest",
    "fit_tree",
    "gini",
    "initial_log_odds",
    "log_loss",
    "predict_adaboost_margin",
    "predict_adaboost_score",
    "predict_forest_score",
    "predict_gb_log_odds",
    "predict_gb_score",
    "predict_tree",
    "pseudo_residuals",
]
