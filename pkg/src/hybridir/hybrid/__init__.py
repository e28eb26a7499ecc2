"""Lightweight learned hybrid: pool candidates from several indexes and
rescore them with a LambdaMART tree ensemble over per-index score features."""

from .features import build_candidate_pool, extract_features, query_features
from .fusion import build_training_groups, fuse, train_fusion
from .lambdamart import (
    LtrParams,
    QueryGroup,
    TreeEnsemble,
    group_lambdas,
    load_model,
    predict,
    save_model,
    train_lambdamart,
)
from .trees import Tree

__all__ = [
    "LtrParams",
    "QueryGroup",
    "Tree",
    "TreeEnsemble",
    "build_candidate_pool",
    "build_training_groups",
    "extract_features",
    "fuse",
    "group_lambdas",
    "load_model",
    "predict",
    "query_features",
    "save_model",
    "train_fusion",
    "train_lambdamart",
]
