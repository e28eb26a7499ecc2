"""Pairwise LambdaMART: gradient-boosted regression trees driven by
|delta NDCG|-weighted RankNet gradients.

For a pair ``(i, j)`` in one query group with ``grade_i > grade_j``::

    rho_ij    = 1 / (1 + exp(sigma * (s_i - s_j)))
    lambda_ij = -sigma * rho_ij * |dNDCG_ij|
    hess_ij   = sigma^2 * rho_ij * (1 - rho_ij) * |dNDCG_ij|

``lambda_ij`` is added to doc i's gradient and subtracted from doc j's;
``hess_ij`` is added to both. ``|dNDCG_ij|`` is the NDCG change from
swapping the two docs in the current ranking (linear gain, log2 discount).
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from ..errors import FormatError, ValidationError
from .trees import CompiledForest, Tree, fit_tree

MODEL_MAGIC = b"LMRT1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LtrParams:
    n_trees: int = 100
    max_depth: int = 6
    row_subsample: float = 0.75
    col_subsample_per_tree: float = 0.9
    learning_rate: float = 0.3
    sigma: float = 1.0
    l2_leaf_reg: float = 1.0
    min_child_weight: float = 1.0
    ndcg_truncation: int | None = None  # None: full candidate list

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        for name in ("row_subsample", "col_subsample_per_tree"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.learning_rate <= 0 or self.sigma <= 0 or self.l2_leaf_reg < 0 or self.min_child_weight < 0:
            raise ValueError("learning_rate and sigma must be > 0; l2_leaf_reg and min_child_weight >= 0")
        if self.ndcg_truncation is not None and self.ndcg_truncation < 1:
            raise ValueError("ndcg_truncation must be >= 1 or None")


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    trees: tuple[Tree, ...]
    learning_rate: float
    feature_count: int
    params: LtrParams = field(default_factory=LtrParams)
    index_names: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "index_names", tuple(self.index_names))
        for t in self.trees:
            splits = t.feature[t.feature >= 0]
            if splits.size and splits.max() >= self.feature_count:
                raise ValidationError(f"split on feature {splits.max()} but model has {self.feature_count} features")
            if not np.isfinite(t.value).all():
                raise ValidationError("non-finite leaf value")

    @cached_property
    def _forest(self) -> CompiledForest:
        return CompiledForest(list(self.trees))

    def predict(self, features) -> np.ndarray | float:
        x = np.asarray(features, dtype=np.float64)
        single = x.ndim == 1
        x2 = x.reshape(1, -1) if single else x
        if x2.ndim != 2 or x2.shape[1] != self.feature_count:
            raise ValidationError(f"expected {self.feature_count} features, got shape {x.shape}")
        out = self._forest.predict(x2, self.learning_rate)
        return float(out[0]) if single else out


def predict(ensemble: TreeEnsemble, features):
    """Sum of leaf values times the learning rate; accepts one row or a matrix."""
    return ensemble.predict(features)


# --- lambdas --------------------------------------------------------------------


def _discounts(n: int, truncation: int | None) -> np.ndarray:
    d = 1.0 / np.log2(np.arange(n) + 2.0)
    if truncation is not None:
        d[truncation:] = 0.0
    return d


def ideal_dcg(labels: np.ndarray, truncation: int | None = None) -> float:
    ideal = np.sort(labels)[::-1].astype(np.float64)
    return float(ideal @ _discounts(len(ideal), truncation))


def group_lambdas(scores: np.ndarray, labels: np.ndarray, sigma: float = 1.0,
                  truncation: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-document gradient and hessian for one query group."""
    m = scores.shape[0]
    grad = np.zeros(m)
    hess = np.zeros(m)
    idcg = ideal_dcg(labels, truncation)
    if m < 2 or idcg == 0:
        return grad, hess
    order = np.argsort(-scores, kind="stable")
    rank = np.empty(m, dtype=np.int64)
    rank[order] = np.arange(m)
    disc = _discounts(m, truncation)[rank]
    y = labels.astype(np.float64)
    pair = y[:, None] > y[None, :]
    if not pair.any():
        return grad, hess
    delta = np.abs((y[:, None] - y[None, :]) * (disc[:, None] - disc[None, :])) / idcg
    diff = np.clip(sigma * (scores[:, None] - scores[None, :]), -500.0, 500.0)
    rho = 1.0 / (1.0 + np.exp(diff))
    lam = np.where(pair, -sigma * rho * delta, 0.0)
    h = np.where(pair, sigma * sigma * rho * (1.0 - rho) * delta, 0.0)
    grad += lam.sum(axis=1)
    grad -= lam.sum(axis=0)
    hess += h.sum(axis=1)
    hess += h.sum(axis=0)
    return grad, hess


def group_ndcg(scores: np.ndarray, labels: np.ndarray, k: int | None = 10) -> float:
    idcg = ideal_dcg(labels, k)
    if idcg == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    return float(labels[order].astype(np.float64) @ _discounts(len(labels), k) / idcg)


# --- training -------------------------------------------------------------------


@dataclass
class QueryGroup:
    features: np.ndarray
    labels: np.ndarray
    query_id: str = ""
    doc_ids: Sequence[str] = ()


def _has_pairs(labels: np.ndarray) -> bool:
    return labels.size > 1 and labels.min() != labels.max()


def train_lambdamart(groups: Sequence[QueryGroup], params: LtrParams | None = None, seed: int = 0,
                     index_names: Sequence[str] = (),
                     on_round: Callable[[int, np.ndarray], None] | None = None) -> TreeEnsemble:
    """Fit a boosted ensemble on query groups.

    Each round: lambdas and hessians for every group from the current
    scores, a query-group row sample and a per-tree column sample, one tree
    fit by exact greedy search, and a ``learning_rate``-shrunk score update.
    ``on_round(r, scores)`` sees the concatenated training scores after round r.
    """
    params = params or LtrParams()
    groups = [g for g in groups if g.features.shape[0] > 0]
    if not groups:
        raise ValidationError("no training groups")
    n_features = groups[0].features.shape[1]
    if any(g.features.shape[1] != n_features for g in groups):
        raise ValidationError("all groups must have the same feature count")
    trainable = [i for i, g in enumerate(groups) if _has_pairs(np.asarray(g.labels))]
    if not trainable:
        raise ValidationError("no trainable pairs: every group has a single relevance grade")

    x = np.ascontiguousarray(np.vstack([g.features for g in groups]), dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValidationError("features must be finite")
    labels = [np.asarray(g.labels, dtype=np.int64) for g in groups]
    bounds = np.cumsum([0] + [g.features.shape[0] for g in groups])
    sorted_idx = np.stack([np.argsort(x[:, f], kind="stable") for f in range(n_features)])
    rng = np.random.default_rng(seed)
    scores = np.zeros(x.shape[0])
    grad = np.zeros_like(scores)
    hess = np.zeros_like(scores)
    n_groups_sample = max(1, int(round(params.row_subsample * len(groups))))
    n_cols = max(1, int(round(params.col_subsample_per_tree * n_features)))
    trees = []

    for r in range(params.n_trees):
        for gi in range(len(groups)):
            lo, hi = bounds[gi], bounds[gi + 1]
            grad[lo:hi], hess[lo:hi] = group_lambdas(scores[lo:hi], labels[gi], params.sigma,
                                                     params.ndcg_truncation)
        if params.row_subsample < 1.0:
            chosen = np.sort(rng.choice(len(groups), size=n_groups_sample, replace=False))
            rows = np.concatenate([np.arange(bounds[g], bounds[g + 1]) for g in chosen])
        else:
            rows = np.arange(x.shape[0])
        if params.col_subsample_per_tree < 1.0:
            cols = np.sort(rng.choice(n_features, size=n_cols, replace=False))
        else:
            cols = np.arange(n_features)
        tree = fit_tree(x, grad, hess, sorted_idx, rows, cols, params.max_depth,
                        params.l2_leaf_reg, params.min_child_weight)
        trees.append(tree)
        scores += params.learning_rate * CompiledForest([tree]).predict(x, 1.0)
        if on_round is not None:
            on_round(r, scores.copy())

    return TreeEnsemble(tuple(trees), params.learning_rate, n_features, params, tuple(index_names), seed)


# --- persistence ----------------------------------------------------------------
#
# Layout, little-endian:
#   b"LMRT1" | u32 version | u32 feature_count | f64 learning_rate | u64 seed
#   | u32 n_trees_param | u32 max_depth | f64 row_subsample | f64 col_subsample
#   | f64 sigma | f64 l2_leaf_reg | f64 min_child_weight | i32 ndcg_truncation (-1 = full)
#   | u32 n_names | n_names x (u32 byte_len, utf-8 name)
#   | u32 n_trees | n_trees x (u32 n_nodes, i32[n] feature, f64[n] threshold,
#                              i32[n] left, i32[n] right, f64[n] value)

_HEADER = struct.Struct("<IIdQIIdddddi")


def save_model(ensemble: TreeEnsemble, path) -> None:
    p = ensemble.params
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(_HEADER.pack(MODEL_VERSION, ensemble.feature_count, ensemble.learning_rate, ensemble.seed,
                              p.n_trees, p.max_depth, p.row_subsample, p.col_subsample_per_tree, p.sigma,
                              p.l2_leaf_reg, p.min_child_weight,
                              -1 if p.ndcg_truncation is None else p.ndcg_truncation))
        fh.write(struct.pack("<I", len(ensemble.index_names)))
        for name in ensemble.index_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
        fh.write(struct.pack("<I", len(ensemble.trees)))
        for t in ensemble.trees:
            fh.write(struct.pack("<I", t.n_nodes))
            fh.write(t.feature.astype("<i4").tobytes())
            fh.write(t.threshold.astype("<f8").tobytes())
            fh.write(t.left.astype("<i4").tobytes())
            fh.write(t.right.astype("<i4").tobytes())
            fh.write(t.value.astype("<f8").tobytes())


def load_model(path) -> TreeEnsemble:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:5]!r}, expected {MODEL_MAGIC!r}")
    try:
        off = 5
        (version,) = struct.unpack_from("<I", data, off)
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: model version {version}, this build reads version {MODEL_VERSION}")
        (_, n_features, lr, seed, n_trees_p, depth, rs, cs, sigma, l2, mcw, trunc) = _HEADER.unpack_from(data, off)
        off += _HEADER.size
        (n_names,) = struct.unpack_from("<I", data, off)
        off += 4
        names = []
        for _ in range(n_names):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            names.append(data[off:off + n].decode("utf-8"))
            off += n
        (n_trees,) = struct.unpack_from("<I", data, off)
        off += 4
        trees = []
        for _ in range(n_trees):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            arrays = []
            for dtype, width in (("<i4", 4), ("<f8", 8), ("<i4", 4), ("<i4", 4), ("<f8", 8)):
                if off + n * width > len(data):
                    raise FormatError(f"{path}: truncated tree array")
                arrays.append(np.frombuffer(data, dtype=dtype, count=n, offset=off).copy())
                off += n * width
            trees.append(Tree(*arrays))
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: truncated or corrupt model ({exc})") from None
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    params = LtrParams(n_trees=n_trees_p, max_depth=depth, row_subsample=rs, col_subsample_per_tree=cs,
                       learning_rate=lr, sigma=sigma, l2_leaf_reg=l2, min_child_weight=mcw,
                       ndcg_truncation=None if trunc < 0 else trunc)
    return TreeEnsemble(tuple(trees), lr, n_features, params, tuple(names), seed)


def params_dict(params: LtrParams) -> dict:
    return asdict(params)
