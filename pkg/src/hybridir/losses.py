"""Training-objective kernels with analytic gradients.

These are numerical reference implementations over plain arrays; there is
no optimizer or training loop. Batch reduction is always the arithmetic
mean, so loss scale does not depend on batch size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class ScoredTriple:
    """Reference scores ``s_*`` from a cross-encoder and model scores ``shat_*``."""

    s_pos: float
    s_neg: float
    shat_pos: float
    shat_neg: float

    @staticmethod
    def stack(batch: Sequence["ScoredTriple"]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        arr = np.array([[t.s_pos, t.s_neg, t.shat_pos, t.shat_neg] for t in batch], dtype=np.float64)
        arr = arr.reshape(-1, 4)
        return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]


def margin_mse(s_pos, s_neg, shat_pos, shat_neg):
    """Mean squared difference between reference and model positive-negative margins.

    Returns ``(loss, grad_shat_pos, grad_shat_neg)``.
    """
    s_pos, s_neg, shat_pos, shat_neg = (np.asarray(a, dtype=np.float64) for a in (s_pos, s_neg, shat_pos, shat_neg))
    if s_pos.size == 0:
        raise ValueError("margin_mse needs a non-empty batch")
    if not (s_pos.shape == s_neg.shape == shat_pos.shape == shat_neg.shape):
        raise ValueError("all score arrays must share one shape")
    if not all(np.isfinite(a).all() for a in (s_pos, s_neg, shat_pos, shat_neg)):
        raise ValueError("scores must be finite")
    diff = (s_pos - s_neg) - (shat_pos - shat_neg)
    n = diff.size
    loss = float(np.mean(diff ** 2))
    grad_pos = -2.0 * diff / n
    return loss, grad_pos, -grad_pos


def margin_mse_triples(batch: Sequence[ScoredTriple]):
    return margin_mse(*ScoredTriple.stack(batch))


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("embeddings must be non-zero for cosine similarity")
    return x / norms, norms


def _unit_rows_backward(grad_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d(x/|x|)/dx applied to an upstream gradient
    return (grad_unit - unit * np.sum(grad_unit * unit, axis=1, keepdims=True)) / norms


def _logsumexp_rows(a: np.ndarray, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise log-sum-exp over the masked entries and the matching softmax weights."""
    if mask is not None:
        a = np.where(mask, a, -np.inf)
    top = np.max(a, axis=1, keepdims=True)
    e = np.exp(a - top)
    total = e.sum(axis=1, keepdims=True)
    return (top + np.log(total)).ravel(), e / total


def mnr_loss(queries, positives, negatives, tau: float = 0.01):
    """Multiple-negatives ranking loss with in-batch and hard negatives.

    With ``s(u, v) = cos(u, v) / tau`` the loss for query ``i`` is::

        -s(q_i, p_i) + log sum_{k != i} exp s(q_i, p_k) + log sum_k exp s(q_i, n_k)

    The query's own positive is excluded from the first log-sum. The batch
    loss is the mean over queries. Returns ``(loss, grad_queries,
    grad_positives, grad_negatives)``.
    """
    q = np.asarray(queries, dtype=np.float64)
    p = np.asarray(positives, dtype=np.float64)
    n = np.asarray(negatives, dtype=np.float64)
    if q.ndim != 2 or q.shape != p.shape or q.shape != n.shape:
        raise ValueError(f"queries, positives and negatives must be equal (K, dim) arrays, got "
                         f"{q.shape}, {p.shape}, {n.shape}")
    k = q.shape[0]
    if k < 2:
        raise ValueError(f"mnr_loss needs a batch of at least 2 queries, got {k}")
    if not tau > 0:
        raise ValueError(f"temperature must be > 0, got {tau}")

    qu, qn = _unit_rows(q)
    pu, pn = _unit_rows(p)
    nu, nn = _unit_rows(n)
    sim_pos = qu @ pu.T / tau
    sim_neg = qu @ nu.T / tau
    off_diag = ~np.eye(k, dtype=bool)
    lse_pos, soft_pos = _logsumexp_rows(sim_pos, off_diag)
    lse_neg, soft_neg = _logsumexp_rows(sim_neg)
    per_query = -np.diag(sim_pos) + lse_pos + lse_neg
    loss = float(per_query.mean())

    g_pos = (soft_pos - np.eye(k)) / k
    g_neg = soft_neg / k
    g_qu = (g_pos @ pu + g_neg @ nu) / tau
    g_pu = g_pos.T @ qu / tau
    g_nu = g_neg.T @ qu / tau
    return (loss,
            _unit_rows_backward(g_qu, qu, qn),
            _unit_rows_backward(g_pu, pu, pn),
            _unit_rows_backward(g_nu, nu, nn))


def distill_mse(teacher, student):
    """Mean over all elements of ``(student - teacher)**2``; returns ``(loss, grad_student)``."""
    t = np.asarray(teacher, dtype=np.float64)
    s = np.asarray(student, dtype=np.float64)
    if t.shape != s.shape:
        raise ValueError(f"teacher shape {t.shape} != student shape {s.shape}")
    if s.size == 0:
        raise ValueError("distill_mse needs non-empty inputs")
    diff = s - t
    return float(np.mean(diff ** 2)), 2.0 * diff / s.size


@dataclass(frozen=True)
class BilingualPair:
    source_text: str
    target_text: str
    similarity: float


def filter_bilingual_pairs(pairs: Iterable[BilingualPair], threshold: float = 0.7) -> list[BilingualPair]:
    """Keep pairs whose aligned-sentence similarity is at least ``threshold``."""
    kept = []
    for pair in pairs:
        if not np.isfinite(pair.similarity):
            raise ValueError(f"non-finite similarity for pair {pair.source_text!r}")
        if pair.similarity >= threshold:
            kept.append(pair)
    return kept


# --- finite-difference checking ---------------------------------------------------


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (``x`` is restored afterwards)."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``|a - n| / max(|a|, |n|)`` over the whole gradient (0 when both vanish)."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def gradient_check(n_points: int = 20, seed: int = 0, h: float = 1e-5, tau: float = 0.01) -> dict[str, float]:
    """Max relative gradient error of every kernel over ``n_points`` random inputs."""
    rng = np.random.default_rng(seed)
    worst = {"margin_mse": 0.0, "mnr_loss": 0.0, "distill_mse": 0.0}
    for _ in range(n_points):
        b = int(rng.integers(1, 8))
        s_pos, s_neg, hp, hn = rng.normal(size=(4, b))
        _, gp, gn = margin_mse(s_pos, s_neg, hp, hn)
        num_p = numeric_gradient(lambda x: margin_mse(s_pos, s_neg, x, hn)[0], hp, h)
        num_n = numeric_gradient(lambda x: margin_mse(s_pos, s_neg, hp, x)[0], hn, h)
        worst["margin_mse"] = max(worst["margin_mse"],
                                  relative_error(np.concatenate([gp, gn]), np.concatenate([num_p, num_n])))

        k, dim = int(rng.integers(2, 6)), int(rng.integers(2, 8))
        q, p, n = rng.normal(size=(3, k, dim))
        _, gq, gpp, gnn = mnr_loss(q, p, n, tau)
        nq = numeric_gradient(lambda x: mnr_loss(x, p, n, tau)[0], q, h)
        np_ = numeric_gradient(lambda x: mnr_loss(q, x, n, tau)[0], p, h)
        nn_ = numeric_gradient(lambda x: mnr_loss(q, p, x, tau)[0], n, h)
        worst["mnr_loss"] = max(worst["mnr_loss"], relative_error(
            np.concatenate([gq.ravel(), gpp.ravel(), gnn.ravel()]),
            np.concatenate([nq.ravel(), np_.ravel(), nn_.ravel()])))

        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 9)))
        t, s = rng.normal(size=(2, *shape))
        _, gs = distill_mse(t, s)
        ns = numeric_gradient(lambda x: distill_mse(t, x)[0], s, h)
        worst["distill_mse"] = max(worst["distill_mse"], relative_error(gs, ns))
    return worst
