"""Product t-norm relaxation of requirement clauses and the losses built on it.

A clause ``l1 | ... | lk`` is violated to degree ``prod(1 - val(l))`` where
``val(x) = p_x`` and ``val(!x) = 1 - p_x``.  The degree is 0 when some
literal is certainly true and 1 when every literal is certainly false.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, LabelSpaceMismatch

BCE_EPS = 1e-7
ANCHOR_THRESHOLD = 0.5
DEFAULT_CONSTRAINT_WEIGHT = 10.0


def score_vector(p, n: int | None = None) -> np.ndarray:
    """Validate a confidence vector: finite, within [0, 1], optional length check."""
    arr = np.array(p, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"score vector must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("score vector contains NaN or infinity")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InputError("score vector entries must lie in [0, 1]")
    if n is not None and arr.size != n:
        raise LabelSpaceMismatch(f"score vector has length {arr.size}, expected {n}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LossReport:
    value: float
    per_clause: np.ndarray
    gradient: np.ndarray


@dataclass(frozen=True)
class BatchLossReport:
    indices: list[int]
    items: list[LossReport]
    mean: float


def violation(clause, p) -> float:
    p = np.asarray(p, dtype=np.float64)
    out = 1.0
    for lit in clause.literals:
        if not 0 <= lit.label_index < p.size:
            raise LabelSpaceMismatch(f"literal index {lit.label_index} outside score vector of length {p.size}")
        v = p[lit.label_index]
        out *= v if lit.negated else 1.0 - v
    return float(out)


def _violations(rs, scores: np.ndarray, with_grad: bool = True):
    """Violations ``(B, R)`` in canonical clause order and gradient of their mean.

    The gradient uses exclusive prefix/suffix products, so it stays exact
    when some factor is zero.  Working in canonical order makes every sum
    independent of how the requirement file orders its clauses.
    """
    scores = np.asarray(scores, dtype=np.float64)
    b, n = scores.shape
    if n != rs.num_labels:
        raise LabelSpaceMismatch(f"score vectors have length {n}, expected {rs.num_labels}")
    r = len(rs)
    if r == 0:
        return np.zeros((b, 0)), np.zeros((b, n))
    cc = rs.canonical
    gathered = scores[:, cc.index]
    factors = np.where(cc.negated, gathered, 1.0 - gathered)
    factors = np.where(cc.mask, factors, 1.0)
    viol = np.prod(factors, axis=2)
    if not with_grad:
        return viol, None
    ones = np.ones(factors.shape[:2] + (1,))
    prefix = np.cumprod(np.concatenate([ones, factors[:, :, :-1]], axis=2), axis=2)
    suffix = np.cumprod(np.concatenate([ones, factors[:, :, :0:-1]], axis=2), axis=2)[:, :, ::-1]
    others = prefix * suffix
    sign = np.where(cc.negated, 1.0, -1.0)
    contrib = np.where(cc.mask, sign * others, 0.0) / r
    flat = (np.arange(b)[:, None, None] * n + cc.index[None, :, :]).ravel()
    grad = np.bincount(flat, weights=contrib.ravel(), minlength=b * n).reshape(b, n)
    return viol, grad


def _in_file_order(rs, viol):
    out = np.empty_like(viol)
    out[:, rs.canonical_order] = viol
    return out


def _mean(viol):
    return viol.mean(axis=1) if viol.shape[1] else np.zeros(viol.shape[0])


def clause_violations(rs, scores: np.ndarray, with_grad: bool = True):
    """Per-clause violations ``(B, R)`` in file order and gradient of their mean ``(B, N)``."""
    viol, grad = _violations(rs, scores, with_grad)
    return _in_file_order(rs, viol), grad


def loss_s1(rs, p) -> LossReport:
    p = score_vector(p, rs.num_labels)
    viol, grad = _violations(rs, p[None, :])
    return LossReport(float(_mean(viol)[0]), _in_file_order(rs, viol)[0], grad[0])


def loss_s1_values(rs, scores: np.ndarray):
    """Batched L_S1 values ``(B,)`` and gradients ``(B, N)``."""
    viol, grad = _violations(rs, scores)
    return _mean(viol), grad


def bce(q, y, eps: float = BCE_EPS):
    """Mean binary cross-entropy over labels and its gradient in ``q``.

    ``q`` is clamped to ``[eps, 1 - eps]``; the gradient is zero where the
    clamp is active.  Works on 1-D vectors or ``(B, N)`` batches (per row).
    """
    q = np.asarray(q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if q.shape != y.shape:
        raise LabelSpaceMismatch(f"prediction shape {q.shape} != target shape {y.shape}")
    n = q.shape[-1]
    qc = np.clip(q, eps, 1.0 - eps)
    value = -(y * np.log(qc) + (1.0 - y) * np.log1p(-qc)).sum(axis=-1) / n
    inside = (q > eps) & (q < 1.0 - eps)
    grad = np.where(inside, -(y / qc - (1.0 - y) / (1.0 - qc)) / n, 0.0)
    return value, grad


def loss_s2(rs, y_c, y_b, y_true, weight: float = DEFAULT_CONSTRAINT_WEIGHT, eps: float = BCE_EPS):
    """``weight * L_S1(y_c) + BCE(y_c, y) + BCE(y_b, y)`` with gradients in y_c and y_b."""
    n = rs.num_labels
    y_c = score_vector(y_c, n)
    y_b = score_vector(y_b, n)
    y = np.asarray(y_true, dtype=np.float64)
    if y.shape != (n,):
        raise LabelSpaceMismatch(f"label vector has length {y.size}, expected {n}")
    s1 = loss_s1(rs, y_c)
    bce_c, g_c = bce(y_c, y, eps)
    bce_b, g_b = bce(y_b, y, eps)
    value = weight * s1.value + float(bce_c) + float(bce_b)
    return value, weight * s1.gradient + g_c, g_b


def filter_anchors(batch, threshold: float = ANCHOR_THRESHOLD) -> list[int]:
    """Indices of score vectors with at least one entry above ``threshold``."""
    return [i for i, p in enumerate(batch) if len(p) and float(np.max(p)) > threshold]


def loss_s1_batch(rs, batch, filtered: bool = True) -> BatchLossReport:
    indices = filter_anchors(batch) if filtered else list(range(len(batch)))
    if not indices:
        return BatchLossReport([], [], 0.0)
    scores = np.stack([score_vector(batch[i], rs.num_labels) for i in indices])
    viol, grad = _violations(rs, scores)
    values = _mean(viol)
    per_clause = _in_file_order(rs, viol)
    items = [LossReport(float(values[k]), per_clause[k], grad[k]) for k in range(len(indices))]
    return BatchLossReport(indices, items, float(np.mean([it.value for it in items])))
