"""Training losses: cross-entropy, Lovász-softmax, instance consistency.

The total objective is the unweighted sum of the three.  Consistency
comes in two flavors: the hard count-based form used for reporting
(fraction-of-distinct-classes per instance, not differentiable) and a
soft surrogate used in the optimized objective, the expected pairwise
disagreement 1 - sum_c q_c^2 of the instance's mean class distribution
q.  Both are 0 exactly when every instance is predicted single-class.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NumericsError, ValidationError


def softmax_probs(logits: Tensor) -> Tensor:
    """Row-wise class probabilities."""
    if not np.all(np.isfinite(logits.data)):
        raise NumericsError("non-finite logits")
    return ad.masked_softmax(logits, np.ones(logits.data.shape, dtype=bool), axis=1)


def _check_targets(n: int, classes: int, targets: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if len(targets) != n:
        raise ValidationError(f"{n} rows but {len(targets)} targets")
    if n == 0:
        raise ValidationError("losses need at least one point")
    if np.any((targets < 0) | (targets >= classes)):
        raise ValidationError("target class out of range")
    return targets


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood; shift-stable log-softmax."""
    n, c = logits.data.shape
    targets = _check_targets(n, c, targets)
    if not np.all(np.isfinite(logits.data)):
        raise NumericsError("non-finite logits")
    shift = logits.data.max(axis=1, keepdims=True)  # constant: no gradient
    z = logits - shift
    lse = ad.log(ad.reduce_sum(ad.exp(z), axis=1))
    nll = lse - ad.take_per_row(z, targets)
    return ad.reduce_sum(nll) * (1.0 / n)


def _jaccard_grad(fg_sorted: np.ndarray) -> np.ndarray:
    """Increments of the Jaccard loss along the sorted-error prefix."""
    total = fg_sorted.sum()
    intersection = total - np.cumsum(fg_sorted)
    union = total + np.cumsum(1.0 - fg_sorted)
    jaccard = 1.0 - intersection / union
    grad = jaccard.copy()
    grad[1:] -= jaccard[:-1]
    return grad


def lovasz_softmax(probs: Tensor, targets) -> Tensor:
    """Lovász extension of the per-class Jaccard loss.

    Takes probabilities (rows on the simplex).  Classes considered are
    those present in the targets or in the argmax prediction; the loss
    is their mean.  The sorted Jaccard increments act as constants for
    the backward pass, which is exactly the extension's (sub)gradient.
    """
    n, c = probs.data.shape
    targets = _check_targets(n, c, targets)
    if not np.all(np.isfinite(probs.data)):
        raise NumericsError("non-finite probabilities")
    predicted = np.argmax(probs.data, axis=1)
    considered = np.union1d(targets, predicted)
    terms = []
    for cls in considered:
        fg = (targets == cls).astype(np.float64)
        p_c = ad.take_per_row(probs, np.full(n, cls))
        # |fg - p|: 1-p on members, p elsewhere; fg is 0/1 so this is linear
        signs = np.where(fg > 0.5, -1.0, 1.0)
        errors = p_c * signs + fg
        order = np.argsort(-errors.data, kind="stable")
        grad = _jaccard_grad(fg[order])
        terms.append(ad.reduce_sum(ad.take1d(errors, order) * grad))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(considered))


def consistency_hard(codes: np.ndarray, instance_ids: np.ndarray) -> float:
    """Reporting form: mean over instances of 1 - 1/(distinct classes)."""
    codes = np.asarray(codes, dtype=np.int64).reshape(-1)
    instance_ids = np.asarray(instance_ids, dtype=np.int64).reshape(-1)
    if len(codes) != len(instance_ids):
        raise ValidationError("codes/instance length mismatch")
    ids = np.unique(instance_ids[instance_ids > 0])
    if len(ids) == 0:
        return 0.0
    acc = 0.0
    for h in ids:
        distinct = len(np.unique(codes[instance_ids == h]))
        acc += 1.0 - 1.0 / distinct
    return acc / len(ids)


def consistency_soft(probs: Tensor, instance_ids) -> Tensor:
    """Differentiable surrogate: mean over instances of 1 - ||q||^2.

    q is the instance's mean predicted distribution; the term vanishes
    iff q is one-hot and approaches 1 - 1/C as the mix flattens, moving
    in lockstep with the hard count-based form.
    """
    n, c = probs.data.shape
    instance_ids = np.asarray(instance_ids, dtype=np.int64).reshape(-1)
    if len(instance_ids) != n:
        raise ValidationError("probs/instance length mismatch")
    if not np.all(np.isfinite(probs.data)):
        raise NumericsError("non-finite probabilities")
    ids = np.unique(instance_ids[instance_ids > 0])
    if len(ids) == 0:
        return Tensor(0.0)
    terms = []
    for h in ids:
        rows = np.flatnonzero(instance_ids == h)
        q = ad.reduce_sum(ad.gather_rows(probs, rows), axis=0) * (1.0 / len(rows))
        terms.append(1.0 - ad.reduce_sum(q * q))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(ids))


def total_loss(logits: Tensor, targets, instance_ids):
    """Sum of the three losses; returns (scalar Tensor, float parts)."""
    probs = softmax_probs(logits)
    ce = cross_entropy(logits, targets)
    lov = lovasz_softmax(probs, targets)
    con = consistency_soft(probs, instance_ids)
    total = ce + lov + con
    if not np.isfinite(total.data):
        raise NumericsError("non-finite training loss")
    parts = {"ce": float(ce.data), "lovasz": float(lov.data),
             "consistency": float(con.data)}
    return total, parts
