"""Aggregation, instance-recognition and classification losses with exact gradients.

Bank rows are treated as constants; gradients are with respect to the live
(ambient, already normalized) embedding v and the classifier logits.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ContractViolation
from .softmax import _check


@dataclass
class GradBundle:
    loss: float
    d_embedding: np.ndarray
    d_logits: np.ndarray


def aggregation_loss_batch(bank_vectors, queries, member_mask, tau):
    """-log P(A_b | v_b) for each row b, with A_b given as a boolean row of ``member_mask``.

    Returns (losses, d_queries).
    """
    s = queries @ bank_vectors.T / tau
    if not np.all(member_mask.any(axis=1)):
        raise ContractViolation("aggregation target set is empty")
    log_z = logsumexp(s, axis=1)
    s_a = np.where(member_mask, s, -np.inf)
    log_pa = logsumexp(s_a, axis=1)
    p_all = np.exp(s - log_z[:, None])
    p_in_a = np.exp(s_a - log_pa[:, None])
    grad = (p_all - p_in_a) @ bank_vectors / tau
    return log_z - log_pa, grad


def aggregation_loss(ctx, snapshot, same_label_ids, self_id, q=0):
    _check(ctx, snapshot)
    ids = np.unique(np.asarray(list(same_label_ids), dtype=np.int64))
    if ids.size == 0:
        raise ContractViolation("aggregation set A is empty")
    if self_id not in ids:
        raise ContractViolation(f"aggregation set must contain the query's own id {self_id}")
    mask = np.zeros((1, snapshot.n), dtype=bool)
    mask[0, ids] = True
    loss, grad = aggregation_loss_batch(snapshot.vectors, ctx.query[None, :], mask, ctx.tau)
    return GradBundle(max(float(loss[0]), 0.0), grad[0], np.zeros(q))


def ir_loss(ctx, snapshot, self_id, q=0):
    """Instance recognition: the aggregation loss with A = {self}."""
    return aggregation_loss(ctx, snapshot, [self_id], self_id, q=q)


def classification_loss_batch(logits, targets):
    logits = np.atleast_2d(logits)
    targets = np.asarray(targets, dtype=np.int64)
    log_p = logits - logsumexp(logits, axis=1, keepdims=True)
    rows = np.arange(logits.shape[0])
    grad = softmax(logits, axis=1)
    grad[rows, targets] -= 1.0
    return -log_p[rows, targets], grad


def classification_loss(logits, target, d=0):
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.size:
        raise ContractViolation(f"target {target} outside [0, {logits.size})")
    loss, grad = classification_loss_batch(logits[None, :], [target])
    return GradBundle(float(loss[0]), np.zeros(d), grad[0])


def total_loss(agg, cls, confidence, params_sq_norm, lam, agg_weight=1.0):
    """c * (L_C + L_A) + lambda * ||theta||^2.

    Only the data-term gradients are returned; the regularizer's gradient is
    applied as weight decay by the optimizer.
    """
    if not 0.0 <= confidence <= 1.0:
        raise ContractViolation("confidence must lie in [0, 1]")
    loss = confidence * (agg_weight * agg.loss + cls.loss) + lam * params_sq_norm
    return GradBundle(
        loss,
        confidence * agg_weight * np.asarray(agg.d_embedding),
        confidence * np.asarray(cls.d_logits),
    )
