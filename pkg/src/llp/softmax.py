"""Non-parametric softmax over the memory bank.

P(i | v) = exp(v_i . v / tau) / sum_j exp(v_j . v / tau), with the
denominator always taken over every bank row.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ContractViolation


@dataclass(frozen=True)
class SoftmaxContext:
    tau: float
    log_denominator: float
    query: np.ndarray
    token: tuple


def logits(vectors, query, tau):
    return (vectors @ query) / tau


def make_context(snapshot, query, tau):
    query = np.asarray(query, dtype=np.float64)
    lz = float(logsumexp(logits(snapshot.vectors, query, tau)))
    if not np.isfinite(lz):
        raise ContractViolation("softmax denominator is not finite")
    q = query.copy()
    q.setflags(write=False)
    return SoftmaxContext(tau=float(tau), log_denominator=lz, query=q, token=snapshot.token)


def _check(ctx, snapshot):
    if ctx.token != snapshot.token:
        raise ContractViolation(f"softmax context built for snapshot {ctx.token}, used with {snapshot.token}")


def log_prob_all(ctx, snapshot):
    """log P(i|v) for every bank row i."""
    _check(ctx, snapshot)
    return logits(snapshot.vectors, ctx.query, ctx.tau) - ctx.log_denominator


def prob(ctx, snapshot, i):
    _check(ctx, snapshot)
    s = float(snapshot.vectors[i] @ ctx.query) / ctx.tau
    return float(np.exp(s - ctx.log_denominator))


def prob_set(ctx, snapshot, ids):
    """P(S|v) = sum of member probabilities; the empty set has probability 0."""
    ids = np.unique(np.asarray(list(ids), dtype=np.int64))
    _check(ctx, snapshot)
    if ids.size == 0:
        return 0.0
    s = logits(snapshot.vectors[ids], ctx.query, ctx.tau)
    return float(np.exp(logsumexp(s) - ctx.log_denominator))


def log_denominators(vectors, queries, tau, chunk=1024):
    """Row-wise log sum_j exp(v_j . q / tau) for a batch of queries."""
    queries = np.atleast_2d(queries)
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], chunk):
        block = queries[start:start + chunk] @ vectors.T / tau
        out[start:start + chunk] = logsumexp(block, axis=1)
    return out
