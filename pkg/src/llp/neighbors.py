"""Exact k-nearest-neighbour search and local density on the bank.

Scores are always computed in fixed-size blocks whose boundaries do not
depend on the worker count, so serial and threaded runs agree bit for bit.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ContractViolation, PropagationError

log = logging.getLogger(__name__)

BLOCK = 2048


@dataclass(frozen=True)
class NeighborList:
    ids: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class DensityTable:
    ids: np.ndarray  # sorted labelled point ids
    rho: np.ndarray
    computed_at_epoch: int = 0

    def __post_init__(self):
        if len(self.ids) != len(self.rho):
            raise ContractViolation("density ids and values differ in length")
        if np.any(~(self.rho > 0)):
            raise ContractViolation("densities must be strictly positive")

    @classmethod
    def uniform(cls, ids, value=1.0, epoch=0):
        ids = np.unique(np.asarray(ids, dtype=np.int64))
        return cls(ids, np.full(len(ids), float(value)), epoch)

    def lookup(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.ids, ids)
        pos = np.minimum(pos, len(self.ids) - 1)
        if len(self.ids) == 0 or np.any(self.ids[pos] != ids):
            missing = ids[self.ids[pos] != ids] if len(self.ids) else ids
            raise ContractViolation(f"no density entry for point(s) {missing[:5].tolist()}")
        return self.rho[pos]


def parallel_map(fn, items, workers):
    """Ordered map; threads only help where numpy releases the GIL."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def top_k_columns(keys, k):
    """Column indices of the k largest entries per row.

    Rows are ordered by key descending; equal keys go to the lower column.
    Callers arrange columns in ascending point-id order so that this is the
    "lower id wins" rule.
    """
    keys = np.atleast_2d(keys)
    r, m = keys.shape
    if k >= m:
        return np.argsort(-keys, axis=1, kind="stable")
    part = np.argpartition(-keys, k - 1, axis=1)[:, :k]
    part.sort(axis=1)
    vals = np.take_along_axis(keys, part, axis=1)
    kth = vals.min(axis=1)
    # boundary ties make argpartition's choice arbitrary: redo those rows exactly
    tied = (keys >= kth[:, None]).sum(axis=1) > k
    order = np.argsort(-vals, axis=1, kind="stable")
    out = np.take_along_axis(part, order, axis=1)
    for row in np.flatnonzero(tied):
        out[row] = np.argsort(-keys[row], kind="stable")[:k]
    return out


def knn(snapshot, query, k, pool, workers=1, exclude=None):
    """The k pool members with the highest cosine similarity to ``query``."""
    pool = np.unique(np.asarray(list(pool) if not isinstance(pool, np.ndarray) else pool, dtype=np.int64))
    if exclude is not None:
        pool = pool[pool != exclude]
    if pool.size == 0:
        raise PropagationError("knn called with an empty candidate pool")
    if k < 1:
        raise ContractViolation("k must be >= 1")
    query = np.asarray(query, dtype=np.float64)
    vectors = snapshot.vectors
    blocks = [pool[s:s + BLOCK] for s in range(0, pool.size, BLOCK)]

    def shard(ids):
        scores = vectors[ids] @ query
        top = top_k_columns(scores[None, :], min(k, ids.size))[0]
        return ids[top], scores[top]

    parts = parallel_map(shard, blocks, workers)
    ids = np.concatenate([p[0] for p in parts])
    scores = np.concatenate([p[1] for p in parts])
    order = np.lexsort((ids, -scores))[:k]
    return NeighborList(ids[order], scores[order])


def compute_density(snapshot, labeled_ids, t, tau, workers=1, pool="all", exclude_self=True, epoch=0):
    """rho(v_i) = sum of P(j | v_i) over the t nearest neighbours j of each labelled i.

    P uses the full-bank softmax denominator (self included, as in the
    softmax definition); the neighbour set excludes i itself by default.
    """
    labeled_ids = np.unique(np.asarray(labeled_ids, dtype=np.int64))
    if labeled_ids.size == 0:
        raise PropagationError("density needs at least one labelled point")
    if t < 1:
        raise ContractViolation("t must be >= 1")
    vectors = snapshot.vectors
    n = vectors.shape[0]
    cand = np.arange(n) if pool == "all" else labeled_ids
    available = cand.size - (1 if exclude_self else 0)
    if available < 1:
        raise PropagationError("no neighbours available for the density estimate")
    if t > available:
        log.warning("density t=%d exceeds available neighbours; clamping to %d", t, available)
        t = available
    cand_vecs = vectors[cand]
    blocks = [labeled_ids[s:s + BLOCK // 8] for s in range(0, labeled_ids.size, BLOCK // 8)]

    def shard(ids):
        full = vectors[ids] @ vectors.T / tau
        log_z = logsumexp(full, axis=1)
        sims = full if pool == "all" else vectors[ids] @ cand_vecs.T / tau
        if exclude_self:
            sims = sims.copy()
            # labelled ids are always members of cand, in both pool modes
            sims[np.arange(ids.size), np.searchsorted(cand, ids)] = -np.inf
        top = -np.partition(-sims, t - 1, axis=1)[:, :t]
        top = -np.sort(-top, axis=1)
        return np.exp(logsumexp(top, axis=1) - log_z)

    rho = np.concatenate(parallel_map(shard, blocks, workers))
    return DensityTable(labeled_ids, rho, epoch)
