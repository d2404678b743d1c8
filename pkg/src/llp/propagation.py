"""Pseudo-labels and confidences by weighted-KNN voting over the bank.

Two voting rules share one kernel:

* naive: the K most similar labelled points vote with weight P(i|v);
* local: every labelled point's weight is divided by its local density
  rho(v_i), and the K labelled points with the largest corrected weight
  vote.

The softmax denominator of P(i|v) is common to all votes of one query, so
the class distribution p only needs similarities to the M labelled points.
That keeps ``propagate_all`` at O(N M).
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation, PropagationError
from .neighbors import BLOCK, parallel_map, top_k_columns
from .softmax import make_context

NO_LABEL = -1


@dataclass
class LabelState:
    label: np.ndarray  # int64, NO_LABEL where never assigned
    is_labeled: np.ndarray  # bool
    confidence: np.ndarray  # float64
    class_count: int

    def __post_init__(self):
        self.label = np.asarray(self.label, dtype=np.int64)
        self.is_labeled = np.asarray(self.is_labeled, dtype=bool)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)

    @classmethod
    def from_labels(cls, label, is_labeled, class_count):
        label = np.asarray(label, dtype=np.int64)
        is_labeled = np.asarray(is_labeled, dtype=bool)
        label = np.where(is_labeled, label, NO_LABEL)
        conf = np.where(is_labeled, 1.0, 0.0)
        return cls(label, is_labeled, conf, class_count).validate()

    def __len__(self):
        return len(self.label)

    @property
    def labeled_ids(self):
        return np.flatnonzero(self.is_labeled)

    @property
    def unlabeled_ids(self):
        return np.flatnonzero(~self.is_labeled)

    def copy(self):
        return LabelState(self.label.copy(), self.is_labeled.copy(), self.confidence.copy(), self.class_count)

    def validate(self):
        n = len(self.label)
        if self.is_labeled.shape != (n,) or self.confidence.shape != (n,):
            raise ContractViolation("label state arrays differ in length")
        if np.any(self.label >= self.class_count) or np.any(self.label < NO_LABEL):
            raise ContractViolation("class id out of range")
        if np.any(self.label[self.is_labeled] == NO_LABEL):
            raise ContractViolation("labelled point without a label")
        if np.any(self.confidence[self.is_labeled] != 1.0):
            raise ContractViolation("labelled points must have confidence exactly 1")
        if np.any((self.confidence < 0) | (self.confidence > 1)):
            raise ContractViolation("confidence outside [0, 1]")
        return self

    def equals(self, other):
        return (
            self.class_count == other.class_count
            and np.array_equal(self.label, other.label)
            and np.array_equal(self.is_labeled, other.is_labeled)
            and np.array_equal(self.confidence, other.confidence)
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["point_id", "label", "is_labeled", "confidence"])
            for i in range(len(self)):
                lab = "" if self.label[i] == NO_LABEL else int(self.label[i])
                writer.writerow([i, lab, int(self.is_labeled[i]), repr(float(self.confidence[i]))])

    @classmethod
    def from_csv(cls, path, class_count=None):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["point_id", "label", "is_labeled", "confidence"]:
                raise ConfigurationError(f"{path}: unexpected header {reader.fieldnames}")
            rows = list(reader)
        ids = [int(r["point_id"]) for r in rows]
        if ids != list(range(len(rows))):
            raise ConfigurationError(f"{path}: point ids must be 0..N-1 in order")
        label = np.array([int(r["label"]) if r["label"] != "" else NO_LABEL for r in rows], dtype=np.int64)
        is_labeled = np.array([r["is_labeled"].strip().lower() in ("1", "true") for r in rows])
        conf = np.array([float(r["confidence"]) for r in rows])
        if class_count is None:
            class_count = int(label.max()) + 1 if len(label) else 0
        return cls(label, is_labeled, conf, class_count).validate()


@dataclass
class ClassWeights:
    w: np.ndarray
    p: np.ndarray
    winner: int
    confidence: float


@dataclass
class _Voters:
    """Labelled candidates prepared once per propagation pass."""

    ids: np.ndarray
    classes: np.ndarray
    vectors: np.ndarray
    log_corr: np.ndarray = None  # log(rho_ref / rho_i); None for naive voting
    corr: np.ndarray = None
    rho_ref: float = 1.0


def _voters(snapshot, labels, density, local):
    ids = labels.labeled_ids
    if ids.size == 0:
        raise PropagationError("propagation needs at least one labelled point")
    v = _Voters(ids, labels.label[ids], snapshot.vectors[ids])
    if local:
        if density is None:
            raise ContractViolation("locally weighted propagation needs a density table")
        rho = density.lookup(ids)
        # dividing by a shared reference keeps uniform densities at exactly 1.0,
        # which makes local voting reproduce naive voting bit for bit
        v.rho_ref = float(density.rho.min())
        v.corr = v.rho_ref / rho
        v.log_corr = np.log(v.corr)
    return v


def _vote(voters, queries, k, tau, q):
    """Select K voters per query row and return (weights, p, winners, shift)."""
    logit = queries @ voters.vectors.T / tau
    key = logit if voters.log_corr is None else logit + voters.log_corr
    sel = top_k_columns(key, min(k, voters.ids.size))
    sel_logit = np.take_along_axis(logit, sel, axis=1)
    shift = sel_logit.max(axis=1, keepdims=True)
    mass = np.exp(sel_logit - shift)
    if voters.corr is not None:
        mass = mass * voters.corr[sel]
    cls = voters.classes[sel]
    rows = np.arange(queries.shape[0])
    w = np.zeros((queries.shape[0], q))
    # one column at a time: row indices are distinct, and the summation
    # order (most relevant voter first) is fixed
    for j in range(sel.shape[1]):
        w[rows, cls[:, j]] += mass[:, j]
    p = w / w.sum(axis=1, keepdims=True)
    winner = np.argmax(p, axis=1)
    return w, p, winner, shift[:, 0]


def _single(snapshot, labels, cfg, query_id, density, local):
    if labels.is_labeled[query_id]:
        raise ContractViolation(f"query {query_id} is labelled; propagation targets unlabelled points")
    voters = _voters(snapshot, labels, density, local)
    query = snapshot.vectors[query_id]
    w, p, winner, shift = _vote(voters, query[None, :], cfg.k, cfg.tau, labels.class_count)
    ctx = make_context(snapshot, query, cfg.tau)
    # undo the stabilising shift and the reference density to report true weights
    w_true = w[0] * np.exp(shift[0] - ctx.log_denominator) / voters.rho_ref
    win = int(winner[0])
    return ClassWeights(w_true, p[0], win, float(p[0, win]))


def propagate_naive(snapshot, labels, cfg, query_id):
    """w_j = sum of P(i|v) over the K most similar labelled points of class j."""
    return _single(snapshot, labels, cfg, query_id, None, local=False)


def propagate_local(snapshot, labels, density, cfg, query_id):
    """w_j = sum of P(i|v) / rho(v_i) over the K labelled points ranked highest by that ratio."""
    return _single(snapshot, labels, cfg, query_id, density, local=True)


def propagate_points(snapshot, labels, density, cfg, ids):
    """Winners and confidences for the given unlabelled ids (no state change)."""
    ids = np.asarray(ids, dtype=np.int64)
    voters = _voters(snapshot, labels, density, cfg.local_weighting)
    vectors = snapshot.vectors
    chunks = [ids[s:s + BLOCK] for s in range(0, ids.size, BLOCK)]

    def shard(chunk):
        _, p, winner, _ = _vote(voters, vectors[chunk], cfg.k, cfg.tau, labels.class_count)
        return winner, p[np.arange(chunk.size), winner]

    if ids.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    parts = parallel_map(shard, chunks, cfg.workers)
    return np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts])


def propagate_all(snapshot, labels, density, cfg):
    """New LabelState with every unlabelled point assigned a pseudo-label.

    Uses ``cfg.local_weighting`` to pick the voting rule. Labelled points are
    copied through untouched.
    """
    out = labels.copy()
    unl = labels.unlabeled_ids
    if unl.size == 0:
        return out
    winner, conf = propagate_points(snapshot, labels, density, cfg, unl)
    out.label[unl] = winner
    out.confidence[unl] = conf
    return out
