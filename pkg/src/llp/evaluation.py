"""Nearest-neighbour evaluation, per-class aggregation metric and classical MDS."""
import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import PropagationError
from .propagation import NO_LABEL

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    nn_accuracy: float
    softmax_accuracy: float
    per_class_agg: np.ndarray
    mean_agg: float

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "class", "value"])
            w.writerow(["nn_accuracy", "", repr(float(self.nn_accuracy))])
            w.writerow(["softmax_accuracy", "", repr(float(self.softmax_accuracy))])
            for c, value in enumerate(self.per_class_agg):
                w.writerow(["aggregation", c, repr(float(value))])
            w.writerow(["mean_aggregation", "", repr(float(self.mean_agg))])


def nn_pool(labels, pool="labeled"):
    """Pool ids and their labels: truly labelled points, or every point with a label."""
    if pool == "labeled":
        ids = labels.labeled_ids
    elif pool == "all":
        ids = np.flatnonzero(labels.label != NO_LABEL)
    else:
        raise ValueError(f"unknown pool {pool!r}")
    return ids, labels.label[ids]


def nn_classify_batch(snapshot, pool_ids, pool_labels, queries):
    """Label of the cosine-nearest pool member for each query row; ties go to the lower id."""
    pool_ids = np.asarray(pool_ids, dtype=np.int64)
    if pool_ids.size == 0:
        raise PropagationError("nearest-neighbour pool is empty")
    order = np.argsort(pool_ids, kind="stable")
    pool_ids, pool_labels = pool_ids[order], np.asarray(pool_labels)[order]
    sims = np.atleast_2d(queries) @ snapshot.vectors[pool_ids].T
    return pool_labels[np.argmax(sims, axis=1)]


def nn_classify(snapshot, labels, query_embedding, pool="labeled"):
    ids, labs = nn_pool(labels, pool)
    return int(nn_classify_batch(snapshot, ids, labs, query_embedding[None, :])[0])


def aggregation_metric(snapshot, true_labels, class_count=None):
    """L2 norm of each class's mean embedding and their unweighted mean.

    Empty classes are skipped (NaN entry) with a warning.
    """
    true_labels = np.asarray(true_labels)
    if class_count is None:
        class_count = int(true_labels.max()) + 1
    per_class = np.full(class_count, np.nan)
    for c in range(class_count):
        members = snapshot.vectors[true_labels == c]
        if len(members) == 0:
            log.warning("class %d has no members; skipped in aggregation metric", c)
            continue
        per_class[c] = np.linalg.norm(members.mean(axis=0))
    valid = per_class[~np.isnan(per_class)]
    return per_class, float(valid.mean()) if valid.size else float("nan")


def mds_coords(snapshot, point_ids, eig_tol=1e-12):
    """Classical (Torgerson) MDS of the selected bank rows into the plane.

    Distances are chord lengths between unit vectors, sqrt(2 - 2 cos), a
    monotone function of cosine distance that is Euclidean, so planar
    configurations are recovered exactly. Each output column is flipped so its
    largest-magnitude entry is positive; axes without a positive eigenvalue
    are returned as zeros.
    """
    point_ids = np.asarray(point_ids, dtype=np.int64)
    if point_ids.size < 3:
        raise ValueError("MDS needs at least three points")
    x = snapshot.vectors[point_ids]
    gram = x @ x.T
    d2 = np.maximum(2.0 - 2.0 * gram, 0.0)
    np.fill_diagonal(d2, 0.0)
    n = len(point_ids)
    j = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * j @ d2 @ j
    b = 0.5 * (b + b.T)
    evals, evecs = np.linalg.eigh(b)
    top = np.argsort(evals)[::-1][:2]
    coords = np.zeros((n, 2))
    scale = max(abs(evals).max(), 1.0)
    for col, k in enumerate(top):
        if evals[k] > eig_tol * scale:
            v = evecs[:, k] * np.sqrt(evals[k])
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            coords[:, col] = v
    return coords


def write_mds_csv(path, point_ids, coords, labels=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point_id", "x", "y", "label"])
        for i, (pid, (cx, cy)) in enumerate(zip(point_ids, coords)):
            lab = "" if labels is None or labels[i] == NO_LABEL else int(labels[i])
            w.writerow([int(pid), repr(float(cx)), repr(float(cy)), lab])


def evaluate(net, snapshot, labels, train_true, val_features, val_labels, pool="labeled"):
    """Validation NN and softmax accuracy plus the aggregation metric on the bank."""
    per_class, mean_agg = aggregation_metric(snapshot, train_true, net.n_classes)
    if len(val_labels) == 0:
        return EvalReport(float("nan"), float("nan"), per_class, mean_agg)
    emb, logits, _ = net.forward(val_features)
    ids, labs = nn_pool(labels, pool)
    nn_pred = nn_classify_batch(snapshot, ids, labs, emb)
    nn_acc = float(np.mean(nn_pred == val_labels))
    sm_acc = float(np.mean(np.argmax(logits, axis=1) == val_labels))
    return EvalReport(nn_acc, sm_acc, per_class, mean_agg)
