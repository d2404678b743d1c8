"""Synthetic datasets, external ingestion and stratified label masking."""
import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import binio
from .errors import ConfigurationError
from .propagation import LabelState

NO_LABEL = -1


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, F)
    true_labels: np.ndarray  # (N,), NO_LABEL where withheld
    split: np.ndarray  # (N,), "train" or "val"
    provenance: str
    class_count: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.features)):
            raise ConfigurationError("feature rows must be finite")
        if np.any(self.true_labels >= self.class_count):
            raise ConfigurationError("class id out of range")
        if not np.all(np.isin(self.split, ("train", "val"))):
            raise ConfigurationError("split tags must be 'train' or 'val'")

    def __len__(self):
        return self.features.shape[0]

    @property
    def train_ids(self):
        return np.flatnonzero(self.split == "train")

    @property
    def val_ids(self):
        return np.flatnonzero(self.split == "val")

    def subset(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return Dataset(self.features[ids], self.true_labels[ids], self.split[ids], self.provenance, self.class_count)

    def train(self):
        return self.subset(self.train_ids)

    def val(self):
        return self.subset(self.val_ids)


def standardize(ds, scale=1.0):
    """Z-score every feature with training-split statistics, then multiply by ``scale``."""
    train = ds.features[ds.train_ids]
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd == 0] = 1.0
    return Dataset((ds.features - mu) / sd * scale, ds.true_labels, ds.split, ds.provenance, ds.class_count)


def _split(rng, n, val_fraction):
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigurationError("val_fraction must lie in [0, 1)")
    split = np.full(n, "train", dtype=object)
    n_val = int(round(val_fraction * n))
    split[rng.permutation(n)[:n_val]] = "val"
    return split.astype(str)


def _balanced_labels(rng, q, n):
    labels = np.arange(n) % q
    return labels[rng.permutation(n)]


def make_blobs(q_classes, n_points, spread, seed, dim=2, val_fraction=0.0, box=10.0):
    """Isotropic Gaussian clusters around seeded centres drawn uniformly from a box."""
    if q_classes < 2:
        raise ConfigurationError("need at least two classes")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-box, box, size=(q_classes, dim))
    labels = _balanced_labels(rng, q_classes, n_points)
    noise = rng.standard_normal((n_points, dim))
    features = centers[labels] + spread * noise
    split = _split(rng, n_points, val_fraction)
    prov = f"blobs:q={q_classes},n={n_points},spread={spread},seed={seed},dim={dim},val={val_fraction}"
    return Dataset(features, labels, split, prov, q_classes)


def make_rings(q_classes, n_points, noise, seed, val_fraction=0.0, gap=1.0):
    """Concentric annuli in the plane; class c sits at radius (c + 1) * gap."""
    if q_classes < 2:
        raise ConfigurationError("need at least two classes")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(rng, q_classes, n_points)
    angle = rng.uniform(0.0, 2.0 * np.pi, n_points)
    radius = (labels + 1) * gap + noise * rng.standard_normal(n_points)
    features = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    split = _split(rng, n_points, val_fraction)
    prov = f"rings:q={q_classes},n={n_points},noise={noise},seed={seed},val={val_fraction}"
    return Dataset(features, labels, split, prov, q_classes)


def _quota(class_sizes, total):
    """Largest-remainder apportionment with a floor of one point per class."""
    class_sizes = np.asarray(class_sizes)
    share = total * class_sizes / class_sizes.sum()
    base = np.floor(share).astype(int)
    rest = total - base.sum()
    order = sorted(range(len(share)), key=lambda c: (-(share[c] - base[c]), c))
    for c in order[:rest]:
        base[c] += 1
    base = np.clip(base, 1, class_sizes)
    # the floor may push the total above target; take the surplus back from the largest quotas
    while base.sum() > max(total, len(class_sizes)):
        c = max(range(len(base)), key=lambda c: (base[c], -c))
        base[c] -= 1
    return base


def mask_labels(ds, p_fraction, seed):
    """Stratified label mask over the training points of ``ds``.

    Returns a LabelState indexed like ``ds.train()``, with ceil(p * N_train)
    labelled points (at least one per class) and the rest unset.
    """
    if not 0.0 < p_fraction <= 1.0:
        raise ConfigurationError("label fraction must lie in (0, 1]")
    train = ds.train()
    y = train.true_labels
    sizes = np.array([(y == c).sum() for c in range(ds.class_count)])
    if np.any(sizes == 0):
        missing = np.flatnonzero(sizes == 0).tolist()
        raise ConfigurationError(f"class(es) {missing} have no training points")
    n = len(train)
    total = min(n, math.ceil(round(p_fraction * n, 9)))
    quota = _quota(sizes, total)
    rng = np.random.default_rng(seed)
    is_labeled = np.zeros(n, dtype=bool)
    for c in range(ds.class_count):
        members = np.flatnonzero(y == c)
        is_labeled[rng.choice(members, size=quota[c], replace=False)] = True
    return LabelState.from_labels(y, is_labeled, ds.class_count)


def keep_unlabeled_fraction(labels, q_fraction, seed):
    """Ids to keep when only a fraction of the unlabelled pool is available."""
    if not 0.0 < q_fraction <= 1.0:
        raise ConfigurationError("unlabelled fraction must lie in (0, 1]")
    unl = labels.unlabeled_ids
    n_keep = min(unl.size, math.ceil(round(q_fraction * unl.size, 9)))
    rng = np.random.default_rng(seed)
    kept = rng.choice(unl, size=n_keep, replace=False) if n_keep < unl.size else unl
    return np.sort(np.concatenate([labels.labeled_ids, kept]))


def save_csv(ds, path):
    f = ds.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(f)] + ["label", "split"])
        for row, lab, sp in zip(ds.features, ds.true_labels, ds.split):
            w.writerow([repr(float(x)) for x in row] + ["" if lab == NO_LABEL else int(lab), sp])


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _read_label_split(rows, where):
    labels = np.array([int(r["label"]) if r["label"].strip() else NO_LABEL for r in rows], dtype=np.int64)
    split = np.array([r.get("split", "train").strip() or "train" for r in rows])
    if labels.size == 0:
        raise ConfigurationError(f"{where}: no rows")
    return labels, split


def load_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        feats = [h for h in header if h.startswith("f") and h[1:].isdigit()]
        if not feats or "label" not in header:
            raise ConfigurationError(f"{path}: header must be f0,...,fK,label,split")
        rows = list(reader)
    features = np.array([[float(r[h]) for h in feats] for r in rows])
    labels, split = _read_label_split(rows, path)
    return Dataset(features, labels, split, f"csv:sha256={_sha256(path)}", int(labels.max()) + 1)


def load_binary(path, labels_path):
    """Feature matrix in the bank binary format plus a ``label,split`` CSV sidecar."""
    features = binio.read_matrix(path)
    with open(labels_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != features.shape[0]:
        raise ConfigurationError(f"{labels_path}: {len(rows)} rows for {features.shape[0]} feature rows")
    labels, split = _read_label_split(rows, labels_path)
    return Dataset(features, labels, split, f"bin:sha256={_sha256(path)}", int(labels.max()) + 1)


def _parse_kv(body):
    out = {}
    for part in filter(None, body.split(",")):
        if "=" not in part:
            raise ConfigurationError(f"dataset option {part!r} is not key=value")
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_KINDS = {
    "blobs": ("q", "n", "spread", "seed", "dim", "val"),
    "rings": ("q", "n", "noise", "seed", "val"),
    "csv": ("path",),
    "bin": ("path", "labels"),
}


def parse_dataset_spec(spec):
    """Build a Dataset from ``kind:key=value,...``.

    Kinds: ``blobs`` (q, n, spread, seed, dim, val), ``rings`` (q, n, noise,
    seed, val), ``csv`` (path) and ``bin`` (path, labels).
    """
    kind, _, body = spec.partition(":")
    if kind not in _KINDS:
        raise ConfigurationError(f"unknown dataset kind {kind!r}")
    kv = _parse_kv(body)
    unknown = sorted(set(kv) - set(_KINDS[kind]))
    if unknown:
        raise ConfigurationError(f"dataset spec {spec!r}: unknown option(s) {unknown}")
    try:
        if kind == "blobs":
            return make_blobs(int(kv.get("q", 4)), int(kv.get("n", 1000)), float(kv.get("spread", 0.5)),
                              int(kv.get("seed", 0)), dim=int(kv.get("dim", 2)),
                              val_fraction=float(kv.get("val", 0.0)))
        if kind == "rings":
            return make_rings(int(kv.get("q", 4)), int(kv.get("n", 1000)), float(kv.get("noise", 0.1)),
                              int(kv.get("seed", 0)), val_fraction=float(kv.get("val", 0.0)))
        if kind == "csv":
            return load_csv(kv["path"])
        return load_binary(kv["path"], kv["labels"])
    except KeyError as exc:
        raise ConfigurationError(f"dataset spec {spec!r} is missing {exc}") from None
    except (ValueError, OSError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"dataset spec {spec!r}: {exc}") from None
