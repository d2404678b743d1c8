"""Memory bank of running-average unit embeddings."""
import itertools
import logging
import threading
from dataclasses import dataclass

import numpy as np

from . import binio
from .errors import ConfigurationError, ContractViolation

log = logging.getLogger(__name__)

_bank_ids = itertools.count()
_DEGENERATE_NORM = 1e-10


@dataclass(frozen=True)
class BankSnapshot:
    """Immutable copy of the bank at one version.

    ``token`` identifies the (bank, version) pair so that cached softmax
    contexts can detect that they were built from a different snapshot.
    """

    vectors: np.ndarray
    token: tuple

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def d(self):
        return self.vectors.shape[1]

    @classmethod
    def from_array(cls, vectors):
        """Wrap an arbitrary matrix (copied, made read-only) as a snapshot."""
        arr = np.array(vectors, dtype=np.float64, copy=True)
        arr.setflags(write=False)
        return cls(arr, ("array", next(_bank_ids)))


def _normalize_rows(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


class EmbeddingBank:
    """N unit-norm D-vectors updated by a momentum running average.

    One writer, many readers: ``update`` and ``snapshot`` serialize on a
    lock so a snapshot never contains a half-written row.
    """

    def __init__(self, vectors, momentum=0.5):
        vectors = np.array(vectors, copy=True)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 2:
            raise ConfigurationError("bank needs shape (n >= 1, d >= 2)")
        if not 0.0 <= momentum <= 1.0:
            raise ConfigurationError("momentum must lie in [0, 1]")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ConfigurationError("bank rows must be unit norm")
        self._vectors = vectors
        self.momentum = float(momentum)
        self._uid = next(_bank_ids)
        self._version = 0
        self._lock = threading.Lock()

    @classmethod
    def new(cls, n, d, seed, momentum=0.5, dtype=np.float64):
        if n < 1 or d < 2:
            raise ConfigurationError(f"bank needs n >= 1 and d >= 2, got n={n}, d={d}")
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((n, d))
        # a zero draw is measure-zero; redraw rather than divide by zero
        bad = np.linalg.norm(raw, axis=1) < _DEGENERATE_NORM
        while np.any(bad):
            raw[bad] = rng.standard_normal((int(bad.sum()), d))
            bad = np.linalg.norm(raw, axis=1) < _DEGENERATE_NORM
        return cls(_normalize_rows(raw).astype(dtype), momentum=momentum)

    @property
    def count(self):
        return self._vectors.shape[0]

    @property
    def dim(self):
        return self._vectors.shape[1]

    @property
    def version(self):
        return self._version

    def _mix(self, old, fresh):
        if self.momentum == 1.0:
            return old.copy()
        if self.momentum == 0.0:
            return _normalize_rows(fresh)
        mixed = self.momentum * old + (1.0 - self.momentum) * fresh
        norms = np.linalg.norm(mixed, axis=-1, keepdims=True)
        degenerate = norms[..., 0] < _DEGENERATE_NORM
        if np.any(degenerate):
            log.warning("degenerate bank update on %d row(s); using fresh embedding", int(degenerate.sum()))
            norms = np.where(degenerate[..., None], 1.0, norms)
            mixed = np.where(degenerate[..., None], fresh, mixed)
        return mixed / norms

    def update(self, index, fresh):
        if not 0 <= index < self.count:
            raise IndexError(f"bank index {index} out of range [0, {self.count})")
        self.update_many(np.array([index]), np.asarray(fresh)[None, :])

    def update_many(self, indices, fresh):
        """Apply the running-average update to several distinct rows at once."""
        indices = np.asarray(indices, dtype=np.int64)
        fresh = np.asarray(fresh, dtype=np.float64)
        if fresh.shape != (len(indices), self.dim):
            raise ContractViolation(f"fresh rows have shape {fresh.shape}, expected {(len(indices), self.dim)}")
        if np.any(indices < 0) or np.any(indices >= self.count):
            raise IndexError("bank index out of range")
        if len(np.unique(indices)) != len(indices):
            raise ContractViolation("each row may be written at most once per update")
        if np.any(np.abs(np.linalg.norm(fresh, axis=1) - 1.0) > 1e-6):
            raise ContractViolation("fresh embeddings must be unit norm")
        with self._lock:
            old = self._vectors[indices].astype(np.float64)
            self._vectors[indices] = self._mix(old, fresh)
            self._version += 1

    def snapshot(self):
        with self._lock:
            arr = self._vectors.astype(np.float64, copy=True)
            token = (self._uid, self._version)
        arr.setflags(write=False)
        return BankSnapshot(arr, token)

    def save(self, path):
        with self._lock:
            binio.write_matrix(path, self._vectors)

    @classmethod
    def load(cls, path, momentum=0.5):
        return cls(binio.read_matrix(path), momentum=momentum)


def new_bank(n, d, seed, momentum=0.5):
    return EmbeddingBank.new(n, d, seed, momentum=momentum)


def update(bank, index, fresh):
    bank.update(index, fresh)


def snapshot(bank):
    return bank.snapshot()
