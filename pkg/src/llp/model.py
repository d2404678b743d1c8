"""Small ReLU MLP with an L2-normalized embedding head and a classification head.

Forward and backward passes are written out by hand; parameters live in a
single flat vector so optimizers and finite-difference checks can treat
them uniformly.
"""
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from . import binio
from .errors import ConfigurationError, ContractViolation

log = logging.getLogger(__name__)

_net_ids = itertools.count()
DEGENERATE_NORM = 1e-12


def param_count(layer_sizes, embed_dim, n_classes):
    trunk = sum((a + 1) * b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))
    width = layer_sizes[-1]
    return trunk + (width + 1) * embed_dim + (width + 1) * n_classes


@dataclass
class Tape:
    net_id: int
    version: int
    activations: list  # input followed by each trunk layer's post-ReLU output
    pre: list  # trunk pre-activations
    raw_embedding: np.ndarray
    norms: np.ndarray
    degenerate: np.ndarray
    embedding: np.ndarray


class MlpNetwork:
    def __init__(self, layer_sizes, embed_dim, n_classes, params=None, seed=0):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1 or embed_dim < 2 or n_classes < 1:
            raise ConfigurationError(f"bad architecture {layer_sizes} -> D={embed_dim}, Q={n_classes}")
        self.layer_sizes = layer_sizes
        self.embed_dim = int(embed_dim)
        self.n_classes = int(n_classes)
        self.uid = next(_net_ids)
        self.version = 0
        self.params = np.zeros(param_count(layer_sizes, embed_dim, n_classes))
        self._shapes = []
        for a, b in zip(layer_sizes[:-1], layer_sizes[1:]):
            self._shapes.append((a, b))
        self._shapes.append((layer_sizes[-1], self.embed_dim))
        self._shapes.append((layer_sizes[-1], self.n_classes))
        if params is None:
            self._init(seed)
        else:
            self.set_params(params)

    def _init(self, seed):
        rng = np.random.default_rng(seed)
        n_trunk = len(self.layer_sizes) - 1
        for idx, (w, b) in enumerate(self.layers()):
            fan_in = w.shape[0]
            limit = np.sqrt(6.0 / fan_in) if idx < n_trunk else np.sqrt(1.0 / fan_in)
            w[...] = rng.uniform(-limit, limit, size=w.shape)
            # zero biases would make the normalized embedding blind to input scale
            bound = 1.0 / np.sqrt(fan_in)
            b[...] = rng.uniform(-bound, bound, size=b.shape)

    def layers(self):
        """(W, b) views into ``params``: trunk layers, then embedding head, then class head."""
        out, off = [], 0
        for a, b in self._shapes:
            w = self.params[off:off + a * b].reshape(a, b)
            off += a * b
            out.append((w, self.params[off:off + b]))
            off += b
        return out

    @property
    def all_sizes(self):
        return self.layer_sizes + [self.embed_dim, self.n_classes]

    def set_params(self, params):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != self.params.shape:
            raise ConfigurationError(f"expected {self.params.size} parameters, got {params.size}")
        self.params[...] = params
        self.version += 1

    def forward(self, x):
        """Returns (embedding, logits, tape); accepts one input or a batch."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.layer_sizes[0]:
            raise ConfigurationError(f"input width {x.shape[1]} != {self.layer_sizes[0]}")
        layers = self.layers()
        acts, pres = [x], []
        h = x
        for w, b in layers[:-2]:
            z = h @ w + b
            pres.append(z)
            h = np.maximum(z, 0.0)
            acts.append(h)
        (we, be), (wc, bc) = layers[-2], layers[-1]
        u = h @ we + be
        logits = h @ wc + bc
        norms = np.linalg.norm(u, axis=1)
        degenerate = norms < DEGENERATE_NORM
        safe = np.where(degenerate, 1.0, norms)
        emb = u / safe[:, None]
        if np.any(degenerate):
            log.warning("embedding norm below %.0e for %d input(s); using e1", DEGENERATE_NORM, int(degenerate.sum()))
            emb[degenerate] = 0.0
            emb[degenerate, 0] = 1.0
        tape = Tape(self.uid, self.version, acts, pres, u, norms, degenerate, emb)
        if single:
            return emb[0], logits[0], tape
        return emb, logits, tape

    def backward(self, tape, d_embedding, d_logits):
        """Gradient of sum_b (d_emb_b . emb_b + d_logits_b . logits_b) w.r.t. the flat parameters."""
        if tape.net_id != self.uid or tape.version != self.version:
            raise ContractViolation("tape was recorded by a different network or parameter version")
        emb = tape.embedding
        d_emb = np.atleast_2d(d_embedding).astype(np.float64)
        d_log = np.atleast_2d(d_logits).astype(np.float64)
        if d_emb.shape != emb.shape or d_log.shape != (emb.shape[0], self.n_classes):
            raise ContractViolation("cotangent shapes do not match the tape")
        # normalization Jacobian (I - e e^T) / ||u||; degenerate rows pass no gradient
        radial = np.sum(emb * d_emb, axis=1, keepdims=True)
        safe = np.where(tape.degenerate, 1.0, tape.norms)[:, None]
        du = (d_emb - emb * radial) / safe
        du[tape.degenerate] = 0.0

        grads = np.zeros_like(self.params)
        views = []
        off = 0
        for a, b in self._shapes:
            views.append((grads[off:off + a * b].reshape(a, b), grads[off + a * b:off + a * b + b]))
            off += a * b + b
        layers = self.layers()
        h = tape.activations[-1]
        (we, _), (wc, _) = layers[-2], layers[-1]
        views[-2][0][...] = h.T @ du
        views[-2][1][...] = du.sum(axis=0)
        views[-1][0][...] = h.T @ d_log
        views[-1][1][...] = d_log.sum(axis=0)
        dh = du @ we.T + d_log @ wc.T
        for idx in range(len(layers) - 3, -1, -1):
            dz = dh * (tape.pre[idx] > 0)
            views[idx][0][...] = tape.activations[idx].T @ dz
            views[idx][1][...] = dz.sum(axis=0)
            if idx:
                dh = dz @ layers[idx][0].T
        return grads

    def save(self, path):
        binio.write_checkpoint(path, self.all_sizes, self.params)

    @classmethod
    def load(cls, path):
        sizes, params = binio.read_checkpoint(path)
        if len(sizes) < 4:
            raise ConfigurationError(f"{path}: checkpoint layer list too short")
        return cls(sizes[:-2], sizes[-2], sizes[-1], params=params)


def forward(net, x):
    return net.forward(x)


def backward(net, tape, d_embedding, d_logits):
    return net.backward(tape, d_embedding, d_logits)
