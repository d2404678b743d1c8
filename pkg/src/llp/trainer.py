"""The LLP loop: IR warmup, then alternating label propagation and
confidence-weighted representation learning."""
import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError
from .evaluation import evaluate
from .losses import aggregation_loss_batch, classification_loss_batch
from .neighbors import compute_density
from .propagation import NO_LABEL, propagate_all, propagate_points

log = logging.getLogger(__name__)

# named sub-streams of the experiment seed
STREAM_DATA, STREAM_INIT, STREAM_MASK, STREAM_SHUFFLE, STREAM_BANK = range(5)


def substream(seed, stream, *extra):
    return np.random.default_rng([int(seed), stream, *extra])


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    prop_accuracy: float
    mean_confidence: float
    val_nn_accuracy: float
    softmax_accuracy: float
    aggregation: float
    wall_time: float = 0.0


REPORT_FIELDS = ["epoch", "lr", "prop_accuracy", "mean_confidence", "val_nn_accuracy", "softmax_accuracy", "aggregation"]


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    final_prop_accuracy: float = float("nan")
    final_mean_confidence: float = float("nan")
    warmup_ir_loss: list = field(default_factory=list)
    drops: list = field(default_factory=list)  # epochs at which the learning rate was dropped
    stop_reason: str = ""

    def to_csv(self, path):
        """Deterministic per-epoch report; wall times go to ``timing_csv``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_FIELDS)
            for r in self.records:
                row = asdict(r)
                w.writerow([r.epoch] + [repr(float(row[k])) for k in REPORT_FIELDS[1:]])

    def timing_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "wall_time"])
            for r in self.records:
                w.writerow([r.epoch, f"{r.wall_time:.6f}"])

    def summary(self):
        last = self.records[-1] if self.records else None
        return {
            "epochs": len(self.records),
            "final_prop_accuracy": self.final_prop_accuracy,
            "final_mean_confidence": self.final_mean_confidence,
            "final_val_nn_accuracy": last.val_nn_accuracy if last else None,
            "final_softmax_accuracy": last.softmax_accuracy if last else None,
            "final_aggregation": last.aggregation if last else None,
            "epoch1_prop_accuracy": self.records[0].prop_accuracy if self.records else None,
            "epoch1_aggregation": self.records[0].aggregation if self.records else None,
            "lr_drops": self.drops,
            "stop_reason": self.stop_reason,
        }


class SgdMomentum:
    """Heavy-ball SGD; weight decay is the gradient of lambda * ||theta||^2, applied decoupled."""

    def __init__(self, size, momentum, weight_decay):
        self.velocity = np.zeros(size)
        self.momentum = momentum
        self.weight_decay = weight_decay

    def step(self, net, grad, lr):
        self.velocity *= self.momentum
        self.velocity += grad
        new = net.params - lr * self.velocity - lr * 2.0 * self.weight_decay * net.params
        net.set_params(new)


def _batches(rng, n, batch_size, steps=None):
    """Mini-batches without replacement; with ``steps`` set, keep cycling fresh
    permutations until that many batches are produced."""
    batch_size = min(batch_size, n)
    out = []
    while True:
        order = rng.permutation(n)
        out.extend(order[s:s + batch_size] for s in range(0, n, batch_size))
        if steps is None or len(out) >= steps:
            return out if steps is None else out[:steps]


def _accuracy(pred, truth, mask):
    mask = mask & (truth != NO_LABEL)
    if not mask.any():
        return float("nan")
    return float(np.mean(pred[mask] == truth[mask]))


def warmup(net, bank, dataset, schedule, tau=0.07, optimizer=None):
    """Unsupervised instance-recognition pre-training over every bank point.

    The bank holds ``dataset``'s training split in order. Returns the mean IR
    loss per warmup epoch.
    """
    feats = dataset.train().features
    if bank.count != feats.shape[0]:
        raise ConfigurationError("bank and dataset sizes differ")
    opt = optimizer or SgdMomentum(net.params.size, schedule.sgd_momentum, schedule.weight_decay)
    lr = schedule.base_lr if schedule.warmup_lr is None else schedule.warmup_lr
    losses = []
    for epoch in range(schedule.warmup_epochs):
        rng = substream(schedule.seed, STREAM_SHUFFLE, 0, epoch)
        total = 0.0
        for ids in _batches(rng, feats.shape[0], schedule.batch_size):
            emb, logits, tape = net.forward(feats[ids])
            snap = bank.snapshot()
            mask = np.zeros((ids.size, bank.count), dtype=bool)
            mask[np.arange(ids.size), ids] = True
            loss, d_emb = aggregation_loss_batch(snap.vectors, emb, mask, tau)
            grad = net.backward(tape, d_emb / ids.size, np.zeros_like(logits))
            opt.step(net, grad, lr)
            bank.update_many(ids, emb)
            total += float(loss.sum())
        losses.append(total / feats.shape[0])
    return losses


def mean_ir_loss(net, bank, dataset, tau=0.07):
    emb, _, _ = net.forward(dataset.train().features)
    mask = np.eye(bank.count, dtype=bool)
    loss, _ = aggregation_loss_batch(bank.snapshot().vectors, emb, mask, tau)
    return float(loss.mean())


class LLPTrainer:
    """Holds the state of one training run.

    ``dataset`` supplies the bank points (its training split, in order) and
    the validation points; ``labels`` is a LabelState over the bank points.
    """

    def __init__(self, net, bank, dataset, labels, schedule, cfg, on_drop=None, steps_per_epoch=None):
        self.net, self.bank, self.schedule, self.cfg = net, bank, schedule, cfg
        self.steps_per_epoch = steps_per_epoch
        self.train_ds, self.val_ds = dataset.train(), dataset.val()
        if bank.count != len(self.train_ds) or len(labels) != len(self.train_ds):
            raise ConfigurationError("bank, labels and training split must have the same length")
        present = set(np.unique(labels.label[labels.is_labeled]).tolist())
        absent = sorted(set(range(labels.class_count)) - present)
        if absent:
            raise ConfigurationError(f"class(es) {absent} have no labelled point")
        self.labels = labels.copy()
        self.opt = SgdMomentum(net.params.size, schedule.sgd_momentum, schedule.weight_decay)
        self.on_drop = on_drop
        self.density = None
        self.state = None

    def propagate(self, epoch):
        snap = self.bank.snapshot()
        if self.cfg.local_weighting:
            self.density = compute_density(
                snap, self.labels.labeled_ids, self.cfg.t, self.cfg.tau, workers=self.cfg.workers,
                pool=self.cfg.density_pool, exclude_self=self.cfg.density_exclude_self, epoch=epoch)
        self.state = propagate_all(snap, self.labels, self.density, self.cfg)
        return self.state

    def _weights(self, state, ids):
        conf = state.confidence[ids].copy()
        unl = ~state.is_labeled[ids]
        if not self.cfg.use_confidence:
            conf[:] = 1.0
        if self.schedule.confidence_floor > 0:
            conf[unl & (state.confidence[ids] < self.schedule.confidence_floor)] = 0.0
        return conf

    def _batch_step(self, ids, lr):
        feats = self.train_ds.features
        state = self.state
        snap = self.bank.snapshot()
        targets = state.label.copy()
        if self.cfg.cadence == "batch":
            unl = ids[~state.is_labeled[ids]]
            if unl.size:
                winner, conf = propagate_points(snap, self.labels, self.density, self.cfg, unl)
                targets[unl] = winner
                state = state.copy()
                state.label[unl], state.confidence[unl] = winner, conf
        y = targets[ids]
        c = self._weights(state, ids)
        emb, logits, tape = self.net.forward(feats[ids])
        mask = targets[None, :] == y[:, None]
        _, d_agg = aggregation_loss_batch(snap.vectors, emb, mask, self.cfg.tau)
        d_emb = (c * self.schedule.agg_weight)[:, None] * d_agg
        if self.schedule.category_loss:
            _, d_cls = classification_loss_batch(logits, y)
            d_log = c[:, None] * d_cls
        else:
            d_log = np.zeros_like(logits)
        grad = self.net.backward(tape, d_emb / ids.size, d_log / ids.size)
        self.opt.step(self.net, grad, lr)
        self.bank.update_many(ids, emb)

    def _metrics(self, state):
        unl = ~state.is_labeled
        truth = self.train_ds.true_labels
        prop_acc = _accuracy(state.label, truth, unl)
        mean_conf = float(state.confidence[unl].mean()) if unl.any() else 1.0
        return prop_acc, mean_conf

    def evaluate(self):
        snap = self.bank.snapshot()
        truth = self.train_ds.true_labels
        agg_labels = np.where(truth != NO_LABEL, truth, self.state.label)
        return evaluate(self.net, snap, self.labels, agg_labels, self.val_ds.features, self.val_ds.true_labels)

    def run(self):
        sched, report = self.schedule, TrainReport()
        lr, best, stale = sched.base_lr, -np.inf, 0
        self.propagate(epoch=0)
        for epoch in range(1, sched.max_epochs + 1):
            t0 = time.perf_counter()
            prop_acc, mean_conf = self._metrics(self.state)
            rng = substream(sched.seed, STREAM_SHUFFLE, 1, epoch)
            for ids in _batches(rng, len(self.train_ds), sched.batch_size, self.steps_per_epoch):
                self._batch_step(ids, lr)
            self.propagate(epoch=epoch)
            ev = self.evaluate()
            report.records.append(EpochRecord(epoch, lr, prop_acc, mean_conf, ev.nn_accuracy,
                                              ev.softmax_accuracy, ev.mean_agg, time.perf_counter() - t0))
            monitor = ev.nn_accuracy if np.isfinite(ev.nn_accuracy) else self._metrics(self.state)[0]
            if not np.isfinite(monitor):
                monitor = self._metrics(self.state)[1]
            if monitor > best:
                best, stale = monitor, 0
            else:
                stale += 1
            if stale >= sched.patience:
                if len(report.drops) >= sched.max_drops:
                    report.stop_reason = "patience expired after final drop"
                    break
                lr /= sched.lr_drop_factor
                report.drops.append(epoch)
                stale = 0
                if self.on_drop:
                    self.on_drop(len(report.drops), self.net, self.bank)
        else:
            report.stop_reason = "max_epochs"
        report.final_prop_accuracy, report.final_mean_confidence = self._metrics(self.state)
        return report


def train(net, bank, dataset, labels, schedule, cfg, on_drop=None):
    """Alternate propagation and representation learning; returns a TrainReport."""
    return LLPTrainer(net, bank, dataset, labels, schedule, cfg, on_drop=on_drop).run()
