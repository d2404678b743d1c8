"""End-to-end runs built from an ExperimentConfig, plus the ablation grid."""
import csv
import dataclasses
import itertools
import logging
import os

import numpy as np

from .bank import EmbeddingBank
from .config import ExperimentConfig, TrainSchedule
from .data import keep_unlabeled_fraction, mask_labels, parse_dataset_spec, standardize
from .model import MlpNetwork
from .propagation import LabelState
from .trainer import STREAM_BANK, STREAM_INIT, STREAM_MASK, LLPTrainer, mean_ir_loss, warmup

log = logging.getLogger(__name__)


@dataclasses.dataclass
class RunResult:
    report: object
    net: MlpNetwork
    bank: EmbeddingBank
    labels: LabelState
    dataset: object
    trainer: LLPTrainer
    ir_before: float = float("nan")
    ir_after: float = float("nan")


DESK_DATASET = "rings:q=4,n=5000,noise=0.1,seed=1,val=0.2"


def desk_config(seed=0, max_epochs=40):
    """The 4-ring, 2%-label task used for the trend checks."""
    sched = TrainSchedule(warmup_lr=3e-4, base_lr=1e-2, max_epochs=max_epochs, patience=10)
    return ExperimentConfig(dataset=DESK_DATASET, label_fraction=0.02, input_scale=0.5, schedule=sched, seed=seed)


def _seed(seed, stream):
    return [int(seed), stream]


def prepare(config, dataset=None):
    """Dataset (training split restricted to the kept points), labels, network and bank."""
    config.validate()
    ds = dataset if dataset is not None else parse_dataset_spec(config.dataset)
    if config.input_scale is not None:
        ds = standardize(ds, config.input_scale)
    labels = mask_labels(ds, config.label_fraction, _seed(config.seed, STREAM_MASK))
    if config.unlabeled_fraction < 1.0:
        keep = keep_unlabeled_fraction(labels, config.unlabeled_fraction, _seed(config.seed, STREAM_MASK) + [1])
        ds = ds.subset(np.concatenate([ds.train_ids[keep], ds.val_ids]))
        labels = LabelState(labels.label[keep], labels.is_labeled[keep], labels.confidence[keep], labels.class_count)
    sched = config.schedule
    net = MlpNetwork([ds.features.shape[1], *sched.hidden, sched.trunk], sched.embed_dim, ds.class_count,
                     seed=_seed(config.seed, STREAM_INIT))
    bank = EmbeddingBank.new(len(ds.train_ids), sched.embed_dim, _seed(config.seed, STREAM_BANK),
                             momentum=sched.bank_momentum)
    return ds, labels, net, bank


def run_experiment(config, dataset=None, on_drop=None):
    """Warmup then LLP training; the config's master seed overrides ``schedule.seed``."""
    config = dataclasses.replace(config, schedule=dataclasses.replace(config.schedule, seed=config.seed))
    config.propagation.workers = config.workers
    ds, labels, net, bank = prepare(config, dataset)
    ir_before = mean_ir_loss(net, bank, ds, config.propagation.tau)
    warmup(net, bank, ds, config.schedule, tau=config.propagation.tau)
    ir_after = mean_ir_loss(net, bank, ds, config.propagation.tau)
    trainer = LLPTrainer(net, bank, ds, labels, config.schedule, config.propagation, on_drop=on_drop)
    report = trainer.run()
    return RunResult(report, net, bank, labels, ds, trainer, ir_before, ir_after)


def run_supervised_baseline(config, dataset=None):
    """Same network and loss trained on the labelled points alone (no warmup, no unlabelled data).

    Each epoch takes as many SGD steps as an LLP epoch over the full training
    split would, so both runs see the same optimization budget.
    """
    config = dataclasses.replace(config, schedule=dataclasses.replace(config.schedule, seed=config.seed,
                                                                      warmup_epochs=0))
    ds, labels, _, _ = prepare(config, dataset)
    keep = labels.labeled_ids
    sub = ds.subset(np.concatenate([ds.train_ids[keep], ds.val_ids]))
    sub_labels = LabelState.from_labels(labels.label[keep], np.ones(keep.size, bool), labels.class_count)
    sched = config.schedule
    net = MlpNetwork([ds.features.shape[1], *sched.hidden, sched.trunk], sched.embed_dim, ds.class_count,
                     seed=_seed(config.seed, STREAM_INIT))
    bank = EmbeddingBank.new(keep.size, sched.embed_dim, _seed(config.seed, STREAM_BANK), momentum=sched.bank_momentum)
    steps = -(-len(ds.train_ids) // sched.batch_size)
    trainer = LLPTrainer(net, bank, sub, sub_labels, sched, config.propagation, steps_per_epoch=steps)
    report = trainer.run()
    return RunResult(report, net, bank, sub_labels, sub, trainer)


@dataclasses.dataclass(frozen=True)
class AblationCell:
    k: int = 10
    confidence: bool = True
    category: bool = True
    local: bool = True

    @property
    def name(self):
        return f"Top{self.k}" + ("" if self.confidence else "woc") + ("wc" if self.category else "") + \
            ("lw" if self.local else "")

    def apply(self, config):
        prop = dataclasses.replace(config.propagation, k=self.k, use_confidence=self.confidence,
                                   local_weighting=self.local)
        sched = dataclasses.replace(config.schedule, category_loss=self.category)
        return dataclasses.replace(config, propagation=prop, schedule=sched)


def expand_grid(k=(10,), confidence=(True,), category=(True,), local=(True,)):
    return [AblationCell(*c) for c in itertools.product(k, confidence, category, local)]


def run_ablation_grid(config, grid, dataset=None):
    """One training run per cell, all sharing the config's seed.

    Returns a list of (cell, final validation NN accuracy).
    """
    rows = []
    for cell in grid:
        result = run_experiment(cell.apply(config), dataset=dataset)
        rows.append((cell, result.report.records[-1].val_nn_accuracy if result.report.records else float("nan")))
    return rows


def write_ablation_csv(path, rows):
    """Table-shaped CSV: one column per cell, one row of NN accuracies."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model"] + [cell.name for cell, _ in rows])
        w.writerow(["nn_accuracy"] + [repr(float(acc)) for _, acc in rows])


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
