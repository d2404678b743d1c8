import dataclasses

import numpy as np
import pytest

from llp.bank import EmbeddingBank
from llp.config import ExperimentConfig, PropagationConfig, TrainSchedule
from llp.data import make_blobs, mask_labels, standardize
from llp.errors import ConfigurationError
from llp.experiment import prepare, run_experiment
from llp.model import MlpNetwork
from llp.propagation import LabelState
from llp.trainer import LLPTrainer, SgdMomentum, mean_ir_loss, substream, train, warmup

SMALL = TrainSchedule(hidden=(16,), trunk=16, embed_dim=8, batch_size=32, max_epochs=4, warmup_epochs=1,
                      base_lr=0.01, warmup_lr=1e-3)


def small_setup(n=240, q=3, p=0.1, seed=0, val=0.25):
    ds = standardize(make_blobs(q, n, 0.5, seed=1, val_fraction=val), 0.5)
    labels = mask_labels(ds, p, seed)
    net = MlpNetwork([2, *SMALL.hidden, SMALL.trunk], SMALL.embed_dim, q, seed=[seed, 1])
    bank = EmbeddingBank.new(len(ds.train_ids), SMALL.embed_dim, [seed, 4])
    return ds, labels, net, bank


def test_warmup_zero_epochs_leaves_parameters():
    ds, _, net, bank = small_setup()
    before = net.params.copy()
    warmup(net, bank, ds, dataclasses.replace(SMALL, warmup_epochs=0))
    assert np.array_equal(net.params, before)


def test_warmup_is_deterministic():
    outs = []
    for _ in range(2):
        ds, _, net, bank = small_setup()
        warmup(net, bank, ds, SMALL)
        outs.append((net.params.tobytes(), bank.snapshot().vectors.tobytes()))
    assert outs[0] == outs[1]


def test_warmup_lowers_instance_loss():
    ds = standardize(make_blobs(3, 500, 0.5, seed=2), 0.5)
    sched = dataclasses.replace(SMALL, warmup_epochs=5)
    net = MlpNetwork([2, 16, 16], 8, 3, seed=0)
    emb, _, _ = net.forward(ds.features)
    bank = EmbeddingBank(emb, momentum=0.5)
    before = mean_ir_loss(net, bank, ds)
    warmup(net, bank, ds, sched)
    assert mean_ir_loss(net, bank, ds) < before


def test_sgd_step_decays_weights():
    net = MlpNetwork([2, 4], 2, 2, seed=0)
    theta = net.params.copy()
    opt = SgdMomentum(theta.size, momentum=0.9, weight_decay=0.5)
    opt.step(net, np.zeros_like(theta), lr=0.1)
    np.testing.assert_allclose(net.params, theta * (1 - 0.1 * 2 * 0.5))


def test_training_invariants():
    ds, labels, net, bank = small_setup()
    trainer = LLPTrainer(net, bank, ds, labels, dataclasses.replace(SMALL, max_epochs=10), PropagationConfig())
    before = labels.copy()
    report = trainer.run()
    assert len(report.records) >= 1
    st = trainer.state
    known = before.is_labeled
    assert np.array_equal(st.label[known], before.label[known]) and np.all(st.confidence[known] == 1.0)
    assert np.all((st.confidence[~known] > 0) & (st.confidence[~known] <= 1))
    assert np.all(np.abs(np.linalg.norm(bank.snapshot().vectors, axis=1) - 1) < 1e-6)
    assert trainer.labels.equals(before)


def test_learning_rate_never_rises():
    ds, labels, net, bank = small_setup()
    sched = dataclasses.replace(SMALL, max_epochs=12, patience=1, max_drops=2)
    report = train(net, bank, ds, labels, sched, PropagationConfig())
    lrs = [r.lr for r in report.records]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert len({lr for lr in lrs if lr < sched.base_lr}) <= sched.max_drops


def test_reports_identical_for_same_seed(tmp_path):
    cfg = ExperimentConfig(dataset="blobs:q=3,n=240,spread=0.5,seed=1,val=0.25", label_fraction=0.1, schedule=SMALL)
    for name in ("a", "b"):
        run_experiment(cfg).report.to_csv(tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_fully_labelled_training_keeps_labels():
    ds, _, net, bank = small_setup()
    labels = mask_labels(ds, 1.0, 0)
    trainer = LLPTrainer(net, bank, ds, labels, dataclasses.replace(SMALL, max_epochs=2), PropagationConfig())
    trainer.run()
    assert trainer.state.equals(labels)


def test_batch_cadence_runs():
    ds, labels, net, bank = small_setup()
    report = train(net, bank, ds, labels, dataclasses.replace(SMALL, max_epochs=2), PropagationConfig(cadence="batch"))
    assert len(report.records) == 2


def test_missing_class_rejected():
    ds, labels, net, bank = small_setup()
    lab = labels.copy()
    lab.is_labeled[lab.label == 0] = False
    lab.label[lab.label == 0] = -1
    lab.confidence[lab.label == -1] = 0.0
    with pytest.raises(ConfigurationError):
        LLPTrainer(net, bank, ds, lab, SMALL, PropagationConfig())


def test_substreams_are_independent():
    a = substream(0, 1).random(4)
    b = substream(0, 2).random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, substream(0, 1).random(4))


@pytest.mark.slow
def test_four_blob_trends():
    cfg = ExperimentConfig(dataset="blobs:q=4,n=5000,spread=0.5,seed=1,val=0.2", label_fraction=0.02,
                           schedule=TrainSchedule(warmup_lr=3e-4, base_lr=1e-2, max_epochs=15))
    report = run_experiment(cfg).report
    assert report.records[-1].prop_accuracy >= report.records[0].prop_accuracy
    assert report.records[-1].aggregation > report.records[0].aggregation
