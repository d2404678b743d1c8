import numpy as np

from llp.config import ExperimentConfig, TrainSchedule
from llp.experiment import (AblationCell, expand_grid, prepare, run_ablation_grid, run_experiment,
                            run_supervised_baseline, write_ablation_csv)

SMALL = TrainSchedule(hidden=(16,), trunk=16, embed_dim=8, batch_size=32, max_epochs=3, warmup_epochs=1,
                      base_lr=0.01, warmup_lr=1e-3)
CFG = ExperimentConfig(dataset="blobs:q=3,n=240,spread=0.5,seed=1,val=0.25", label_fraction=0.1, schedule=SMALL)


def test_cell_names():
    assert AblationCell().name == "Top10wclw"
    assert AblationCell(k=50, confidence=False, category=True, local=False).name == "Top50wocwc"
    assert len(expand_grid(k=(10, 50), local=(True, False))) == 4


def test_single_cell_grid_matches_training():
    rows = run_ablation_grid(CFG, [AblationCell()])
    direct = run_experiment(CFG).report.records[-1].val_nn_accuracy
    assert rows[0][1] == direct


def test_identical_cells_identical_scores(tmp_path):
    rows = run_ablation_grid(CFG, [AblationCell(), AblationCell()])
    assert rows[0][1] == rows[1][1]
    write_ablation_csv(tmp_path / "a.csv", rows)
    assert (tmp_path / "a.csv").read_text().startswith("model,Top10wclw,Top10wclw\nnn_accuracy,")


def test_unlabelled_fraction_shrinks_bank():
    cfg = ExperimentConfig(dataset=CFG.dataset, label_fraction=0.1, unlabeled_fraction=0.5, schedule=SMALL)
    ds, labels, _, bank = prepare(cfg)
    assert bank.count == len(ds.train_ids) == len(labels)
    assert labels.is_labeled.sum() == 18 and len(labels) == 18 + 81


def test_baseline_uses_labelled_points_only():
    result = run_supervised_baseline(CFG)
    assert result.bank.count == 18 and result.labels.is_labeled.all()
    assert np.isfinite(result.report.records[-1].val_nn_accuracy)
