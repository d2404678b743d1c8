import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llp.data import (Dataset, keep_unlabeled_fraction, load_binary, load_csv, make_blobs, make_rings,
                      mask_labels, parse_dataset_spec, save_csv, standardize)
from llp import binio
from llp.errors import ConfigurationError


def test_zero_spread_blobs_sit_on_centres():
    ds = make_blobs(3, 60, 0.0, seed=2)
    for c in range(3):
        pts = ds.features[ds.true_labels == c]
        assert np.ptp(pts, axis=0).max() == 0.0


def test_generators_are_deterministic():
    a, b = make_blobs(4, 100, 0.5, 3), make_blobs(4, 100, 0.5, 3)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.true_labels, b.true_labels)
    a, b = make_rings(4, 100, 0.1, 3, val_fraction=0.2), make_rings(4, 100, 0.1, 3, val_fraction=0.2)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.split, b.split)


def one_nn_accuracy(train_x, train_y, test_x, test_y):
    d = ((test_x[:, None, :] - train_x[None, :, :]) ** 2).sum(-1)
    return float(np.mean(train_y[np.argmin(d, axis=1)] == test_y))


def test_blob_separability_certificate():
    ds = make_blobs(4, 5000, 0.5, seed=1, val_fraction=0.2)
    tr, va = ds.train(), ds.val()
    assert one_nn_accuracy(tr.features, tr.true_labels, va.features, va.true_labels) > 0.99


def test_noise_free_rings_lie_on_their_radius():
    ds = make_rings(4, 400, 0.0, seed=0)
    r = np.linalg.norm(ds.features, axis=1)
    np.testing.assert_allclose(r, ds.true_labels + 1.0, atol=1e-12)


def test_rings_defeat_linear_but_not_radius_knn():
    ds = make_rings(4, 2000, 0.05, seed=4, val_fraction=0.3)
    tr, va = ds.train(), ds.val()
    design = lambda x: np.column_stack([x, np.ones(len(x))])
    targets = np.eye(4)[tr.true_labels]
    w, *_ = np.linalg.lstsq(design(tr.features), targets, rcond=None)
    linear = np.mean(np.argmax(design(va.features) @ w, axis=1) == va.true_labels)
    assert linear < 0.4
    radius = lambda x: np.linalg.norm(x, axis=1, keepdims=True)
    assert one_nn_accuracy(radius(tr.features), tr.true_labels, radius(va.features), va.true_labels) == 1.0


def test_full_label_fraction_labels_everything():
    labels = mask_labels(make_blobs(3, 90, 0.5, 0), 1.0, seed=0)
    assert labels.is_labeled.all()


def test_one_per_class_floor():
    labels = mask_labels(make_blobs(4, 400, 0.5, 0), 0.001, seed=0)
    counts = np.bincount(labels.label[labels.is_labeled], minlength=4)
    assert counts.tolist() == [1, 1, 1, 1]


def test_two_percent_of_five_thousand():
    labels = mask_labels(make_blobs(4, 5000, 0.5, 1), 0.02, seed=0)
    assert labels.is_labeled.sum() == 100
    assert np.bincount(labels.label[labels.is_labeled], minlength=4).tolist() == [25] * 4


def test_mask_is_over_training_split():
    ds = make_rings(4, 1000, 0.1, 1, val_fraction=0.2)
    labels = mask_labels(ds, 0.02, seed=1)
    assert len(labels) == 800 and labels.is_labeled.sum() == 16
    assert np.array_equal(labels.label[labels.is_labeled], ds.train().true_labels[labels.is_labeled])
    assert np.all(labels.label[~labels.is_labeled] == -1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.001, 1.0), st.integers(0, 1000))
def test_mask_stratified_and_seeded(p, seed):
    ds = make_blobs(3, 300, 0.5, 0)
    a, b = mask_labels(ds, p, seed), mask_labels(ds, p, seed)
    assert np.array_equal(a.is_labeled, b.is_labeled)
    counts = np.bincount(a.label[a.is_labeled], minlength=3)
    assert counts.min() >= 1 and counts.max() - counts.min() <= 1


def test_unlabelled_subsample_keeps_labels():
    labels = mask_labels(make_blobs(2, 200, 0.5, 0), 0.1, seed=0)
    keep = keep_unlabeled_fraction(labels, 0.3, seed=1)
    assert set(labels.labeled_ids) <= set(keep)
    assert len(keep) == 20 + 54


def test_standardize_uses_training_statistics():
    ds = make_rings(4, 500, 0.1, 0, val_fraction=0.2)
    z = standardize(ds, 0.5)
    tr = z.features[z.train_ids]
    np.testing.assert_allclose(tr.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(tr.std(axis=0), 0.5, atol=1e-12)


def test_csv_and_binary_roundtrip(tmp_path):
    ds = make_blobs(3, 30, 0.5, 0, dim=3, val_fraction=0.2)
    save_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    assert np.array_equal(back.features, ds.features) and np.array_equal(back.split, ds.split)
    binio.write_matrix(tmp_path / "f.bin", ds.features)
    with open(tmp_path / "l.csv", "w") as fh:
        fh.write("label,split\n" + "".join(f"{y},{s}\n" for y, s in zip(ds.true_labels, ds.split)))
    back = parse_dataset_spec(f"bin:path={tmp_path / 'f.bin'},labels={tmp_path / 'l.csv'}")
    assert np.array_equal(back.features, ds.features) and back.provenance.startswith("bin:sha256=")


def test_spec_parsing():
    ds = parse_dataset_spec("rings:q=3,n=90,noise=0.1,seed=2,val=0.1")
    assert ds.class_count == 3 and len(ds) == 90 and len(ds.val_ids) == 9
    for bad in ("moons:n=5", "blobs:q=4,colour=red", "blobs:q", "csv:"):
        with pytest.raises(ConfigurationError):
            parse_dataset_spec(bad)


def test_dataset_rejects_bad_rows():
    with pytest.raises(ConfigurationError):
        Dataset(np.array([[np.nan, 0.0]]), np.array([0]), np.array(["train"]), "x", 1)
    with pytest.raises(ConfigurationError):
        Dataset(np.zeros((1, 2)), np.array([3]), np.array(["train"]), "x", 2)
