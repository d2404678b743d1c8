import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import sphere
from llp.bank import BankSnapshot
from llp.errors import ContractViolation, PropagationError
from llp.neighbors import DensityTable, compute_density, knn, top_k_columns


def test_singleton_pool(rng):
    snap = BankSnapshot.from_array(sphere(rng, 5, 3))
    assert knn(snap, snap.vectors[0], 3, [4]).ids.tolist() == [4]


def test_self_is_nearest(rng):
    snap = BankSnapshot.from_array(sphere(rng, 20, 3))
    assert knn(snap, snap.vectors[11], 1, range(20)).ids.tolist() == [11]


def test_matches_exhaustive_sort(rng):
    x = sphere(rng, 50, 4)
    snap = BankSnapshot.from_array(x)
    q = sphere(rng, 1, 4)[0]
    got = knn(snap, q, 10, range(50))
    assert got.ids.tolist() == oracles.knn(x.tolist(), q.tolist(), 10, range(50))
    assert np.all(np.diff(got.scores) <= 0)


def test_ties_go_to_lower_id():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
    snap = BankSnapshot.from_array(x)
    assert knn(snap, np.array([1.0, 0.0]), 2, [3, 2, 0]).ids.tolist() == [0, 2]
    assert top_k_columns(np.array([[1.0, 2.0, 2.0, 2.0]]), 2).tolist() == [[1, 2]]


def test_k_larger_than_pool_returns_pool(rng):
    snap = BankSnapshot.from_array(sphere(rng, 6, 3))
    assert len(knn(snap, snap.vectors[0], 50, [1, 2, 3])) == 3


def test_empty_pool_errors(rng):
    snap = BankSnapshot.from_array(sphere(rng, 3, 3))
    with pytest.raises(PropagationError):
        knn(snap, snap.vectors[0], 1, [])


def test_sharded_equals_serial(rng, monkeypatch):
    import llp.neighbors as nb
    x = sphere(rng, 300, 5)
    snap = BankSnapshot.from_array(x)
    q = x[17]
    whole = knn(snap, q, 25, range(300))
    monkeypatch.setattr(nb, "BLOCK", 16)
    for w in (1, 4):
        part = knn(snap, q, 25, range(300), workers=w)
        assert part.ids.tolist() == whole.ids.tolist()


def test_two_point_density():
    x = np.array([[1.0, 0.0], [0.6, 0.8]])
    snap = BankSnapshot.from_array(x)
    table = compute_density(snap, [0, 1], t=1, tau=0.07)
    p = oracles.probs(x.tolist(), x[0].tolist(), 0.07)
    assert abs(table.rho[0] - p[1]) < 1e-15
    assert abs(table.rho[0] - table.rho[1]) < 1e-15


def test_simplex_densities_equal():
    # regular simplex: 4 vertices in R^3
    x = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float) / np.sqrt(3)
    rho = compute_density(BankSnapshot.from_array(x), range(4), t=2, tau=0.1).rho
    assert np.ptp(rho) < 1e-15


def test_dense_cluster_has_larger_density(rng):
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 0.0, 1.0])
    dense = a + 0.05 * rng.standard_normal((30, 3))
    sparse = b + 0.05 * rng.standard_normal((3, 3))
    x = np.vstack([dense, sparse])
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    snap = BankSnapshot.from_array(x)
    rho = compute_density(snap, range(33), t=25, tau=0.07).rho
    assert rho[:30].min() > rho[30:].max()
    ref = [oracles.density(x.tolist(), i, 25, 0.07) for i in range(33)]
    np.testing.assert_allclose(rho, ref, rtol=1e-9)


def test_density_clamps_t(rng, caplog):
    snap = BankSnapshot.from_array(sphere(rng, 4, 3))
    table = compute_density(snap, [0], t=10, tau=0.07)
    assert "clamping" in caplog.text
    assert abs(table.rho[0] - oracles.density(snap.vectors.tolist(), 0, 3, 0.07)) < 1e-12


def test_density_lookup():
    table = DensityTable(np.array([2, 5]), np.array([0.1, 0.2]))
    assert table.lookup([5, 2]).tolist() == [0.2, 0.1]
    with pytest.raises(ContractViolation):
        table.lookup([3])
    with pytest.raises(ContractViolation):
        DensityTable(np.array([1]), np.array([0.0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(1, 20), st.integers(0, 2**31))
def test_knn_permutation_and_workers(n, k, seed):
    r = np.random.default_rng(seed)
    x = sphere(r, n, 3)
    snap = BankSnapshot.from_array(x)
    pool = r.permutation(n)
    a = knn(snap, x[0], k, pool)
    b = knn(snap, x[0], k, np.sort(pool), workers=3)
    assert a.ids.tolist() == b.ids.tolist()
    assert a.ids.tolist() == oracles.knn(x.tolist(), x[0].tolist(), k, range(n))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 50), st.integers(1, 10), st.integers(0, 2**31))
def test_density_matches_oracle(n, t, seed):
    x = sphere(np.random.default_rng(seed), n, 4)
    ids = list(range(0, n, 2))
    t = min(t, n - 1)
    rho = compute_density(BankSnapshot.from_array(x), ids, t=t, tau=0.1).rho
    ref = [oracles.density(x.tolist(), i, t, 0.1) for i in ids]
    np.testing.assert_allclose(rho, ref, rtol=1e-9)
