"""Attack/trial generation and dataset assembly."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fdibench.attacks import (AttackSpec, LabeledDataset, assemble_dataset,
                              generate_trial, make_unobservable_attack,
                              separation_stats)
from fdibench.dc_grid import build_dc_model, residual_detect
from fdibench.errors import ContractError, DiagnosticError, GenerationError
from fdibench.matpower import load_builtin


@pytest.fixture(scope="module")
def ieee9():
    return build_dc_model(load_builtin("ieee9"), 0.01)


def test_spec_validation():
    with pytest.raises(ContractError):
        AttackSpec(kind="mystery", kappa=1, seed=0)
    with pytest.raises(ContractError):
        AttackSpec(kind="none", kappa=3, seed=0)
    with pytest.raises(ContractError):
        AttackSpec(kind="observable", kappa=0, seed=0)


def test_none_trial(ieee9):
    tr = generate_trial(ieee9, AttackSpec(kind="none", kappa=0, seed=7))
    assert np.all(tr.a == 0.0)
    assert np.all(tr.labels == -1.0)
    assert np.array_equal(tr.z_tilde, tr.z)
    assert tr.support.size == 0


def test_full_support_observable(ieee9):
    tr = generate_trial(ieee9, AttackSpec(kind="observable", kappa=18, seed=7))
    assert np.all(tr.labels == 1.0)
    assert np.all(tr.a != 0.0)


def test_kappa_exceeding_n_rejected(ieee9):
    with pytest.raises(ContractError):
        generate_trial(ieee9, AttackSpec(kind="observable", kappa=19, seed=0))


def test_unobservable_below_kappa_star_rejected(ieee9):
    with pytest.raises(ContractError):
        generate_trial(ieee9, AttackSpec(kind="unobservable", kappa=9, seed=0))


@settings(max_examples=30, deadline=None)
@given(kappa=st.integers(1, 18), seed=st.integers(0, 2 ** 32 - 1))
def test_observable_trial_properties(ieee9, kappa, seed):
    tr = generate_trial(ieee9, AttackSpec(kind="observable", kappa=kappa, seed=seed))
    # support exactness and label consistency
    assert np.count_nonzero(tr.a) == kappa
    assert np.array_equal(np.flatnonzero(tr.a != 0.0), tr.support)
    assert np.array_equal(tr.labels == 1.0, np.isin(np.arange(18), tr.support))
    assert np.allclose(tr.z_tilde, tr.z + tr.a)
    # magnitude floor on the support
    sigma_z = np.std(tr.z)
    assert np.all(np.abs(tr.a[tr.support]) >= 1e-3 * sigma_z)


@settings(max_examples=15, deadline=None)
@given(kappa=st.integers(10, 18), seed=st.integers(0, 2 ** 32 - 1))
def test_unobservable_trial_properties(ieee9, kappa, seed):
    tr = generate_trial(ieee9, AttackSpec(kind="unobservable", kappa=kappa, seed=seed))
    assert np.count_nonzero(tr.a) == kappa
    # column-space membership
    assert tr.c is not None
    assert np.allclose(tr.a, ieee9.H @ tr.c, atol=1e-9 * max(np.abs(tr.a).max(), 1.0))
    # the detector residual is unchanged by the attack
    clean = residual_detect(ieee9, tr.z).residual_rho
    attacked = residual_detect(ieee9, tr.z_tilde).residual_rho
    assert attacked == pytest.approx(clean, rel=1e-9, abs=1e-12)
    # spread of the support entries matches the clean spread
    assert np.std(tr.a[tr.support]) == pytest.approx(np.std(tr.z), rel=1e-9)


def test_determinism(ieee9):
    spec = AttackSpec(kind="unobservable", kappa=10, seed=123)
    t1 = generate_trial(ieee9, spec)
    t2 = generate_trial(ieee9, spec)
    assert np.array_equal(t1.z, t2.z)
    assert np.array_equal(t1.a, t2.a)
    assert np.array_equal(t1.support, t2.support)


def test_make_unobservable_attack_full_support(ieee9):
    a, c = make_unobservable_attack(ieee9, range(18), seed=3)
    assert np.all(a != 0.0)
    assert np.allclose(a, ieee9.H @ c)


def test_make_unobservable_attack_small_support(ieee9):
    with pytest.raises(ContractError):
        make_unobservable_attack(ieee9, range(9), seed=3)


def test_hopeless_support_reported(ieee9):
    # supports leaving 9 independent off-support rows admit no direction;
    # kappa = 10 supports that keep a full-rank complement are infeasible
    for seed in range(50):
        rng = np.random.default_rng(seed)
        support = np.sort(rng.choice(18, size=10, replace=False))
        outside = np.setdiff1d(np.arange(18), support)
        if np.linalg.matrix_rank(ieee9.H[outside]) == 8:
            with pytest.raises(GenerationError):
                make_unobservable_attack(ieee9, support, seed=0)
            return
    pytest.skip("no rank-8 complement found in 50 draws")


def test_support_frequencies_uniform(ieee9):
    # i.i.d. sampling surface: per-index attack frequency is uniform
    counts = np.zeros(18)
    trials = 10_000
    for seed in range(trials):
        tr = generate_trial(ieee9, AttackSpec(kind="observable", kappa=5, seed=seed))
        counts[tr.support] += 1
    _, p = stats.chisquare(counts)
    assert p > 0.01


def test_assemble_identity_partition(ieee9):
    tr = generate_trial(ieee9, AttackSpec(kind="observable", kappa=5, seed=1))
    ds = assemble_dataset([tr], G=18)
    assert len(ds) == 18
    assert all(len(s) == 1 for s in ds.samples)
    assert np.array_equal(ds.labels, tr.labels)
    assert np.allclose(ds.as_matrix().ravel(), tr.z_tilde)


def test_assemble_counts(ieee9):
    trials = [generate_trial(ieee9, AttackSpec(kind="observable", kappa=3, seed=s))
              for s in range(50)]
    ds = assemble_dataset(trials, G=18)
    assert len(ds) == 900
    assert set(ds.trial_ids.tolist()) == set(range(50))


def test_assemble_single_cluster(ieee9):
    attacked = generate_trial(ieee9, AttackSpec(kind="observable", kappa=2, seed=0))
    clean = generate_trial(ieee9, AttackSpec(kind="none", kappa=0, seed=0))
    ds = assemble_dataset([attacked, clean], G=1)
    assert len(ds) == 2
    assert ds.labels.tolist() == [1.0, -1.0]
    assert len(ds.samples[0]) == 18


def test_assemble_cluster_sizes_near_equal(ieee9):
    tr = generate_trial(ieee9, AttackSpec(kind="none", kappa=0, seed=0))
    for G in (1, 4, 5, 7, 18):
        ds = assemble_dataset([tr], G)
        sizes = [len(s) for s in ds.samples]
        assert sum(sizes) == 18
        assert max(sizes) - min(sizes) <= 1
        assert ds.n_clusters == G


def test_assemble_rejects_empty():
    with pytest.raises(ContractError):
        assemble_dataset([], G=1)


def test_separation_degenerate_clusters():
    u = np.array([1.0, 2.0])
    v = np.array([4.0, 6.0])
    ds = LabeledDataset(
        samples=[u, u, v, v],
        labels=np.array([1.0, 1.0, -1.0, -1.0]),
        n_clusters=1,
        cluster_of_measurement=np.zeros(2, dtype=int),
        trial_ids=np.arange(4),
        cluster_ids=np.zeros(4, dtype=int),
    )
    out = separation_stats(ds)
    assert out["within_attacked"] == 0.0
    assert out["within_secure"] == 0.0
    assert out["across"] == pytest.approx(5.0)


def test_separation_reorder_invariant(ieee9):
    trials = [generate_trial(ieee9, AttackSpec(kind="observable", kappa=2, seed=s))
              for s in range(10)]
    ds = assemble_dataset(trials, G=6)
    base = separation_stats(ds)
    perm = np.random.default_rng(0).permutation(len(ds))
    shuffled = LabeledDataset(
        samples=[ds.samples[i] for i in perm],
        labels=ds.labels[perm],
        n_clusters=ds.n_clusters,
        cluster_of_measurement=ds.cluster_of_measurement,
        trial_ids=ds.trial_ids[perm],
        cluster_ids=ds.cluster_ids[perm],
    )
    again = separation_stats(shuffled)
    for key in base:
        assert again[key] == pytest.approx(base[key], rel=1e-9)


def test_separation_cross_exceeds_secure(ieee9):
    trials = [generate_trial(ieee9, AttackSpec(kind="observable", kappa=12, seed=s))
              for s in range(50)]
    out = separation_stats(assemble_dataset(trials, G=18))
    assert out["across"] > out["within_secure"]


def test_separation_single_class(ieee9):
    tr = generate_trial(ieee9, AttackSpec(kind="none", kappa=0, seed=0))
    with pytest.raises(DiagnosticError):
        separation_stats(assemble_dataset([tr], G=18))
