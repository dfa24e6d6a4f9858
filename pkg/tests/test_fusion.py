"""Fusion learners: AdaBoost over decision stumps and two-kernel MKL."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdibench import kernels
from fdibench.attacks import LabeledDataset
from fdibench.batch import KernelDescriptor, sign_pm, train_svm
from fdibench.errors import ContractError
from fdibench.fusion import (AdaboostModel, StumpModel, predict_adaboost,
                             project_simplex, train_adaboost, train_mkl)


def make_ds(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and len(y) > 1:
        X = X.T
    y = np.asarray(y, dtype=float)
    m = len(y)
    return LabeledDataset(
        samples=[X[i] for i in range(m)],
        labels=y,
        n_clusters=1,
        cluster_of_measurement=np.zeros(X.shape[1], dtype=int),
        trial_ids=np.arange(m),
        cluster_ids=np.zeros(m, dtype=int),
    )


def random_ds(rng, m, d=2):
    X = rng.normal(size=(m, d))
    y = sign_pm(rng.normal(size=m))
    if len(set(y.tolist())) < 2:
        y[0] = -y[0]
    return make_ds(X, y)


def training_error(model, X, y):
    return float((model.predict(X) != y).mean())


# ------------------------------------------------------------- stumps


def test_stump_predict_sign_zero_positive():
    stump = StumpModel(feature_index=0, threshold=1.0, polarity=1.0)
    assert stump.predict([[2.0]])[0] == 1.0
    assert stump.predict([[1.0]])[0] == 1.0     # value exactly at threshold
    assert stump.predict([[0.5]])[0] == -1.0
    flipped = StumpModel(feature_index=0, threshold=1.0, polarity=-1.0)
    assert flipped.predict([[2.0]])[0] == -1.0


def brute_force_stump_error(X, y, w):
    """Every (feature, midpoint-or-infinite threshold, polarity) dichotomy."""
    best = np.inf
    m, d = X.shape
    for f in range(d):
        vals = np.unique(X[:, f])
        thresholds = [-np.inf, np.inf]
        thresholds += [0.5 * (a + b) for a, b in zip(vals[:-1], vals[1:])]
        for t in thresholds:
            raw = np.where(X[:, f] - t > 0, 1.0, np.where(X[:, f] == t, 1.0, -1.0))
            for p in (1.0, -1.0):
                err = float(w[p * raw != y].sum())
                best = min(best, err)
    return best


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 12), d=st.integers(1, 3))
def test_stump_search_is_exhaustive_optimal(seed, m, d):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(m, d)), 2)   # provoke ties
    y = sign_pm(rng.normal(size=m))
    w = rng.uniform(0.1, 1.0, size=m)
    w /= w.sum()
    f, t, p, err = kernels.best_stump(np.ascontiguousarray(X), y, w)
    assert err == pytest.approx(brute_force_stump_error(X, y, w), abs=1e-12)
    # the reported stump realizes the reported error
    pred = StumpModel(int(f), float(t), float(p)).predict(X)
    assert float(w[pred != y].sum()) == pytest.approx(err, abs=1e-12)


# ----------------------------------------------------------- adaboost


def test_interleaved_labels_reach_zero_error():
    ds = make_ds([1.0, 2.0, 3.0, 4.0], [-1.0, 1.0, -1.0, 1.0])
    model = train_adaboost(ds, T=10)
    X = ds.as_matrix()
    assert training_error(model, X, ds.labels) == 0.0
    assert np.array_equal(predict_adaboost(model, X), ds.labels)


def test_error_bounded_by_partition_products():
    rng = np.random.default_rng(3)
    for _ in range(10):
        ds = random_ds(rng, 25, 2)
        model = train_adaboost(ds, T=20)
        X, y = ds.as_matrix(), ds.labels
        for t in range(1, model.rounds + 1):
            partial = AdaboostModel(stumps=model.stumps[:t], alphas=model.alphas[:t],
                                    rounds=t)
            err = training_error(partial, X, y)
            assert err <= model.partition_products[t - 1] + 1e-12


def test_error_nonincreasing_in_rounds():
    rng = np.random.default_rng(11)
    ds = random_ds(rng, 40, 3)
    X, y = ds.as_matrix(), ds.labels
    model = train_adaboost(ds, T=25)
    errs = []
    for t in (1, 5, 10, 15, 20, 25):
        t = min(t, model.rounds)
        partial = AdaboostModel(stumps=model.stumps[:t], alphas=model.alphas[:t],
                                rounds=t)
        errs.append(training_error(partial, X, y))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_halts_when_best_error_is_half():
    # XOR corners: every stump dichotomy errs on exactly half the weight
    ds = make_ds([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]],
                 [1.0, 1.0, -1.0, -1.0])
    model = train_adaboost(ds, T=10)
    assert model.rounds == 0
    assert model.stumps == [] and model.alphas == []


def test_separable_data_caps_alpha():
    ds = make_ds([0.0, 1.0, 2.0, 3.0], [-1.0, -1.0, 1.0, 1.0])
    model = train_adaboost(ds, T=10)
    assert model.rounds == 1           # perfect stump ends boosting
    assert np.isfinite(model.alphas[0])
    assert training_error(model, ds.as_matrix(), ds.labels) == 0.0


def test_predict_single_stump_matches_stump():
    stump = StumpModel(0, 0.5, 1.0)
    model = AdaboostModel(stumps=[stump], alphas=[1.0], rounds=1)
    X = np.array([[0.0], [1.0], [0.5]])
    assert np.array_equal(model.predict(X), stump.predict(X))


def test_predict_tie_breaks_positive():
    a = StumpModel(0, 0.5, 1.0)
    b = StumpModel(0, 0.5, -1.0)    # opposite vote everywhere
    model = AdaboostModel(stumps=[a, b], alphas=[1.0, 1.0], rounds=2)
    assert np.all(model.predict([[0.0], [1.0]]) == 1.0)


def test_predict_dimension_mismatch():
    model = AdaboostModel(stumps=[StumpModel(1, 0.0, 1.0)], alphas=[1.0], rounds=1)
    with pytest.raises(ContractError):
        model.predict([[1.0]])


def test_adaboost_validation():
    ds = make_ds([1.0, 2.0], [-1.0, 1.0])
    with pytest.raises(ContractError):
        train_adaboost(ds, T=0)
    single = make_ds([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ContractError):
        train_adaboost(single)


def test_adaboost_loo_round_selection():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(16, 1))
    y = sign_pm(X[:, 0])
    model = train_adaboost(make_ds(X, y))     # T picked by leave-one-out
    assert 1 <= model.rounds <= 100
    assert training_error(model, np.atleast_2d(X), y) == 0.0


# ---------------------------------------------------------------- MKL


def cvxopt_dual_value(K, y, C):
    """max_beta sum(beta) - 0.5 (beta y)' K (beta y) on the dual box."""
    import cvxopt

    cvxopt.solvers.options["show_progress"] = False
    cvxopt.solvers.options["abstol"] = 1e-10
    cvxopt.solvers.options["reltol"] = 1e-10
    m = len(y)
    Q = cvxopt.matrix(np.outer(y, y) * K)
    q = cvxopt.matrix(-np.ones(m))
    G = cvxopt.matrix(np.vstack([-np.eye(m), np.eye(m)]))
    h = cvxopt.matrix(np.concatenate([np.zeros(m), np.full(m, C)]))
    A = cvxopt.matrix(y.reshape(1, -1))
    b = cvxopt.matrix(0.0)
    sol = cvxopt.solvers.qp(Q, q, G, h, A, b)
    beta = np.array(sol["x"]).ravel()
    v = beta * y
    return float(beta.sum() - 0.5 * v @ K @ v)


@pytest.fixture(scope="module")
def separable():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(24, 2))
    y = sign_pm(X[:, 0])
    X[:, 0] += 0.8 * y
    return make_ds(X, y)


def test_identical_kernels_match_single_svm(separable):
    kern = KernelDescriptor("gaussian", 1.0)
    mkl = train_mkl(separable, [kern, kern], C=1.0)
    svm = train_svm(separable, C=1.0, kernel=kern)
    probe = np.random.default_rng(0).normal(size=(30, 2))
    assert np.abs(mkl.decision(probe) - svm.decision(probe)).max() <= 1e-6


def test_constant_kernel_loses_the_weight(separable):
    informative = KernelDescriptor("linear")
    constant = KernelDescriptor("gaussian", 1e8)    # Gram ~ all-ones
    mkl = train_mkl(separable, [informative, constant], C=1.0)
    assert mkl.weights[0] >= 0.9

    # oracle: the min over d of the optimal dual value, on a 101-point grid
    X, y = separable.as_matrix(), separable.labels
    g_inf = informative.gram(X)
    g_const = constant.gram(X)
    values = [cvxopt_dual_value(d * g_inf + (1 - d) * g_const, y, 1.0)
              for d in np.linspace(0.0, 1.0, 101)]
    best_d = np.linspace(0.0, 1.0, 101)[int(np.argmin(values))]
    assert best_d >= 0.9
    assert mkl.objective <= min(values) + 1e-3


def test_objective_never_above_uniform_start(separable):
    kern = [KernelDescriptor("linear"), KernelDescriptor("gaussian", 0.5)]
    mkl = train_mkl(separable, kern, C=1.0)
    X, y = separable.as_matrix(), separable.labels
    K0 = 0.5 * kern[0].gram(X) + 0.5 * kern[1].gram(X)
    assert mkl.objective <= cvxopt_dual_value(K0, y, 1.0) + 1e-6


def test_mkl_weights_on_simplex(separable):
    mkl = train_mkl(separable, C=1.0)
    assert np.all(mkl.weights >= -1e-12)
    assert mkl.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_mkl_validation(separable):
    with pytest.raises(ContractError):
        train_mkl(separable, [KernelDescriptor("linear")])
    single = make_ds([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ContractError):
        train_mkl(single)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 8))
def test_project_simplex_properties(seed, n):
    v = np.random.default_rng(seed).normal(scale=3.0, size=n)
    p = project_simplex(v)
    assert np.all(p >= 0.0)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    # idempotence and optimality against a dense random probe
    assert np.allclose(project_simplex(p), p, atol=1e-9)
    rng = np.random.default_rng(seed + 1)
    for _ in range(20):
        q = rng.dirichlet(np.ones(n))
        assert np.sum((p - v) ** 2) <= np.sum((q - v) ** 2) + 1e-9


def test_project_simplex_examples():
    assert np.allclose(project_simplex([0.5, 0.5]), [0.5, 0.5])
    assert np.allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
    assert np.allclose(project_simplex([-1.0, -1.0]), [0.5, 0.5])
