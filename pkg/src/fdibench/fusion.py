"""Decision-level fusion (AdaBoost over decision stumps) and feature-level
fusion (two-kernel MKL with simplex-constrained weights).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .attacks import LabeledDataset
from .batch import (KernelDescriptor, SvmModel, _dual_objective, _solve_svm_dual,
                    _training_matrix, sign_pm, _check_dim)
from .errors import ContractError

ALPHA_CAP = 0.5 * math.log((1.0 - 1e-12) / 1e-12)
ADABOOST_T_GRID = tuple(range(10, 101, 10))


@dataclass(frozen=True)
class StumpModel:
    feature_index: int
    threshold: float
    polarity: float   # +-1; predicts polarity * sign(value - threshold)

    def predict(self, samples):
        s = np.atleast_2d(np.asarray(samples, dtype=float))
        raw = sign_pm(s[:, self.feature_index] - self.threshold)
        return self.polarity * raw


@dataclass
class AdaboostModel:
    stumps: list
    alphas: list
    rounds: int
    partition_products: list = None   # prod of Z_t after each round

    def decision(self, samples):
        s = np.atleast_2d(np.asarray(samples, dtype=float))
        if self.stumps:
            _check_dim_ok = s.shape[1] > max(st.feature_index for st in self.stumps)
            if not _check_dim_ok:
                raise ContractError("sample dimension smaller than stump feature index")
        acc = np.zeros(len(s))
        for alpha, stump in zip(self.alphas, self.stumps):
            acc += alpha * stump.predict(s)
        return acc

    def predict(self, samples):
        return sign_pm(self.decision(samples))


def _fit_adaboost(X, y, T):
    m = len(X)
    dist = np.full(m, 1.0 / m)
    stumps = []
    alphas = []
    z_products = []
    z_prod = 1.0
    for _ in range(T):
        f, t, p, err = kernels.best_stump(np.ascontiguousarray(X), y, dist)
        if err >= 0.5 - 1e-12:
            break   # alpha would be ~0; round discarded
        stump = StumpModel(int(f), float(t), float(p))
        pred = stump.predict(X)
        if err <= 0.0:
            alpha = ALPHA_CAP
        else:
            alpha = 0.5 * math.log((1.0 - err) / err)
        stumps.append(stump)
        alphas.append(alpha)
        unnorm = dist * np.exp(-alpha * y * pred)
        z = float(unnorm.sum())
        z_prod *= z
        z_products.append(z_prod)
        dist = unnorm / z
        if err <= 0.0:
            break
    return AdaboostModel(stumps=stumps, alphas=alphas, rounds=len(stumps),
                         partition_products=z_products)


def train_adaboost(train: LabeledDataset, T: int | None = None) -> AdaboostModel:
    """Boost exhaustive-search decision stumps for T rounds.

    With T = None the number of rounds is picked from {10, 20, ..., 100} by
    leave-one-out cross-validation (ties toward smaller T).
    """
    X, y = _training_matrix(train)
    if len(set(y.tolist())) < 2:
        raise ContractError("training set must contain both classes")
    if T is not None:
        if T < 1:
            raise ContractError("T must be >= 1")
        return _fit_adaboost(X, y, T)

    t_max = max(ADABOOST_T_GRID)
    mistakes = {t: 0 for t in ADABOOST_T_GRID}
    for i in range(len(X)):
        keep = np.ones(len(X), dtype=bool)
        keep[i] = False
        if len(set(y[keep].tolist())) < 2:
            continue
        model = _fit_adaboost(X[keep], y[keep], t_max)
        acc = 0.0
        checkpoints = set(ADABOOST_T_GRID)
        for t, (alpha, stump) in enumerate(zip(model.alphas, model.stumps), start=1):
            acc += alpha * stump.predict(X[i:i + 1])[0]
            if t in checkpoints:
                if sign_pm(acc) != y[i]:
                    mistakes[t] += 1
        # rounds beyond the realized ensemble keep the final decision
        final_wrong = sign_pm(acc) != y[i]
        for t in ADABOOST_T_GRID:
            if t > model.rounds and final_wrong:
                mistakes[t] += 1
    best_t = min(ADABOOST_T_GRID, key=lambda t: (mistakes[t], t))
    return _fit_adaboost(X, y, best_t)


def predict_adaboost(model: AdaboostModel, samples):
    return model.predict(samples)


# ------------------------------------------------------------------ MKL

@dataclass
class MklModel:
    weights: np.ndarray             # simplex weights over the kernel list
    kernels: list                   # KernelDescriptor per kernel
    svm: SvmModel                   # trained on the combined kernel
    train_X: np.ndarray
    beta: np.ndarray                # full-length dual vector
    objective: float = 0.0

    def decision(self, samples):
        s = _check_dim(self.train_X.shape[1], samples)
        K = sum(d * k.gram(s, self.train_X) for d, k in zip(self.weights, self.kernels))
        return K @ self._coef + self.svm.b

    @property
    def _coef(self):
        coef = np.zeros(len(self.train_X))
        coef[self.svm.support_idx] = self.svm.beta * self.svm.support_y
        return coef

    def predict(self, samples):
        return sign_pm(self.decision(samples))


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def train_mkl(train: LabeledDataset, kernel_list=None, C: float = 1.0,
              max_outer: int = 50, gap_tol: float = 1e-4) -> MklModel:
    """Alternate SVM dual solves with reduced-gradient steps on the simplex
    of kernel weights, with backtracking on the dual objective.
    """
    X, y = _training_matrix(train)
    if len(set(y.tolist())) < 2:
        raise ContractError("training set must contain both classes")
    if kernel_list is None:
        kernel_list = [KernelDescriptor("linear"), KernelDescriptor("gaussian", 1.0)]
    U = len(kernel_list)
    if U < 2:
        raise ContractError("MKL needs at least two kernels")
    grams = [k.gram(X) for k in kernel_list]
    d = np.full(U, 1.0 / U)
    C_box = np.full(len(y), C)

    def solve(dw):
        K = sum(w * G for w, G in zip(dw, grams))
        beta, b = _solve_svm_dual(K, y, C_box)
        return beta, b, _dual_objective(K, y, beta)

    beta, b, obj = solve(d)
    for _ in range(max_outer):
        v = beta * y
        grad = np.array([-0.5 * v @ G @ v for G in grams])
        step = 1.0
        improved = False
        for _ in range(20):
            d_new = project_simplex(d - step * grad / (np.abs(grad).max() + 1e-12))
            if np.allclose(d_new, d, atol=1e-12):
                break
            beta_new, b_new, obj_new = solve(d_new)
            if obj_new <= obj - 1e-12:
                improvement = obj - obj_new
                d, beta, b, obj = d_new, beta_new, b_new, obj_new
                improved = improvement > gap_tol
                break
            step *= 0.5
        if not improved:
            break

    K = sum(w * G for w, G in zip(d, grams))
    sv = beta > 1e-10
    svm = SvmModel(
        support_idx=np.flatnonzero(sv),
        support_X=X[sv],
        support_y=y[sv],
        beta=beta[sv],
        b=b,
        kernel=kernel_list[int(np.argmax(d))],
        C=C,
        dual_objective=obj,
    )
    return MklModel(weights=d, kernels=list(kernel_list), svm=svm,
                    train_X=X, beta=beta, objective=obj)
