"""Batch classifiers behind a uniform train/predict contract.

All decision-style models use sign(v) with sign(0) = +1: a decision value of
exactly zero is treated as attacked, the conservative choice for detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .attacks import LabeledDataset
from .errors import ContractError, TrainingError

SMO_KKT_TOL = 1e-3
SMO_MAX_PASSES = 100_000


def sign_pm(values):
    """sign with sign(0) = +1, vectorized."""
    return np.where(np.asarray(values, dtype=float) < 0.0, -1.0, 1.0)


@dataclass(frozen=True)
class KernelDescriptor:
    kind: str                  # "linear" or "gaussian"
    sigma: float = 1.0         # gaussian width; ignored for linear

    def __post_init__(self):
        if self.kind not in ("linear", "gaussian"):
            raise ContractError(f"unknown kernel kind {self.kind!r}")
        if self.sigma <= 0:
            raise ContractError("sigma must be positive")

    def gram(self, A, B=None):
        B = A if B is None else B
        if self.kind == "linear":
            return A @ B.T
        d2 = (
            (A ** 2).sum(axis=1)[:, None]
            + (B ** 2).sum(axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 / (2.0 * self.sigma ** 2))


def _training_matrix(train: LabeledDataset):
    X = train.as_matrix()
    if len(X) == 0:
        raise ContractError("empty training set")
    return X, train.labels.astype(float)


def _check_dim(model_dim, sample):
    s = np.atleast_2d(np.asarray(sample, dtype=float))
    if s.shape[1] != model_dim:
        raise ContractError(
            f"sample dimension {s.shape[1]} does not match training dimension {model_dim}"
        )
    return s


# ----------------------------------------------------------- perceptron

@dataclass
class PerceptronModel:
    w: np.ndarray
    b: float
    gamma: float
    epochs: int
    converged: bool = False

    def decision(self, samples):
        s = _check_dim(len(self.w), samples)
        return s @ self.w + self.b

    def predict(self, samples):
        return sign_pm(self.decision(samples))


def train_perceptron(train: LabeledDataset, gamma: float = 0.1, epochs: int = 100) -> PerceptronModel:
    if gamma <= 0 or epochs < 1:
        raise ContractError("gamma must be positive and epochs >= 1")
    X, y = _training_matrix(train)
    w, b, run, clean = kernels.perceptron_fit(np.ascontiguousarray(X), y, gamma, epochs)
    return PerceptronModel(w=np.asarray(w), b=float(b), gamma=gamma, epochs=run,
                           converged=bool(clean))


# ----------------------------------------------------------------- k-NN

@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int

    def predict(self, samples):
        s = _check_dim(self.X.shape[1], samples)
        return np.asarray(kernels.knn_predict(self.X, self.y, np.ascontiguousarray(s), self.k))


def train_knn(train: LabeledDataset) -> KnnModel:
    """Stores the training set; k picked over 1..floor(sqrt(M)) by
    leave-one-out error, ties toward smaller k.
    """
    X, y = _training_matrix(train)
    m = len(X)
    if m < 2:
        raise ContractError("k-NN needs at least 2 training samples")
    kmax = max(1, int(math.isqrt(m)))
    mistakes = np.asarray(kernels.knn_loo_mistakes(np.ascontiguousarray(X), y, kmax))
    k = int(np.argmin(mistakes)) + 1
    return KnnModel(X=X, y=y, k=k)


# ------------------------------------------------------------------ SVM

@dataclass
class SvmModel:
    support_idx: np.ndarray       # indices into the training set
    support_X: np.ndarray
    support_y: np.ndarray
    beta: np.ndarray              # dual coefficients for the support set
    b: float
    kernel: KernelDescriptor
    C: float
    dual_objective: float = 0.0

    def decision(self, samples):
        s = _check_dim(self.support_X.shape[1], samples)
        K = self.kernel.gram(s, self.support_X)
        return K @ (self.beta * self.support_y) + self.b

    def predict(self, samples):
        return sign_pm(self.decision(samples))

    @property
    def w(self):
        """Primal weights; linear kernel only."""
        if self.kernel.kind != "linear":
            raise ContractError("primal weights exist only for the linear kernel")
        return (self.beta * self.support_y) @ self.support_X


def _dual_objective(K, y, beta):
    v = beta * y
    return float(beta.sum() - 0.5 * v @ K @ v)


def _solve_svm_dual(K, y, C_box, seed=1):
    beta, b, passes, kkt = kernels.smo_solve(
        np.ascontiguousarray(K), y, np.ascontiguousarray(C_box),
        SMO_KKT_TOL, SMO_MAX_PASSES, seed,
    )
    if kkt > SMO_KKT_TOL * (1.0 + 1e-6):
        raise TrainingError(
            f"SMO did not converge in {passes} passes; final KKT violation {kkt:.3e}"
        )
    return np.asarray(beta), float(b)


def train_svm(train: LabeledDataset, C: float = 1.0,
              kernel: KernelDescriptor = KernelDescriptor("linear")) -> SvmModel:
    if C <= 0:
        raise ContractError("C must be positive")
    X, y = _training_matrix(train)
    if len(set(y.tolist())) < 2:
        raise ContractError("training set must contain both classes")
    K = kernel.gram(X)
    beta, b = _solve_svm_dual(K, y, np.full(len(y), C))
    sv = beta > 1e-10
    model = SvmModel(
        support_idx=np.flatnonzero(sv),
        support_X=X[sv],
        support_y=y[sv],
        beta=beta[sv],
        b=b,
        kernel=kernel,
        C=C,
        dual_objective=_dual_objective(K, y, beta),
    )
    return model


def grid_search_svm(train: LabeledDataset, kernel_kind: str = "gaussian",
                    folds: int = 5, C: float | None = None):
    """Cross-validated accuracy over log2 C (and log2 sigma for gaussian) in
    [-10, 10] with integer steps; ties resolve to smaller C then smaller sigma.

    Returns (C, sigma); sigma is None for the linear kernel.
    """
    if folds < 2:
        raise ContractError("folds must be >= 2")
    X, y = _training_matrix(train)
    m = len(X)
    folds = min(folds, m)
    fold_of = np.arange(m) % folds

    grid = [2.0 ** e for e in range(-10, 11)]
    c_values = grid if C is None else [C]
    sigma_values = grid if kernel_kind == "gaussian" else [None]

    best = (-1.0, None, None)
    for c in c_values:
        for sg in sigma_values:
            kern = (KernelDescriptor("gaussian", sg) if sg is not None
                    else KernelDescriptor("linear"))
            K = kern.gram(X)
            correct = 0
            usable = True
            for f in range(folds):
                tr = fold_of != f
                te = ~tr
                ytr = y[tr]
                if len(set(ytr.tolist())) < 2:
                    continue
                try:
                    beta, b = _solve_svm_dual(K[np.ix_(tr, tr)], ytr,
                                              np.full(tr.sum(), c))
                except TrainingError:
                    # extreme (C, sigma) corners can defeat the solver; the
                    # configuration is unusable, not the search
                    usable = False
                    break
                dec = K[np.ix_(te, tr)] @ (beta * ytr) + b
                correct += int((sign_pm(dec) == y[te]).sum())
            if not usable:
                continue
            acc = correct / m
            if acc > best[0]:
                best = (acc, c, sg)
    return best[1], best[2]


# ------------------------------------------------- sparse logistic (ADMM)

@dataclass
class SlrModel:
    w: np.ndarray
    b: float
    lam: float
    converged: bool = True
    iterations: int = 0

    def decision(self, samples):
        s = _check_dim(len(self.w), samples)
        return s @ self.w + self.b

    def predict(self, samples):
        return sign_pm(self.decision(samples))


def _logistic_value_grad_hess(wb, X1, y):
    """Loss, gradient and Hessian of sum log(1 + exp(-y * X1 @ wb)),
    X1 carries the trailing all-ones bias column.
    """
    margins = y * (X1 @ wb)
    # stable log(1 + exp(-m))
    loss = float(np.sum(np.logaddexp(0.0, -margins)))
    sig = 1.0 / (1.0 + np.exp(np.clip(margins, -500, 500)))   # sigma(-m)
    grad = -(X1 * (y * sig)[:, None]).sum(axis=0)
    w_h = sig * (1.0 - sig)
    hess = X1.T @ (X1 * w_h[:, None])
    return loss, grad, hess


def lambda_max(train: LabeledDataset) -> float:
    """Smallest l1 penalty at which the weight vector collapses to zero,
    with the intercept fitted freely.
    """
    X, y = _training_matrix(train)
    m_pos = int((y > 0).sum())
    m_neg = len(y) - m_pos
    if m_pos == 0 or m_neg == 0:
        raise ContractError("training set must contain both classes")
    b0 = math.log(m_pos / m_neg)
    sig = 1.0 / (1.0 + np.exp(y * b0))   # sigma(-y b0)
    grad_w = -(X * (y * sig)[:, None]).sum(axis=0)
    return float(np.max(np.abs(grad_w)))


def train_slr(train: LabeledDataset, omega: float = 0.1,
              lam: float | None = None,
              abs_tol: float = 1e-4, rel_tol: float = 1e-2,
              max_iter: int = 10_000) -> SlrModel:
    """l1-regularized logistic regression via ADMM with the split w = r.

    lam defaults to omega * lambda_max(train); the intercept is unpenalized.
    The returned weights are the sparse iterate r.
    """
    if lam is None:
        if not 0.0 < omega <= 1.0:
            raise ContractError("omega must lie in (0, 1]")
        lam = omega * lambda_max(train)
    X, y = _training_matrix(train)
    m, d = X.shape
    X1 = np.hstack([X, np.ones((m, 1))])

    wb = np.zeros(d + 1)
    r = np.zeros(d)
    u = np.zeros(d)
    rho = 1.0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        # w-update: damped Newton on loss + (rho/2)||w - r + u||^2
        for _ in range(50):
            loss, grad, hess = _logistic_value_grad_hess(wb, X1, y)
            grad_aug = grad.copy()
            grad_aug[:d] += rho * (wb[:d] - r + u)
            hess_aug = hess.copy()
            hess_aug[np.arange(d), np.arange(d)] += rho
            hess_aug[np.arange(d + 1), np.arange(d + 1)] += 1e-10
            step = np.linalg.solve(hess_aug, grad_aug)
            t = 1.0
            f0 = loss + 0.5 * rho * float(np.sum((wb[:d] - r + u) ** 2))
            g_dot = float(grad_aug @ step)
            while t > 1e-6:
                cand = wb - t * step
                lc, _, _ = _logistic_value_grad_hess(cand, X1, y)
                fc = lc + 0.5 * rho * float(np.sum((cand[:d] - r + u) ** 2))
                if fc <= f0 - 1e-4 * t * g_dot:
                    break
                t *= 0.5
            wb = wb - t * step
            if np.linalg.norm(t * step) < 1e-10:
                break
        # r-update: soft threshold
        r_old = r
        v = wb[:d] + u
        r = np.sign(v) * np.maximum(np.abs(v) - lam / rho, 0.0)
        u = u + wb[:d] - r

        pri = np.linalg.norm(wb[:d] - r)
        dual = np.linalg.norm(rho * (r - r_old))
        eps_pri = math.sqrt(d) * abs_tol + rel_tol * max(
            np.linalg.norm(wb[:d]), np.linalg.norm(r)
        )
        eps_dual = math.sqrt(d) * abs_tol + rel_tol * np.linalg.norm(rho * u)
        if pri <= eps_pri and dual <= eps_dual:
            converged = True
            break
        # residual balancing
        if pri > 10.0 * dual:
            rho *= 2.0
            u /= 2.0
        elif dual > 10.0 * pri:
            rho /= 2.0
            u *= 2.0
    return SlrModel(w=r.copy(), b=float(wb[d]), lam=float(lam),
                    converged=converged, iterations=it)


# ----------------------------------------------------------------- S3VM

@dataclass
class S3vmModel:
    w: np.ndarray
    b: float
    C1: float
    C2: float
    supervised_fallback: bool = False

    def decision(self, samples):
        s = _check_dim(len(self.w), samples)
        return s @ self.w + self.b

    def predict(self, samples):
        return sign_pm(self.decision(samples))


def s3vm_objective(model, X, y, X_unlabeled, C1, C2, unlabeled_loss="hat"):
    """||w||^2 + C1 * hinge(labeled) + C2 * unlabeled term."""
    w, b = model.w, model.b
    obj = float(w @ w)
    obj += C1 * float(np.maximum(0.0, 1.0 - y * (X @ w + b)).sum())
    if len(X_unlabeled):
        if unlabeled_loss == "hat":
            f = X_unlabeled @ w + b
            obj += C2 * float(np.maximum(0.0, 1.0 - np.abs(f)).sum())
        else:
            # literal variant: independent of (w, b); kept for fidelity runs
            obj += C2 * float(
                np.maximum(0.0, 1.0 - np.abs(X_unlabeled).sum(axis=1)).sum()
            )
    return obj


def _linear_svm_weighted(X, y, C_box):
    K = X @ X.T
    beta, b = _solve_svm_dual(K, y, C_box)
    w = (beta * y) @ X
    return w, b


def train_s3vm(train: LabeledDataset, unlabeled, C1: float = 1.0, C2: float = 1.0,
               unlabeled_loss: str = "hat") -> S3vmModel:
    """Linear semi-supervised SVM by deterministic annealing: pseudo-label the
    unlabeled pool under a class-balance constraint, re-solve a weighted SVM,
    and ramp the unlabeled weight geometrically over 7 stages.
    """
    X, y = _training_matrix(train)
    Xu = np.asarray(unlabeled, dtype=float)
    if Xu.ndim == 1:
        Xu = Xu[:, None]
    w, b = _linear_svm_weighted(X, y, np.full(len(y), C1))
    if C2 <= 0.0 or len(Xu) == 0 or unlabeled_loss == "literal":
        return S3vmModel(w=w, b=float(b), C1=C1, C2=C2,
                         supervised_fallback=len(Xu) == 0)
    if Xu.shape[1] != X.shape[1]:
        raise ContractError("unlabeled samples have a different dimension")

    pos_fraction = float((y > 0).mean())
    n_pos = int(round(pos_fraction * len(Xu)))
    stage_weights = [C2 / 2 ** k for k in range(6, -1, -1)]   # C2/64 ... C2
    yu = None
    for c2 in stage_weights:
        for _ in range(10):
            f = Xu @ w + b
            order = np.argsort(-f, kind="mergesort")
            new_yu = np.full(len(Xu), -1.0)
            new_yu[order[:n_pos]] = 1.0
            if yu is not None and np.array_equal(new_yu, yu):
                break
            yu = new_yu
            X_all = np.vstack([X, Xu])
            y_all = np.concatenate([y, yu])
            C_box = np.concatenate([np.full(len(y), C1), np.full(len(Xu), c2)])
            w, b = _linear_svm_weighted(X_all, y_all, C_box)
    return S3vmModel(w=w, b=float(b), C1=C1, C2=C2)
