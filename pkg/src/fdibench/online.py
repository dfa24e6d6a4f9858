"""Streaming detectors: online perceptron (OP), online perceptron with
weighted models (OPWM), Pegasos-style online SVM, and online sparse logistic
regression with truncated-gradient shrinkage.

Each state processes one (sample, label) pair per step: predict with the
current model first, then update. States are single-owner and mutated in
place; distinct streams can run in parallel on separate states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .batch import sign_pm
from .errors import ContractError

OPWM_INDEPENDENCE_TOL = 1e-8


def _as_vector(sample, dim):
    s = np.asarray(sample, dtype=float).ravel()
    if len(s) != dim:
        raise ContractError(f"sample dimension {len(s)} does not match state dimension {dim}")
    return s


@dataclass
class OpState:
    w: np.ndarray
    b: float = 0.0
    gamma: float = 0.1

    @classmethod
    def create(cls, dim, gamma=0.1):
        return cls(w=np.zeros(dim), b=0.0, gamma=gamma)

    def decision(self, sample):
        return float(_as_vector(sample, len(self.w)) @ self.w + self.b)

    def predict(self, sample):
        return 1.0 if self.decision(sample) >= 0.0 else -1.0

    def step(self, sample, label):
        s = _as_vector(sample, len(self.w))
        pred = self.predict(s)
        if pred != label:
            factor = self.gamma * (label - pred)
            self.w = self.w + factor * s
            self.b += factor
        return pred


@dataclass
class OpwmState:
    """Perceptron that only updates on misclassified samples that are linearly
    independent of the stored support set; predictions for evaluation use the
    running average of the per-step models.
    """
    w: np.ndarray
    b: float = 0.0
    gamma: float = 0.1
    w_sum: np.ndarray = None
    b_sum: float = 0.0
    steps: int = 0
    support_set: list = field(default_factory=list)
    _basis: np.ndarray = None    # orthonormal columns spanning the support set

    @classmethod
    def create(cls, dim, gamma=0.1):
        return cls(w=np.zeros(dim), b=0.0, gamma=gamma,
                   w_sum=np.zeros(dim), b_sum=0.0, steps=0,
                   support_set=[], _basis=np.zeros((dim, 0)))

    def decision(self, sample):
        return float(_as_vector(sample, len(self.w)) @ self.w + self.b)

    def predict(self, sample):
        return 1.0 if self.decision(sample) >= 0.0 else -1.0

    def averaged_model(self):
        if self.steps == 0:
            return np.zeros_like(self.w), 0.0
        return self.w_sum / self.steps, self.b_sum / self.steps

    def predict_averaged(self, samples):
        w_ave, b_ave = self.averaged_model()
        s = np.atleast_2d(np.asarray(samples, dtype=float))
        return sign_pm(s @ w_ave + b_ave)

    def _independent(self, s):
        norm = np.linalg.norm(s)
        if norm == 0.0:
            return False
        resid = s - self._basis @ (self._basis.T @ s)
        return np.linalg.norm(resid) > OPWM_INDEPENDENCE_TOL * norm

    def step(self, sample, label):
        s = _as_vector(sample, len(self.w))
        pred = self.predict(s)
        if pred != label and self._independent(s):
            factor = self.gamma * (label - pred)
            self.w = self.w + factor * s
            self.b += factor
            self.support_set.append(s.copy())
            resid = s - self._basis @ (self._basis.T @ s)
            self._basis = np.hstack([self._basis, (resid / np.linalg.norm(resid))[:, None]])
        self.w_sum = self.w_sum + self.w
        self.b_sum += self.b
        self.steps += 1
        return pred


@dataclass
class OnlineSvmState:
    """Pegasos: stochastic subgradient on the hinge loss with step 1/(lam*t)
    and projection onto the ball ||w|| <= 1/sqrt(lam). Bias unregularized.
    """
    w: np.ndarray
    b: float = 0.0
    lam: float = 0.1
    t: int = 0

    @classmethod
    def create(cls, dim, lam=0.1):
        return cls(w=np.zeros(dim), b=0.0, lam=lam, t=0)

    def decision(self, sample):
        return float(_as_vector(sample, len(self.w)) @ self.w + self.b)

    def predict(self, sample):
        return 1.0 if self.decision(sample) >= 0.0 else -1.0

    def step(self, sample, label):
        s = _as_vector(sample, len(self.w))
        pred = self.predict(s)
        self.t += 1
        eta = 1.0 / (self.lam * self.t)
        margin = label * (s @ self.w + self.b)
        self.w = (1.0 - eta * self.lam) * self.w
        if margin < 1.0:
            self.w = self.w + eta * label * s
            self.b += eta * label
        radius = 1.0 / math.sqrt(self.lam)
        norm = np.linalg.norm(self.w)
        if norm > radius:
            self.w = self.w * (radius / norm)
        return pred


@dataclass
class OnlineSlrState:
    """Stochastic gradient on the logistic loss with per-step truncated
    l1 shrinkage of magnitude eta * g on the weights (bias unshrunk).
    """
    w: np.ndarray
    b: float = 0.0
    eta: float = 0.1
    g: float = 0.01
    t: int = 0

    @classmethod
    def create(cls, dim, eta=0.1, g=0.01):
        return cls(w=np.zeros(dim), b=0.0, eta=eta, g=g, t=0)

    def decision(self, sample):
        return float(_as_vector(sample, len(self.w)) @ self.w + self.b)

    def predict(self, sample):
        return 1.0 if self.decision(sample) >= 0.0 else -1.0

    def step(self, sample, label):
        s = _as_vector(sample, len(self.w))
        pred = self.predict(s)
        self.t += 1
        margin = label * (s @ self.w + self.b)
        sig = 1.0 / (1.0 + math.exp(min(max(margin, -500.0), 500.0)))
        self.w = self.w + self.eta * label * sig * s
        self.b += self.eta * label * sig
        if self.g > 0.0:
            shrink = self.eta * self.g
            self.w = np.sign(self.w) * np.maximum(np.abs(self.w) - shrink, 0.0)
        return pred


ONLINE_ALGORITHMS = {
    "op": OpState,
    "opwm": OpwmState,
    "online-svm": OnlineSvmState,
    "online-slr": OnlineSlrState,
}


@dataclass
class LearningCurve:
    steps: list
    accuracy: list


def make_state(algorithm, dim, **hyper):
    try:
        cls = ONLINE_ALGORITHMS[algorithm]
    except KeyError:
        raise ContractError(f"unknown online algorithm {algorithm!r}") from None
    return cls.create(dim, **hyper)


def run_stream(state, stream_X, stream_y, test_X, test_y, eval_every: int):
    """Feed samples in order, snapshotting held-out accuracy every eval_every
    steps (OPWM evaluates its averaged model). Returns (state, curve, mistakes).
    """
    stream_X = np.atleast_2d(np.asarray(stream_X, dtype=float))
    if len(stream_X) == 0:
        raise ContractError("empty stream")
    if eval_every < 1:
        raise ContractError("eval_every must be >= 1")
    test_X = np.atleast_2d(np.asarray(test_X, dtype=float))
    test_y = np.asarray(test_y, dtype=float)

    steps = []
    accs = []
    mistakes = 0
    for i, (s, y) in enumerate(zip(stream_X, stream_y), start=1):
        pred = state.step(s, y)
        if pred != y:
            mistakes += 1
        if i % eval_every == 0 or i == len(stream_X):
            if isinstance(state, OpwmState):
                preds = state.predict_averaged(test_X)
            else:
                preds = sign_pm(test_X @ state.w + state.b)
            if steps and steps[-1] == i:
                continue
            steps.append(i)
            accs.append(float((preds == test_y).mean()))
    return state, LearningCurve(steps=steps, accuracy=accs), mistakes
