"""Versioned text serialization for trained detector models.

Format (line-oriented, '#'-comments allowed):

    fdibench-model 1
    variant <tag>
    <field> <value...>

Scalars use repr() so round-trips are lossless; vectors are space-separated
repr floats on one line; matrices are given row-per-line between
``begin <name> rows cols`` and ``end``.
"""

from __future__ import annotations

import numpy as np

from .batch import KernelDescriptor, KnnModel, PerceptronModel, S3vmModel, SlrModel, SvmModel
from .errors import ContractError
from .fusion import AdaboostModel, MklModel, StumpModel

FORMAT_VERSION = 1


def _vec(v):
    return " ".join(repr(float(x)) for x in np.asarray(v, dtype=float).ravel())


def _emit_matrix(lines, name, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines.append(f"begin {name} {M.shape[0]} {M.shape[1]}")
    for row in M:
        lines.append(_vec(row))
    lines.append("end")


def dump_model(model) -> str:
    lines = [f"fdibench-model {FORMAT_VERSION}"]
    if isinstance(model, PerceptronModel):
        lines.append("variant perceptron")
        lines.append(f"w {_vec(model.w)}")
        lines.append(f"b {model.b!r}")
        lines.append(f"gamma {model.gamma!r}")
        lines.append(f"epochs {model.epochs}")
    elif isinstance(model, KnnModel):
        lines.append("variant knn")
        lines.append(f"k {model.k}")
        _emit_matrix(lines, "X", model.X)
        lines.append(f"y {_vec(model.y)}")
    elif isinstance(model, SvmModel):
        lines.append("variant svm")
        lines.append(f"kernel {model.kernel.kind} {model.kernel.sigma!r}")
        lines.append(f"C {model.C!r}")
        lines.append(f"b {model.b!r}")
        lines.append(f"support_idx {' '.join(str(i) for i in model.support_idx)}")
        lines.append(f"beta {_vec(model.beta)}")
        lines.append(f"support_y {_vec(model.support_y)}")
        _emit_matrix(lines, "support_X", model.support_X)
    elif isinstance(model, SlrModel):
        lines.append("variant slr")
        lines.append(f"w {_vec(model.w)}")
        lines.append(f"b {model.b!r}")
        lines.append(f"lambda {model.lam!r}")
    elif isinstance(model, S3vmModel):
        lines.append("variant s3vm")
        lines.append(f"w {_vec(model.w)}")
        lines.append(f"b {model.b!r}")
        lines.append(f"C1 {model.C1!r}")
        lines.append(f"C2 {model.C2!r}")
    elif isinstance(model, AdaboostModel):
        lines.append("variant adaboost")
        lines.append(f"rounds {model.rounds}")
        for stump, alpha in zip(model.stumps, model.alphas):
            lines.append(
                f"stump {stump.feature_index} {stump.threshold!r} "
                f"{stump.polarity!r} {alpha!r}"
            )
    elif isinstance(model, MklModel):
        lines.append("variant mkl")
        lines.append(f"weights {_vec(model.weights)}")
        for k in model.kernels:
            lines.append(f"kernel {k.kind} {k.sigma!r}")
        lines.append(f"C {model.svm.C!r}")
        lines.append(f"b {model.svm.b!r}")
        lines.append(f"objective {model.objective!r}")
        lines.append(f"support_idx {' '.join(str(i) for i in model.svm.support_idx)}")
        lines.append(f"support_beta {_vec(model.svm.beta)}")
        lines.append(f"support_y {_vec(model.svm.support_y)}")
        _emit_matrix(lines, "train_X", model.train_X)
    else:
        raise ContractError(f"cannot serialize {type(model).__name__}")
    return "\n".join(lines) + "\n"


class _Reader:
    def __init__(self, text):
        self.lines = [l for l in text.splitlines() if l.strip() and not l.startswith("#")]
        self.pos = 0

    def next(self):
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def fields(self):
        """Remaining 'key value' lines as a dict, reading matrices inline."""
        out = {}
        while self.pos < len(self.lines):
            line = self.next()
            parts = line.split(None, 1)
            key = parts[0]
            if key == "begin":
                name, rows, cols = parts[1].split()
                rows, cols = int(rows), int(cols)
                data = [self.next().split() for _ in range(rows)]
                assert self.next() == "end"
                out[name] = np.array(data, dtype=float).reshape(rows, cols)
            elif key in ("stump", "kernel"):
                out.setdefault(key + "s", []).append(parts[1])
            else:
                out[key] = parts[1] if len(parts) > 1 else ""
        return out


def load_model(text):
    r = _Reader(text)
    header = r.next().split()
    if header[:1] != ["fdibench-model"] or int(header[1]) != FORMAT_VERSION:
        raise ContractError("unsupported model format header")
    variant = r.next().split()[1]
    f = r.fields()

    def vec(s):
        return np.array([float(x) for x in s.split()]) if s else np.zeros(0)

    if variant == "perceptron":
        return PerceptronModel(w=vec(f["w"]), b=float(f["b"]),
                               gamma=float(f["gamma"]), epochs=int(f["epochs"]))
    if variant == "knn":
        return KnnModel(X=f["X"], y=vec(f["y"]), k=int(f["k"]))
    if variant == "svm":
        kind, sigma = f["kernels"][0].split()
        return SvmModel(
            support_idx=np.array([int(x) for x in f["support_idx"].split()] if f["support_idx"] else [], dtype=int),
            support_X=f["support_X"],
            support_y=vec(f["support_y"]),
            beta=vec(f["beta"]),
            b=float(f["b"]),
            kernel=KernelDescriptor(kind, float(sigma)),
            C=float(f["C"]),
        )
    if variant == "slr":
        return SlrModel(w=vec(f["w"]), b=float(f["b"]), lam=float(f["lambda"]))
    if variant == "s3vm":
        return S3vmModel(w=vec(f["w"]), b=float(f["b"]),
                         C1=float(f["C1"]), C2=float(f["C2"]))
    if variant == "adaboost":
        stumps, alphas = [], []
        for entry in f.get("stumps", []):
            fi, thr, pol, alpha = entry.split()
            stumps.append(StumpModel(int(fi), float(thr), float(pol)))
            alphas.append(float(alpha))
        return AdaboostModel(stumps=stumps, alphas=alphas, rounds=len(stumps))
    if variant == "mkl":
        kern = [KernelDescriptor(k.split()[0], float(k.split()[1])) for k in f["kernels"]]
        X = f["train_X"]
        idx = np.array([int(x) for x in f["support_idx"].split()] if f["support_idx"] else [],
                       dtype=int)
        sbeta = vec(f["support_beta"])
        sy = vec(f["support_y"])
        beta = np.zeros(len(X))
        beta[idx] = sbeta
        weights = vec(f["weights"])
        svm = SvmModel(support_idx=idx, support_X=X[idx], support_y=sy,
                       beta=sbeta, b=float(f["b"]),
                       kernel=kern[int(np.argmax(weights))], C=float(f["C"]),
                       dual_objective=float(f["objective"]))
        return MklModel(weights=weights, kernels=kern, svm=svm, train_X=X,
                        beta=beta, objective=float(f["objective"]))
    raise ContractError(f"unknown model variant {variant!r}")
