"""The kappa/N sweep harness: data generation per grid point, detector
training and scoring, deterministic aggregation, and CSV/manifest export.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import special

from . import batch, fusion
from .attacks import AttackSpec, assemble_dataset, generate_trial
from .dc_grid import DcModel, build_dc_model, wls_estimate
from .errors import ConfigError, ContractError
from .matpower import BUILTIN_NAMES, load_builtin
from .metrics import METRIC_NAMES, score

DEFAULT_GRID = tuple(round(0.1 * k, 10) for k in range(1, 11))
DEFAULT_REPS = 50
TRIALS_PER_SIDE = 50
DETECTOR_NAMES = (
    "sve", "perceptron", "knn", "svm-linear", "svm-gaussian", "slr",
    "s3vm", "adaboost", "mkl",
)


@dataclass(frozen=True)
class SweepConfig:
    system: str
    detectors: tuple
    grid: tuple = DEFAULT_GRID
    repetitions: int = DEFAULT_REPS
    noise_scale: float = 0.01
    seed: int = 0
    confidence: float = 0.95
    trials_per_side: int = TRIALS_PER_SIDE

    def validate(self):
        if self.system not in BUILTIN_NAMES:
            raise ConfigError(f"unknown system {self.system!r}; choose from {BUILTIN_NAMES}")
        if not self.detectors:
            raise ConfigError("at least one detector is required")
        for d in self.detectors:
            if d not in DETECTOR_NAMES:
                raise ConfigError(f"unknown detector {d!r}; choose from {DETECTOR_NAMES}")
        if not self.grid or any(not 0.0 < g <= 1.0 for g in self.grid):
            raise ConfigError("grid points must lie in (0, 1]")
        if list(self.grid) != sorted(set(self.grid)):
            raise ConfigError("grid points must be strictly increasing")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.noise_scale <= 0:
            raise ConfigError("noise_scale must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must lie in (0, 1)")


@dataclass
class SweepPoint:
    kappa_over_n: float
    kappa: int
    kind: str
    means: dict       # metric -> {detector: value}
    stds: dict
    undefined_counts: dict


@dataclass
class SweepResult:
    config: SweepConfig
    points: list
    kappa_star: int
    n_measurements: int


def _trial_seed(master, point_idx, rep, role, trial_idx):
    """Derived seed; role 0 = train, 1 = test, so pools never collide."""
    ss = np.random.SeedSequence(entropy=master,
                                spawn_key=(point_idx, rep, role, trial_idx))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _leverages(model: DcModel):
    """Diagonal of the weighted hat matrix, cached on the model."""
    h = getattr(model, "_leverage_cache", None)
    if h is None:
        W = model.H / model.noise_std[:, None]
        h = np.einsum("ij,ji->i", W, np.linalg.pinv(W))
        model._leverage_cache = h
    return h


def sve_as_classifier(model: DcModel, trial, confidence: float = 0.95):
    """Per-measurement lift of the residual detector: flag measurement i when
    its studentized residual exceeds the two-sided Normal quantile.

    The WLS projection shrinks the raw residual of measurement i by
    sqrt(1 - h_i) at leverage h_i, so the plain noise-normalized residual
    under-flags clean data; studentizing restores the nominal rate.
    """
    x_hat = wls_estimate(model, trial.z_tilde)
    shrink = np.sqrt(np.clip(1.0 - _leverages(model), 1e-12, None))
    resid = np.abs(trial.z_tilde - model.H @ x_hat) / (model.noise_std * shrink)
    thresh = math.sqrt(2.0) * special.erfinv(confidence)
    return np.where(resid > thresh, 1.0, -1.0)


def _median_sigma(X, cap=2000):
    """Median pairwise distance heuristic for the Gaussian width."""
    Xs = X[:cap]
    d2 = ((Xs[:, None, :] - Xs[None, :, :]) ** 2).sum(axis=2)
    vals = np.sqrt(d2[np.triu_indices(len(Xs), k=1)])
    med = float(np.median(vals))
    return med if med > 0 else 1.0


def _train_detector(name, train_ds, test_ds, config):
    if name == "perceptron":
        return batch.train_perceptron(train_ds)
    if name == "knn":
        return batch.train_knn(train_ds)
    if name == "svm-linear":
        return batch.train_svm(train_ds, C=1.0, kernel=batch.KernelDescriptor("linear"))
    if name == "svm-gaussian":
        # narrow width relative to the data spread: clean measurements sit in
        # tight clusters around the operating point, so local evidence wins
        sigma = 0.01 * _median_sigma(train_ds.as_matrix())
        return batch.train_svm(train_ds, C=1.0,
                               kernel=batch.KernelDescriptor("gaussian", sigma))
    if name == "slr":
        return batch.train_slr(train_ds, omega=0.01)
    if name == "s3vm":
        return batch.train_s3vm(train_ds, test_ds.as_matrix(), C1=1.0, C2=1.0)
    if name == "adaboost":
        return fusion.train_adaboost(train_ds, T=50)
    if name == "mkl":
        sigma = 0.125 * _median_sigma(train_ds.as_matrix())
        kern = [batch.KernelDescriptor("linear"), batch.KernelDescriptor("gaussian", sigma)]
        return fusion.train_mkl(train_ds, kern, C=10.0)
    raise ConfigError(f"unknown detector {name!r}")


def _run_cell(model, config, point_idx, kappa, kind, rep):
    """One (grid point, repetition): fresh train/test pools, train each
    detector, score on the test pool. Returns {detector: report dict}.
    """
    n = model.n_measurements
    pools = []
    for role in (0, 1):
        trials = []
        for t in range(config.trials_per_side):
            seed = _trial_seed(config.seed, point_idx, rep, role, t)
            spec = AttackSpec(kind=kind, kappa=kappa, seed=seed)
            trials.append(generate_trial(model, spec))
        pools.append(trials)
    train_trials, test_trials = pools
    train_ds = assemble_dataset(train_trials, G=n)
    test_ds = assemble_dataset(test_trials, G=n)

    out = {}
    for name in config.detectors:
        if name == "sve":
            preds = np.concatenate([
                sve_as_classifier(model, tr, config.confidence) for tr in test_trials
            ])
            labels = np.concatenate([tr.labels for tr in test_trials])
        elif len(set(train_ds.labels.tolist())) == 1:
            # single-class pool (e.g. kappa = N attacks every measurement);
            # the only learnable model is the constant class
            preds = np.full(len(test_ds.labels), train_ds.labels[0])
            labels = test_ds.labels
        else:
            detector = _train_detector(name, train_ds, test_ds, config)
            preds = detector.predict(test_ds.as_matrix())
            labels = test_ds.labels
        _, report = score(preds, labels)
        out[name] = report.as_dict()
    return out


def run_sweep(config: SweepConfig) -> SweepResult:
    """Execute the full sweep. Deterministic given the config, regardless of
    worker count (BENCH_THREADS caps concurrency).
    """
    config.validate()
    case = load_builtin(config.system)
    model = build_dc_model(case, config.noise_scale)
    n, d = model.n_measurements, model.n_states
    kappa_star = n - d + 1

    cells = []
    for p_idx, ratio in enumerate(config.grid):
        kappa = max(1, int(round(ratio * n)))
        kind = "unobservable" if kappa >= kappa_star else "observable"
        for rep in range(config.repetitions):
            cells.append((p_idx, kappa, kind, rep))

    max_workers = int(os.environ.get("BENCH_THREADS", "0") or 0)
    if max_workers < 1:
        max_workers = min(4, os.cpu_count() or 1)

    def work(cell):
        p_idx, kappa, kind, rep = cell
        return _run_cell(model, config, p_idx, kappa, kind, rep)

    if max_workers == 1:
        results = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(work, cells))

    points = []
    for p_idx, ratio in enumerate(config.grid):
        kappa = max(1, int(round(ratio * n)))
        kind = "unobservable" if kappa >= kappa_star else "observable"
        per_rep = [r for c, r in zip(cells, results) if c[0] == p_idx]
        means, stds, undef = {}, {}, {}
        for metric in METRIC_NAMES:
            means[metric], stds[metric], undef[metric] = {}, {}, {}
            for det in config.detectors:
                vals = np.array([rep_out[det][metric] for rep_out in per_rep])
                defined = vals[~np.isnan(vals)]
                undef[metric][det] = int(np.isnan(vals).sum())
                if len(defined):
                    means[metric][det] = float(defined.mean())
                    stds[metric][det] = float(defined.std(ddof=0))
                else:
                    means[metric][det] = float("nan")
                    stds[metric][det] = float("nan")
        points.append(SweepPoint(kappa_over_n=ratio, kappa=kappa, kind=kind,
                                 means=means, stds=stds, undefined_counts=undef))
    return SweepResult(config=config, points=points, kappa_star=kappa_star,
                       n_measurements=n)


def export_results(result: SweepResult, path):
    """CSV rows per (point, detector, metric) plus a JSON-lines manifest next
    to it for exact reproduction.
    """
    cfg = result.config
    lines = ["system,detector,kappa_over_N,kappa,metric,mean,std,reps,seed"]
    for point in result.points:
        for det in cfg.detectors:
            for metric in METRIC_NAMES:
                lines.append(
                    f"{cfg.system},{det},{point.kappa_over_n!r},{point.kappa},"
                    f"{metric},{point.means[metric][det]!r},"
                    f"{point.stds[metric][det]!r},{cfg.repetitions},{cfg.seed}"
                )
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        manifest = {
            "config": asdict(cfg),
            "kappa_star": result.kappa_star,
            "n_measurements": result.n_measurements,
            "undefined_counts": [
                {"kappa_over_N": p.kappa_over_n, "counts": p.undefined_counts}
                for p in result.points
            ],
        }
        with open(str(path) + ".manifest.jsonl", "w") as fh:
            fh.write(json.dumps(manifest, sort_keys=True) + "\n")
    except OSError as exc:
        raise ContractError(f"cannot write results to {path}: {exc}") from exc
    return path
