"""Trial generation: clean measurements, sparse observable attacks,
column-space unobservable attacks, and cluster-partitioned datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dc_grid import DcModel
from .errors import ContractError, DiagnosticError, GenerationError, InfeasibleAttackError

ATTACK_KINDS = ("none", "observable", "unobservable")
MIN_MAGNITUDE_FACTOR = 1e-3   # support entries must exceed this times sigma_z
ATTACK_DRAW_RETRIES = 20      # redraws of c for a fixed support
SUPPORT_RETRIES = 200         # support rebuilds before giving up (unobservable)


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    kappa: int
    seed: int

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ContractError(f"unknown attack kind {self.kind!r}")
        if self.kind == "none" and self.kappa != 0:
            raise ContractError("kind='none' requires kappa = 0")
        if self.kind != "none" and self.kappa < 1:
            raise ContractError("attacks need kappa >= 1")


@dataclass
class Trial:
    z: np.ndarray
    a: np.ndarray
    z_tilde: np.ndarray
    support: np.ndarray          # sorted attacked measurement indices
    labels: np.ndarray           # +-1 per measurement
    c: np.ndarray | None = None  # state-attack vector for unobservable trials


@dataclass
class LabeledDataset:
    samples: list                # M feature vectors; vector g has the cluster size
    labels: np.ndarray           # (M,) of +-1
    n_clusters: int
    cluster_of_measurement: np.ndarray   # (N,) cluster index per measurement
    trial_ids: np.ndarray        # (M,)
    cluster_ids: np.ndarray      # (M,)

    def __len__(self):
        return len(self.samples)

    def as_matrix(self):
        """Samples as a dense (M, f) matrix; requires uniform cluster sizes."""
        sizes = {len(s) for s in self.samples}
        if len(sizes) != 1:
            raise ContractError("clusters have unequal sizes; samples are ragged")
        return np.asarray(self.samples, dtype=float)


def _min_unobservable_kappa(model):
    return model.n_measurements - model.n_states + 1


def generate_trial(model: DcModel, spec: AttackSpec) -> Trial:
    """Generate one scenario. Deterministic given (model, spec)."""
    n = model.n_measurements
    if spec.kappa > n:
        raise ContractError(f"kappa = {spec.kappa} exceeds N = {n}")
    if spec.kind == "unobservable" and spec.kappa < _min_unobservable_kappa(model):
        raise ContractError(
            f"unobservable attacks need kappa >= N - D + 1 = {_min_unobservable_kappa(model)}"
        )
    rng = np.random.default_rng(spec.seed)
    z = model.clean_measurements() + rng.normal(0.0, model.noise_std)
    sigma_z = float(np.std(z))
    mu_z = float(np.mean(z))

    a = np.zeros(n)
    c = None
    if spec.kind == "none":
        support = np.empty(0, dtype=int)
    elif spec.kind == "observable":
        support = np.sort(rng.choice(n, size=spec.kappa, replace=False))
        floor = MIN_MAGNITUDE_FACTOR * sigma_z
        vals = rng.normal(mu_z, sigma_z, size=spec.kappa)
        for _ in range(ATTACK_DRAW_RETRIES):
            small = np.abs(vals) < floor
            if not small.any():
                break
            vals[small] = rng.normal(mu_z, sigma_z, size=int(small.sum()))
        else:
            raise GenerationError("could not draw nonzero observable attack entries")
        a[support] = vals
    else:
        for _ in range(SUPPORT_RETRIES):
            support = _feasible_support(model, spec.kappa, rng)
            if support is None:
                continue
            try:
                a, c = _unobservable_attack(model, support, rng, sigma_z)
                break
            except InfeasibleAttackError:
                continue
        else:
            raise GenerationError(
                f"no feasible unobservable support found in {SUPPORT_RETRIES} builds "
                f"(kappa = {spec.kappa})"
            )

    labels = np.full(n, -1.0)
    labels[support] = 1.0
    return Trial(z=z, a=a, z_tilde=z + a, support=support, labels=labels, c=c)


def make_unobservable_attack(model: DcModel, support, seed):
    """Attack a = H c supported on `support`, with support-entry spread matched
    to the clean-measurement spread of a fresh trial draw.

    Raises InfeasibleAttackError (a GenerationError) when the support admits
    no usable direction or the redraw budget runs out.
    """
    rng = np.random.default_rng(seed)
    z = model.clean_measurements() + rng.normal(0.0, model.noise_std)
    return _unobservable_attack(model, np.asarray(sorted(support), dtype=int),
                                rng, float(np.std(z)))


def _effective_basis(H, zero_rows):
    """Orthonormal basis (d, e) of the null space of H[zero_rows] with the
    constant angle-shift direction removed, or None when nothing usable is
    left. H @ ones = 0 makes the constant direction useless for attacks.
    """
    d = H.shape[1]
    if len(zero_rows) == 0:
        basis = np.eye(d)
    else:
        H_z = H[zero_rows]
        _, s, vt = np.linalg.svd(H_z)
        tol = max(H_z.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)
        null_dim = d - int(np.sum(s > tol))
        if null_dim == 0:
            return None
        basis = vt[d - null_dim:].T
    ones = np.ones(d) / np.sqrt(d)
    proj = basis - np.outer(ones, ones @ basis)
    q, r = np.linalg.qr(proj)
    keep = np.abs(np.diag(r)) > 1e-10
    effective = q[:, keep]
    return effective if effective.shape[1] > 0 else None


def _feasible_support(model, kappa, rng):
    """Build a support of exact size kappa whose complement admits an attack
    direction leaving every support row generically nonzero.

    Uniform rejection is hopeless on the larger systems: at mid-range kappa
    almost every uniformly drawn complement pins extra rows to zero through
    the network equations. Zero rows are instead added one at a time in
    seeded random order, each accepted only when it does not force any row
    outside the zero set to vanish too. Returns None when a build dead-ends
    (the caller retries with fresh randomness).
    """
    H = model.H
    n = H.shape[0]
    target = n - kappa
    order = rng.permutation(n)
    if target == 0:
        return np.arange(n)
    zero = np.zeros(n, dtype=bool)
    count = 0
    for row in order:
        if zero[row]:
            continue
        cand = np.flatnonzero(zero).tolist() + [int(row)]
        effective = _effective_basis(H, cand)
        if effective is None:
            continue
        A = H @ effective
        scale = np.abs(A).max()
        if scale == 0.0:
            continue
        # zeroing one row can force others through the network equations;
        # take the whole closure, rejecting the row only on overshoot
        pinned = np.abs(A).max(axis=1) <= 1e-8 * scale
        if np.count_nonzero(pinned) > target:
            continue
        zero = pinned
        count = int(np.count_nonzero(zero))
        if count == target:
            return np.flatnonzero(~zero)
    return None


def _support_algebra(model, support):
    """Admissible directions for a given support, cached on the model.

    Returns (effective, A_sup) with `effective` (d, e) spanning the null space
    of the off-support rows minus the constant angle-shift direction and
    A_sup = H[support] @ effective, or None when the support is infeasible
    (no direction, or some support row is forced to zero). The result is a
    deterministic function of (model, support), so caching never perturbs
    seeded draws.
    """
    cache = getattr(model, "_null_cache", None)
    if cache is None:
        cache = {}
        model._null_cache = cache
    key = support.tobytes()
    if key in cache:
        return cache[key]
    if len(cache) > 4096:      # constructed supports rarely repeat; stay bounded
        cache.clear()

    n = model.H.shape[0]
    outside = np.setdiff1d(np.arange(n), support)
    result = None
    effective = _effective_basis(model.H, outside)
    if effective is not None:
        A_sup = model.H[support] @ effective
        # a support row inside the off-support row span is pinned to zero
        # for every admissible c, so no draw can clear the floor
        if A_sup.size and np.abs(A_sup).max(axis=1).min() > 1e-10:
            result = (effective, A_sup)
    cache[key] = result
    return result


def _unobservable_attack(model, support, rng, sigma_z):
    if len(support) < _min_unobservable_kappa(model):
        raise ContractError("support smaller than N - D + 1")
    algebra = _support_algebra(model, support)
    if algebra is None:
        raise InfeasibleAttackError(
            f"support {support.tolist()} admits no usable attack direction"
        )
    effective, A_sup = algebra

    floor = MIN_MAGNITUDE_FACTOR * sigma_z
    W = rng.normal(size=(effective.shape[1], ATTACK_DRAW_RETRIES))
    A = A_sup @ W                              # candidate support values
    spread = A.std(axis=0)
    ok_spread = spread > 0.0
    scale = np.where(ok_spread, sigma_z / np.where(ok_spread, spread, 1.0), 0.0)
    passing = ok_spread & (np.abs(A) * scale >= floor).all(axis=0)
    hits = np.flatnonzero(passing)
    if len(hits):
        j = int(hits[0])
        a_full = np.zeros(model.H.shape[0])
        a_full[support] = A[:, j] * scale[j]   # off-support stays exactly zero
        c = effective @ W[:, j] * scale[j]
        return a_full, c
    raise InfeasibleAttackError(
        f"retry budget exhausted for support {support.tolist()}; "
        "the admissible directions leave some support entries below the floor"
    )


def assemble_dataset(trials, G: int) -> LabeledDataset:
    """Partition measurements into G contiguous, near-equal clusters and emit
    one sample per (trial, cluster). A cluster is labeled attacked when any
    of its measurements is attacked.
    """
    if not trials:
        raise ContractError("empty trial list")
    n = len(trials[0].z)
    if not 1 <= G <= n:
        raise ContractError(f"G must lie in [1, {n}]")
    bounds = np.linspace(0, n, G + 1).round().astype(int)
    cluster_of = np.empty(n, dtype=int)
    for g in range(G):
        cluster_of[bounds[g]:bounds[g + 1]] = g

    samples = []
    labels = []
    trial_ids = []
    cluster_ids = []
    for t_id, tr in enumerate(trials):
        if len(tr.z) != n:
            raise ContractError("trials come from models of different sizes")
        attacked = np.zeros(n, dtype=bool)
        attacked[tr.support] = True
        for g in range(G):
            lo, hi = bounds[g], bounds[g + 1]
            samples.append(np.array(tr.z_tilde[lo:hi]))
            labels.append(1.0 if attacked[lo:hi].any() else -1.0)
            trial_ids.append(t_id)
            cluster_ids.append(g)
    return LabeledDataset(
        samples=samples,
        labels=np.array(labels),
        n_clusters=G,
        cluster_of_measurement=cluster_of,
        trial_ids=np.array(trial_ids),
        cluster_ids=np.array(cluster_ids),
    )


def separation_stats(dataset: LabeledDataset, max_pairs: int = 10 ** 6, seed: int = 0):
    """Mean pairwise Euclidean distances within and across the two classes.

    Falls back to a seeded subsample of pairs when a class pair count
    exceeds max_pairs.
    """
    X = dataset.as_matrix()
    y = dataset.labels
    pos = X[y > 0]
    neg = X[y < 0]
    if len(pos) == 0 or len(neg) == 0:
        raise DiagnosticError("both classes must be present")
    rng = np.random.default_rng(seed)

    def mean_within(A):
        m = len(A)
        total = m * (m - 1) // 2
        if total == 0:
            return 0.0
        if total <= max_pairs:
            iu = np.triu_indices(m, k=1)
            return float(np.linalg.norm(A[iu[0]] - A[iu[1]], axis=1).mean())
        i = rng.integers(0, m, size=max_pairs)
        j = rng.integers(0, m, size=max_pairs)
        ok = i != j
        return float(np.linalg.norm(A[i[ok]] - A[j[ok]], axis=1).mean())

    def mean_across(A, B):
        total = len(A) * len(B)
        if total <= max_pairs:
            d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
            return float(d.mean())
        i = rng.integers(0, len(A), size=max_pairs)
        j = rng.integers(0, len(B), size=max_pairs)
        return float(np.linalg.norm(A[i] - B[j], axis=1).mean())

    return {
        "within_attacked": mean_within(pos),
        "within_secure": mean_within(neg),
        "across": mean_across(pos, neg),
    }
