"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen at import time from the FDIBENCH_BACKEND environment
variable ("numba" or "numpy"). Default is numba when importable, numpy
otherwise. Both backends stay accessible through IMPLEMENTATIONS so the
benchmark script can time them side by side.

Kernels are written as plain nopython-compatible loops; the numpy backend
replaces the quadratic scans with vectorized equivalents where that is
natural and otherwise runs the same loop uncompiled.
"""

from __future__ import annotations

import os

import numpy as np

BACKEND = os.environ.get("FDIBENCH_BACKEND", "").strip().lower()
if BACKEND not in ("numba", "numpy", ""):
    raise ValueError(f"FDIBENCH_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

_HAVE_NUMBA = False
if BACKEND != "numpy":
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        if BACKEND == "numba":
            raise
if not BACKEND:
    BACKEND = "numba" if _HAVE_NUMBA else "numpy"


# ------------------------------------------------------------------ SMO

def _smo_loop(K, y, C, tol, max_passes, seed):
    """SMO on the soft-margin dual with per-sample box constraints C[i].

    Maximal-violating-pair selection: with the error cache E_i = f(x_i) - y_i
    (bias excluded), pick i maximizing -E over the "up" set and j minimizing
    -E over the "down" set, take the analytic pair step, and stop when the
    pair gap m - M drops to the KKT tolerance. Returns
    (beta, b, iterations, max KKT violation at exit). `seed` is unused but
    kept for interface stability across backends.
    """
    m = K.shape[0]
    beta = np.zeros(m)
    b = 0.0
    errors = -y.astype(np.float64)  # f(x_i) - y_i with beta = 0, b = 0
    passes = 0
    while passes < max_passes:
        passes += 1
        # up set: beta can grow in the +y direction; down set: shrink
        i_up = -1
        up = -1e300
        j_down = -1
        down = 1e300
        for k in range(m):
            u = -errors[k]
            if (y[k] > 0 and beta[k] < C[k]) or (y[k] < 0 and beta[k] > 0.0):
                if u > up:
                    up = u
                    i_up = k
            if (y[k] < 0 and beta[k] < C[k]) or (y[k] > 0 and beta[k] > 0.0):
                if u < down:
                    down = u
                    j_down = k
        if i_up < 0 or j_down < 0 or up - down <= tol:
            break
        if not _smo_take_step(K, y, C, beta, errors, i_up, j_down, tol):
            # stuck on the extreme pair (eta ~ 0 or clipped step); fall back
            # to any making-progress partner from the down set
            moved = False
            for k in range(m):
                if k == j_down or k == i_up:
                    continue
                in_down = (y[k] < 0 and beta[k] < C[k]) or (y[k] > 0 and beta[k] > 0.0)
                if in_down and -errors[k] < up - tol:
                    if _smo_take_step(K, y, C, beta, errors, i_up, k, tol):
                        moved = True
                        break
            if not moved:
                break
    # bias from the error cache average over free vectors
    nfree = 0
    bsum = 0.0
    for i in range(m):
        if 1e-8 < beta[i] < C[i] - 1e-8:
            bsum += errors[i]
            nfree += 1
    if nfree > 0:
        b = -bsum / nfree
    else:
        lo = -1e300
        hi = 1e300
        for i in range(m):
            u = -errors[i]  # candidate bias: y_i minus decision-without-bias
            # KKT one-sided constraints at the box bounds
            if (y[i] < 0 and beta[i] < C[i] - 1e-8) or (y[i] > 0 and beta[i] > 1e-8):
                if u < hi:
                    hi = u
            if (y[i] > 0 and beta[i] < C[i] - 1e-8) or (y[i] < 0 and beta[i] > 1e-8):
                if u > lo:
                    lo = u
        if lo > -1e300 and hi < 1e300:
            b = 0.5 * (lo + hi)
        elif hi < 1e300:
            b = hi
        elif lo > -1e300:
            b = lo
    # final KKT violation (with bias)
    worst = 0.0
    for i in range(m):
        r = (errors[i] + b) * y[i]
        if beta[i] < C[i] - 1e-8 and -r > worst:
            worst = -r
        if beta[i] > 1e-8 and r > worst:
            worst = r
    return beta, b, passes, worst


def _smo_take_step(K, y, C, beta, errors, i, j, tol):
    if i == j:
        return False
    bi, bj = beta[i], beta[j]
    yi, yj = y[i], y[j]
    Ei, Ej = errors[i], errors[j]
    s = yi * yj
    if s > 0:
        L = max(0.0, bi + bj - C[i])
        H = min(C[j], bi + bj)
    else:
        L = max(0.0, bj - bi)
        H = min(C[j], C[i] + bj - bi)
    if H - L < 1e-12:
        return False
    eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
    if eta <= 1e-12:
        return False
    bj_new = bj + yj * (Ei - Ej) / eta
    if bj_new < L:
        bj_new = L
    elif bj_new > H:
        bj_new = H
    if abs(bj_new - bj) < 1e-10 * (bj_new + bj + 1e-10):
        return False
    bi_new = bi + s * (bj - bj_new)
    # snap numerical dust so bound membership tests stay exact
    if bi_new < 1e-10:
        bi_new = 0.0
    elif bi_new > C[i] - 1e-10:
        bi_new = C[i]
    if bj_new < 1e-10:
        bj_new = 0.0
    elif bj_new > C[j] - 1e-10:
        bj_new = C[j]
    beta[i] = bi_new
    beta[j] = bj_new
    di = yi * (bi_new - bi)
    dj = yj * (bj_new - bj)
    for k in range(K.shape[0]):
        errors[k] += di * K[i, k] + dj * K[j, k]
    return True


# ------------------------------------------------------------- stumps

def _best_stump_loop(X, y, w):
    """Exhaustive weighted-error scan over all features, midpoint thresholds
    and both polarities. Thresholds include -inf / +inf sentinels.

    Returns (feature, threshold, polarity, error). Polarity p predicts
    p * sign(value - threshold) with sign(0) = +1.
    """
    m, d = X.shape
    best_err = 2.0
    best_f = 0
    best_t = -np.inf
    best_p = 1.0
    for f in range(d):
        order = np.argsort(X[:, f], kind="mergesort")
        # err(+1, t) = weight of (+1 samples below-or-at t) + (-1 samples above t)
        # scan thresholds between consecutive sorted values
        wpos_below = 0.0
        wneg_below = 0.0
        total_pos = 0.0
        for k in range(m):
            if y[k] > 0:
                total_pos += w[k]
        total_neg = 0.0
        for k in range(m):
            if y[k] < 0:
                total_neg += w[k]
        # threshold -inf: everything predicted above
        err_plus = total_neg   # +1 everywhere -> all -1 samples wrong
        err_minus = total_pos
        if err_plus < best_err:
            best_err = err_plus
            best_f = f
            best_t = -np.inf
            best_p = 1.0
        if err_minus < best_err:
            best_err = err_minus
            best_f = f
            best_t = -np.inf
            best_p = -1.0
        for k in range(m):
            idx = order[k]
            if y[idx] > 0:
                wpos_below += w[idx]
            else:
                wneg_below += w[idx]
            if k + 1 < m and X[order[k + 1], f] == X[idx, f]:
                continue
            if k + 1 < m:
                t = 0.5 * (X[idx, f] + X[order[k + 1], f])
            else:
                t = np.inf
            # polarity +1: predict +1 strictly above t, -1 at/below
            err_plus = wpos_below + (total_neg - wneg_below)
            err_minus = wneg_below + (total_pos - wpos_below)
            if err_plus < best_err:
                best_err = err_plus
                best_f = f
                best_t = t
                best_p = 1.0
            if err_minus < best_err:
                best_err = err_minus
                best_f = f
                best_t = t
                best_p = -1.0
    return best_f, best_t, best_p, best_err


def _best_stump_numpy(X, y, w):
    """Vectorized equivalent of the stump scan."""
    m, d = X.shape
    pos = y > 0
    total_pos = w[pos].sum()
    total_neg = w[~pos].sum()
    best = (2.0, 0, -np.inf, 1.0)
    for f in range(d):
        order = np.argsort(X[:, f], kind="mergesort")
        xs = X[order, f]
        ws = w[order]
        ys = y[order]
        wpos_below = np.cumsum(np.where(ys > 0, ws, 0.0))
        wneg_below = np.cumsum(np.where(ys < 0, ws, 0.0))
        # candidate thresholds after each distinct run, plus the -inf sentinel
        distinct = np.ones(m, dtype=bool)
        distinct[:-1] = xs[1:] != xs[:-1]
        thr = np.empty(m)
        thr[:-1] = 0.5 * (xs[:-1] + xs[1:])
        thr[-1] = np.inf
        err_plus = np.concatenate(([total_neg], wpos_below + total_neg - wneg_below))
        err_minus = np.concatenate(([total_pos], wneg_below + total_pos - wpos_below))
        keep = np.concatenate(([True], distinct))
        thrs = np.concatenate(([-np.inf], thr))
        for pol, errs in ((1.0, err_plus), (-1.0, err_minus)):
            e = np.where(keep, errs, np.inf)
            k = int(np.argmin(e))
            if e[k] < best[0]:
                best = (float(e[k]), f, float(thrs[k]), pol)
    err, f, t, p = best
    return f, t, p, err


# ------------------------------------------------------------- k-NN

def _knn_loo_mistakes_loop(X, y, kmax):
    """Leave-one-out mistake counts for k = 1..kmax via brute-force scan.

    Majority vote with ties broken toward +1.
    """
    m = X.shape[0]
    mistakes = np.zeros(kmax, dtype=np.int64)
    d2 = np.empty(m)
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for c in range(X.shape[1]):
                diff = X[i, c] - X[j, c]
                acc += diff * diff
            d2[j] = acc
        d2[i] = np.inf
        order = np.argsort(d2, kind="mergesort")
        vote = 0.0
        for k in range(kmax):
            vote += y[order[k]]
            pred = 1.0 if vote >= 0.0 else -1.0
            if pred != y[i]:
                mistakes[k] += 1
    return mistakes


def _knn_loo_mistakes_numpy(X, y, kmax):
    m = X.shape[0]
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="mergesort")[:, :kmax]
    votes = np.cumsum(y[order], axis=1)
    preds = np.where(votes >= 0.0, 1.0, -1.0)
    return (preds != y[:, None]).sum(axis=0).astype(np.int64)


def _knn_predict_loop(Xtr, ytr, Xte, k):
    n = Xte.shape[0]
    m = Xtr.shape[0]
    out = np.empty(n)
    d2 = np.empty(m)
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for c in range(Xtr.shape[1]):
                diff = Xte[i, c] - Xtr[j, c]
                acc += diff * diff
            d2[j] = acc
        order = np.argsort(d2, kind="mergesort")
        vote = 0.0
        for t in range(k):
            vote += ytr[order[t]]
        out[i] = 1.0 if vote >= 0.0 else -1.0
    return out


def _knn_predict_numpy(Xtr, ytr, Xte, k):
    d2 = ((Xte[:, None, :] - Xtr[None, :, :]) ** 2).sum(axis=2)
    order = np.argsort(d2, axis=1, kind="mergesort")[:, :k]
    votes = ytr[order].sum(axis=1)
    return np.where(votes >= 0.0, 1.0, -1.0)


# ------------------------------------------------------- perceptron

def _perceptron_loop(X, y, gamma, epochs):
    """Batch perceptron epochs; stops early on a clean epoch.

    Returns (w, b, epochs run, made clean epoch flag).
    """
    m, d = X.shape
    w = np.zeros(d)
    b = 0.0
    run = 0
    clean = False
    for _ in range(epochs):
        run += 1
        updates = 0
        for i in range(m):
            act = b
            for c in range(d):
                act += w[c] * X[i, c]
            pred = 1.0 if act >= 0.0 else -1.0
            if pred != y[i]:
                factor = gamma * (y[i] - pred)
                for c in range(d):
                    w[c] += factor * X[i, c]
                b += factor
                updates += 1
        if updates == 0:
            clean = True
            break
    return w, b, run, clean


# ---------------------------------------------------------- dispatch

_PY_IMPLS = {
    "smo_solve": _smo_loop,
    "best_stump": _best_stump_loop,
    "knn_loo_mistakes": _knn_loo_mistakes_loop,
    "knn_predict": _knn_predict_loop,
    "perceptron_fit": _perceptron_loop,
}

_NUMPY_IMPLS = {
    "smo_solve": _smo_loop,           # inherently sequential; runs uncompiled
    "best_stump": _best_stump_numpy,
    "knn_loo_mistakes": _knn_loo_mistakes_numpy,
    "knn_predict": _knn_predict_numpy,
    "perceptron_fit": _perceptron_loop,
}

IMPLEMENTATIONS = {"numpy": _NUMPY_IMPLS}

if _HAVE_NUMBA:
    _take_step_jit = njit(cache=True, nogil=True)(_smo_take_step)

    def _make_smo_jit():
        src = _smo_loop
        # rebind the helper so the jitted loop calls the jitted step
        import types

        g = dict(src.__globals__)
        g["_smo_take_step"] = _take_step_jit
        clone = types.FunctionType(src.__code__, g, src.__name__, src.__defaults__)
        return njit(cache=True, nogil=True)(clone)

    _NUMBA_IMPLS = {
        "smo_solve": _make_smo_jit(),
        "best_stump": njit(cache=True, nogil=True)(_best_stump_loop),
        "knn_loo_mistakes": njit(cache=True, nogil=True)(_knn_loo_mistakes_loop),
        "knn_predict": njit(cache=True, nogil=True)(_knn_predict_loop),
        "perceptron_fit": njit(cache=True, nogil=True)(_perceptron_loop),
    }
    IMPLEMENTATIONS["numba"] = _NUMBA_IMPLS

_ACTIVE = IMPLEMENTATIONS[BACKEND]

smo_solve = _ACTIVE["smo_solve"]
best_stump = _ACTIVE["best_stump"]
knn_loo_mistakes = _ACTIVE["knn_loo_mistakes"]
knn_predict = _ACTIVE["knn_predict"]
perceptron_fit = _ACTIVE["perceptron_fit"]
