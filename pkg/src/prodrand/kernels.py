"""Hot loops, each with a numba build and a pure-numpy twin.

The public names (``track_vector`` ...) point at the numba build unless
``PRODRAND_DISABLE_NUMBA`` is set (``greedy_net`` always uses numpy). The
``*_numpy`` and ``*_numba`` variants stay importable so tests and the
benchmark can compare them directly.

Kernels signal a zero stretch by returning the offending step index instead of
raising, since nopython code cannot carry custom exception payloads.
"""

from __future__ import annotations

import numpy as np

from ._jit import USE_NUMBA, njit


# -- vector tracking ----------------------------------------------------------

def _track_vector_loop(mats, w):
    k = mats.shape[0]
    logs = np.empty(k)
    w = w.copy()
    for i in range(k):
        u = mats[i] @ w
        nrm = np.sqrt(np.dot(u, u))
        if nrm == 0.0:
            return logs, w, i
        logs[i] = np.log(nrm)
        w = u / nrm
    return logs, w, -1


def track_vector_numpy(mats, w):
    """Apply ``mats[0], mats[1], ...`` to ``w``, renormalising after every step.

    Returns ``(logs, w_final, fail)`` where ``logs[i] = log ||X_i w_{i-1}||`` and
    ``fail`` is the first step with zero stretch, or -1.
    """
    k = mats.shape[0]
    logs = np.empty(k)
    w = np.array(w, dtype=float)
    for i in range(k):
        u = mats[i] @ w
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            return logs, w, i
        logs[i] = np.log(nrm)
        w = u / nrm
    return logs, w, -1


# -- operator tracking --------------------------------------------------------

def _track_operator_loop(mats, M, rank_tol):
    k = mats.shape[0]
    logs = np.empty(k)
    for i in range(k):
        A = mats[i] @ M
        if rank_tol <= 0.0:
            top = np.linalg.svd(A)[1][0]
            if top == 0.0:
                return logs, M, i
            logs[i] = np.log(top)
            M = A / top
            continue
        U, s, _ = np.linalg.svd(A, full_matrices=False)
        top = s[0]
        if top == 0.0:
            return logs, M, i
        logs[i] = np.log(top)
        r = 1
        for j in range(1, s.shape[0]):
            if s[j] > rank_tol * top:
                r = j + 1
        M = np.ascontiguousarray(U[:, :r] * (s[:r] / top))
    return logs, M, -1


def track_operator_numpy(mats, M, rank_tol):
    """Thin operator tracking with an exact spectral norm per step.

    ``M`` (N x r) represents the normalised product up to a right factor with
    orthonormal rows, which never changes singular values. Each step forms
    ``A = X_i M``, records ``log ||A||`` from a thin SVD and keeps
    ``U Sigma / sigma_1``, dropping directions below ``rank_tol * sigma_1``.

    With ``rank_tol <= 0`` the state is simply ``A / ||A||``. The SVD route
    resolves small singular values only to ``eps * sigma_1`` in absolute
    terms, which inflates strongly graded products (diagonal factors) and can
    let a suppressed direction overtake the leader by mistake.
    """
    k = mats.shape[0]
    logs = np.empty(k)
    M = np.ascontiguousarray(M, dtype=float)
    for i in range(k):
        A = mats[i] @ M
        if rank_tol <= 0.0:
            top = np.linalg.norm(A, 2)
            if top == 0.0:
                return logs, M, i
            logs[i] = np.log(top)
            M = A / top
            continue
        U, s, _ = np.linalg.svd(A, full_matrices=False)
        top = s[0]
        if top == 0.0:
            return logs, M, i
        logs[i] = np.log(top)
        r = max(1, int(np.count_nonzero(s > rank_tol * top)))
        M = np.ascontiguousarray(U[:, :r] * (s[:r] / top))
    return logs, M, -1


# -- greedy farthest-point net ------------------------------------------------

def _greedy_net_loop(cands, cos_eps, max_points):
    C, d = cands.shape
    best = np.full(C, -2.0)
    chosen = np.empty(max_points, np.int64)
    m = 0
    idx = 0
    while m < max_points:
        chosen[m] = idx
        m += 1
        c = cands[idx].copy()
        worst = 3.0
        widx = -1
        for j in range(C):
            dot = 0.0
            for q in range(d):
                dot += cands[j, q] * c[q]
            if dot > best[j]:
                best[j] = dot
            if best[j] < worst:
                worst = best[j]
                widx = j
        if worst >= cos_eps:
            break
        idx = widx
    return chosen[:m]


def greedy_net_numpy(cands, cos_eps, max_points):
    """Farthest-point insertion over candidate unit vectors.

    Starts from ``cands[0]`` and repeatedly adds the candidate whose best cosine
    to the current net is smallest, until every candidate has cosine at least
    ``cos_eps`` to some net point. Returns the chosen row indices.
    """
    best = np.full(cands.shape[0], -2.0)
    chosen = []
    idx = 0
    while len(chosen) < max_points:
        chosen.append(idx)
        np.maximum(best, cands @ cands[idx], out=best)
        idx = int(np.argmin(best))
        if best[idx] >= cos_eps:
            break
    return np.asarray(chosen, dtype=np.int64)


# -- coverage -----------------------------------------------------------------

def _worst_cover_loop(points, net):
    P, d = points.shape
    worst = 2.0
    for i in range(P):
        bestdot = -2.0
        for j in range(net.shape[0]):
            dot = 0.0
            for q in range(d):
                dot += points[i, q] * net[j, q]
            if dot > bestdot:
                bestdot = dot
                if bestdot >= worst:
                    # this point cannot lower the minimum
                    break
        if bestdot < worst:
            worst = bestdot
    return worst


def worst_cover_numpy(points, net, chunk=4096):
    """min over ``points`` of the max cosine to ``net`` (1 = perfectly covered)."""
    worst = 2.0
    for start in range(0, points.shape[0], chunk):
        dots = points[start:start + chunk] @ net.T
        worst = min(worst, float(dots.max(axis=1).min()))
    return worst


_track_vector_nb = njit(_track_vector_loop)
_track_operator_nb = njit(_track_operator_loop)
_greedy_net_nb = njit(_greedy_net_loop)
_worst_cover_nb = njit(_worst_cover_loop)


def track_vector_numba(mats, w):
    return _track_vector_nb(np.ascontiguousarray(mats, dtype=float), np.ascontiguousarray(w, dtype=float))


def track_operator_numba(mats, M, rank_tol):
    return _track_operator_nb(
        np.ascontiguousarray(mats, dtype=float), np.ascontiguousarray(M, dtype=float), float(rank_tol)
    )


def greedy_net_numba(cands, cos_eps, max_points):
    return _greedy_net_nb(np.ascontiguousarray(cands, dtype=float), float(cos_eps), int(max_points))


def worst_cover_numba(points, net):
    return float(_worst_cover_nb(np.ascontiguousarray(points, dtype=float), np.ascontiguousarray(net, dtype=float)))


# the greedy pass is one gemv per insertion, which BLAS does faster than the
# fused loop (see benchmarks/bench_kernels.py), so it stays on numpy
greedy_net = greedy_net_numpy

if USE_NUMBA:
    track_vector = track_vector_numba
    track_operator = track_operator_numba
    worst_cover = worst_cover_numba
else:
    track_vector = track_vector_numpy
    track_operator = track_operator_numpy
    worst_cover = worst_cover_numpy
