"""Stable log-norms of long products ``Pi_n = X_n ... X_1``.

Nothing here ever forms ``Pi_n``: state is renormalised after every step and
only logarithms accumulate, so there is no overflow for any ``n``.

Two tracking modes:

* vector tracked: ``w_i = X_i w_{i-1} / ||X_i w_{i-1}||`` with stretch
  ``y_i = log ||X_i w_{i-1}||``, giving ``log ||Pi_n v||``;
* operator tracked: ``log ||Pi_n||`` with the exact spectral norm of every
  partial product.

Logs are natural and of norms (not squared norms) throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .ensembles import (
    ROTATION_INVARIANT,
    EnsembleSpec,
    Family,
    StepBatch,
    act,
    draw_batch,
    haar_frames,
    haar_vectors,
)
from .errors import CapabilityError, DegenerateTrajectoryError, ParameterError, UsageError
from .rng import SeedLike, make_rng

EPS = float(np.finfo(float).eps)
DEFAULT_NORM_CAP = 512
CHUNK_ELEMS = 2**21


class Mode(str, Enum):
    VECTOR = "VectorTracked"
    OPERATOR = "OperatorTracked"


@dataclass(frozen=True)
class ProductTrajectory:
    mode: Mode
    step_logs: np.ndarray
    cum_log: float
    n_steps: int
    n_dim: int
    log_sbar_terms: np.ndarray | None = None
    seed: object = None

    def to_record(self, include_steps: bool = False) -> dict:
        rec = {
            "mode": self.mode.value,
            "n_dim": self.n_dim,
            "n_steps": self.n_steps,
            "cum_log": self.cum_log,
            "seed": _seed_repr(self.seed),
        }
        if include_steps:
            rec["step_logs"] = [float(y) for y in self.step_logs]
        return rec


def _seed_repr(seed):
    if seed is None or isinstance(seed, (int, np.integer)):
        return None if seed is None else int(seed)
    if isinstance(seed, np.random.Generator):
        return None
    return [int(s) for s in seed]


def _check_steps(n) -> int:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"number of steps must be a positive integer, got {n!r}")
    return int(n)


def _matrix_spec(spec: EnsembleSpec):
    if spec.family is Family.HAAR_VECTOR:
        raise UsageError("HaarVector has no matrices to multiply")


def _unit(v, N: int) -> np.ndarray:
    if v is None:
        v = np.zeros(N)
        v[0] = 1.0
        return v
    v = np.asarray(v, dtype=float)
    if v.shape != (N,):
        raise ParameterError(f"v must have shape ({N},), got {v.shape}")
    if abs(np.linalg.norm(v) - 1.0) > 8 * EPS:
        raise ParameterError("v must be a unit vector (to 8 machine epsilons)")
    return v


def default_rank_tol(spec: EnsembleSpec) -> float:
    """Truncation level for operator tracking.

    For rotation invariant factors a direction below rounding level relative
    to the top is mixed with rounding noise by the next factor anyway, so
    dropping it loses nothing. Other factors (diagonal ones in particular) can
    let a suppressed direction overtake the leader later, so nothing is dropped.
    """
    return spec.n_dim * EPS if spec.family in ROTATION_INVARIANT else 0.0


def _chunk_len(N: int) -> int:
    return max(1, CHUNK_ELEMS // (N * N))


def iter_step_batches(spec: EnsembleSpec, n: int, rng: np.random.Generator) -> Iterator[StepBatch]:
    """Yield the n factors of one product in chunks, in multiplication order.

    Every product routine consumes draws through this generator, so the same
    ``(spec, seed)`` always produces the same factors regardless of which
    quantity is computed from them.
    """
    k = _chunk_len(spec.n_dim)
    for start in range(0, n, k):
        yield draw_batch(spec, min(k, n - start), rng)


def draw_factors(spec: EnsembleSpec, n: int, seed: SeedLike) -> np.ndarray:
    """The (n, N, N) stack of factors that the product routines see for ``seed``."""
    _matrix_spec(spec)
    rng = make_rng(seed)
    return np.concatenate([b.mats for b in iter_step_batches(spec, _check_steps(n), rng)])


# -- single trajectories over explicit matrices -------------------------------

def _vector_over(batches: Iterable[StepBatch], v: np.ndarray, rotated: bool):
    logs, sbar = [], []
    w = v
    done = 0
    for b in batches:
        y, w, fail = kernels.track_vector(b.mats, w)
        if fail >= 0:
            raise DegenerateTrajectoryError(done + fail + 1)
        logs.append(y)
        if rotated:
            sbar.append(np.log(b.s_bar))
        done += b.mats.shape[0]
    return np.concatenate(logs), (np.concatenate(sbar) if rotated else None)


def _operator_over(batches: Iterable[StepBatch], N: int, rank_tol: float, transpose: bool = False):
    logs = []
    M = np.eye(N)
    done = 0
    for b in batches:
        mats = np.swapaxes(b.mats, 1, 2) if transpose else b.mats
        y, M, fail = kernels.track_operator(mats, M, rank_tol)
        if fail >= 0:
            raise DegenerateTrajectoryError(done + fail + 1, f"product vanished at step {done + fail + 1}")
        logs.append(y)
        done += b.mats.shape[0]
    return np.concatenate(logs)


def trajectory_from_matrices(mats, v=None, mode: Mode = Mode.VECTOR, rank_tol: float | None = None) -> ProductTrajectory:
    """Track an explicit (n, N, N) sequence of factors, ``mats[0]`` applied first."""
    mats = np.asarray(mats, dtype=float)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] < 1:
        raise ParameterError("mats must have shape (n, N, N) with n >= 1")
    n, N = mats.shape[0], mats.shape[1]
    batch = [StepBatch(mats)]
    if Mode(mode) is Mode.VECTOR:
        logs, _ = _vector_over(batch, _unit(v, N), rotated=False)
    else:
        logs = _operator_over(batch, N, 0.0 if rank_tol is None else rank_tol)
    return ProductTrajectory(Mode(mode), logs, float(math.fsum(logs)), n, N)


def product_log_vector(spec: EnsembleSpec, n: int, v=None, seed: SeedLike = 0, method: str = "matrix") -> ProductTrajectory:
    """Vector-tracked trajectory of ``Pi_n v``; ``cum_log = log ||Pi_n v||``.

    ``method="matrix"`` forms every factor (the same factors as
    :func:`product_log_opnorm` for the same seed); ``method="action"`` draws
    each ``X_i w_{i-1}`` from its exact law without forming ``X_i``.
    ``log_sbar_terms`` is filled for RotatedSpectrum.
    """
    _matrix_spec(spec)
    n = _check_steps(n)
    N = spec.n_dim
    v = _unit(v, N)
    rng = make_rng(seed)
    rotated = spec.family is Family.ROTATED
    if method == "matrix":
        logs, sbar = _vector_over(iter_step_batches(spec, n, rng), v, rotated)
    elif method == "action":
        logs = np.empty(n)
        sbar = np.empty(n) if rotated else None
        w = v[None, :]
        for i in range(n):
            u, sb = act(spec, w, rng)
            nrm = float(np.linalg.norm(u))
            if nrm == 0.0:
                raise DegenerateTrajectoryError(i + 1)
            logs[i] = math.log(nrm)
            if rotated:
                sbar[i] = math.log(sb[0])
            w = u / nrm
    else:
        raise ParameterError(f"unknown method {method!r}; expected 'matrix' or 'action'")
    return ProductTrajectory(Mode.VECTOR, logs, float(math.fsum(logs)), n, N, sbar, seed)


def product_log_opnorm(
    spec: EnsembleSpec,
    n: int,
    seed: SeedLike = 0,
    *,
    cap: int | None = DEFAULT_NORM_CAP,
    rank_tol: float | None = None,
    order: str = "left",
) -> ProductTrajectory:
    """Operator-tracked trajectory; ``cum_log = log ||Pi_n||``.

    Each step records the exact spectral norm of the renormalised partial
    product (thin SVD). Directions whose singular value falls below
    ``rank_tol * sigma_1`` are dropped (default :func:`default_rank_tol`),
    which keeps rank-deficient products cheap. ``order="right"`` computes ``||X_1 ... X_n||`` from the same factors.
    """
    _matrix_spec(spec)
    n = _check_steps(n)
    N = spec.n_dim
    if cap is not None and N > cap:
        raise CapabilityError(
            f"n_dim={N} exceeds the exact-norm cap {cap}; use the eps-net estimator (prodrand.nets) instead"
        )
    if order not in ("left", "right"):
        raise ParameterError("order must be 'left' (X_n...X_1) or 'right' (X_1...X_n)")
    tol = default_rank_tol(spec) if rank_tol is None else float(rank_tol)
    rng = make_rng(seed)
    if order == "left":
        logs = _operator_over(iter_step_batches(spec, n, rng), N, tol)
    else:
        # ||X_1 ... X_n|| = ||X_n^T ... X_1^T||
        logs = _operator_over(iter_step_batches(spec, n, rng), N, tol, transpose=True)
    return ProductTrajectory(Mode.OPERATOR, logs, float(math.fsum(logs)), n, N, None, seed)


def stretch_samples(spec: EnsembleSpec, v=None, trials: int = 1, seed: SeedLike = 0) -> np.ndarray:
    """``trials`` i.i.d. copies of ``log ||X_1 v||``."""
    _matrix_spec(spec)
    trials = _check_steps(trials)
    N = spec.n_dim
    v = _unit(v, N)
    rng = make_rng(seed)
    out = np.empty(trials)
    chunk = max(1, 2**20 // N)
    for start in range(0, trials, chunk):
        k = min(chunk, trials - start)
        u, _ = act(spec, np.broadcast_to(v, (k, N)), rng)
        out[start:start + k] = np.log(np.linalg.norm(u, axis=1))
    return out


# -- many trajectories at once -------------------------------------------------

def batch_log_vector(spec: EnsembleSpec, n: int, trials: int, rng: np.random.Generator, v=None):
    """Run ``trials`` independent vector-tracked trajectories side by side.

    Uses the exact-law action sampler. Returns ``(cum_log, sum_log_sbar)``
    arrays of length ``trials``; the second is ``None`` unless the family
    exposes ``s_bar`` without forming the factor.
    """
    _matrix_spec(spec)
    N = spec.n_dim
    W = np.broadcast_to(_unit(v, N), (trials, N)).copy()
    cum = np.zeros(trials)
    sb_sum = np.zeros(trials)
    have_sbar = True
    for i in range(n):
        U, sb = act(spec, W, rng)
        nrm = np.linalg.norm(U, axis=1)
        if np.any(nrm == 0.0):
            raise DegenerateTrajectoryError(i + 1)
        cum += np.log(nrm)
        if sb is None:
            have_sbar = False
        else:
            sb_sum += np.log(sb)
        W = U / nrm[:, None]
    return cum, (sb_sum if have_sbar else None)


_SOLVE_MIN_DIM = 32


def _frame_act(spec: EnsembleSpec, R: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A draw of ``X Q R`` for a fresh factor X and any fixed N x r orthonormal Q.

    For RotatedSpectrum with N >= ``_SOLVE_MIN_DIM`` the Haar frame is never
    formed: with ``G = H T`` the sign-fixed QR of a Gaussian N x r matrix,
    ``H R = G (T^-1 R)``, and a triangular solve is cheaper than building H.
    Below that the per-trial solve loop costs more than it saves.
    """
    N = spec.n_dim
    T, r = R.shape[0], R.shape[1]
    f = spec.family
    if f is Family.GAUSSIAN:
        return (rng.standard_normal((T, N, r)) * (spec.sigma / math.sqrt(N))) @ R
    if f is Family.ROTATED:
        d = spec.spectrum.sample(rng, (T, N))
        if N < _SOLVE_MIN_DIM:
            return d[:, :, None] * (haar_frames(N, r, T, rng) @ R)
        g = rng.standard_normal((T, N, r))
        t = np.linalg.qr(g, mode="r")
        sgn = np.sign(np.diagonal(t, axis1=1, axis2=2))
        sgn[sgn == 0] = 1.0
        t *= sgn[:, :, None]
        y = np.empty_like(R)
        for k in range(T):
            y[k] = solve_triangular(t[k], R[k], check_finite=False)
        return d[:, :, None] * (g @ y)
    if f is Family.RANK_ONE:
        x = haar_vectors(N, T, rng)[:, :r]
        y = haar_vectors(N, T, rng)
        return math.sqrt(N) * y[:, :, None] * np.einsum("ki,kij->kj", x, R)[:, None, :]
    raise UsageError(f"{f.value} is not rotation invariant; frame tracking does not apply")


def batch_log_opnorm(
    spec: EnsembleSpec,
    n: int,
    trials: int,
    rng: np.random.Generator,
    rank_tol: float = EPS,
    svd_every: int = 8,
) -> np.ndarray:
    """``log ||Pi_n||`` for ``trials`` independent products, exact in law.

    For right-rotation-invariant factors ``X Q`` has a law that does not
    depend on the orthonormal frame Q, and right orthogonal factors never change
    singular values. The product is therefore carried as a small triangular
    factor R (r x r): each step draws ``A = X Q`` directly (N x r), forms
    ``A R``, and keeps the R of its QR factorisation. While r = N the product
    is carried as is, since the QR would not shrink it. After the first step
    (which catches low-rank factors) and then every ``svd_every`` steps, R is
    replaced by its singular values, truncated below ``rank_tol`` relative to
    the largest, which shrinks r as the Lyapunov spectrum spreads.
    Per-step renormalisation uses the Frobenius norm; the final exact spectral
    norm is added at the end, so the sum is ``log ||Pi_n||``.

    DiagonalBernoulli products are diagonal and handled in closed form.
    """
    _matrix_spec(spec)
    n = _check_steps(n)
    if spec.family is Family.BERNOULLI:
        return _bernoulli_log_opnorm(spec, n, trials, rng)
    if spec.family not in ROTATION_INVARIANT:
        raise UsageError(f"no batched operator tracker for {spec.family.value}")
    N = spec.n_dim
    R = np.broadcast_to(np.eye(N), (trials, N, N)).copy()
    cum = np.zeros(trials)
    for i in range(n):
        r = R.shape[1]
        A = _frame_act(spec, R, rng)
        # at full rank A is the product itself; QR only pays off once r < N
        R = np.linalg.qr(A, mode="r") if r < N else A
        scale = np.linalg.norm(R, axis=(1, 2))
        if np.any(scale == 0.0):
            raise DegenerateTrajectoryError(i + 1, f"product vanished at step {i + 1}")
        cum += np.log(scale)
        R /= scale[:, None, None]
        if (i == 0 or (i + 1) % svd_every == 0) and i + 1 < n:
            s = np.linalg.svd(R, compute_uv=False)
            keep = max(1, int(np.count_nonzero((s > rank_tol * s[:, :1]).any(axis=0))))
            R = np.zeros((trials, keep, keep))
            idx = np.arange(keep)
            R[:, idx, idx] = s[:, :keep]
    top = np.linalg.svd(R, compute_uv=False)[:, 0]
    return cum + np.log(top)


def _bernoulli_log_opnorm(spec: EnsembleSpec, n: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    # the product of diagonal factors is diagonal: ||Pi_n|| = max_k prod_i d_ik
    N = spec.n_dim
    counts = np.zeros((trials, N), dtype=np.int64)
    step = max(1, 2**22 // (trials * N))
    for start in range(0, n, step):
        k = min(step, n - start)
        counts += (rng.random((k, trials, N)) < spec.prob_hi).sum(axis=0)
    a, b = spec.bern_lo, spec.bern_hi
    return n * math.log(a) + math.log(b / a) * counts.max(axis=1)
