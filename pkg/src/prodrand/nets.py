"""Angular eps-nets on the unit sphere and the net bound on operator norms.

A set of unit vectors is an eps-net when caps of angular radius eps around
its points cover the sphere. For such a net and any A != 0,

    (1 - eps) ||A|| <= max_i ||A v_i||,

hence ``log ||A|| <= max_i log ||A v_i|| - log(1 - eps) <= max_i log ||A v_i|| + 2 eps``
for eps <= 1/2. Chordal distance never exceeds angular distance, so angular
caps are the conservative choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .ensembles import haar_vectors
from .errors import DomainError, ParameterError
from .rng import SeedLike, make_rng

EPS = float(np.finfo(float).eps)
SATURATION = 2**32
DEFAULT_BUDGET = 10**6


@dataclass(frozen=True)
class EpsNet:
    n_dim: int
    eps: float
    points: np.ndarray
    certified: bool
    radius: float = math.nan  # proven covering radius when certified

    @property
    def cardinality(self) -> int:
        return int(self.points.shape[0])


def _check(n_dim, eps) -> tuple[int, float]:
    if isinstance(n_dim, bool) or not isinstance(n_dim, (int, np.integer)) or n_dim < 2:
        raise ParameterError(f"n_dim must be an integer >= 2, got {n_dim!r}")
    eps = float(eps)
    if not 0 < eps <= 0.5:
        raise ParameterError(f"eps={eps} outside (0, 1/2]; the 2*eps relaxation needs -log(1-eps) <= 2*eps")
    return int(n_dim), eps


def _circle(eps: float) -> EpsNet:
    m = math.ceil(math.pi / eps)
    ang = 2 * math.pi * np.arange(m) / m
    return EpsNet(2, eps, np.column_stack([np.cos(ang), np.sin(ang)]), True, math.pi / m)


def _cap_gap(theta: float, m: int) -> float:
    # angle between (theta, phi) and (theta, phi + pi/m) on the sphere
    c = math.cos(theta) ** 2 + math.sin(theta) ** 2 * math.cos(math.pi / m)
    return math.acos(min(1.0, c))


def _sphere(eps: float) -> EpsNet:
    """Latitude bands of polar height <= eps, each ringed by enough longitudes.

    A point at colatitude theta inside band j is within half the band height of
    the band's centre circle, and the centre circle point at the same longitude
    is within ``gamma_j`` of a net point, so the covering radius is at most
    ``max_j (half_height + gamma_j)``; it is computed and checked here.
    """
    K = math.ceil(math.pi / eps)
    half = math.pi / (2 * K)
    budget = eps - half
    pts, radius = [], 0.0
    for j in range(K):
        th = (j + 0.5) * math.pi / K
        m = 1
        while _cap_gap(th, m) > budget:
            m += 1
        radius = max(radius, half + _cap_gap(th, m))
        ph = 2 * math.pi * np.arange(m) / m
        st = math.sin(th)
        pts.append(np.column_stack([st * np.cos(ph), st * np.sin(ph), np.full(m, math.cos(th))]))
    if radius > eps:
        raise AssertionError("latitude-band certificate failed")
    return EpsNet(3, eps, np.concatenate(pts), True, radius)


def _greedy(n_dim: int, eps: float, seed: SeedLike, budget: int) -> EpsNet:
    cands = haar_vectors(n_dim, budget, make_rng(seed))
    idx = kernels.greedy_net(cands, math.cos(eps), budget)
    return EpsNet(n_dim, eps, cands[idx].copy(), False)


def build_net(n_dim: int, eps: float, seed: SeedLike = 0, budget: int = DEFAULT_BUDGET) -> EpsNet:
    """Build an eps-net (angular radius ``eps``) on the sphere in ``R^n_dim``.

    Dimension 2 and 3 nets are explicit and certified. Higher dimensions use
    greedy farthest-point insertion over ``budget`` Haar candidates and are
    never certified: the candidates are covered, the sphere may not be.
    """
    n_dim, eps = _check(n_dim, eps)
    if n_dim == 2:
        return _circle(eps)
    if n_dim == 3:
        return _sphere(eps)
    if budget < 1:
        raise ParameterError("budget must be >= 1")
    return _greedy(n_dim, eps, seed, int(budget))


class CardinalityBound(NamedTuple):
    log_cap: float
    cap: int | None
    saturated: bool


def net_cardinality_bound(n_dim: int, eps: float) -> CardinalityBound:
    """``ceil(exp(n_dim log(3/eps)))`` evaluated in log space.

    ``cap`` is ``None`` once the value is past exact float integers; ``saturated``
    is set above 2**32 points, where the net is not practical to build.
    """
    n_dim, eps = _check(n_dim, eps)
    log_cap = n_dim * math.log(3.0 / eps)
    saturated = log_cap > math.log(SATURATION)
    if log_cap > 53 * math.log(2):
        return CardinalityBound(log_cap, None, saturated)
    x = math.exp(log_cap)
    near = round(x)
    cap = near if abs(x - near) <= 1e-9 * x else math.ceil(x)
    return CardinalityBound(log_cap, int(cap), saturated)


class NetNormBound(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    sharp_rhs: float
    sharp_holds: bool


def net_norm_bound(A, net: EpsNet) -> NetNormBound:
    """Compare ``log ||A||`` with the net maximum.

    ``rhs = max_i log ||A v_i|| + 2 eps`` and the sharper
    ``sharp_rhs = max_i log ||A v_i|| - log(1 - eps)``. The flags allow a
    rounding slack of a few ulps of the logs.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape != (net.n_dim, net.n_dim):
        raise ParameterError(f"A must be {net.n_dim}x{net.n_dim}")
    if not np.any(A):
        raise DomainError("log ||A|| is undefined for the zero matrix")
    lhs = math.log(float(np.linalg.norm(A, 2)))
    top = float(np.max(np.linalg.norm(net.points @ A.T, axis=1)))
    if top == 0.0:
        raise DomainError("net does not see A; it cannot be a covering net")
    m = math.log(top)
    rhs = m + 2 * net.eps
    sharp = m - math.log1p(-net.eps)
    slack = 16 * EPS * (1 + abs(lhs))
    return NetNormBound(lhs, rhs, lhs <= rhs + slack, sharp, lhs <= sharp + slack)


class Coverage(NamedTuple):
    worst_angle: float
    covered: bool


def coverage_check(net: EpsNet, n_points: int = 10**5, seed: SeedLike = 0) -> Coverage:
    """Largest angle from ``n_points`` Haar test points to their nearest net point."""
    pts = haar_vectors(net.n_dim, int(n_points), make_rng(seed))
    cos = kernels.worst_cover(pts, net.points)
    ang = math.acos(max(-1.0, min(1.0, cos)))
    return Coverage(ang, ang <= net.eps)


# -- text format -----------------------------------------------------------------

def dumps_net(net: EpsNet) -> str:
    lines = [
        f"# n_dim {net.n_dim}",
        f"# eps {net.eps!r}",
        f"# certified {int(net.certified)}",
        f"# cardinality {net.cardinality}",
    ]
    if net.certified:
        lines.append(f"# radius {net.radius!r}")
    lines += [" ".join(repr(float(x)) for x in p) for p in net.points]
    return "\n".join(lines) + "\n"


def loads_net(text: str) -> EpsNet:
    head, rows = {}, []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(" ")
            head[key] = val.strip()
        else:
            rows.append([float(x) for x in line.split()])
    try:
        n_dim, eps = int(head["n_dim"]), float(head["eps"])
        certified, card = bool(int(head["certified"])), int(head["cardinality"])
    except (KeyError, ValueError) as exc:
        raise ParameterError(f"malformed net header: {exc}") from None
    pts = np.asarray(rows, dtype=float).reshape(-1, n_dim)
    if pts.shape[0] != card:
        raise ParameterError(f"header says {card} points, found {pts.shape[0]}")
    if np.any(np.abs(np.linalg.norm(pts, axis=1) - 1) > 8 * EPS):
        raise ParameterError("net points must be unit vectors")
    return EpsNet(n_dim, eps, pts, certified, float(head.get("radius", "nan")))


def save_net(net: EpsNet, path) -> None:
    Path(path).write_text(dumps_net(net))


def load_net(path) -> EpsNet:
    return loads_net(Path(path).read_text())
