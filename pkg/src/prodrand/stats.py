"""Small statistical helpers: exact binomial limits and a monotone-trend test."""

from __future__ import annotations

import itertools
import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .errors import ParameterError


def clopper_pearson_upper(hits: int, trials: int, confidence: float = 0.99) -> float:
    """One-sided exact upper confidence limit for a binomial probability.

    Solves ``P(Bin(trials, p) <= hits) = 1 - confidence`` for p, i.e. the
    ``confidence`` quantile of Beta(hits + 1, trials - hits). Returns 1 when
    every trial is a hit.
    """
    if trials < 1 or not 0 <= hits <= trials:
        raise ParameterError(f"need 0 <= hits <= trials and trials >= 1, got {hits}/{trials}")
    if not 0 < confidence < 1:
        raise ParameterError("confidence must lie in (0, 1)")
    if hits == trials:
        return 1.0
    return float(stats.beta.ppf(confidence, hits + 1, trials - hits))


def zero_hit_upper(trials: int, confidence: float = 0.99) -> float:
    """The smallest ``clopper_pearson_upper`` achievable with ``trials`` trials."""
    return 1.0 - (1.0 - confidence) ** (1.0 / trials)


def trials_to_resolve(bound: float, confidence: float = 0.99) -> int:
    """Fewest trials whose zero-hit upper limit falls below ``bound``."""
    if not 0 < bound < 1:
        raise ParameterError("bound must lie in (0, 1)")
    return math.ceil(math.log(1.0 - confidence) / math.log1p(-bound))


class TrendResult(NamedTuple):
    s: float
    var: float
    p_increasing: float


def _mk_s(x: np.ndarray) -> float:
    d = x[None, :] - x[:, None]
    return float(np.sign(d[np.triu_indices(len(x), 1)]).sum())


def mann_kendall(values: Sequence[float]) -> TrendResult:
    """One-sided Mann-Kendall test for an increasing trend.

    ``p_increasing`` is ``P(S >= s_obs)`` under exchangeability. Up to 8 values
    the null distribution is enumerated over all permutations (ties kept as
    they are); beyond that the normal approximation with the tie-corrected
    variance and a continuity correction is used.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2 or not np.all(np.isfinite(x)):
        raise ParameterError("need at least two finite values")
    s = _mk_s(x)
    _, counts = np.unique(x, return_counts=True)
    var = (n * (n - 1) * (2 * n + 5) - float(np.sum(counts * (counts - 1) * (2 * counts + 5)))) / 18.0
    if n <= 8:
        xs = x[np.array(list(itertools.permutations(range(n))))]
        i, j = np.triu_indices(n, 1)
        null = np.sign(xs[:, j] - xs[:, i]).sum(axis=1)
        p = float(np.mean(null >= s - 1e-9))
    elif var == 0:
        p = 1.0
    else:
        z = (s - 1.0) / math.sqrt(var) if s > 0 else (s + 1.0) / math.sqrt(var) if s < 0 else 0.0
        p = float(stats.norm.sf(z))
    return TrendResult(s, var, p)
