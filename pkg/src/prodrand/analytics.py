"""Closed-form moments and explicit tail bounds.

Everything here is a pure function. Bounds are evaluated in log space and
returned raw; :class:`BoundValue` additionally caps probabilities at 1 for
reporting and carries a validity flag for points outside the proven region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special

from .errors import DomainError, ParameterError, ValidityError

LOG2 = math.log(2.0)
C_OVER_B = 2.0 * LOG2


def _pos_int(N, name="N") -> int:
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ParameterError(f"{name} must be a positive integer, got {N!r}")
    return int(N)


def _exp(logv: float) -> float:
    return math.inf if logv > 709.0 else math.exp(logv)


# -- Gaussian moments ------------------------------------------------------------

def log_gaussian_moment(N: int, z: float) -> float:
    """``log E (sum_{k<=N} Y_k^2)^z`` for i.i.d. standard normals, z > -N/2."""
    N = _pos_int(N)
    z = float(z)
    if not z > -N / 2:
        raise DomainError(f"moment of order z={z} diverges; need z > -N/2 = {-N / 2}")
    if z == int(z) and 0 <= z <= 64:
        # exact rising product for small integer orders
        return math.fsum([LOG2 * z] + [math.log(N / 2 + j) for j in range(int(z))])
    return z * LOG2 + math.lgamma(N / 2 + z) - math.lgamma(N / 2)


def gaussian_log_moment(N: int, z: float) -> float:
    """``E (sum Y_k^2)^z = 2^z Gamma(N/2 + z) / Gamma(N/2)``, the chi-square(N) moment."""
    N = _pos_int(N)
    z = float(z)
    if z == int(z) and 0 <= z <= 64:
        out = 1.0
        for j in range(int(z)):
            out *= 2.0 * (N / 2 + j)
        return out
    return _exp(log_gaussian_moment(N, z))


def mean_log_gaussian(N: int, sigma: float = 1.0) -> float:
    """``E log ||X_1 v||^2`` for Gaussian factors: ``log(2 sigma^2 / N) + digamma(N/2)``.

    This is the z-derivative at 0 of ``(sigma^2/N)^z E(sum Y_k^2)^z``.
    """
    N = _pos_int(N)
    if not (math.isfinite(sigma) and sigma > 0):
        raise ParameterError("sigma must be > 0")
    return math.log(2.0 * sigma * sigma / N) + float(special.digamma(N / 2))


def stirling_exponent(alpha):
    """``(1/2 + alpha) log(1 + 2 alpha) - alpha``, defined for alpha > -1/2."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= -0.5):
        raise DomainError("stirling exponent needs alpha > -1/2")
    out = (0.5 + a) * np.log1p(2.0 * a) - a
    return float(out) if out.ndim == 0 else out


def stirling_asymptotic(N: int, alpha: float, log: bool = False) -> float:
    """Large-N form of ``E (sum Y_k^2)^(alpha N)``.

    ``(1 + 2 alpha)^(-1/2) N^(alpha N) exp(N * stirling_exponent(alpha))``,
    assembled in log space. With ``log=True`` the logarithm is returned, which
    is what comparisons should use since the value overflows quickly.
    """
    N = _pos_int(N)
    alpha = float(alpha)
    if not alpha > -0.5:
        raise DomainError(f"alpha={alpha} must exceed -1/2")
    logv = -0.5 * math.log1p(2 * alpha) + alpha * N * math.log(N) + N * stirling_exponent(alpha)
    return logv if log else _exp(logv)


# -- von Neumann moments -------------------------------------------------------------

def vn_moments(spectrum: Sequence[float], p_max: int, exact: bool = False) -> list:
    """Moments ``E x^p`` (p = 1..p_max) of ``x = sum_k s_k u_k^2`` for Haar u.

    Power sums ``a_l = (1/2l) sum s^l`` feed the exponential recursion
    ``b_k = (1/k) sum_{j<=k} j a_j b_{k-j}``, and
    ``E x^k = 2^k k! b_k / (N (N+2) ... (N+2k-2))``.

    ``exact=True`` runs the recursion in rational arithmetic (inputs are
    converted with ``Fraction``) and returns Fractions.
    """
    p_max = _pos_int(p_max, "p_max")
    s = list(spectrum)
    if not s:
        raise ParameterError("spectrum must be nonempty")
    if exact:
        vals = [Fraction(x) for x in s]
        one, zero = Fraction(1), Fraction(0)
    else:
        vals = [float(x) for x in s]
        if not all(math.isfinite(x) for x in vals):
            raise ParameterError("spectrum entries must be finite")
        one, zero = 1.0, 0.0
    N = len(vals)
    alpha = [zero]
    for l in range(1, p_max + 1):
        alpha.append(sum((x**l for x in vals), zero) / (2 * l))
    beta = [one]
    for k in range(1, p_max + 1):
        beta.append(sum((j * alpha[j] * beta[k - j] for j in range(1, k + 1)), zero) / k)
    out = []
    denom = one
    for k in range(1, p_max + 1):
        denom = denom * (N + 2 * k - 2)
        out.append((2**k) * math.factorial(k) * beta[k] / denom)
    return out


# -- quadratic-form bounds ---------------------------------------------------------

def quadform_tail_bound(t: float, N: int, B: float) -> float:
    """``exp(-N t^2 / (4B(B+t)))`` bounds each tail of ``sum s_k u_k^2 - s_bar`` when |s_k| <= B."""
    if not (t > 0 and B > 0):
        raise ParameterError("quadform bound needs t > 0 and B > 0")
    return math.exp(-N * t * t / (4.0 * B * (B + t)))


class RelativeBounds(NamedTuple):
    relative: float
    log_two_sided: float
    c: float
    valid: bool


def relative_quadform_bounds(t: float, N: int, b: float) -> RelativeBounds:
    """Relative-deviation bound and two-sided log-deviation bound.

    ``relative = exp(-N t^2 / (4b(b+t)))`` for ``x >= s_bar(1+t)`` (and the
    lower event), ``log_two_sided = 2 exp(-N t^2 / (4c(c+t)))`` with
    ``c = (2 log 2) b`` for ``|log x - log s_bar| >= t``. The log form is
    proven for t in (0, 1/2) only; outside it ``valid`` is False.
    """
    if not (t > 0 and b > 0):
        raise ParameterError("need t > 0 and b > 0")
    c = C_OVER_B * b
    rel = math.exp(-N * t * t / (4.0 * b * (b + t)))
    two = 2.0 * math.exp(-N * t * t / (4.0 * c * (c + t)))
    return RelativeBounds(rel, two, c, bool(0 < t < 0.5 and b >= 1))


def mgf_lemma_bound(z: float, N: int, c: float) -> float:
    """Bound on ``E exp(z X)`` for X with two-sided tail ``2 exp(-N t^2/(4c(c+t)))``.

    ``sqrt(32 pi) sqrt(c^2 z^2 / N) exp(2 c^2 z^2 / N) + 3 exp(|z|/sqrt N) + 2 exp(-N/16)``,
    valid for ``|z| < N / (16 c)``.
    """
    N = _pos_int(N)
    if not c > 0:
        raise ParameterError("c must be > 0")
    if not abs(z) < N / (16.0 * c):
        raise ValidityError(f"|z|={abs(z)} must be < N/(16c) = {N / (16.0 * c)}")
    q = c * c * z * z / N
    return math.sqrt(32 * math.pi) * math.sqrt(q) * math.exp(2 * q) + 3 * math.exp(abs(z) / math.sqrt(N)) + 2 * math.exp(-N / 16)


# -- product bounds ------------------------------------------------------------------

class BoundValue(NamedTuple):
    raw: float
    value: float
    valid: bool
    note: str = ""


def n_threshold(t: float) -> float:
    """Working dimension threshold ``4 / t^2`` used as the 'N large enough' condition."""
    return 4.0 / (t * t)


def prop1_rate(case: str, b: float | None = None, form: str = "b") -> float:
    """Rate r in ``2 exp(-r N n t^2)``.

    Gaussian: 1/8. Bounded singular values: ``1/(32 b^2)`` (``form="b"``) or
    the sharper ``1/(16 c^2)`` with ``c = (2 log 2) b`` (``form="c"``).
    """
    if case == "Gaussian":
        return 1.0 / 8.0
    if case != "BoundedSV":
        raise ParameterError(f"case must be 'Gaussian' or 'BoundedSV', got {case!r}")
    if b is None or not b >= 1:
        raise ParameterError("BoundedSV needs b >= 1")
    if form == "b":
        return 1.0 / (32.0 * b * b)
    if form == "c":
        c = C_OVER_B * b
        return 1.0 / (16.0 * c * c)
    raise ParameterError("form must be 'b' or 'c'")


def prop1_bound(case: str, t: float, n: int, N: int, b: float | None = None) -> BoundValue:
    """Deviation bound for ``n^-1 log ||Pi_n v||`` about its centre.

    Gaussian: ``2 exp(-N n t^2 / 8)``, flagged for t > 1.
    BoundedSV: ``2 exp(-N n t^2 / (32 b^2))``; t outside (0, 1/4) raises.
    Both are flagged when ``N < 4/t^2``.
    """
    n = _pos_int(n, "n")
    N = _pos_int(N)
    if not t > 0:
        raise ParameterError("t must be > 0")
    notes = []
    if case == "BoundedSV" and not t < 0.25:
        raise ValidityError(f"t={t} outside (0, 1/4), the validity region of the bounded-singular-value bound")
    if case == "Gaussian" and t > 1:
        notes.append("t>1")
    if N < n_threshold(t):
        notes.append("N<4/t^2")
    rate = prop1_rate(case, b)
    raw = 2.0 * math.exp(-rate * N * n * t * t)
    return BoundValue(raw, min(raw, 1.0), not notes, "|".join(notes))


def theorem1_union_bound(delta: float, n: int, N: int, c_rate: float) -> float:
    """``2 exp((log(300/delta) - c n (delta/100)^2) N)``; may return inf."""
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    if not c_rate > 0:
        raise ParameterError("c_rate must be > 0")
    bracket = math.log(300.0 / delta) - c_rate * n * (delta / 100.0) ** 2
    return 2.0 * _exp(bracket * N) if bracket * N < 709 else math.inf


def theorem1_min_steps(delta: float, c_rate: float) -> int:
    """Smallest n for which the union-bound exponent is negative."""
    if not 0 < delta < 1 or not c_rate > 0:
        raise ParameterError("need delta in (0, 1) and c_rate > 0")
    return math.floor(math.log(300.0 / delta) / (c_rate * (delta / 100.0) ** 2)) + 1


# -- named bounds --------------------------------------------------------------------

class BoundName(str, Enum):
    GAUSSIAN_PROP1 = "GaussianProp1i"
    BOUNDED_SV_PROP1 = "BoundedSVProp1ii"
    QUADFORM_RAW = "QuadFormRaw"
    QUADFORM_RELATIVE = "QuadFormRelative"
    LOG_QUADFORM = "LogQuadForm"
    MGF_LEMMA = "MGFLemma"


_VALIDITY = {
    BoundName.GAUSSIAN_PROP1: "t in (0, 1], N >= 4/t^2",
    BoundName.BOUNDED_SV_PROP1: "t in (0, 1/4), N >= 4/t^2",
    BoundName.QUADFORM_RAW: "t > 0, |s_k| <= B",
    BoundName.QUADFORM_RELATIVE: "t > 0, s_k <= b s_bar",
    BoundName.LOG_QUADFORM: "t in (0, 1/2), 0 <= s_k <= b",
    BoundName.MGF_LEMMA: "|z| < N/(16c)",
}


@dataclass(frozen=True)
class TailBound:
    """A named bound with fixed constants; evaluation never fails silently.

    Points outside the proven region come back with ``valid=False`` and the raw
    formula value (or nan where the formula itself is undefined).
    """

    name: BoundName
    constants: dict = field(default_factory=dict)

    @property
    def validity(self) -> str:
        return _VALIDITY[self.name]

    def evaluate(self, t: float | None = None, n: int = 1, N: int = 1, z: float | None = None) -> BoundValue:
        k = self.constants
        nm = self.name
        if nm is BoundName.MGF_LEMMA:
            c = k["c"]
            try:
                v = mgf_lemma_bound(z, N, c)
                return BoundValue(v, v, True)
            except ValidityError as exc:
                q = c * c * z * z / N
                raw = math.sqrt(32 * math.pi * q) * _exp(2 * q) + 3 * math.exp(abs(z) / math.sqrt(N)) + 2 * math.exp(-N / 16)
                return BoundValue(raw, raw, False, str(exc))
        if nm in (BoundName.GAUSSIAN_PROP1, BoundName.BOUNDED_SV_PROP1):
            case = "Gaussian" if nm is BoundName.GAUSSIAN_PROP1 else "BoundedSV"
            try:
                return prop1_bound(case, t, n, N, k.get("b"))
            except ValidityError as exc:
                raw = 2.0 * math.exp(-prop1_rate(case, k.get("b")) * N * n * t * t)
                return BoundValue(raw, min(raw, 1.0), False, str(exc))
        if nm is BoundName.QUADFORM_RAW:
            v = quadform_tail_bound(t, N, k["B"])
            return BoundValue(v, min(v, 1.0), True)
        rb = relative_quadform_bounds(t, N, k["b"])
        if nm is BoundName.QUADFORM_RELATIVE:
            return BoundValue(rb.relative, min(rb.relative, 1.0), True)
        note = "" if rb.valid else "t outside (0, 1/2)"
        return BoundValue(rb.log_two_sided, min(rb.log_two_sided, 1.0), rb.valid, note)
