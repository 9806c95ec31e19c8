"""Random-matrix and random-vector laws.

Five families are supported:

``GaussianIID``
    i.i.d. N(0, sigma^2/N) entries.
``RotatedSpectrum``
    ``X = D U`` with D diagonal, entries i.i.d. from a law on
    ``[alpha_lo, alpha_hi]``, and U Haar orthogonal.
``RankOne``
    ``X = sqrt(N) y x^T`` with x, y independent Haar unit vectors.
``DiagonalBernoulli``
    diagonal with independent entries equal to ``bern_hi`` with probability
    ``prob_hi`` and ``bern_lo`` otherwise.
``HaarVector``
    a uniform unit vector (no matrix law).

All samplers are pure functions of ``(spec, seed)``. The batch helpers
(:func:`draw_batch`, :func:`act`) take a live ``numpy.random.Generator`` so that
long products can consume a single stream chunk by chunk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, NamedTuple

import numpy as np
from scipy import stats

from .errors import ParameterError, UsageError
from .rng import SeedLike, Stream, make_rng


class Family(str, Enum):
    GAUSSIAN = "GaussianIID"
    ROTATED = "RotatedSpectrum"
    RANK_ONE = "RankOne"
    BERNOULLI = "DiagonalBernoulli"
    HAAR_VECTOR = "HaarVector"

    @classmethod
    def parse(cls, text: str) -> "Family":
        key = str(text).strip().lower().replace("_", "").replace("-", "")
        for fam in cls:
            if key in (fam.value.lower(), fam.name.lower().replace("_", "")):
                return fam
        raise ParameterError(f"unknown family {text!r}; expected one of {[f.value for f in cls]}")


ROTATION_INVARIANT = frozenset({Family.GAUSSIAN, Family.ROTATED, Family.RANK_ONE})

SPECTRUM_KINDS = ("uniform", "point", "two_point", "table")


@dataclass(frozen=True)
class SpectrumLaw:
    """Law of the diagonal of D in the ``RotatedSpectrum`` family.

    ``table`` holds equally spaced quantiles (inverse-CDF knots) for the
    ``"table"`` kind; draws interpolate linearly between them.
    """

    kind: str = "point"
    alpha_lo: float = 1.0
    alpha_hi: float = 1.0
    table: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in SPECTRUM_KINDS:
            raise ParameterError(f"spectrum kind {self.kind!r} not in {SPECTRUM_KINDS}")
        lo, hi = float(self.alpha_lo), float(self.alpha_hi)
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo <= hi):
            raise ParameterError(f"spectrum support needs 0 < alpha_lo <= alpha_hi, got [{lo}, {hi}]")
        if self.kind == "point" and lo != hi:
            raise ParameterError("a point-mass spectrum needs alpha_lo == alpha_hi")
        if self.kind == "table":
            q = np.asarray(self.table, dtype=float)
            if q.size < 2 or np.any(np.diff(q) < 0) or q[0] < lo or q[-1] > hi:
                raise ParameterError("table needs >= 2 nondecreasing quantiles inside [alpha_lo, alpha_hi]")

    @classmethod
    def parse(cls, text: str, alpha_lo: float, alpha_hi: float) -> "SpectrumLaw":
        text = str(text).strip().lower()
        if text.startswith("table:"):
            knots = tuple(float(x) for x in text[len("table:"):].split(",") if x.strip())
            return cls("table", alpha_lo, alpha_hi, knots)
        return cls(text, alpha_lo, alpha_hi)

    def to_config(self) -> str:
        if self.kind == "table":
            return "table:" + ",".join(repr(float(x)) for x in self.table)
        return self.kind

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.alpha_lo, self.alpha_hi, shape)
        if self.kind == "point":
            return np.full(shape, float(self.alpha_lo))
        if self.kind == "two_point":
            return np.where(rng.random(shape) < 0.5, float(self.alpha_lo), float(self.alpha_hi))
        knots = np.asarray(self.table, dtype=float)
        return np.interp(rng.random(shape), np.linspace(0.0, 1.0, knots.size), knots)


CONFIG_KEYS = ("family", "n_dim", "sigma", "spectrum", "alpha_lo", "alpha_hi", "bern_lo", "bern_hi", "prob_hi")


@dataclass(frozen=True)
class EnsembleSpec:
    """Complete description of one law; the only input the samplers need."""

    family: Family
    n_dim: int
    sigma: float = 1.0
    spectrum: SpectrumLaw = field(default_factory=SpectrumLaw)
    bern_lo: float = 1.0
    bern_hi: float = 2.0
    prob_hi: float = 0.5

    def __post_init__(self):
        if not isinstance(self.family, Family):
            object.__setattr__(self, "family", Family.parse(self.family))
        n = self.n_dim
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise ParameterError(f"n_dim must be a positive integer, got {n!r}")
        object.__setattr__(self, "n_dim", int(n))
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        a, b = self.bern_lo, self.bern_hi
        # a == b is admitted: the degenerate scalar case is a useful check
        if not (math.isfinite(a) and math.isfinite(b) and 0 < a <= b):
            raise ParameterError(f"need 0 < bern_lo <= bern_hi, got ({a}, {b})")
        if not 0.0 <= self.prob_hi <= 1.0:
            raise ParameterError(f"prob_hi must lie in [0, 1], got {self.prob_hi}")

    # convenience constructors
    @classmethod
    def gaussian(cls, n_dim: int, sigma: float = 1.0) -> "EnsembleSpec":
        return cls(Family.GAUSSIAN, n_dim, sigma=sigma)

    @classmethod
    def rotated(cls, n_dim: int, alpha_lo: float, alpha_hi: float, kind: str = "uniform") -> "EnsembleSpec":
        return cls(Family.ROTATED, n_dim, spectrum=SpectrumLaw(kind, alpha_lo, alpha_hi))

    @classmethod
    def point_mass(cls, n_dim: int, value: float) -> "EnsembleSpec":
        return cls(Family.ROTATED, n_dim, spectrum=SpectrumLaw("point", value, value))

    @classmethod
    def rank_one(cls, n_dim: int) -> "EnsembleSpec":
        return cls(Family.RANK_ONE, n_dim)

    @classmethod
    def bernoulli(cls, n_dim: int, lo: float, hi: float, p: float) -> "EnsembleSpec":
        return cls(Family.BERNOULLI, n_dim, bern_lo=lo, bern_hi=hi, prob_hi=p)

    @property
    def b_const(self) -> float:
        """Singular-value ratio constant b with s_max <= b * s_bar (RotatedSpectrum)."""
        if self.family is not Family.ROTATED:
            raise UsageError("b is defined by the RotatedSpectrum family only")
        return (self.spectrum.alpha_hi / self.spectrum.alpha_lo) ** 2

    def with_dim(self, n_dim: int) -> "EnsembleSpec":
        return replace(self, n_dim=n_dim)

    @property
    def label(self) -> str:
        f = self.family
        if f is Family.GAUSSIAN:
            return f"GaussianIID(sigma={self.sigma!r})"
        if f is Family.ROTATED:
            s = self.spectrum
            return f"RotatedSpectrum({s.to_config()}[{s.alpha_lo!r},{s.alpha_hi!r}])"
        if f is Family.BERNOULLI:
            return f"DiagonalBernoulli(a={self.bern_lo!r},b={self.bern_hi!r},p={self.prob_hi!r})"
        return f.value

    def to_config(self) -> dict[str, str]:
        return {
            "family": self.family.value,
            "n_dim": str(self.n_dim),
            "sigma": repr(float(self.sigma)),
            "spectrum": self.spectrum.to_config(),
            "alpha_lo": repr(float(self.spectrum.alpha_lo)),
            "alpha_hi": repr(float(self.spectrum.alpha_hi)),
            "bern_lo": repr(float(self.bern_lo)),
            "bern_hi": repr(float(self.bern_hi)),
            "prob_hi": repr(float(self.prob_hi)),
        }

    @classmethod
    def from_config(cls, section: Mapping[str, str]) -> "EnsembleSpec":
        unknown = sorted(set(section) - set(CONFIG_KEYS))
        if unknown:
            raise ParameterError(f"unknown ensemble keys {unknown}; valid keys: {list(CONFIG_KEYS)}")
        if "family" not in section or "n_dim" not in section:
            raise ParameterError("ensemble section needs at least 'family' and 'n_dim'")
        try:
            n_dim = int(section["n_dim"])
            lo = float(section.get("alpha_lo", 1.0))
            hi = float(section.get("alpha_hi", lo))
            return cls(
                Family.parse(section["family"]),
                n_dim,
                sigma=float(section.get("sigma", 1.0)),
                spectrum=SpectrumLaw.parse(section.get("spectrum", "point" if lo == hi else "uniform"), lo, hi),
                bern_lo=float(section.get("bern_lo", 1.0)),
                bern_hi=float(section.get("bern_hi", 2.0)),
                prob_hi=float(section.get("prob_hi", 0.5)),
            )
        except ValueError as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"bad ensemble value: {exc}") from None


class SpectrumSummary(NamedTuple):
    s_bar: float
    s_max: float


@dataclass(frozen=True)
class SampledMatrix:
    entries: np.ndarray
    spectrum_summary: SpectrumSummary | None = None


@dataclass
class StepBatch:
    """A stack of sampled factors plus whatever the construction exposes.

    ``aux`` carries the raw ingredients: ``"diag"`` for RotatedSpectrum and
    DiagonalBernoulli, ``"x"``/``"y"`` for RankOne, ``"hi"`` (boolean mask of
    high entries) for DiagonalBernoulli.
    """

    mats: np.ndarray
    s_bar: np.ndarray | None = None
    s_max: np.ndarray | None = None
    aux: dict = field(default_factory=dict)


def _need_family(spec: EnsembleSpec, family: Family):
    if spec.family is not family:
        raise UsageError(f"expected a {family.value} spec, got {spec.family.value}")


def _check_dim(N) -> int:
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ParameterError(f"dimension must be a positive integer, got {N!r}")
    return int(N)


# -- batch primitives (live generator) ----------------------------------------

def haar_vectors(N: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent uniform unit vectors in R^N, one per row."""
    g = rng.standard_normal((size, N))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    # a Gaussian vector is zero with probability zero; redraw to stay total
    while np.any(nrm == 0):
        bad = (nrm[:, 0] == 0)
        g[bad] = rng.standard_normal((int(bad.sum()), N))
        nrm = np.linalg.norm(g, axis=1, keepdims=True)
    return g / nrm


def haar_orthogonal(N: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Haar orthogonal matrices by QR of a Gaussian stack with sign correction.

    Multiplying column j of Q by sign(R_jj) fixes the factorisation's sign
    ambiguity; without it the law is not Haar.
    """
    g = rng.standard_normal((size, N, N))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diagonal(r, axis1=1, axis2=2))
    d[d == 0] = 1.0
    return q * d[:, None, :]


def haar_frames(N: int, r: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed N x r matrices with orthonormal columns (first r columns of a Haar U)."""
    g = rng.standard_normal((size, N, r))
    q, rr = np.linalg.qr(g)
    d = np.sign(np.diagonal(rr, axis1=1, axis2=2))
    d[d == 0] = 1.0
    return q * d[:, None, :]


def draw_batch(spec: EnsembleSpec, size: int, rng: np.random.Generator) -> StepBatch:
    """Draw ``size`` independent factors of ``spec`` as a (size, N, N) stack."""
    N = spec.n_dim
    f = spec.family
    if f is Family.GAUSSIAN:
        mats = rng.standard_normal((size, N, N)) * (spec.sigma / math.sqrt(N))
        return StepBatch(mats, s_bar=np.einsum("kij,kij->k", mats, mats) / N)
    if f is Family.ROTATED:
        d = spec.spectrum.sample(rng, (size, N))
        u = haar_orthogonal(N, size, rng)
        d2 = d * d
        return StepBatch(d[:, :, None] * u, s_bar=d2.mean(axis=1), s_max=d2.max(axis=1), aux={"diag": d})
    if f is Family.RANK_ONE:
        x = haar_vectors(N, size, rng)
        y = haar_vectors(N, size, rng)
        mats = math.sqrt(N) * y[:, :, None] * x[:, None, :]
        # tr(X^T X) = N |x|^2 |y|^2 and the single nonzero s_k equals it
        sq = N * np.einsum("ki,ki->k", x, x) * np.einsum("ki,ki->k", y, y)
        return StepBatch(mats, s_bar=sq / N, s_max=sq, aux={"x": x, "y": y})
    if f is Family.BERNOULLI:
        hi = rng.random((size, N)) < spec.prob_hi
        d = np.where(hi, spec.bern_hi, spec.bern_lo)
        mats = np.zeros((size, N, N))
        idx = np.arange(N)
        mats[:, idx, idx] = d
        d2 = d * d
        return StepBatch(mats, s_bar=d2.mean(axis=1), s_max=d2.max(axis=1), aux={"diag": d, "hi": hi})
    raise UsageError("HaarVector is a vector law; it has no matrices to draw")


def act(spec: EnsembleSpec, W: np.ndarray, rng: np.random.Generator):
    """Return ``X_t w_t`` for each row ``w_t`` of ``W`` and a fresh factor X_t.

    The factors are never formed; each row is drawn from the exact law of a
    freshly sampled factor applied to that unit vector. For the rotation
    invariant families that law does not depend on the vector, e.g. Gaussian
    ``X w ~ N(0, sigma^2/N I)`` and ``D U w = D u`` with u Haar.

    Returns ``(XW, s_bar)``; ``s_bar`` is per-row N^-1 tr(X^T X) when it is
    available without forming X (RotatedSpectrum, RankOne, DiagonalBernoulli),
    else ``None``.
    """
    T, N = W.shape
    f = spec.family
    if f is Family.GAUSSIAN:
        return rng.standard_normal((T, N)) * (spec.sigma / math.sqrt(N)), None
    if f is Family.ROTATED:
        d = spec.spectrum.sample(rng, (T, N))
        return d * haar_vectors(N, T, rng), (d * d).mean(axis=1)
    if f is Family.RANK_ONE:
        x = haar_vectors(N, T, rng)
        y = haar_vectors(N, T, rng)
        coef = math.sqrt(N) * np.einsum("ti,ti->t", x, W)
        return coef[:, None] * y, np.ones(T)
    if f is Family.BERNOULLI:
        d = np.where(rng.random((T, N)) < spec.prob_hi, spec.bern_hi, spec.bern_lo)
        return d * W, (d * d).mean(axis=1)
    raise UsageError("HaarVector is a vector law; it does not act on vectors")


# -- single-draw samplers ------------------------------------------------------

def _single(spec: EnsembleSpec, seed: SeedLike) -> SampledMatrix:
    b = draw_batch(spec, 1, make_rng(seed))
    summary = None
    if b.s_max is not None:
        summary = SpectrumSummary(float(b.s_bar[0]), float(b.s_max[0]))
    return SampledMatrix(b.mats[0], summary)


def sample_gaussian(spec: EnsembleSpec, seed: SeedLike) -> SampledMatrix:
    _need_family(spec, Family.GAUSSIAN)
    return _single(spec, seed)


def sample_rotated_spectrum(spec: EnsembleSpec, seed: SeedLike) -> SampledMatrix:
    _need_family(spec, Family.ROTATED)
    return _single(spec, seed)


def sample_rank_one(N: int, seed: SeedLike) -> SampledMatrix:
    return _single(EnsembleSpec.rank_one(_check_dim(N)), seed)


def sample_diagonal_bernoulli(spec: EnsembleSpec, seed: SeedLike) -> SampledMatrix:
    _need_family(spec, Family.BERNOULLI)
    return _single(spec, seed)


def sample_haar_vector(N: int, seed: SeedLike) -> np.ndarray:
    return haar_vectors(_check_dim(N), 1, make_rng(seed))[0]


def sample_haar_orthogonal(N: int, seed: SeedLike) -> np.ndarray:
    return haar_orthogonal(_check_dim(N), 1, make_rng(seed))[0]


def sample(spec: EnsembleSpec, seed: SeedLike):
    """Dispatch on ``spec.family``; HaarVector returns a vector, the rest a SampledMatrix."""
    if spec.family is Family.HAAR_VECTOR:
        return sample_haar_vector(spec.n_dim, seed)
    return _single(spec, seed)


# -- rotational invariance ----------------------------------------------------

class InvarianceReport(NamedTuple):
    statistic: float
    p_value: float
    passed: bool


def _norms_of_action(spec: EnsembleSpec, v: np.ndarray, trials: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(trials)
    chunk = max(1, 2**21 // (spec.n_dim * spec.n_dim))
    for start in range(0, trials, chunk):
        k = min(chunk, trials - start)
        mats = draw_batch(spec, k, rng).mats
        out[start:start + k] = np.linalg.norm(mats @ v, axis=1)
    return out


def rotational_invariance_test(
    spec: EnsembleSpec,
    trials: int,
    seed: SeedLike,
    v: np.ndarray | None = None,
    level: float = 1e-3,
) -> InvarianceReport:
    """Two-sample KS test of the law of ||X e_1|| against ||X v||.

    Sampled matrices are formed explicitly, so this checks the samplers
    themselves. ``v`` defaults to a Haar vector drawn from the seed. Only the
    single-vector marginal is tested, not the joint law over several vectors.
    """
    if trials < 100:
        raise ParameterError("rotational_invariance_test needs trials >= 100")
    N = spec.n_dim
    if v is None:
        v = haar_vectors(N, 1, make_rng(seed, Stream.INVARIANCE, 0))[0]
    v = np.asarray(v, dtype=float)
    if v.shape != (N,):
        raise ParameterError(f"v must have shape ({N},)")
    v = v / np.linalg.norm(v)
    e1 = np.zeros(N)
    e1[0] = 1.0
    a = _norms_of_action(spec, e1, trials, make_rng(seed, Stream.INVARIANCE, 1))
    b = _norms_of_action(spec, v, trials, make_rng(seed, Stream.INVARIANCE, 2))
    # rounding noise would split exact ties (e.g. point-mass spectra) into two laws
    scale = float(np.median(np.concatenate([a, b]))) or 1.0
    a = np.round(a / scale, 10)
    b = np.round(b / scale, 10)
    res = stats.ks_2samp(a, b)
    return InvarianceReport(float(res.statistic), float(res.pvalue), bool(res.pvalue >= level))
