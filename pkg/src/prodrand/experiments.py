"""Seeded Monte Carlo campaigns against the analytic bounds and identities.

Every random draw comes from ``make_rng(master_seed, stream, ...)`` with a key
naming the cell and chunk it belongs to, so results do not depend on the
order in which worker threads pick up work. Thread count comes from
``PRODRAND_THREADS`` (default 1).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import analytics
from .ensembles import ROTATION_INVARIANT, EnsembleSpec, Family, act, haar_vectors
from .errors import DegenerateTrajectoryError, ParameterError, UsageError, ValidityError
from .products import (
    _operator_over,
    batch_log_opnorm,
    batch_log_vector,
    iter_step_batches,
    stretch_samples,
    EPS,
)
from .rng import SeedLike, Stream, make_rng, seed_words
from .stats import clopper_pearson_upper, mann_kendall, trials_to_resolve, zero_hit_upper

CHUNK_TRIALS = 2000
POWER_GUARD_TRIALS = 1000
VACUOUS_BOUND = 1e-6
CONFIDENCE = 0.99


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("PRODRAND_THREADS", "1")))
    except ValueError:
        raise ParameterError("PRODRAND_THREADS must be an integer") from None


def _pmap(fn, items):
    items = list(items)
    k = thread_count()
    if k == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))


def _chunks(trials: int, size: int = CHUNK_TRIALS) -> list[tuple[int, int]]:
    return [(c, min(size, trials - s)) for c, s in enumerate(range(0, trials, size))]


def _opnorm_chunk(N: int) -> int:
    # keep one (trials, N, N) working stack near 128 MB
    return max(1, min(CHUNK_TRIALS, 2**24 // (N * N)))


# -- records ---------------------------------------------------------------------

COLUMNS = ("ensemble", "family", "N", "n", "t", "trials", "hits", "freq", "ci_upper", "bound", "validity", "seed")


@dataclass(frozen=True)
class ExperimentRecord:
    """One Monte Carlo cell. ``bound`` is ``inf`` when no bound applies."""

    ensemble: str
    family: str
    N: int
    n: int
    t: float
    trials: int
    hits: int
    freq: float
    ci_upper: float
    bound: float
    validity: str
    seed: int

    def __post_init__(self):
        if not 0 <= self.hits <= self.trials:
            raise ParameterError("need 0 <= hits <= trials")

    @property
    def flags(self) -> set[str]:
        return set(self.validity.split("|"))

    @property
    def power_limited(self) -> bool:
        return "power-limited" in self.flags

    @property
    def bound_respected(self) -> bool:
        """CI below the bound, or a cell that cannot resolve its bound and saw no hits."""
        return self.ci_upper <= self.bound or (self.power_limited and self.hits == 0)


def make_record(ensemble, family, N, n, t, trials, hits, bound, flags, seed) -> ExperimentRecord:
    freq = hits / trials
    ci = clopper_pearson_upper(hits, trials, CONFIDENCE)
    flags = list(flags)
    if math.isfinite(bound):
        if bound < 0.1 and trials < POWER_GUARD_TRIALS:
            flags.append("underpowered")
        if bound < VACUOUS_BOUND:
            flags.append("vacuous")
        if bound < 1 and zero_hit_upper(trials, CONFIDENCE) > bound:
            flags.append("power-limited")
    else:
        flags.append("no-bound")
    return ExperimentRecord(
        ensemble, family, int(N), int(n), float(t), int(trials), int(hits), freq, ci, float(bound),
        "|".join(flags) if flags else "ok", int(seed),
    )


# -- Proposition-1 style tail experiments ---------------------------------------------

class Center(str, Enum):
    LOG_SIGMA = "LogSigma"
    RUNNING_LOG_SBAR = "RunningLogSbar"
    ESTIMATED_MEAN = "EstimatedMean"


@dataclass(frozen=True)
class TailExperimentConfig:
    """Grid of (N, n, t) cells for one ensemble; ``ensemble.n_dim`` is replaced by each N."""

    ensemble: EnsembleSpec
    N_grid: tuple
    n_grid: tuple
    t_grid: tuple
    trials: int = 10**4
    master_seed: int = 0
    center: Center | None = None

    def __post_init__(self):
        for name in ("N_grid", "n_grid", "t_grid"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ParameterError(f"{name} must be nonempty")
            object.__setattr__(self, name, vals)
        if any(int(N) != N or N < 1 for N in self.N_grid) or any(int(n) != n or n < 1 for n in self.n_grid):
            raise ParameterError("grid N and n values must be positive integers")
        if any(not t > 0 for t in self.t_grid):
            raise ParameterError("t values must be > 0")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        seed_words(self.master_seed)
        if self.ensemble.family not in ROTATION_INVARIANT:
            raise UsageError(f"tail experiments need a rotation invariant family, got {self.ensemble.family.value}")
        center = self.center or default_center(self.ensemble.family)
        object.__setattr__(self, "center", Center(center))
        if self.center is Center.LOG_SIGMA and self.ensemble.family is not Family.GAUSSIAN:
            raise ParameterError("center LogSigma applies to GaussianIID only")
        if bound_case(self.ensemble) == "BoundedSV" and self.center is not Center.ESTIMATED_MEAN:
            bad = [t for t in self.t_grid if not 0 < t < 0.25]
            if bad:
                raise ValidityError(f"t={bad[0]} outside (0, 1/4), the validity region of the bounded-singular-value bound")


def default_center(family: Family) -> Center:
    return Center.LOG_SIGMA if family is Family.GAUSSIAN else Center.RUNNING_LOG_SBAR


def bound_case(spec: EnsembleSpec) -> str:
    return "Gaussian" if spec.family is Family.GAUSSIAN else "BoundedSV"


def _b_for(spec: EnsembleSpec) -> float | None:
    if spec.family is Family.ROTATED:
        return spec.b_const
    if spec.family is Family.RANK_ONE:
        # s_max = N s_bar, so the ratio constant grows with N
        return float(spec.n_dim)
    return None


def _tail_cell_draws(cfg: TailExperimentConfig, N: int, n: int, chunk: int, size: int):
    spec = cfg.ensemble.with_dim(N)
    rng = make_rng(cfg.master_seed, Stream.TAILS, N, n, chunk)
    return batch_log_vector(spec, n, size, rng)


def _estimated_center(spec: EnsembleSpec, seed, samples: int = 10**6) -> tuple[float, float]:
    y = stretch_samples(spec, trials=samples, seed=make_rng(seed, Stream.CENTER, spec.n_dim))
    return float(y.mean()), float(y.std(ddof=1) / math.sqrt(samples))


def run_tail_experiment(cfg: TailExperimentConfig, center_samples: int = 10**6) -> list[ExperimentRecord]:
    """Deviation frequencies of ``n^-1 log ||Pi_n v||`` about the chosen centre.

    Each cell yields two records. ``:linear`` uses ``D = n^-1 log ||Pi_n v|| - c``
    with ``c = log sigma`` or ``n^-1 sum log s_bar_i`` (the latter mixes a norm
    with a squared norm and is flagged ``unit-mismatch``); ``:squared`` uses
    ``D = n^-1 log ||Pi_n v||^2 - c2`` with ``c2 = 2 log sigma`` or
    ``n^-1 sum log s_bar_i``. Hits count ``|D| > t``.
    """
    spec0 = cfg.ensemble
    fam = spec0.family.value
    case = bound_case(spec0)
    cells = [(N, n) for N in cfg.N_grid for n in cfg.n_grid]
    tasks = [(N, n, c, size) for N, n in cells for c, size in _chunks(cfg.trials)]
    results = _pmap(lambda k: _tail_cell_draws(cfg, *k), tasks)
    by_cell: dict = {}
    for (N, n, _, _), res in zip(tasks, results):
        by_cell.setdefault((N, n), []).append(res)

    centers = {}
    if cfg.center is Center.ESTIMATED_MEAN:
        centers = {N: _estimated_center(spec0.with_dim(N), cfg.master_seed, center_samples)[0] for N in cfg.N_grid}

    records = []
    for N, n in cells:
        parts = by_cell[(N, n)]
        cum = np.concatenate([p[0] for p in parts])
        if cfg.center is Center.LOG_SIGMA:
            lin = cum / n - math.log(spec0.sigma)
            sq = 2 * cum / n - 2 * math.log(spec0.sigma)
            mismatch = False
        elif cfg.center is Center.RUNNING_LOG_SBAR:
            if any(p[1] is None for p in parts):
                raise UsageError(f"{fam} does not expose s_bar without forming the factor")
            sb = np.concatenate([p[1] for p in parts]) / n
            lin = cum / n - sb
            sq = 2 * cum / n - sb
            mismatch = True
        else:
            lin = cum / n - centers[N]
            sq = 2 * lin
            mismatch = False
        spec = spec0.with_dim(N)
        for t in cfg.t_grid:
            if cfg.center is Center.ESTIMATED_MEAN:
                bound, flags = math.inf, []
            else:
                try:
                    bv = analytics.prop1_bound(case, t, n, N, _b_for(spec))
                    bound, flags = bv.raw, ([bv.note] if bv.note else [])
                except ValidityError:
                    bound, flags = math.inf, ["t-outside-validity"]
            for tag, dev, extra in (("linear", lin, ["unit-mismatch"] if mismatch else []), ("squared", sq, [])):
                hits = int(np.count_nonzero(np.abs(dev) > t))
                records.append(
                    make_record(
                        f"{spec0.label}:{cfg.center.value}:{tag}", fam, N, n, t, cfg.trials, hits,
                        bound, flags + extra, cfg.master_seed,
                    )
                )
    return records


# -- quadratic form tails ------------------------------------------------------------------

def quadform_spectrum(N: int, B: float, kind: str, rng: np.random.Generator) -> np.ndarray:
    """Fixed spectra with ``|s_k| <= B``: ``two_point`` (half 0, half B) or ``uniform`` on [0, B]."""
    if kind == "two_point":
        s = np.zeros(N)
        s[: N // 2] = B
        return s
    if kind == "uniform":
        return rng.uniform(0.0, B, N)
    raise ParameterError("spectrum kind must be 'two_point' or 'uniform'")


def run_quadform_tail_experiment(
    N_grid: Sequence[int],
    t_grid: Sequence[float],
    B: float = 1.0,
    trials: int = 10**5,
    seed: int = 0,
    kind: str = "two_point",
    max_trials: int = 10**6,
) -> list[ExperimentRecord]:
    """Both one-sided tails of ``sum s_k u_k^2 - s_bar`` for Haar u against the raw bound.

    A cell whose bound sits below the zero-hit confidence limit of ``trials``
    gets its trial count raised (up to ``max_trials``) so the bound can be
    resolved.
    """
    records = []
    for N in N_grid:
        s = quadform_spectrum(N, B, kind, make_rng(seed, Stream.QUADFORM, N, 0))
        sbar = float(s.mean())
        for j, t in enumerate(t_grid):
            bound = analytics.quadform_tail_bound(t, N, B)
            T = trials
            if bound < 1 and zero_hit_upper(T) > bound:
                T = min(max_trials, max(T, trials_to_resolve(bound)))
            rng = make_rng(seed, Stream.QUADFORM, N, 1 + j)
            up = lo = 0
            for c, size in _chunks(T):
                u = haar_vectors(N, size, rng)
                x = (u * u) @ s - sbar
                up += int(np.count_nonzero(x >= t))
                lo += int(np.count_nonzero(x <= -t))
            for tag, h in (("upper", up), ("lower", lo)):
                records.append(make_record(f"QuadForm({kind},B={B!r}):{tag}", "QuadForm", N, 1, t, T, h, bound, [], seed))
    return records


# -- Laplace transform check -------------------------------------------------------------

class MGFCheck(NamedTuple):
    z: float
    empirical: float
    std_err: float
    bound: float
    holds: bool


def run_mgf_check(spec: EnsembleSpec, z_grid: Sequence[float], samples: int = 10**6, seed: int = 0) -> list[MGFCheck]:
    """Empirical ``E exp(z Y)`` for ``Y = log ||X v||^2 - log s_bar`` against its closed-form bound.

    Uses ``c = (2 log 2) b`` with the spectrum's b; every z must satisfy
    ``|z| < N/(16c)``.
    """
    if spec.family is not Family.ROTATED:
        raise UsageError("the MGF check needs a RotatedSpectrum spec")
    N = spec.n_dim
    c = analytics.C_OVER_B * spec.b_const
    rng = make_rng(seed, Stream.MGF, N)
    ys = []
    v = np.zeros((1, N))
    v[0, 0] = 1.0
    for _, size in _chunks(samples):
        u, sb = act(spec, np.broadcast_to(v, (size, N)), rng)
        ys.append(np.log(np.einsum("ti,ti->t", u, u)) - np.log(sb))
    y = np.concatenate(ys)
    out = []
    for z in z_grid:
        bound = analytics.mgf_lemma_bound(z, N, c)
        e = np.exp(z * y)
        m, se = float(e.mean()), float(e.std(ddof=1) / math.sqrt(y.size))
        out.append(MGFCheck(float(z), m, se, bound, m + 3 * se <= bound))
    return out


# -- dimension uniformity ---------------------------------------------------------------------

class UniformityRow(NamedTuple):
    N: int
    n: int
    trials: int
    hits: int
    freq: float
    ci_upper: float
    center: float
    center_se: float


class UniformitySummary(NamedTuple):
    n: int
    max_freq: float
    mk_s: float
    mk_p: float
    uniform: bool


class UniformityReport(NamedTuple):
    rows: list
    summary: list
    nonincreasing: bool


def run_uniformity_check(
    spec: EnsembleSpec,
    delta: float,
    n_grid: Sequence[int],
    N_grid: Sequence[int],
    trials: int = 1000,
    seed: int = 0,
    center_samples: int = 10**6,
    cap: int = 512,
    level: float = 1e-2,
) -> UniformityReport:
    """Empirical ``Pr{|n^-1 log ||Pi_n|| - E log ||X_1 v||| >= delta}`` over an (N, n) grid.

    The centre is a Monte Carlo mean of ``center_samples`` stretch samples per
    N. ``ci_upper`` counts deviations beyond ``delta - 3 SE`` so the centre's
    own error is folded into the limit. Per n, the max over N is reported
    together with a Mann-Kendall test for an increasing trend in N;
    ``uniform`` means no trend at ``level``.
    """
    if spec.family is Family.HAAR_VECTOR:
        raise UsageError("HaarVector has no matrices to multiply")
    if not delta > 0:
        raise ParameterError("delta must be > 0")
    if any(N > cap for N in N_grid):
        raise ParameterError(f"N values must be within the exact-norm cap {cap}")
    N_grid, n_grid = sorted(N_grid), sorted(n_grid)
    centers = {N: _estimated_center(spec.with_dim(N), seed, center_samples) for N in N_grid}

    def cell(key):
        N, n, c, size = key
        return batch_log_opnorm(spec.with_dim(N), n, size, make_rng(seed, Stream.UNIFORMITY, N, n, c))

    tasks = [(N, n, c, size) for N in N_grid for n in n_grid for c, size in _chunks(trials, _opnorm_chunk(N))]
    res = dict(zip(tasks, _pmap(cell, tasks)))
    rows = []
    for N in N_grid:
        mu, se = centers[N]
        for n in n_grid:
            cum = np.concatenate([res[k] for k in tasks if k[:2] == (N, n)])
            dev = np.abs(cum / n - mu)
            hits = int(np.count_nonzero(dev >= delta))
            loose = int(np.count_nonzero(dev >= delta - 3 * se))
            rows.append(UniformityRow(N, n, trials, hits, hits / trials, clopper_pearson_upper(loose, trials, CONFIDENCE), mu, se))
    summary = []
    for n in n_grid:
        freqs = [r.freq for r in rows if r.n == n]
        mk = mann_kendall(freqs) if len(freqs) >= 2 else None
        p = mk.p_increasing if mk else 1.0
        summary.append(UniformitySummary(n, max(freqs), mk.s if mk else 0.0, p, p >= level))
    mx = [s.max_freq for s in summary]
    return UniformityReport(rows, summary, all(b <= a for a, b in zip(mx, mx[1:])))


# -- counterexample identities ----------------------------------------------------------------

class IdentityCheck(NamedTuple):
    lhs: float
    rhs: float
    abs_err: float


def reproduce_rank_one_identity(N: int, n: int, seed: SeedLike = 0) -> IdentityCheck:
    """``n^-1 log ||Pi_n||^2`` against ``(log N)/n + n^-1 sum_{i<n} log xi_i``.

    ``xi_i = N <x_{i+1}, y_i>^2`` and both sides come from the same factors
    the operator tracker multiplies (no dimension cap).
    """
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 2:
        raise ParameterError("N must be an integer >= 2")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 2:
        raise ParameterError("n must be an integer >= 2")
    spec = EnsembleSpec.rank_one(int(N))
    xs, ys = [], []

    def tapped():
        for b in iter_step_batches(spec, int(n), make_rng(seed)):
            xs.append(b.aux["x"])
            ys.append(b.aux["y"])
            yield b

    logs = _operator_over(tapped(), N, N * EPS)
    x, y = np.concatenate(xs), np.concatenate(ys)
    inner = np.einsum("ij,ij->i", x[1:], y[:-1])
    zero = np.flatnonzero(inner == 0.0)
    if zero.size:
        raise DegenerateTrajectoryError(int(zero[0]) + 2)
    lhs = 2.0 * math.fsum(logs) / n
    rhs = math.log(N) / n + math.fsum(np.log(N * inner * inner)) / n
    return IdentityCheck(lhs, rhs, abs(lhs - rhs))


class BernoulliCheck(NamedTuple):
    lhs: float
    rhs: float
    abs_err: float
    limit: float


def reproduce_bernoulli_identity(spec: EnsembleSpec, n: int, seed: SeedLike = 0) -> BernoulliCheck:
    """``n^-1 log ||Pi_n||`` against ``log a + log(b/a) max_k beta_k / n`` from the same draws.

    ``limit`` is the fixed-N almost-sure value ``log a + p log(b/a)``.
    """
    if spec.family is not Family.BERNOULLI:
        raise UsageError("need a DiagonalBernoulli spec")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError("n must be a positive integer")
    counts = np.zeros(spec.n_dim, dtype=np.int64)

    def tapped():
        for b in iter_step_batches(spec, int(n), make_rng(seed)):
            counts[:] += b.aux["hi"].sum(axis=0)
            yield b

    logs = _operator_over(tapped(), spec.n_dim, 0.0)
    a, b = spec.bern_lo, spec.bern_hi
    lhs = math.fsum(logs) / n
    rhs = math.log(a) + math.log(b / a) * int(counts.max()) / n
    return BernoulliCheck(lhs, rhs, abs(lhs - rhs), math.log(a) + spec.prob_hi * math.log(b / a))


# -- norm tail scan ---------------------------------------------------------------------------

def threshold(desc: str, N: int) -> float:
    """Built-in thresholds b(N): ``log``, ``sqrt_log``, ``power:kappa``, ``const:c``."""
    kind, _, arg = desc.partition(":")
    if kind == "log":
        return math.log(N)
    if kind == "sqrt_log":
        return math.sqrt(math.log(N))
    try:
        if kind == "power":
            return N ** float(arg)
        if kind == "const":
            return float(arg)
    except ValueError:
        pass
    raise ParameterError(f"threshold must be log, sqrt_log, power:<kappa> or const:<c>, got {desc!r}")


def _exact_norms(spec: EnsembleSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    N = spec.n_dim
    f = spec.family
    if f is Family.RANK_ONE:
        x = haar_vectors(N, size, rng)
        y = haar_vectors(N, size, rng)
        return math.sqrt(N) * np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)
    if f is Family.ROTATED:
        return spec.spectrum.sample(rng, (size, N)).max(axis=1)
    if f is Family.BERNOULLI:
        hi = (rng.random((size, N)) < spec.prob_hi).any(axis=1)
        return np.where(hi, max(spec.bern_hi, spec.bern_lo), spec.bern_lo)
    if f is Family.GAUSSIAN:
        g = rng.standard_normal((size, N, N)) * (spec.sigma / math.sqrt(N))
        return np.linalg.svd(g, compute_uv=False)[:, 0]
    raise UsageError("HaarVector has no operator norm")


def run_norm_tail_scan(
    spec: EnsembleSpec, N_grid: Sequence[int], threshold_fn: str = "log", trials: int = 10**4, seed: int = 0
) -> list[ExperimentRecord]:
    """Frequency of ``||X_1|| >= b(N)`` per N, from exact single-factor norms."""
    threshold(threshold_fn, 2)
    records = []
    for N in N_grid:
        b = threshold(threshold_fn, N)
        s = spec.with_dim(N)
        rng = make_rng(seed, Stream.NORMSCAN, N)
        step = max(1, min(CHUNK_TRIALS, 2**22 // (N * N)))
        hits = 0
        for start in range(0, trials, step):
            hits += int(np.count_nonzero(_exact_norms(s, min(step, trials - start), rng) >= b))
        records.append(make_record(f"{s.label}:norm>={threshold_fn}", s.family.value, N, 1, b, trials, hits, math.inf, [], seed))
    return records


# -- reports ----------------------------------------------------------------------------------

CONFIG_MARK = "# prodrand-config"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_text(records: Sequence[ExperimentRecord], fmt: str = "csv", config_echo: dict | None = None) -> str:
    """Serialise records with a config echo; the output is a pure function of its inputs."""
    records = list(records)
    if not records:
        raise ParameterError("refusing to write an empty report")
    echo = dict(config_echo or {})
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(CONFIG_MARK + "\n")
        for k in sorted(echo):
            buf.write(f"# {k} = {echo[k]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        return buf.getvalue()
    if fmt == "jsonl":
        lines = [json.dumps({"config": {k: echo[k] for k in sorted(echo)}}, sort_keys=True)]
        lines += [json.dumps({c: getattr(r, c) for c in COLUMNS}) for r in records]
        return "\n".join(lines) + "\n"
    raise ParameterError(f"format must be csv or jsonl, got {fmt!r}")


def emit_report(records: Sequence[ExperimentRecord], path, fmt: str = "csv", config_echo: dict | None = None) -> Path:
    text = report_text(records, fmt, config_echo)
    p = Path(path)
    p.write_text(text)  # OSError propagates: the CLI maps it to exit status 2
    return p


def _parse_row(d: dict) -> ExperimentRecord:
    kw = {}
    for f in fields(ExperimentRecord):
        v = d[f.name]
        kw[f.name] = v if f.type == "str" else (int(v) if f.type == "int" else float(v))
    return ExperimentRecord(**kw)


def parse_report(text: str) -> tuple[list[ExperimentRecord], dict]:
    lines = text.splitlines()
    if lines and lines[0] == CONFIG_MARK:
        echo, body = {}, []
        for line in lines[1:]:
            if line.startswith("# "):
                k, _, v = line[2:].partition(" = ")
                echo[k] = v
            else:
                body.append(line)
        rows = list(csv.DictReader(body))
        return [_parse_row(r) for r in rows], echo
    if lines and lines[0].startswith("{"):
        head = json.loads(lines[0])
        return [_parse_row(json.loads(l)) for l in lines[1:] if l.strip()], head.get("config", {})
    raise ParameterError("not a prodrand report")


def read_report(path) -> tuple[list[ExperimentRecord], dict]:
    return parse_report(Path(path).read_text())
