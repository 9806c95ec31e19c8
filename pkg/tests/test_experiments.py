import math

import numpy as np
import pytest

from prodrand import analytics
from prodrand.ensembles import EnsembleSpec
from prodrand.errors import ParameterError, UsageError, ValidityError
from prodrand.experiments import (
    COLUMNS,
    Center,
    ExperimentRecord,
    TailExperimentConfig,
    emit_report,
    make_record,
    parse_report,
    read_report,
    report_text,
    reproduce_bernoulli_identity,
    reproduce_rank_one_identity,
    run_mgf_check,
    run_norm_tail_scan,
    run_quadform_tail_experiment,
    run_tail_experiment,
    run_uniformity_check,
    threshold,
)


def _by_tag(records, tag):
    return [r for r in records if r.ensemble.endswith(":" + tag)]


# -- records ------------------------------------------------------------------

def test_record_flags():
    r = make_record("e", "f", 4, 5, 0.1, 100, 0, 1e-3, [], 0)
    assert {"underpowered", "power-limited"} <= r.flags
    assert r.ci_upper >= r.freq and r.bound_respected
    r = make_record("e", "f", 4, 5, 0.1, 10**4, 0, 1e-8, [], 0)
    assert "vacuous" in r.flags and "underpowered" not in r.flags
    r = make_record("e", "f", 4, 5, 0.1, 10**4, 3, 1e-8, [], 0)
    assert not r.bound_respected
    assert make_record("e", "f", 4, 5, 0.1, 10, 1, math.inf, [], 0).validity == "no-bound"
    assert make_record("e", "f", 4, 5, 0.1, 10**3, 1, 0.5, [], 0).validity == "ok"
    with pytest.raises(ParameterError):
        ExperimentRecord("e", "f", 1, 1, 0.1, 5, 6, 1.2, 1.0, 1.0, "ok", 0)


# -- tail experiments -----------------------------------------------------------

def test_config_validation():
    g = EnsembleSpec.gaussian(4)
    with pytest.raises(ParameterError):
        TailExperimentConfig(g, (), (1,), (0.1,))
    with pytest.raises(ParameterError):
        TailExperimentConfig(g, (4,), (1,), (0.0,))
    with pytest.raises(ParameterError):
        TailExperimentConfig(g, (4,), (1,), (0.1,), master_seed=-1)
    with pytest.raises(UsageError):
        TailExperimentConfig(EnsembleSpec.bernoulli(4, 1, 2, 0.5), (4,), (1,), (0.1,))
    with pytest.raises(ValidityError, match=r"\(0, 1/4\)"):
        TailExperimentConfig(EnsembleSpec.rotated(4, 1, 2), (4,), (1,), (0.3,))
    with pytest.raises(ParameterError):
        TailExperimentConfig(EnsembleSpec.rotated(4, 1, 2), (4,), (1,), (0.1,), center=Center.LOG_SIGMA)
    cfg = TailExperimentConfig(EnsembleSpec.rotated(4, 1, 2), (4,), (1,), (0.3,), center=Center.ESTIMATED_MEAN)
    assert cfg.center is Center.ESTIMATED_MEAN


def test_gaussian_large_cell_has_no_hits():
    cfg = TailExperimentConfig(EnsembleSpec.gaussian(1), (64,), (50,), (0.5,), trials=10**4, master_seed=3)
    recs = run_tail_experiment(cfg)
    assert len(recs) == 2
    bound = analytics.prop1_bound("Gaussian", 0.5, 50, 64).raw
    for r in recs:
        assert r.bound == pytest.approx(bound) and bound == pytest.approx(2 * math.exp(-100))
        assert r.hits == 0 and r.freq <= r.ci_upper
        assert "vacuous" in r.flags and r.bound_respected


def test_point_mass_never_deviates():
    spec = EnsembleSpec.point_mass(1, 1.7)
    cfg = TailExperimentConfig(spec, (3, 9), (4, 20), (1e-3, 0.1, 0.2), trials=500)
    recs = run_tail_experiment(cfg, center_samples=1000)
    assert len(recs) == 2 * 2 * 3 * 2
    sq = _by_tag(recs, "squared")
    assert all(r.hits == 0 for r in sq)


def test_small_gaussian_cell_is_uninformative():
    cfg = TailExperimentConfig(EnsembleSpec.gaussian(1), (4,), (5,), (0.05,), trials=10**4)
    for r in run_tail_experiment(cfg):
        assert r.freq > 0
        assert r.bound > 1
        assert "N<4/t^2" in r.flags


def test_running_sbar_centre_flags_units():
    cfg = TailExperimentConfig(EnsembleSpec.rotated(1, 1, 2), (16,), (10,), (0.2,), trials=2000)
    recs = run_tail_experiment(cfg)
    assert "unit-mismatch" in _by_tag(recs, "linear")[0].flags
    assert "unit-mismatch" not in _by_tag(recs, "squared")[0].flags


def test_estimated_centre_has_no_bound():
    cfg = TailExperimentConfig(EnsembleSpec.rank_one(1), (8,), (5,), (0.3,), trials=2000, center="EstimatedMean")
    recs = run_tail_experiment(cfg, center_samples=10**4)
    assert all(r.bound == math.inf and "no-bound" in r.flags for r in recs)


def test_tail_experiment_thread_independent(monkeypatch):
    cfg = TailExperimentConfig(EnsembleSpec.gaussian(1), (4, 9), (3, 7), (0.2, 0.4), trials=4500, master_seed=11)
    monkeypatch.setenv("PRODRAND_THREADS", "1")
    a = report_text(run_tail_experiment(cfg))
    monkeypatch.setenv("PRODRAND_THREADS", "4")
    b = report_text(run_tail_experiment(cfg))
    assert a == b
    monkeypatch.setenv("PRODRAND_THREADS", "many")
    with pytest.raises(ParameterError):
        run_tail_experiment(cfg)


# -- quadratic forms and the MGF bound ---------------------------------------------

def test_quadform_small_grid_sound():
    recs = run_quadform_tail_experiment((16, 64), (0.25, 0.5), trials=20000, seed=2)
    assert len(recs) == 8
    for r in recs:
        assert r.bound == pytest.approx(analytics.quadform_tail_bound(r.t, r.N, 1.0))
        assert r.bound_respected


def test_quadform_raises_trials_for_small_bounds():
    recs = run_quadform_tail_experiment((256,), (0.5,), trials=1000, seed=1)
    b = analytics.quadform_tail_bound(0.5, 256, 1.0)
    assert recs[0].trials > 1000 and recs[0].ci_upper <= b


def test_quadform_validation():
    with pytest.raises(ParameterError):
        run_quadform_tail_experiment((8,), (0.1,), kind="cauchy")


def test_mgf_check_holds():
    spec = EnsembleSpec.rotated(256, 1.0, 1.04)
    checks = run_mgf_check(spec, [-4.0, 0.0, 1.0, 4.0], samples=2 * 10**5, seed=3)
    c = analytics.C_OVER_B * spec.b_const
    assert c == pytest.approx(1.5, abs=0.01)
    assert all(ch.holds for ch in checks)
    assert checks[1].empirical == pytest.approx(1.0)
    with pytest.raises(ValidityError):
        run_mgf_check(spec, [20.0], samples=100)
    with pytest.raises(UsageError):
        run_mgf_check(EnsembleSpec.gaussian(8), [1.0], samples=100)


# -- uniformity ---------------------------------------------------------------------

def test_uniformity_small_grid():
    rep = run_uniformity_check(
        EnsembleSpec.rotated(2, 1.0, 2.0), 0.1, (10, 100), (2, 8), trials=400, seed=5, center_samples=10**5
    )
    assert len(rep.rows) == 4 and len(rep.summary) == 2
    for r in rep.rows:
        assert r.ci_upper >= r.freq and r.center_se > 0
    assert rep.nonincreasing
    assert rep.summary[1].max_freq <= rep.summary[0].max_freq


def test_uniformity_bernoulli_drifts_with_n_dim():
    rep = run_uniformity_check(
        EnsembleSpec.bernoulli(2, 1.0, 2.0, 0.5), 0.2, (10,), (1, 2, 4, 8, 16, 32, 64),
        trials=2000, seed=6, center_samples=10**5,
    )
    freqs = [r.freq for r in rep.rows]
    assert freqs[-1] > freqs[0] + 0.5
    assert not rep.summary[0].uniform


def test_uniformity_rank_one_bias_breaks_uniformity():
    rep = run_uniformity_check(
        EnsembleSpec.rank_one(2), 0.2, (5,), (2, 4, 8, 16, 32, 64, 128),
        trials=1000, seed=7, center_samples=10**5,
    )
    assert not rep.summary[0].uniform


def test_uniformity_validation():
    with pytest.raises(ParameterError):
        run_uniformity_check(EnsembleSpec.gaussian(2), 0.1, (10,), (1024,), cap=512)
    with pytest.raises(ParameterError):
        run_uniformity_check(EnsembleSpec.gaussian(2), 0.0, (10,), (2,))


# -- counterexample identities ---------------------------------------------------------

@pytest.mark.parametrize("N,n,seed", [(2, 2, 0), (2, 2, 1), (8, 5, 7), (50, 30, 3), (1000, 10, 4)])
def test_rank_one_identity(N, n, seed):
    r = reproduce_rank_one_identity(N, n, seed)
    assert r.abs_err <= 1e-10 * n


def test_rank_one_bias_term():
    # the (log N)/n term at N = 1e4, n = 10
    assert math.log(1e4) / 10 == pytest.approx(0.921, abs=1e-3)
    r = reproduce_rank_one_identity(1000, 10, 1)
    assert r.abs_err <= 1e-9
    with pytest.raises(ParameterError):
        reproduce_rank_one_identity(1, 3)
    with pytest.raises(ParameterError):
        reproduce_rank_one_identity(3, 1)


def test_bernoulli_identity_examples():
    r = reproduce_bernoulli_identity(EnsembleSpec.bernoulli(3, 1.5, 1.5, 0.5), 20, 0)
    assert r.lhs == pytest.approx(math.log(1.5)) and r.rhs == pytest.approx(math.log(1.5))
    r = reproduce_bernoulli_identity(EnsembleSpec.bernoulli(4, 1.0, 2.0, 0.5), 50, 9)
    assert r.abs_err <= 1e-10
    assert r.limit == pytest.approx(0.5 * math.log(2))
    with pytest.raises(UsageError):
        reproduce_bernoulli_identity(EnsembleSpec.gaussian(3), 5)


def test_bernoulli_identity_long_run():
    r = reproduce_bernoulli_identity(EnsembleSpec.bernoulli(4, 1.0, 3.0, 0.3), 10**4, 2)
    assert r.abs_err <= 1e-12 * 10**4


# -- norm scans ---------------------------------------------------------------------------

def test_thresholds():
    assert threshold("log", 100) == pytest.approx(math.log(100))
    assert threshold("sqrt_log", 100) == pytest.approx(math.sqrt(math.log(100)))
    assert threshold("power:0.25", 16) == pytest.approx(2.0)
    assert threshold("const:1.5", 7) == 1.5
    for bad in ("cube", "power:x", "const:"):
        with pytest.raises(ParameterError):
            threshold(bad, 3)


def test_rank_one_norm_always_exceeds_log():
    recs = run_norm_tail_scan(EnsembleSpec.rank_one(2), (2, 16, 256, 1000), "log", trials=500, seed=1)
    assert all(r.freq == 1.0 for r in recs)


def test_gaussian_norm_tail_vanishes():
    recs = run_norm_tail_scan(EnsembleSpec.gaussian(2), (16, 64, 256), "log", trials=1000, seed=2)
    f = [r.freq for r in recs]
    assert f[0] >= f[1] >= f[2] and f[2] < 1e-2
    recs = run_norm_tail_scan(EnsembleSpec.gaussian(2), (4, 16, 64), "const:1", trials=500, seed=3)
    assert all(r.freq > 0.95 for r in recs)


def test_rotated_norm_is_top_diagonal():
    recs = run_norm_tail_scan(EnsembleSpec.rotated(2, 1.0, 2.0), (1, 100), "const:1.99", trials=3000, seed=4)
    assert recs[0].freq == pytest.approx(0.01, abs=0.01)
    assert recs[1].freq > 0.6


# -- reports --------------------------------------------------------------------------

def _records():
    cfg = TailExperimentConfig(EnsembleSpec.gaussian(1), (4,), (3,), (0.2, 0.5), trials=300, master_seed=1)
    return run_tail_experiment(cfg)


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_report_roundtrip(fmt, tmp_path):
    recs = _records()
    echo = {"experiment.trials": "300", "ensemble.family": "GaussianIID"}
    p = emit_report(recs, tmp_path / f"r.{fmt}", fmt, echo)
    back, got_echo = read_report(p)
    assert back == recs and got_echo == echo
    assert report_text(back, fmt, got_echo) == p.read_text()


def test_report_header_and_inf():
    rec = make_record("e", "f", 2, 1, 0.5, 10, 10, math.inf, [], 3)
    text = report_text([rec])
    lines = text.splitlines()
    assert lines[0] == "# prodrand-config"
    assert lines[1] == ",".join(COLUMNS)
    assert parse_report(text)[0] == [rec]
    assert parse_report(report_text([rec], "jsonl"))[0] == [rec]


def test_report_errors(tmp_path):
    with pytest.raises(ParameterError):
        report_text([])
    with pytest.raises(ParameterError):
        report_text(_records(), "xml")
    with pytest.raises(ParameterError):
        parse_report("hello")
    with pytest.raises(OSError):
        emit_report(_records(), tmp_path / "missing" / "r.csv")
