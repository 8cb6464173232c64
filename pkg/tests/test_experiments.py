import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcside import experiments as ex
from mcside.exceptions import SpecValidationError, ZeroDenominatorError
from mcside.linalg import SamplingPattern

TINY = dict(m=8, n=20, r=4, S=2, d=2)


def tiny_spec(**kw):
    base = ex.scenario1(trials=2).to_dict()
    base.update(TINY, grid=[0.6, 0.9])
    base.update(kw)
    return ex.ScenarioSpec.from_dict(base)


@given(st.integers(0, 10_000))
def test_nmse_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    M, H = rng.standard_normal((2, 4, 5))
    mask = rng.random((4, 5)) < 0.6
    mask[0, 0] = True
    num = den = rnum = rden = 0.0
    for i in range(4):
        for j in range(5):
            e = (M[i, j] - H[i, j]) ** 2
            num += e
            den += M[i, j] ** 2
            if mask[i, j]:
                rnum += e
                rden += M[i, j] ** 2
    assert ex.nmse(M, H) == pytest.approx(num / den, rel=1e-12)
    assert ex.rnmse(M, H, SamplingPattern(mask)) == pytest.approx(rnum / rden, rel=1e-12)


def test_metric_examples():
    M = np.eye(2)
    assert ex.nmse(M, M) == 0.0
    assert ex.nmse(M, np.zeros((2, 2))) == 1.0
    with pytest.raises(ZeroDenominatorError):
        ex.nmse(np.zeros((2, 2)), M)
    with pytest.raises(ZeroDenominatorError):
        ex.rnmse(M, M, np.array([[False, True], [True, False]]))


def test_presets_validate():
    s1, s2, s3 = ex.scenario1(), ex.scenario2(), ex.scenario3()
    assert s1.point(0)[0].counts == (20, 20, 20) and s1.point(0)[1] == 0.25
    assert s2.point(7)[2] == 100.0 and s2.point(0)[0].r == 15
    model, p, snr = s3.point(4)
    assert model.S == 6 and model.counts == (9, 9, 9, 10, 13, 14) and model.r == 12
    assert s3.point(8)[0].r == 20 and p == 0.3 and snr == 15.0


@pytest.mark.parametrize("override", [
    {"sweep": "q"}, {"grid": []}, {"trials": 0}, {"methods": ["other"]},
    {"grid": [1.5]}, {"measurement_reference": "nope"}, {"r": 30},
    {"counts": [[2, [5, 5]]]}, {"bogus": 1},
])
def test_spec_validation(override):
    with pytest.raises(SpecValidationError):
        tiny_spec(**override)


def test_spec_round_trip():
    spec = ex.scenario3(noisy=True)
    assert ex.ScenarioSpec.from_dict(spec.to_dict()) == spec


def test_seeds_are_distinct_and_stable():
    spec = tiny_spec()
    a = ex.make_trial_data(spec, 0, 0)
    b = ex.make_trial_data(spec, 0, 0)
    c = ex.make_trial_data(spec, 0, 1)
    np.testing.assert_array_equal(a.observed, b.observed)
    assert not np.array_equal(a.M, c.M)


def test_noisy_trial_hits_measurement_snr():
    spec = tiny_spec(noisy=True)
    d = ex.make_trial_data(spec, 0, 0)
    clean = np.where(d.pattern.mask, d.M, 0.0)
    noise = d.observed - clean
    assert abs(10 * np.log10(np.vdot(clean, clean) / np.vdot(noise, noise)) - 8.0) <= 1e-9


def test_run_and_aggregate(tmp_path):
    spec = tiny_spec()
    records = ex.run_scenario(spec, jobs=1)
    assert len(records) == 2 * 2 * 2
    assert all(r.ok for r in records)
    assert [(r.grid_index, r.trial, r.method) for r in records][:2] == [(0, 0, "proposed"), (0, 0, "baseline")]
    rows = ex.aggregate(records)
    assert [(r.method, r.sweep_value) for r in rows] == [
        ("proposed", 0.6), ("proposed", 0.9), ("baseline", 0.6), ("baseline", 0.9)]
    vals = [r.nmse for r in records if r.method == "proposed" and r.grid_index == 0]
    assert rows[0].nmse_mean == pytest.approx(np.mean(vals))
    assert rows[0].nmse_stderr == pytest.approx(np.std(vals, ddof=1) / np.sqrt(2))
    ex.write_aggregate_csv(tmp_path / "a.csv", rows)
    back = ex.read_aggregate_csv(tmp_path / "a.csv")
    assert [r.nmse_mean for r in back] == [r.nmse_mean for r in rows]
    ex.write_trials_csv(tmp_path / "t.csv", records)
    ex.write_timing_csv(tmp_path / "s.csv", records)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == ",".join(ex.TRIAL_COLUMNS)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == ",".join(ex.TIMING_COLUMNS)


def test_failed_trial_becomes_error_record(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("forced")

    monkeypatch.setattr(ex, "complete", boom)
    spec = tiny_spec(trials=1, grid=[0.6])
    records = ex.run_scenario(spec, jobs=1)
    assert all(not r.ok and "forced" in r.error for r in records)
    row = ex.aggregate(records)[0]
    assert row.count == 0 and row.failures == 1 and math.isnan(row.nmse_mean)


def test_default_jobs(monkeypatch):
    monkeypatch.setenv(ex.JOBS_ENV, "3")
    assert ex.default_jobs() == 3
    monkeypatch.setenv(ex.JOBS_ENV, "x")
    with pytest.raises(SpecValidationError):
        ex.default_jobs()


def test_runtime_probe(tmp_path):
    spec = tiny_spec(trials=1, grid=[0.8])
    rows = ex.runtime_probe(spec)
    assert len(rows) == 1 and rows[0].proposed > 0 and rows[0].baseline > 0
    ex.write_runtime_csv(tmp_path / "r.csv", rows)
    assert (tmp_path / "r.csv").read_text().startswith("sweepValue,")
