import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vbspower import evaluation as ev
from vbspower.core import ModelKind, PlatformProfile, Scheduler
from vbspower.datagen import GenConfig, default_campaign, generate, get_profile
from vbspower.evaluation import EvalError, Scenario, SplitSpec, mae, rmse
from vbspower.regression import CustomRegParams

finite = dict(allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "n,train,test", [(598, 479, 119), (107, 86, 21), (160, 128, 32), (4955, 3964, 991), (1218, 975, 243), (705, 564, 141)]
)
def test_split_sizes_match_reference_tables(n, train, test):
    assert ev.n_train_for(n, 0.8) == train
    assert n - ev.n_train_for(n, 0.8) == test


def test_split_partition_and_determinism():
    ds = generate(GenConfig(get_profile("NUC1"), Scheduler.DEFAULT, 598, seed=0))
    tr, te = ev.split(ds, SplitSpec(seed=5))
    tr2, te2 = ev.split(ds, SplitSpec(seed=5))
    assert (len(tr), len(te)) == (479, 119)
    assert tr == tr2 and te == te2
    assert sorted(tr.samples + te.samples, key=repr) == sorted(ds.samples, key=repr)
    assert ev.split(ds, SplitSpec(seed=6))[1] != te


@given(n=st.integers(5, 3000), f=st.floats(0.05, 0.95, **finite))
def test_split_counts_partition(n, f):
    k = ev.n_train_for(n, f)
    assert 0 < k <= n
    assert abs(k - f * n) < 1.0


def test_split_too_small():
    ds = generate(GenConfig(get_profile("NUC1"), Scheduler.DEFAULT, 4, seed=0))
    with pytest.raises(EvalError):
        ev.split(ds, SplitSpec())


def test_rmse_examples():
    assert rmse([(22.0, 22.0)]) == 0.0
    assert rmse([(0, 3), (0, 4)]) == pytest.approx(np.sqrt(12.5), abs=1e-12)
    pairs = [(5.0, 5.0)] * 99 + [(10.0, 0.0)]
    assert rmse(pairs) == pytest.approx(1.0, abs=1e-12)
    assert mae(pairs) == pytest.approx(0.1, abs=1e-12)


def test_metrics_reject_empty():
    with pytest.raises(ValueError):
        rmse([])


@given(st.lists(st.tuples(st.floats(-100, 100, **finite), st.floats(-100, 100, **finite)), min_size=1, max_size=50))
def test_rmse_at_least_mae(pairs):
    assert rmse(pairs) >= mae(pairs) - 1e-9


@given(e=st.floats(0, 50, **finite), signs=st.lists(st.booleans(), min_size=1, max_size=20))
def test_rmse_equals_mae_for_equal_errors(e, signs):
    pairs = [(e if s else -e, 0.0) for s in signs]
    assert rmse(pairs) == pytest.approx(mae(pairs), rel=1e-12, abs=1e-12)


def test_scenario_parse():
    assert Scenario.parse("a") is Scenario.A
    assert Scenario.parse("C_CustomToCustomTest") is Scenario.C
    with pytest.raises(ValueError):
        Scenario.parse("E")


def test_scenario_b_nuc1_counts():
    reports = ev.run_scenario("B", "NUC1", 1, {"regression"})
    (r,) = reports
    assert (r.n_train, r.n_test) == (598, 991)
    assert r.model_kind is ModelKind.CUSTOM_REG
    assert 0 <= r.n_infeasible_skipped < r.n_test


def test_skip_accounting_matches_predictions():
    run = ev.evaluate_scenario("B", "Server2", 3, {"regression"})
    (o,) = run.outcomes
    evaluated = int(np.isfinite(o.test_pred).sum())
    assert evaluated + o.report.n_infeasible_skipped == o.report.n_test == len(run.test_set)
    ok = np.isfinite(o.test_pred)
    assert o.report.test_rmse_w == pytest.approx(rmse(np.column_stack([o.test_pred[ok], run.test_set.power_w[ok]])))


def _eq1_profile():
    # threshold line flat in MCS and no MCS terms: the custom curve reduces to the default model
    beta = (15.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.3, 0.0, -2.0, 0.3, 12.0, 0.0)
    return PlatformProfile("Eq1", "", CustomRegParams(beta), noise_sigma_w=0.0, outlier_prob=0.0)


def test_scenario_a_zero_noise_exact():
    prof = _eq1_profile()
    d = generate(GenConfig(prof, Scheduler.DEFAULT, 400, seed=2))
    c = generate(GenConfig(prof, Scheduler.CUSTOM, 400, seed=2))
    (r,) = ev.run_scenario("A", "Eq1", 2, {"regression"}, datasets=(d, c))
    assert r.model_kind is ModelKind.DEFAULT_REG
    assert r.test_rmse_w < 1e-6


def test_b_and_c_share_test_set_and_c_not_worse_without_outliers():
    prof = dataclasses.replace(get_profile("Server2"), outlier_prob=0.0)
    d = generate(GenConfig(prof, Scheduler.DEFAULT, 107, seed=1))
    c = generate(GenConfig(prof, Scheduler.CUSTOM, 705, seed=1))
    b = ev.run_scenario("B", "Server2", 1, {"regression"}, datasets=(d, c))[0]
    cc = ev.run_scenario("C", "Server2", 1, {"regression"}, datasets=(d, c))[0]
    assert b.test_fingerprint == cc.test_fingerprint
    assert b.n_test == cc.n_test == 141
    assert cc.test_rmse_w <= b.test_rmse_w


def test_scenario_d_is_nn_only():
    cfg = ev.mlp.TrainConfig(epochs=2)
    run = ev.evaluate_scenario("D", "Server2", 1, {"regression", "nn"}, train_config=cfg)
    assert [o.report.model_kind for o in run.outcomes] == [ModelKind.MLP]
    c_run = ev.evaluate_scenario("C", "Server2", 1, {"nn"}, train_config=cfg)
    assert run.outcomes[0].report.test_fingerprint == c_run.outcomes[0].report.test_fingerprint


def test_unknown_model_kind():
    with pytest.raises(EvalError):
        ev.run_scenario("A", "Server2", 1, {"svm"})


def test_missing_datasets():
    from vbspower.core import Dataset

    empty = Dataset((), "P", Scheduler.DEFAULT)
    with pytest.raises(EvalError, match="missing"):
        ev.run_scenario("A", "P", 1, datasets=(empty, empty))


def test_reports_deterministic_and_serialized():
    cfg = ev.mlp.TrainConfig(epochs=3)
    r1 = ev.run_scenario("A", "Server1", 4, train_config=cfg)
    r2 = ev.run_scenario("A", "Server1", 4, train_config=cfg)
    assert ev.reports_to_csv(r1) == ev.reports_to_csv(r2)
    lines = ev.reports_to_csv(r1).splitlines()
    assert lines[0] == "scenario,platform,model_kind,train_rmse_w,test_rmse_w,train_mae_w,test_mae_w,n_train,n_test,n_skipped,seed"
    assert len(lines) == 3
    assert ev.reports_to_json(r1, {"x": 1}) == ev.reports_to_json(r2, {"x": 1})
    assert all(r.test_rmse_w >= r.test_mae_w for r in r1)


def test_median_by_groups():
    cfg = ev.mlp.TrainConfig(epochs=1)
    reps = [r for s in (1, 2, 3) for r in ev.run_scenario("A", "Server2", s, {"regression"}, train_config=cfg)]
    med = ev.median_by(reps)
    key = (Scenario.A, "Server2", ModelKind.DEFAULT_REG)
    assert med[key] == pytest.approx(float(np.median([r.test_rmse_w for r in reps])))


def test_campaign_generated_when_datasets_omitted():
    d, c = default_campaign("Server2", 7)
    run = ev.evaluate_scenario("C", "Server2", 7, {"regression"})
    assert run.test_set == ev.split(c, SplitSpec(seed=7))[1]
