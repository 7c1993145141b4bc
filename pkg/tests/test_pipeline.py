from dataclasses import replace

import pytest

from patternflow.core.errors import InvalidInputError, WrongModeError, WrongRegimeError
from patternflow.models.models import FlowMode, Regime
from patternflow.runner.pipeline import run_pipeline


@pytest.fixture
def entangled(gamma6_scenario):
    return replace(gamma6_scenario, horizon=1e4)


def test_sft_fixes_a_regime2_start(entangled):
    report = run_pipeline(entangled, (0.9, 0.05, 0.05), epsilon=0.05, horizon_cap=1e4)
    assert report.predicted_post_sft_acc == pytest.approx(0.845, abs=1e-12)
    assert report.post_sft_regime is Regime.REGIME1
    assert report.post_sft_regime1
    assert report.sft_within_bound
    assert report.sft_time <= report.t1_sft
    assert abs(report.post_sft_acc - report.predicted_post_sft_acc) < 0.05
    assert report.pure_time is not None
    assert report.pipeline_time == pytest.approx(report.sft_time + report.rlvr_after_sft_time)
    assert report.pipeline_faster
    assert report.pipeline_time_at_t1_sft == pytest.approx(report.t1_sft + report.rlvr_after_sft_time)
    assert report.pipeline_time_at_t1_sft > report.pipeline_time
    assert report.pipeline_faster_at_t1_sft == (report.pipeline_time_at_t1_sft < report.pure_time)


def test_censored_pure_branch(entangled):
    report = run_pipeline(entangled, (0.9, 0.05, 0.05), epsilon=0.05, horizon_cap=40.0)
    assert report.pure_censored
    assert report.pure_time is None
    assert report.pipeline_faster
    dumped = report.model_dump(mode="json")
    assert dumped["pipeline_faster"] is True
    assert dumped["pipeline_time_at_t1_sft"] == pytest.approx(report.t1_sft + report.rlvr_after_sft_time)
    assert dumped["pipeline_faster_at_t1_sft"] is False
    assert dumped["post_sft_regime"] == "Regime1"


def test_p_sft_equal_to_reference_skips_sft(entangled):
    report = run_pipeline(entangled, entangled.ref_probs, epsilon=0.05, horizon_cap=1e4)
    assert report.t1_sft == pytest.approx(0.0, abs=1e-9)
    assert report.sft_time == 0.0
    assert report.post_sft_regime is Regime.REGIME2
    assert report.pipeline_time == pytest.approx(report.pure_time, rel=1e-6)


def test_pipeline_validation(entangled, regime1_scenario, sft_scenario):
    with pytest.raises(InvalidInputError):
        run_pipeline(entangled, (0.95, 0.05, 0.0))
    with pytest.raises(InvalidInputError):
        run_pipeline(entangled, (0.9, 0.05))
    with pytest.raises(WrongRegimeError):
        run_pipeline(regime1_scenario, (0.9, 0.05, 0.05))
    with pytest.raises(WrongModeError):
        run_pipeline(sft_scenario, (0.9, 0.05, 0.05))
    with pytest.raises(WrongModeError):
        run_pipeline(replace(entangled, mode=FlowMode.SAMPLED), (0.9, 0.05, 0.05))


def test_pipeline_time_at_t1_sft_needs_an_rlvr_time(entangled):
    report = run_pipeline(entangled, (0.9, 0.05, 0.05), epsilon=0.05, horizon_cap=1e4)
    unfinished = report.model_copy(update={"rlvr_after_sft_time": None, "pipeline_time": None})
    assert unfinished.pipeline_time_at_t1_sft is None
    assert unfinished.pipeline_faster_at_t1_sft is False
    assert unfinished.pipeline_faster is False
