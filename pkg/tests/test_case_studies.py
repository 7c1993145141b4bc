import json

import pytest

from patternflow.core.errors import NotFoundError
from patternflow.dynamics.flow import integrate
from patternflow.models.models import Regime
from patternflow.runner.case_studies import CASE_STUDIES, get_case_study, relative_gap_time, run_case_study


def test_registry_lists_three_studies():
    assert set(CASE_STUDIES) == {"regime1_fast", "regime2_entangled_gamma6", "regime2_small_t0"}


def test_unknown_case_study():
    with pytest.raises(NotFoundError):
        get_case_study("regime3")
    with pytest.raises(NotFoundError):
        run_case_study("regime3")


def test_regime1_fast(tmp_path):
    report = run_case_study("regime1_fast", tmp_path)
    assert report.regime is Regime.REGIME1
    assert report.check("expect:converges").passed
    assert report.passed, report.failed_checks()

    run_dir = tmp_path / "regime1_fast"
    assert sorted(p.name for p in run_dir.iterdir()) == [
        "scenario.json",
        "summary.json",
        "trajectory.csv",
        "trajectory.svg",
    ]
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["scenario_digest"] == get_case_study("regime1_fast").scenario.digest()
    assert summary["converged"] is True
    assert summary["passed"] is True


def test_regime2_entangled_gamma6(tmp_path):
    report = run_case_study("regime2_entangled_gamma6", tmp_path)
    assert report.regime is Regime.REGIME2
    assert report.gamma == 6.0
    assert report.t0_log10 == pytest.approx(43.389, abs=0.01)
    assert report.t0_overflow is False
    assert report.check("expect:entanglement_ratio").passed
    assert report.check("expect:converges").passed
    assert report.passed, report.failed_checks()


def test_regime2_small_t0(tmp_path):
    report = run_case_study("regime2_small_t0", tmp_path)
    assert report.regime is Regime.REGIME2
    assert report.t0 == pytest.approx(2.81e4, rel=0.01)
    assert report.check("expect:acc_above_runner_up_after_t0").passed
    assert report.passed, report.failed_checks()


def test_entangled_run_is_much_slower_than_fast_run():
    fast = get_case_study("regime1_fast").scenario
    slow = get_case_study("regime2_entangled_gamma6").scenario
    slow_run = integrate(slow)
    gap = (0.9 - 0.6) / (0.9 - float(slow_run.acc[0]))
    assert relative_gap_time(slow, slow_run, gap) > 10 * relative_gap_time(fast, integrate(fast), gap)
