import json

import pytest

from patternflow.core.errors import (
    IllPosedTaskError,
    OutputFileError,
    ScenarioParseError,
    ScenarioValidationError,
)
from patternflow.dynamics.theory import gamma_ref
from patternflow.models.models import FlowMode, Regime, classify_regime
from patternflow.runner.scenarios import dump_scenario, load_scenario, load_scenario_file


def document(**overrides) -> dict:
    doc = {
        "patterns": [
            {"name": "r1", "p_succ": 0.9, "pi_ref": 0.5},
            {"name": "r2", "p_succ": 0.1, "pi_ref": 0.5},
        ],
        "beta": 0.0,
        "horizon": 10.0,
        "step": 0.1,
        "record_stride": 1,
        "seed": 0,
        "mode": "rlvr_flow",
    }
    doc.update(overrides)
    return doc


def test_minimal_document_loads():
    scenario = load_scenario(json.dumps(document()))
    assert scenario.k == 2
    assert scenario.task.names == ("r1", "r2")
    assert scenario.ref_probs == (0.5, 0.5)
    assert scenario.mode is FlowMode.RLVR_FLOW
    assert scenario.p_sft is None


def test_missing_field_is_named():
    doc = document()
    del doc["beta"]
    with pytest.raises(ScenarioParseError) as exc:
        load_scenario(json.dumps(doc))
    assert exc.value.field == "beta"


def test_invalid_json_is_a_parse_error():
    with pytest.raises(ScenarioParseError):
        load_scenario("{not json")
    with pytest.raises(ScenarioParseError):
        load_scenario("[1, 2, 3]")


@pytest.mark.parametrize(
    "patterns",
    [
        [{"name": "r1", "p_succ": 0.9, "pi_ref": 0.6}, {"name": "r2", "p_succ": 0.1, "pi_ref": 0.6}],
        [{"name": "r1", "p_succ": 1.2, "pi_ref": 0.5}, {"name": "r2", "p_succ": 0.1, "pi_ref": 0.5}],
        [{"name": "r1", "p_succ": 0.9, "pi_ref": 1.0}, {"name": "r2", "p_succ": 0.1, "pi_ref": 0.0}],
        [{"name": "r1", "p_succ": 0.9, "pi_ref": 0.5}, {"name": "r1", "p_succ": 0.1, "pi_ref": 0.5}],
        [{"name": "r1", "p_succ": 0.9, "pi_ref": 1.0}],
    ],
)
def test_invalid_patterns_are_rejected(patterns):
    with pytest.raises(ScenarioValidationError):
        load_scenario(json.dumps(document(patterns=patterns)))


def test_invalid_settings_are_rejected():
    for overrides in ({"beta": -0.1}, {"step": 0.0}, {"record_stride": 0}, {"mode": "annealed"}):
        with pytest.raises(ScenarioValidationError):
            load_scenario(json.dumps(document(**overrides)))


def test_sft_mode_needs_valid_p_sft():
    with pytest.raises(ScenarioValidationError):
        load_scenario(json.dumps(document(mode="sft_flow")))
    with pytest.raises(ScenarioValidationError):
        load_scenario(json.dumps(document(mode="sft_flow", p_sft=[0.6, 0.6])))
    scenario = load_scenario(json.dumps(document(mode="sft_flow", p_sft=[0.7, 0.3])))
    assert scenario.p_sft == (0.7, 0.3)


def test_tied_best_pattern_is_ill_posed():
    patterns = [
        {"name": "a", "p_succ": 0.8, "pi_ref": 0.5},
        {"name": "b", "p_succ": 0.8, "pi_ref": 0.5},
    ]
    with pytest.raises(IllPosedTaskError):
        load_scenario(json.dumps(document(patterns=patterns)))


def test_reference_within_tolerance_is_renormalized():
    patterns = [
        {"name": "r1", "p_succ": 0.9, "pi_ref": 0.5005},
        {"name": "r2", "p_succ": 0.1, "pi_ref": 0.5},
    ]
    scenario = load_scenario(json.dumps(document(patterns=patterns)))
    assert sum(scenario.ref_probs) == pytest.approx(1.0, abs=1e-15)
    assert scenario.ref_probs[0] == pytest.approx(0.5005 / 1.0005)


def test_dump_and_load_give_equal_scenarios(sft_scenario):
    text = dump_scenario(sft_scenario)
    assert text.endswith("}\n")
    again = load_scenario(text)
    assert again == sft_scenario
    assert again.digest() == sft_scenario.digest()


def test_gamma6_document(scenario_dir):
    scenario = load_scenario_file(scenario_dir / "regime2_entangled_gamma6.json")
    assert classify_regime(scenario.task, scenario.ref_probs) is Regime.REGIME2
    assert gamma_ref(scenario.task, scenario.ref_probs) == 6.0


def test_bundled_scenarios_load(scenario_dir):
    files = sorted(scenario_dir.glob("*.json"))
    assert len(files) >= 6
    for path in files:
        scenario = load_scenario_file(path)
        assert scenario.digest()


def test_missing_file_is_an_io_error(tmp_path):
    with pytest.raises(OutputFileError):
        load_scenario_file(tmp_path / "absent.json")
