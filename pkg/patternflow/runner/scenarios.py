import json
import logging
import math
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from patternflow.core.config import settings
from patternflow.core.errors import OutputFileError, ScenarioParseError, ScenarioValidationError
from patternflow.models.models import PatternTask, Scenario
from patternflow.schemas import PatternEntry, ScenarioDocument

logger = logging.getLogger(__name__)


def _field_name(loc: tuple) -> str:
    return ".".join(str(part) for part in loc) or "<document>"


def _parse_document(data) -> ScenarioDocument:
    try:
        return ScenarioDocument.model_validate(data)
    except ValidationError as e:
        errors = e.errors()
        for error in errors:
            if error["type"] == "missing":
                field = _field_name(error["loc"])
                raise ScenarioParseError(f"Missing field: {field}", field=field) from e
        first = errors[0]
        raise ScenarioValidationError(f"{_field_name(first['loc'])}: {first['msg']}") from e


def _normalized_ref(doc: ScenarioDocument) -> list[float]:
    values = [entry.pi_ref for entry in doc.patterns]
    total = math.fsum(values)
    if abs(total - 1.0) > settings.PI_REF_SUM_TOLERANCE:
        raise ScenarioValidationError(f"pi_ref sums to {total:.6g}, expected 1 within {settings.PI_REF_SUM_TOLERANCE:g}")
    if total != 1.0:
        logger.debug("Renormalizing pi_ref (sum %.17g)", total)
        values = [v / total for v in values]
    return values


def scenario_from_document(doc: ScenarioDocument) -> Scenario:
    task = PatternTask(
        names=tuple(entry.name for entry in doc.patterns),
        p_succ=tuple(entry.p_succ for entry in doc.patterns),
    )
    # r* must be unique for every downstream operation
    task.best_index
    return Scenario(
        task=task,
        ref_probs=tuple(_normalized_ref(doc)),
        beta=doc.beta,
        horizon=doc.horizon,
        step=doc.step,
        record_stride=doc.record_stride,
        seed=doc.seed,
        mode=doc.mode,
        p_sft=None if doc.p_sft is None else tuple(doc.p_sft),
    )


def load_scenario(source: str) -> Scenario:
    """Parse and validate a JSON scenario document."""
    try:
        data = json.loads(source)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"Scenario is not valid JSON: {e.msg} (line {e.lineno})") from e
    if not isinstance(data, dict):
        raise ScenarioParseError("Scenario document must be a JSON object")
    return scenario_from_document(_parse_document(data))


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        source = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OutputFileError(f"Cannot read scenario file {path}: {e}", path=path) from e
    scenario = load_scenario(source)
    logger.info("Loaded scenario %s (K=%d, mode=%s)", path, scenario.k, scenario.mode.value)
    return scenario


def scenario_document(scenario: Scenario) -> ScenarioDocument:
    return ScenarioDocument(
        patterns=[
            PatternEntry(name=name, p_succ=p, pi_ref=ref)
            for name, p, ref in zip(scenario.task.names, scenario.task.p_succ, scenario.ref_probs)
        ],
        beta=scenario.beta,
        horizon=scenario.horizon,
        step=scenario.step,
        record_stride=scenario.record_stride,
        seed=scenario.seed,
        mode=scenario.mode,
        p_sft=None if scenario.p_sft is None else list(scenario.p_sft),
    )


def dump_scenario(scenario: Scenario) -> str:
    """JSON text that load_scenario maps back to an equal Scenario."""
    payload = scenario_document(scenario).model_dump(mode="json", exclude_none=True)
    return json.dumps(payload, indent=2) + "\n"
