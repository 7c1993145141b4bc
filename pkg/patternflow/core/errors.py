"""
Exception hierarchy for the simulator.

Every error carries a human readable ``detail`` and the process exit code the
CLI reports for it (0 success, 1 validation/parse, 2 invariant failure, 3 I/O).
"""

from typing import Any, Optional


class PatternFlowError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class InvalidInputError(PatternFlowError, ValueError):
    """Malformed vectors, dimension mismatches, out-of-range parameters."""


class IllPosedTaskError(InvalidInputError):
    """The task has no strict optimum (or no unique runner-up when one is needed)."""


class ScenarioParseError(InvalidInputError):
    def __init__(self, detail: str, field: Optional[str] = None):
        super().__init__(detail)
        self.field = field


class ScenarioValidationError(InvalidInputError):
    pass


class WrongModeError(PatternFlowError):
    pass


class WrongRegimeError(PatternFlowError):
    pass


class DegenerateBoundError(PatternFlowError):
    pass


class ProvenanceError(PatternFlowError):
    pass


class NotFoundError(PatternFlowError):
    pass


class IntegrationDivergedError(PatternFlowError):
    exit_code = 2

    def __init__(self, detail: str, last_sample: Any = None):
        super().__init__(detail)
        self.last_sample = last_sample


class StepSizeUnderflowError(IntegrationDivergedError):
    pass


class TrainingDivergedError(PatternFlowError):
    exit_code = 2

    def __init__(self, detail: str, last_state: Any = None):
        super().__init__(detail)
        self.last_state = last_state


class OutputFileError(PatternFlowError):
    exit_code = 3

    def __init__(self, detail: str, path: Any = None):
        super().__init__(detail)
        self.path = path
