from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from patternflow.core.config import settings
from patternflow.models.models import FlowMode, Regime


# Scenario Document Schemas
class PatternEntry(BaseModel):
    name: str = Field(..., min_length=1)
    p_succ: float = Field(..., ge=0, le=1, description="Success rate of the pattern")
    pi_ref: float = Field(..., gt=0, description="Reference (initial) probability of the pattern")


class ScenarioDocument(BaseModel):
    """On-disk JSON form of a Scenario."""

    patterns: list[PatternEntry] = Field(..., min_length=2)
    beta: float = Field(..., ge=0)
    horizon: float = Field(..., ge=0)
    step: float = Field(..., gt=0)
    record_stride: int = Field(..., ge=1)
    seed: int = Field(..., ge=0, lt=2**64)
    mode: FlowMode
    p_sft: Optional[list[float]] = None

    @field_validator("patterns")
    def validate_unique_names(cls, v):
        names = [entry.name for entry in v]
        if len(set(names)) != len(names):
            raise ValueError("pattern names must be unique")
        return v

    @model_validator(mode="after")
    def validate_p_sft(self):
        if self.p_sft is None:
            if self.mode is FlowMode.SFT_FLOW:
                raise ValueError("sft_flow scenarios need a p_sft distribution")
            return self
        if len(self.p_sft) != len(self.patterns):
            raise ValueError("p_sft must have one entry per pattern")
        if any(p < 0 for p in self.p_sft):
            raise ValueError("p_sft entries must be non-negative")
        if abs(sum(self.p_sft) - 1.0) > settings.P_SFT_SUM_TOLERANCE:
            raise ValueError("p_sft must sum to 1")
        return self


# Sampler Schemas
class SamplerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(default_factory=lambda: settings.SAMPLER_BATCH_SIZE, ge=1)
    learning_rate: float = Field(..., gt=0)
    steps: int = Field(..., gt=0)
    beta: float = Field(default=0.0, ge=0)
    baseline: Literal["none", "batch_mean"] = "none"
    seed: int = Field(default=0, ge=0, lt=2**64)


# Report Schemas
class InvariantCheck(BaseModel):
    name: str
    passed: bool
    worst_violation: float = Field(default=0.0, ge=0)
    detail: Optional[str] = None


class RegimeReport(BaseModel):
    regime: Regime
    acc_ref: float
    on_boundary: bool = False
    epsilon: float
    gamma: Optional[float] = Field(None, ge=1)
    t0_log10: Optional[float] = None
    t0: Optional[float] = None
    t0_overflow: bool = False
    t1: Optional[float] = None
    t1_already_satisfied: bool = False
    t1_sft: Optional[float] = None
    transitions: dict[str, float] = Field(default_factory=dict)
    checks: list[InvariantCheck] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> InvariantCheck:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def failed_checks(self) -> list[str]:
        return [check.name for check in self.checks if not check.passed]


class BoundsReport(BaseModel):
    regime: Regime
    acc_ref: float
    on_boundary: bool = False
    epsilon: float
    beta: float
    gamma: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    t0_log10: Optional[float] = None
    t0: Optional[float] = None
    t0_overflow: bool = False
    t1: Optional[float] = None
    t1_already_satisfied: bool = False
    t1_sft: Optional[float] = None
    optimal_policy: list[float]
    amplified_patterns: list[str]


class PipelineReport(BaseModel):
    epsilon: float
    p_sft: list[float]
    horizon_cap: float
    target_prob: float
    t1_sft: float = Field(..., ge=0)
    sft_time: float = Field(..., ge=0)
    sft_within_bound: bool
    post_sft_acc: float
    predicted_post_sft_acc: float
    post_sft_regime: Regime
    rlvr_after_sft_time: Optional[float] = None
    pipeline_time: Optional[float] = None
    pure_time: Optional[float] = None
    pure_censored: bool = False

    @computed_field
    @property
    def post_sft_regime1(self) -> bool:
        return self.post_sft_regime is Regime.REGIME1

    @computed_field
    @property
    def pipeline_time_at_t1_sft(self) -> Optional[float]:
        """Total when SFT is charged its full T1' budget instead of the measured hand-over time."""
        if self.rlvr_after_sft_time is None:
            return None
        return self.t1_sft + self.rlvr_after_sft_time

    def _beats_pure(self, total: Optional[float]) -> bool:
        if total is None:
            return False
        if self.pure_time is None:
            # censored pure branch: ran the whole cap without reaching the target
            return total < self.horizon_cap
        return total < self.pure_time

    @computed_field
    @property
    def pipeline_faster(self) -> bool:
        return self._beats_pure(self.pipeline_time)

    @computed_field
    @property
    def pipeline_faster_at_t1_sft(self) -> bool:
        return self._beats_pure(self.pipeline_time_at_t1_sft)


class SweepRow(BaseModel):
    gamma: float = Field(..., ge=1)
    pi_ref: list[float]
    regime: Regime
    t0_log10: Optional[float] = None
    time_to_runner_up: Optional[float] = None
    censored: bool = False


class CaseStudySummary(BaseModel):
    name: str
    scenario_digest: str
    regime: Regime
    converged: bool
    time_to_target: Optional[float] = None
    expectations: list[InvariantCheck] = Field(default_factory=list)
    files: list[str] = Field(default_factory=list)
    report: RegimeReport

    @computed_field
    @property
    def passed(self) -> bool:
        return self.report.passed and all(check.passed for check in self.expectations)
