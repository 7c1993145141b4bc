from .schemas import (
    # Scenario document schemas
    PatternEntry,
    ScenarioDocument,

    # Sampler schemas
    SamplerConfig,

    # Report schemas
    InvariantCheck,
    RegimeReport,
    BoundsReport,
    PipelineReport,
    SweepRow,
    CaseStudySummary,
)

__all__ = [
    # Scenario document schemas
    "PatternEntry",
    "ScenarioDocument",

    # Sampler schemas
    "SamplerConfig",

    # Report schemas
    "InvariantCheck",
    "RegimeReport",
    "BoundsReport",
    "PipelineReport",
    "SweepRow",
    "CaseStudySummary",
]
