from .models import (
    FlowMode,
    PatternTask,
    PolicyState,
    Regime,
    Scenario,
    Trajectory,
    TrajectorySample,
    accuracy,
    classify_regime,
    log_softmax,
    logits_from_probs,
    on_regime_boundary,
    softmax,
)

__all__ = [
    "FlowMode",
    "PatternTask",
    "PolicyState",
    "Regime",
    "Scenario",
    "Trajectory",
    "TrajectorySample",
    "accuracy",
    "classify_regime",
    "log_softmax",
    "logits_from_probs",
    "on_regime_boundary",
    "softmax",
]
