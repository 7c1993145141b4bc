"""
SFT-then-RLVR comparison: fit the pattern distribution of a demonstration set
first, then run RLVR from the fitted policy, against RLVR from the reference
policy alone.
"""

import logging
from dataclasses import replace
from typing import Optional

import numpy as np

from patternflow.core.config import settings
from patternflow.core.errors import InvalidInputError, WrongModeError, WrongRegimeError
from patternflow.dynamics.flow import CrossingKind, first_crossing, integrate
from patternflow.dynamics.theory import bound_T1_sft
from patternflow.models.models import FlowMode, Regime, Scenario, accuracy, check_distribution, classify_regime
from patternflow.schemas import PipelineReport

logger = logging.getLogger(__name__)


def _time_to_target(scenario: Scenario, target: float) -> Optional[float]:
    best = scenario.task.best_index
    trajectory = integrate(scenario, stop=lambda probs: probs[best] > target)
    return first_crossing(trajectory, CrossingKind.PATTERN_PROB_ABOVE, best, target)


def run_pipeline(
    scenario: Scenario,
    p_sft,
    epsilon: Optional[float] = None,
    horizon_cap: Optional[float] = None,
    target_prob: Optional[float] = None,
) -> PipelineReport:
    """
    Branch (a): SFT flow from the reference for at most T1', handing over at
    the first step with sup-norm gap <= epsilon. Branch (b): RLVR from the
    post-SFT policy, which is also its KL reference. Branch (c): RLVR from the
    reference. Times are to pi(r*) > target_prob, censored at horizon_cap.
    """
    epsilon = settings.DEFAULT_EPSILON if epsilon is None else float(epsilon)
    horizon_cap = settings.PIPELINE_HORIZON_CAP if horizon_cap is None else float(horizon_cap)
    target_prob = settings.PIPELINE_TARGET_PROB if target_prob is None else float(target_prob)
    if scenario.mode is not FlowMode.RLVR_FLOW:
        raise WrongModeError("the pipeline compares RLVR runs; pass an rlvr_flow scenario")
    task = scenario.task
    regime = classify_regime(task, scenario.ref_probs)
    if regime is Regime.REGIME1:
        raise WrongRegimeError("the reference is already in Regime1; SFT has nothing to fix")

    target = check_distribution(p_sft, task.k, tol=settings.P_SFT_SUM_TOLERANCE, name="p_sft")
    if np.any(target <= 0):
        raise InvalidInputError("p_sft must give every pattern positive mass")

    # (a) SFT
    t1_sft = bound_T1_sft(target, scenario.ref, epsilon)
    sft_scenario = replace(scenario, mode=FlowMode.SFT_FLOW, p_sft=tuple(target), horizon=t1_sft, record_stride=1)
    logger.info("Pipeline SFT branch: T1' = %.6g", t1_sft)
    sft_run = integrate(sft_scenario, stop=lambda probs: np.abs(probs - target).max() <= epsilon)
    sft_time = float(sft_run.t[-1])
    post_sft = sft_run.final_probs
    sft_gap = float(np.abs(post_sft - target).max())
    post_regime = classify_regime(task, post_sft)

    # (b) RLVR after SFT
    tuned = Scenario(
        task=task,
        ref_probs=tuple(post_sft / post_sft.sum()),
        beta=scenario.beta,
        horizon=horizon_cap,
        step=scenario.step,
        seed=scenario.seed,
    )
    logger.info("Pipeline RLVR branch from the post-SFT policy (%s)", post_regime.value)
    after_sft = _time_to_target(tuned, target_prob)

    # (c) RLVR alone
    pure = replace(scenario, horizon=horizon_cap, record_stride=1)
    logger.info("Pipeline pure RLVR branch, horizon cap %.6g", horizon_cap)
    pure_time = _time_to_target(pure, target_prob)
    if pure_time is None:
        logger.warning("Pure RLVR did not reach pi(r*) > %g within %.6g (censored)", target_prob, horizon_cap)

    return PipelineReport(
        epsilon=epsilon,
        p_sft=[float(p) for p in target],
        horizon_cap=horizon_cap,
        target_prob=target_prob,
        t1_sft=t1_sft,
        sft_time=sft_time,
        sft_within_bound=sft_gap <= epsilon and sft_time <= t1_sft,
        post_sft_acc=accuracy(task, post_sft),
        predicted_post_sft_acc=float(np.dot(target, task.rates)),
        post_sft_regime=post_regime,
        rlvr_after_sft_time=after_sft,
        pipeline_time=None if after_sft is None else sft_time + after_sft,
        pure_time=pure_time,
        pure_censored=pure_time is None,
    )
