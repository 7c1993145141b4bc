import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from patternflow.core.config import settings
from patternflow.core.errors import DegenerateBoundError, InvalidInputError, WrongModeError
from patternflow.dynamics.flow import CrossingKind, first_crossing, integrate
from patternflow.dynamics.theory import bound_T0
from patternflow.models.models import FlowMode, Regime, Scenario, classify_regime
from patternflow.schemas import SweepRow

logger = logging.getLogger(__name__)


def rescale_reference(scenario: Scenario, gamma: float) -> tuple[float, ...]:
    """
    Reference distribution with the given gamma: pi_ref(r') is kept,
    pi_ref(r*) becomes (1 - pi_ref(r')) / gamma and the remaining patterns
    share what is left in their original proportions.
    """
    task = scenario.task
    best, runner_up = task.best_index, task.runner_up_index
    ref = np.asarray(scenario.ref_probs, dtype=float)
    free = 1.0 - ref[runner_up]
    rest = [i for i in range(task.k) if i not in (best, runner_up)]
    if not rest:
        if gamma != 1:
            raise InvalidInputError("with two patterns gamma is always 1")
        return tuple(ref)
    if not gamma > 1:
        raise InvalidInputError("gamma must exceed 1 when other patterns carry mass")

    new = ref.copy()
    new[best] = free / gamma
    weights = ref[rest] / ref[rest].sum()
    new[rest] = (free - new[best]) * weights
    return tuple(float(p) for p in new)


def _sweep_point(scenario: Scenario, gamma: float, horizon_cap: float) -> SweepRow:
    task = scenario.task
    ref_probs = rescale_reference(scenario, gamma)
    regime = classify_regime(task, ref_probs)
    t0_log10 = None
    if regime is Regime.REGIME2:
        try:
            t0_log10 = bound_T0(task, ref_probs).t0_log10
        except DegenerateBoundError as e:
            logger.warning("gamma=%g: %s", gamma, e.detail)

    p_prime = task.p_succ[task.runner_up_index]
    point = replace(scenario, ref_probs=ref_probs, horizon=horizon_cap, record_stride=1)
    trajectory = integrate(point, stop=lambda probs: float(np.dot(probs, task.rates)) > p_prime)
    reached = first_crossing(trajectory, CrossingKind.ACC_ABOVE, threshold=p_prime)
    logger.info("gamma=%g: %s, time to beat r' %s", gamma, regime.value, reached)
    return SweepRow(
        gamma=gamma,
        pi_ref=list(ref_probs),
        regime=regime,
        t0_log10=t0_log10,
        time_to_runner_up=reached,
        censored=reached is None,
    )


def run_gamma_sweep(
    scenario: Scenario,
    gammas: Sequence[float],
    horizon_cap: Optional[float] = None,
    workers: Optional[int] = None,
) -> list[SweepRow]:
    """Classification, T0 and measured time to Acc > p_succ(r') for each gamma."""
    if scenario.mode is not FlowMode.RLVR_FLOW:
        raise WrongModeError("the gamma sweep integrates RLVR flows; pass an rlvr_flow scenario")
    if not gammas:
        raise InvalidInputError("no gamma values given")
    horizon_cap = settings.PIPELINE_HORIZON_CAP if horizon_cap is None else float(horizon_cap)
    workers = workers or settings.WORKERS
    gammas = [float(g) for g in gammas]
    # fail fast on values the rescaling rejects
    for gamma in gammas:
        rescale_reference(scenario, gamma)

    if workers <= 1:
        return [_sweep_point(scenario, gamma, horizon_cap) for gamma in gammas]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        n = len(gammas)
        return list(pool.map(_sweep_point, [scenario] * n, gammas, [horizon_cap] * n))
