"""
Convergence-time bounds for the tabular flow and the trajectory verifier.

Regime 1 (initial accuracy above every non-optimal success rate) converges in
O(1/epsilon) flow time. In Regime 2 the runner-up pattern r' is above the
initial accuracy and the run can stay entangled with it for up to T0, which
grows like (C1 * gamma) ** (2 * C2 * gamma). T0 is evaluated with
``decimal`` so astronomically large values are still reported in log10.
"""

import logging
import math
import sys
from decimal import MAX_EMAX, MIN_EMIN, Context, Decimal, localcontext
from typing import NamedTuple, Optional

import numpy as np

from patternflow.core.config import settings
from patternflow.core.errors import (
    DegenerateBoundError,
    InvalidInputError,
    ProvenanceError,
    WrongRegimeError,
)
from patternflow.dynamics.flow import interpolate_probs
from patternflow.dynamics.objectives import (
    amplified_patterns,
    entropy,
    kl_divergence,
    optimal_policy_beta_zero,
    optimal_policy_closed_form,
    sft_loss,
)
from patternflow.models.models import (
    FlowMode,
    PatternTask,
    PolicyState,
    Regime,
    Scenario,
    Trajectory,
    accuracy,
    check_distribution,
    classify_regime,
    on_regime_boundary,
)
from patternflow.schemas import BoundsReport, InvariantCheck, RegimeReport

logger = logging.getLogger(__name__)

# log10 of the largest finite double
_FLOAT_MAX_LOG10 = math.log10(sys.float_info.max)
# beyond this many decimal digits the power is not expanded, only its log10
_EXPAND_LOG10_LIMIT = 100_000


class T0Bound(NamedTuple):
    t0_log10: float
    t0: Optional[float]
    overflow: bool
    gamma: float
    c1: float
    c2: float


class TimeBound(NamedTuple):
    time: float
    already_satisfied: bool


def _dec(value: float) -> Decimal:
    # shortest repr keeps declared decimals exact (0.05 stays 0.05)
    return Decimal(repr(float(value)))


def _context():
    return localcontext(Context(prec=settings.DECIMAL_PRECISION, Emax=MAX_EMAX, Emin=MIN_EMIN))


def _positive_ref(task: PatternTask, ref_probs) -> np.ndarray:
    ref = check_distribution(ref_probs, task.k, tol=settings.PI_REF_SUM_TOLERANCE, name="ref_probs")
    if np.any(ref <= 0):
        raise InvalidInputError("ref_probs must give every pattern positive mass")
    return ref


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not (0 < epsilon < 1):
        raise InvalidInputError("epsilon must lie in (0, 1)")
    return epsilon


def _as_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise InvalidInputError("flow time must be non-negative")
    return arr


def _unwrap(values):
    return float(values) if np.ndim(values) == 0 else values


def _gamma_decimal(task: PatternTask, ref_probs) -> Decimal:
    best = task.best_index
    runner_up = task.runner_up_index
    ref = list(ref_probs)
    numerator = sum(_dec(ref[i]) for i in range(task.k) if i != runner_up)
    return numerator / _dec(ref[best])


def gamma_ref(task: PatternTask, ref_probs) -> float:
    """gamma = sum over r != r' of pi_ref(r) / pi_ref(r*); the r* term contributes 1."""
    _positive_ref(task, ref_probs)
    with _context():
        return float(_gamma_decimal(task, ref_probs))


def bound_T0(task: PatternTask, ref_probs) -> T0Bound:
    """
    T0 = (C1 gamma) ** (2 C2 gamma) - 1, scaled by 1 / (2 - 2 pi_ref(r')),
    with C2 = 1 / Delta, C1 = p_succ(r') / Delta and Delta = p_succ(r*) - p_succ(r').

    ``t0`` is None (and ``overflow`` set) when the value does not fit a float;
    ``t0_log10`` is always finite.
    """
    ref = _positive_ref(task, ref_probs)
    regime = classify_regime(task, ref)
    if regime is not Regime.REGIME2:
        raise WrongRegimeError(f"T0 is defined for Regime2 initializations, got {regime.value}")

    best, runner_up = task.best_index, task.runner_up_index
    with _context():
        gamma = _gamma_decimal(task, ref_probs)
        p_star, p_prime = _dec(task.p_succ[best]), _dec(task.p_succ[runner_up])
        delta = p_star - p_prime
        c1 = p_prime / delta
        c2 = 1 / delta
        base = c1 * gamma
        if base <= 1:
            raise DegenerateBoundError(f"C1 * gamma = {float(base):.6g} <= 1 makes the T0 bound vacuous")
        exponent = 2 * c2 * gamma
        prefactor = 1 / (2 - 2 * _dec(ref_probs[runner_up]))
        log10_power = exponent * base.log10()

        if log10_power < _EXPAND_LOG10_LIMIT:
            t0 = prefactor * (base**exponent - 1)
            if t0 <= 0:
                raise DegenerateBoundError("T0 rounds to zero at the configured precision")
            t0_log10 = float(t0.log10())
        else:
            # the -1 is below the working precision here
            t0 = None
            t0_log10 = float(prefactor.log10() + log10_power)

        overflow = t0 is None or t0_log10 >= _FLOAT_MAX_LOG10
        value = None if overflow else float(t0)
        return T0Bound(t0_log10, value, overflow, float(gamma), float(c1), float(c2))


def _regime1_constants(task: PatternTask, ref_probs) -> tuple[int, float, float]:
    ref = _positive_ref(task, ref_probs)
    regime = classify_regime(task, ref)
    if regime is not Regime.REGIME1:
        raise WrongRegimeError(f"this bound needs a Regime1 initialization, got {regime.value}")
    best = task.best_index
    delta = task.p_succ[best] - max(p for i, p in enumerate(task.p_succ) if i != best)
    return best, float(ref[best]), delta


def bound_T1(task: PatternTask, ref_probs, epsilon: Optional[float] = None) -> TimeBound:
    """
    Time after which 1 - pi(r*) < epsilon is guaranteed in Regime 1:
    T1 = (1/C) (1/epsilon - 1/(1 - pi0(r*))), C = Delta * pi0(r*)^2.
    """
    epsilon = _check_epsilon(settings.DEFAULT_EPSILON if epsilon is None else epsilon)
    _, pi0, delta = _regime1_constants(task, ref_probs)
    if epsilon >= 1 - pi0:
        return TimeBound(0.0, True)
    c = delta * pi0**2
    return TimeBound((1.0 / c) * (1.0 / epsilon - 1.0 / (1.0 - pi0)), False)


def pi_star_lower_bound(task: PatternTask, ref_probs, t):
    """Regime-1 guarantee pi(t)(r*) >= 1 - 1 / (C t + 1 / (1 - pi0(r*)))."""
    _, pi0, delta = _regime1_constants(task, ref_probs)
    t = _as_time(t)
    c = delta * pi0**2
    return _unwrap(1.0 - 1.0 / (c * t + 1.0 / (1.0 - pi0)))


def runner_up_upper_bound(ref_probs, runner_up: int, t):
    """pi(t)(r') <= 1 - 1 / (2t + 1 / (1 - pi0(r')))."""
    ref = np.asarray(ref_probs, dtype=float)
    if not (0 <= runner_up < ref.size):
        raise InvalidInputError(f"pattern index {runner_up!r} is out of range")
    t = _as_time(t)
    return _unwrap(1.0 - 1.0 / (2.0 * t + 1.0 / (1.0 - ref[runner_up])))


def rho_envelope(task: PatternTask, ref_probs, t):
    """
    Upper bound on rho(t) / rho(0) for rho(r) = pi(r) / pi(r*), r outside {r*, r'},
    valid while Acc < p_succ(r').
    """
    ref = _positive_ref(task, ref_probs)
    best, runner_up = task.best_index, task.runner_up_index
    delta = task.p_succ[best] - task.p_succ[runner_up]
    gamma = gamma_ref(task, ref)
    t = _as_time(t)
    base = (1.0 - ref[runner_up]) * (1.0 / (1.0 - ref[runner_up]) + 2.0 * t)
    return _unwrap(base ** (-delta / (2.0 * gamma)))


def bound_T1_sft(p_sft, init: PolicyState, epsilon: Optional[float] = None) -> float:
    """T1' = (L_SFT(init) - H(p_sft)) / epsilon^2."""
    epsilon = _check_epsilon(settings.DEFAULT_EPSILON if epsilon is None else epsilon)
    target = check_distribution(p_sft, init.k, tol=settings.P_SFT_SUM_TOLERANCE, name="p_sft")
    if np.any(target <= 0):
        raise InvalidInputError("p_sft must give every pattern positive mass")
    gap = sft_loss(target, init) - entropy(target)
    return max(gap, 0.0) / epsilon**2


def _regime_masks(task: PatternTask, acc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    best = task.best_index
    others = np.delete(task.rates, best)
    above = (others[None, :] > acc[:, None]).sum(axis=1)
    equal = (others[None, :] == acc[:, None]).sum(axis=1)
    regime1 = (above == 0) & (equal == 0)
    regime2 = (above == 1) & (equal == 0)
    return regime1, regime2


def regime_transitions(task: PatternTask, trajectory: Trajectory) -> dict[Regime, float]:
    """First recorded time the run is in Regime2 and in Regime1 (absent if never)."""
    regime1, regime2 = _regime_masks(task, trajectory.acc)
    transitions = {}
    for regime, mask in ((Regime.REGIME2, regime2), (Regime.REGIME1, regime1)):
        hits = np.flatnonzero(mask)
        if hits.size:
            transitions[regime] = float(trajectory.t[hits[0]])
    return transitions


# Verification

def _monotone_check(name: str, series: np.ndarray, increasing: bool = True, slack=None) -> InvariantCheck:
    slack = settings.MONOTONE_SLACK if slack is None else slack
    if series.size < 2:
        return InvariantCheck(name=name, passed=True)
    drift = np.diff(series)
    violation = -drift if increasing else drift
    passed = bool(np.all(violation <= slack))
    return InvariantCheck(name=name, passed=passed, worst_violation=max(float(violation.max()), 0.0))


def _upper_bound_check(name: str, values: np.ndarray, bound: np.ndarray, slack: float) -> InvariantCheck:
    if values.size == 0:
        return InvariantCheck(name=name, passed=True)
    excess = values - bound
    return InvariantCheck(
        name=name,
        passed=bool(np.all(excess <= slack)),
        worst_violation=max(float(excess.max()), 0.0),
    )


def _generic_checks(task: PatternTask, trajectory: Trajectory) -> list[InvariantCheck]:
    t = trajectory.t
    order_violation = abs(float(t[0])) + max(0.0, -float(np.diff(t).min(initial=np.inf)))
    time_ordered = bool(t[0] == 0 and np.all(np.diff(t) > 0))

    probs = trajectory.probs
    simplex_violation = max(
        float(np.abs(probs.sum(axis=1) - 1.0).max()),
        max(0.0, -float(probs.min())),
    )
    acc_violation = float(np.abs(trajectory.acc - probs @ task.rates).max())
    return [
        InvariantCheck(name="time_ordered", passed=time_ordered, worst_violation=order_violation),
        InvariantCheck(name="simplex_valid", passed=simplex_violation <= 1e-9, worst_violation=simplex_violation),
        InvariantCheck(name="acc_consistent", passed=acc_violation <= 1e-12, worst_violation=acc_violation),
    ]


def _state_at(trajectory: Trajectory, t_bound: float) -> Optional[np.ndarray]:
    """Probabilities at t_bound; a converged run is stationary past its last sample."""
    if t_bound <= trajectory.t[-1]:
        return interpolate_probs(trajectory, t_bound)
    if trajectory.converged:
        return trajectory.final_probs
    return None


def _not_reached(name: str, t_bound: float, trajectory: Trajectory, passed: bool = False) -> InvariantCheck:
    return InvariantCheck(
        name=name,
        passed=passed,
        detail=f"not reached: t = {t_bound:.6g} lies past the last sample at t = {float(trajectory.t[-1]):.6g}",
    )


def _rlvr_checks(scenario: Scenario, trajectory: Trajectory, regime: Regime, report: dict) -> list[InvariantCheck]:
    task = scenario.task
    ref = np.asarray(scenario.ref_probs)
    t, probs, acc = trajectory.t, trajectory.probs, trajectory.acc
    checks = []

    if scenario.beta > 0:
        kl = np.array([kl_divergence(row, ref) for row in probs])
        objective = acc - scenario.beta * kl
        checks.append(_monotone_check("objective_monotone", objective))
        return checks

    checks.append(_monotone_check("acc_monotone", acc))
    centered = task.rates[None, :] - acc[:, None]
    expected_dacc = np.sum((probs * centered) ** 2, axis=1)
    dacc_violation = float(np.abs(trajectory.dacc - expected_dacc).max())
    checks.append(InvariantCheck(name="dacc_consistent", passed=dacc_violation <= 1e-12, worst_violation=dacc_violation))

    if regime is Regime.REGIME1:
        best = task.best_index
        checks.append(_monotone_check("pi_star_monotone", probs[:, best]))
        bound = pi_star_lower_bound(task, ref, t)
        checks.append(_upper_bound_check("pi_star_lower_bound", bound, probs[:, best], settings.BOUND_SLACK))
        t1 = report["t1"]
        if t1 is not None and not report["t1_already_satisfied"]:
            state = _state_at(trajectory, t1)
            if state is None:
                checks.append(_not_reached("pi_star_at_t1", t1, trajectory))
            else:
                gap = 1.0 - float(state[best])
                excess = gap - report["epsilon"]
                checks.append(
                    InvariantCheck(
                        name="pi_star_at_t1",
                        passed=excess < settings.BOUND_SLACK,
                        worst_violation=max(excess, 0.0),
                        detail=f"1 - pi(r*) = {gap:.6g} at t = {t1:.6g}",
                    )
                )

    elif regime is Regime.REGIME2:
        best, runner_up = task.best_index, task.runner_up_index
        bound = runner_up_upper_bound(ref, runner_up, t)
        checks.append(_upper_bound_check("runner_up_upper_bound", probs[:, runner_up], bound, settings.BOUND_SLACK))

        entangled = acc < task.p_succ[runner_up]
        envelope = rho_envelope(task, ref, t)
        for i in range(task.k):
            if i in (best, runner_up):
                continue
            rho = probs[:, i] / probs[:, best]
            slack = settings.MONOTONE_SLACK * np.maximum(1.0, rho[:-1])
            checks.append(_monotone_check(f"rho_monotone[{task.names[i]}]", rho, increasing=False, slack=slack))
            checks.append(
                _upper_bound_check(
                    f"rho_envelope[{task.names[i]}]",
                    (rho / rho[0])[entangled],
                    envelope[entangled],
                    settings.BOUND_SLACK,
                )
            )

        t0 = report["t0"]
        state = None if t0 is None else _state_at(trajectory, t0)
        if state is None:
            # only a T0 inside the horizon (or a stationary run) can be checked
            t_bound = math.inf if t0 is None else t0
            checks.append(_not_reached("acc_above_runner_up_after_t0", t_bound, trajectory, passed=True))
        else:
            margins = np.concatenate([[accuracy(task, state)], acc[t >= t0]]) - task.p_succ[runner_up]
            worst = max(-float(margins.min()), 0.0)
            checks.append(
                InvariantCheck(
                    name="acc_above_runner_up_after_t0",
                    passed=bool(np.all(margins > -1e-9)),
                    worst_violation=worst,
                    detail=f"T0 = {t0:.6g}",
                )
            )
    return checks


def _sft_checks(scenario: Scenario, trajectory: Trajectory, report: dict) -> list[InvariantCheck]:
    target = np.asarray(scenario.p_sft, dtype=float)
    probs = trajectory.probs
    support = target > 0
    with np.errstate(divide="ignore"):
        loss = -(np.log(probs[:, support]) @ target[support])
    gap = np.abs(probs - target[None, :]).max(axis=1)
    checks = [
        _monotone_check("sft_loss_monotone", loss, increasing=False),
        _monotone_check("sup_gap_monotone", gap, increasing=False),
    ]
    t1_sft = report["t1_sft"]
    if t1_sft is None:
        return checks
    state = _state_at(trajectory, t1_sft)
    if state is None:
        checks.append(_not_reached("sup_gap_at_t1_sft", t1_sft, trajectory))
    else:
        at_bound = float(np.abs(state - target).max())
        excess = at_bound - report["epsilon"]
        checks.append(
            InvariantCheck(
                name="sup_gap_at_t1_sft",
                passed=excess < 0,
                worst_violation=max(excess, 0.0),
                detail=f"sup gap = {at_bound:.6g} at t = {t1_sft:.6g}",
            )
        )
    return checks


def verify_trajectory(scenario: Scenario, trajectory: Trajectory, epsilon: Optional[float] = None) -> RegimeReport:
    """
    Classify the scenario, evaluate every applicable bound and check the
    trajectory against the invariants of its flow.
    """
    if trajectory.scenario_digest != scenario.digest():
        raise ProvenanceError("trajectory was not produced from this scenario (digest mismatch)")
    if len(trajectory) == 0:
        raise InvalidInputError("cannot verify an empty trajectory")
    epsilon = _check_epsilon(settings.DEFAULT_EPSILON if epsilon is None else epsilon)
    task = scenario.task
    ref = np.asarray(scenario.ref_probs)

    report = {
        "regime": Regime.NEITHER,
        "acc_ref": accuracy(task, ref),
        "epsilon": epsilon,
        "gamma": None,
        "t0_log10": None,
        "t0": None,
        "t0_overflow": False,
        "t1": None,
        "t1_already_satisfied": False,
        "t1_sft": None,
        "transitions": {},
    }
    well_posed = task.has_strict_optimum
    if well_posed:
        report["regime"] = classify_regime(task, ref)
        report["on_boundary"] = on_regime_boundary(task, ref)
        if report["on_boundary"]:
            logger.warning("Initial accuracy %.12g sits on a regime boundary", report["acc_ref"])
    regime = report["regime"]

    if regime is Regime.REGIME1:
        t1 = bound_T1(task, ref, epsilon)
        report["t1"], report["t1_already_satisfied"] = t1.time, t1.already_satisfied
    elif regime is Regime.REGIME2:
        report["gamma"] = gamma_ref(task, scenario.ref_probs)
        try:
            t0 = bound_T0(task, scenario.ref_probs)
            report["t0_log10"], report["t0"], report["t0_overflow"] = t0.t0_log10, t0.t0, t0.overflow
        except DegenerateBoundError as e:
            logger.warning("No T0 bound: %s", e.detail)

    checks = _generic_checks(task, trajectory)
    if scenario.mode is FlowMode.RLVR_FLOW:
        if well_posed and scenario.beta == 0:
            report["transitions"] = {k.value: v for k, v in regime_transitions(task, trajectory).items()}
        checks += _rlvr_checks(scenario, trajectory, regime if well_posed else Regime.NEITHER, report)
    elif scenario.mode is FlowMode.SFT_FLOW:
        try:
            report["t1_sft"] = bound_T1_sft(scenario.p_sft, scenario.ref, epsilon)
        except InvalidInputError as e:
            logger.warning("No T1' bound: %s", e.detail)
        checks += _sft_checks(scenario, trajectory, report)

    result = RegimeReport(checks=checks, **report)
    failed = result.failed_checks()
    if failed:
        logger.warning("Verification failed: %s", ", ".join(failed))
    else:
        logger.info("All %d checks passed (%s)", len(checks), regime.value)
    return result


def bounds_report(scenario: Scenario, epsilon: Optional[float] = None) -> BoundsReport:
    """Every bound that applies to the scenario's initialization."""
    epsilon = _check_epsilon(settings.DEFAULT_EPSILON if epsilon is None else epsilon)
    task = scenario.task
    ref = np.asarray(scenario.ref_probs)
    regime = classify_regime(task, ref)
    fields = {}
    if regime is Regime.REGIME1:
        t1 = bound_T1(task, ref, epsilon)
        fields.update(t1=t1.time, t1_already_satisfied=t1.already_satisfied)
    elif regime is Regime.REGIME2:
        fields["gamma"] = gamma_ref(task, scenario.ref_probs)
        try:
            t0 = bound_T0(task, scenario.ref_probs)
            fields.update(t0_log10=t0.t0_log10, t0=t0.t0, t0_overflow=t0.overflow, c1=t0.c1, c2=t0.c2)
        except DegenerateBoundError as e:
            logger.warning("No T0 bound: %s", e.detail)
    if scenario.p_sft is not None:
        try:
            fields["t1_sft"] = bound_T1_sft(scenario.p_sft, scenario.ref, epsilon)
        except InvalidInputError as e:
            logger.warning("No T1' bound: %s", e.detail)

    if scenario.beta > 0:
        optimum = optimal_policy_closed_form(task, ref, scenario.beta)
    else:
        optimum = optimal_policy_beta_zero(task, ref)
    amplified = amplified_patterns(task, ref, scenario.beta)
    return BoundsReport(
        regime=regime,
        acc_ref=accuracy(task, ref),
        on_boundary=on_regime_boundary(task, ref),
        epsilon=epsilon,
        beta=scenario.beta,
        optimal_policy=[float(p) for p in optimum],
        amplified_patterns=[task.names[i] for i in amplified],
        **fields,
    )
