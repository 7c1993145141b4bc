"""
Gradient flow of the tabular policy for RLVR (ascent on the KL-regularized
reward) and SFT (descent on the pattern cross-entropy).

Integration runs in logit space with a classical fourth order Runge-Kutta
step and step-doubling error control; probabilities are always the softmax of
the integrated logits, so the simplex is preserved exactly.
"""

import logging
from enum import Enum
from typing import Callable, Optional

import numpy as np

from patternflow.core.config import settings
from patternflow.core.errors import (
    IntegrationDivergedError,
    InvalidInputError,
    StepSizeUnderflowError,
    WrongModeError,
)
from patternflow.dynamics.objectives import GradientVector, _rlvr_gradient, sft_flow_direction, rlvr_grad
from patternflow.models.models import (
    FlowMode,
    PatternTask,
    PolicyState,
    Scenario,
    Trajectory,
    TrajectorySample,
    accuracy,
    check_distribution,
    logits_from_probs,
    softmax,
)

logger = logging.getLogger(__name__)

StopPredicate = Callable[[np.ndarray], bool]


class CrossingKind(str, Enum):
    ACC_ABOVE = "acc_above"
    PATTERN_PROB_ABOVE = "pattern_prob_above"


def flow_rhs(scenario: Scenario, state: PolicyState) -> GradientVector:
    """d(theta)/dt at ``state``."""
    if scenario.mode is FlowMode.RLVR_FLOW:
        return rlvr_grad(scenario.task, state, scenario.ref, scenario.beta)
    if scenario.mode is FlowMode.SFT_FLOW:
        return sft_flow_direction(scenario.p_sft, state)
    raise WrongModeError(f"flow_rhs is undefined for {scenario.mode.value} scenarios")


def _make_rhs(scenario: Scenario) -> Callable[[np.ndarray], np.ndarray]:
    if scenario.mode is FlowMode.RLVR_FLOW:
        rates = scenario.task.rates
        log_ref = scenario.ref.log_probs
        beta = float(scenario.beta)
        return lambda theta: _rlvr_gradient(theta, rates, log_ref, beta)
    if scenario.mode is FlowMode.SFT_FLOW:
        target = np.asarray(scenario.p_sft, dtype=float)

        def sft_rhs(theta):
            z = np.exp(theta - theta.max())
            return target - z / z.sum()

        return sft_rhs
    raise WrongModeError(f"cannot integrate a {scenario.mode.value} scenario; use the sampler")


def acc_derivative(task: PatternTask, probs) -> float:
    """dAcc/dt of the beta = 0 RLVR flow: sum_i pi_i^2 (p_i - Acc)^2."""
    p = check_distribution(probs, task.k)
    acc = float(np.dot(p, task.rates))
    return float(np.sum((p * (task.rates - acc)) ** 2))


def _rk4_step(rhs, y: np.ndarray, h: float, k1: Optional[np.ndarray] = None) -> np.ndarray:
    if k1 is None:
        k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Recorder:
    def __init__(self, scenario: Scenario, rhs):
        self.task = scenario.task
        self.rhs = rhs
        self.t: list[float] = []
        self.probs: list[np.ndarray] = []
        self.acc: list[float] = []
        self.dacc: list[float] = []

    @property
    def last_t(self) -> float:
        return self.t[-1] if self.t else -np.inf

    def add(self, t: float, theta: np.ndarray) -> None:
        if t <= self.last_t:
            return
        probs = softmax(theta)
        acc = accuracy(self.task, probs)
        # chain rule: grad_theta(Acc) . d(theta)/dt
        dacc = float(np.dot(probs * (self.task.rates - acc), self.rhs(theta)))
        self.t.append(float(t))
        self.probs.append(probs)
        self.acc.append(acc)
        self.dacc.append(dacc)

    def last(self) -> Optional[TrajectorySample]:
        if not self.t:
            return None
        return TrajectorySample(self.t[-1], self.probs[-1], self.acc[-1], self.dacc[-1])

    def build(self, scenario: Scenario, converged: bool, meta: dict) -> Trajectory:
        return Trajectory(
            t=np.array(self.t),
            probs=np.array(self.probs).reshape(len(self.t), scenario.k),
            acc=np.array(self.acc),
            dacc=np.array(self.dacc),
            mode=scenario.mode,
            scenario_digest=scenario.digest(),
            converged=converged,
            meta=meta,
        )


def _run(
    scenario: Scenario,
    theta0: np.ndarray,
    duration: float,
    stop: Optional[StopPredicate] = None,
    t_offset: float = 0.0,
) -> Trajectory:
    rhs = _make_rhs(scenario)
    tol = settings.FLOW_LOCAL_TOLERANCE
    min_step = settings.FLOW_MIN_STEP
    max_step = max(settings.FLOW_MAX_STEP, scenario.step)
    converged_rhs = settings.FLOW_CONVERGED_RHS
    stride = scenario.record_stride

    theta = np.array(theta0, dtype=float)
    theta -= theta.mean()
    recorder = _Recorder(scenario, rhs)
    recorder.add(t_offset, theta)

    t = 0.0
    h = scenario.step
    accepted = rejected = 0
    converged = stopped = False
    if stop is not None and stop(softmax(theta)):
        stopped = True

    while not stopped and t < duration:
        k1 = rhs(theta)
        if not np.all(np.isfinite(k1)):
            raise IntegrationDivergedError(
                f"non-finite flow direction at t={t_offset + t:.6g}", last_sample=recorder.last()
            )
        if np.max(np.abs(k1)) < converged_rhs:
            converged = True
            logger.debug("Flow stationary at t=%.6g (|rhs| < %.1e)", t_offset + t, converged_rhs)
            break

        remaining = duration - t
        h_try = min(h, remaining)
        full = _rk4_step(rhs, theta, h_try, k1)
        half = _rk4_step(rhs, _rk4_step(rhs, theta, 0.5 * h_try, k1), 0.5 * h_try)
        if np.all(np.isfinite(full)) and np.all(np.isfinite(half)):
            err = float(np.max(np.abs(half - full))) / 15.0
        else:
            err = np.inf

        if not err <= tol:
            rejected += 1
            h = 0.5 * h_try
            if h < min_step:
                raise StepSizeUnderflowError(
                    f"step size fell below {min_step:g} at t={t_offset + t:.6g}",
                    last_sample=recorder.last(),
                )
            continue

        # Richardson extrapolation of the two half steps
        theta = half + (half - full) / 15.0
        theta -= theta.mean()
        t = duration if h_try == remaining else t + h_try
        accepted += 1
        if err < tol / 32.0 and h_try == h:
            h = min(2.0 * h, max_step)

        stopped = stop is not None and stop(softmax(theta))
        if stopped or accepted % stride == 0:
            recorder.add(t_offset + t, theta)

    recorder.add(t_offset + t, theta)
    logger.debug(
        "Integrated %s flow to t=%.6g: %d accepted, %d rejected steps",
        scenario.mode.value, t_offset + t, accepted, rejected,
    )
    meta = {"accepted_steps": accepted, "rejected_steps": rejected, "stopped": stopped, "end_time": t_offset + t}
    return recorder.build(scenario, converged, meta)


def integrate(scenario: Scenario, stop: Optional[StopPredicate] = None) -> Trajectory:
    """
    Integrate the scenario's flow from theta_ref over [0, horizon].

    Samples are recorded every ``record_stride`` accepted steps plus both
    endpoints. Integration ends early when the flow is stationary
    (max |rhs| below FLOW_CONVERGED_RHS) or when ``stop`` holds for the
    current probabilities.
    """
    if scenario.mode is FlowMode.SAMPLED:
        raise WrongModeError("sampled scenarios are trained with the sampler, not integrated")
    logger.info(
        "Integrating %s scenario over horizon %.6g (K=%d, beta=%g)",
        scenario.mode.value, scenario.horizon, scenario.k, scenario.beta,
    )
    return _run(scenario, scenario.ref.logits, float(scenario.horizon), stop=stop)


def integrate_from(scenario: Scenario, probs, t_start: float, duration: float) -> Trajectory:
    """Continue the scenario's flow from ``probs`` at time ``t_start``."""
    return _run(scenario, logits_from_probs(probs), float(duration), t_offset=float(t_start))


def _monitored(trajectory: Trajectory, kind: CrossingKind, index: Optional[int]) -> np.ndarray:
    kind = CrossingKind(kind)
    if kind is CrossingKind.ACC_ABOVE:
        return trajectory.acc
    if index is None or not (0 <= index < trajectory.k):
        raise InvalidInputError(f"pattern index {index!r} is out of range for K={trajectory.k}")
    return trajectory.probs[:, index]


def first_crossing(
    trajectory: Trajectory,
    kind: CrossingKind,
    index: Optional[int] = None,
    threshold: float = 0.0,
) -> Optional[float]:
    """
    Earliest time the monitored quantity strictly exceeds ``threshold``,
    linearly interpolated between the bracketing samples; None if never.
    """
    series = _monitored(trajectory, kind, index)
    if series.size == 0:
        raise InvalidInputError("cannot locate a crossing on an empty trajectory")
    above = np.flatnonzero(series > threshold)
    if above.size == 0:
        return None
    i = int(above[0])
    if i == 0:
        return float(trajectory.t[0])
    t0, t1 = trajectory.t[i - 1], trajectory.t[i]
    v0, v1 = series[i - 1], series[i]
    return float(t0 + (threshold - v0) / (v1 - v0) * (t1 - t0))


def _quantity(task: PatternTask, probs: np.ndarray, kind: CrossingKind, index: Optional[int]) -> float:
    if CrossingKind(kind) is CrossingKind.ACC_ABOVE:
        return accuracy(task, probs)
    return float(probs[index])


def refine_crossing(
    scenario: Scenario,
    trajectory: Trajectory,
    kind: CrossingKind,
    index: Optional[int] = None,
    threshold: float = 0.0,
    tol: float = 1e-9,
    max_iter: int = 100,
) -> Optional[float]:
    """Bisection refinement of first_crossing by re-integrating inside the bracket."""
    series = _monitored(trajectory, kind, index)
    above = np.flatnonzero(series > threshold)
    if above.size == 0:
        return None
    i = int(above[0])
    if i == 0:
        return float(trajectory.t[0])
    t_start = float(trajectory.t[i - 1])
    start = trajectory.probs[i - 1]
    lo, hi = 0.0, float(trajectory.t[i]) - t_start
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        end = integrate_from(scenario, start, t_start, mid).final_probs
        if _quantity(scenario.task, end, kind, index) > threshold:
            hi = mid
        else:
            lo = mid
    return t_start + hi


def interpolate_probs(trajectory: Trajectory, t: float) -> np.ndarray:
    """Linear interpolation of the recorded distribution at time ``t``."""
    if len(trajectory) == 0 or not (trajectory.t[0] <= t <= trajectory.t[-1]):
        raise InvalidInputError(f"time {t!r} lies outside the recorded trajectory")
    j = int(np.searchsorted(trajectory.t, t, side="left"))
    if trajectory.t[j] == t:
        return trajectory.probs[j].copy()
    t0, t1 = trajectory.t[j - 1], trajectory.t[j]
    w = (t - t0) / (t1 - t0)
    probs = (1.0 - w) * trajectory.probs[j - 1] + w * trajectory.probs[j]
    return probs / probs.sum()
