"""
Sample-based policy-gradient training on the tabular model.

Each episode draws a pattern from the current policy and a 0/1 reward from
the pattern's success rate. The reward part of the gradient is the
score-function (REINFORCE) estimate; the KL part is computed exactly.
"""

import logging
from typing import Optional

import numpy as np

from patternflow.core.errors import TrainingDivergedError, WrongModeError
from patternflow.dynamics.objectives import GradientVector, _rlvr_gradient, kl_divergence
from patternflow.models.models import FlowMode, PatternTask, PolicyState, Scenario, Trajectory, softmax
from patternflow.schemas import SamplerConfig
from patternflow.utils import derive_rng

logger = logging.getLogger(__name__)


def _draw_patterns(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    return np.minimum(np.searchsorted(cdf, uniforms, side="right"), probs.size - 1)


def sample_episode(task: PatternTask, state: PolicyState, rng: np.random.Generator) -> tuple[int, int]:
    """Draw (pattern index, reward) for one episode."""
    index = int(_draw_patterns(state.probs, np.array([rng.random()]))[0])
    reward = int(rng.random() < task.p_succ[index])
    return index, reward


def _draw(task: PatternTask, probs: np.ndarray, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    indices = _draw_patterns(probs, rng.random(batch_size))
    rewards = (rng.random(batch_size) < task.rates[indices]).astype(float)
    return indices, rewards


def draw_batch(
    task: PatternTask, state: PolicyState, batch_size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Pattern indices and 0/1 rewards for ``batch_size`` independent episodes."""
    return _draw(task, state.probs, batch_size, rng)


def _advantages(rewards: np.ndarray, baseline: str) -> np.ndarray:
    if baseline == "batch_mean":
        return rewards - rewards.mean()
    return rewards


def episode_gradients(probs: np.ndarray, indices: np.ndarray, rewards: np.ndarray, baseline: str = "none") -> np.ndarray:
    """Per-episode score-function terms (reward - baseline) * grad log pi(chosen), one row each."""
    advantages = _advantages(rewards, baseline)
    scores = -np.tile(probs, (indices.size, 1))
    scores[np.arange(indices.size), indices] += 1.0
    return advantages[:, None] * scores


def _batch_gradient(
    logits: np.ndarray,
    task: PatternTask,
    log_ref: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    probs = softmax(logits)
    indices, rewards = _draw(task, probs, config.batch_size, rng)
    advantages = _advantages(rewards, config.baseline)
    # mean of adv * (onehot - pi) without materializing the rows
    grad = (np.bincount(indices, weights=advantages, minlength=task.k) - probs * advantages.sum()) / config.batch_size
    if config.beta:
        grad = grad + _rlvr_gradient(logits, np.zeros(task.k), log_ref, config.beta)
    return grad


def estimate_gradient(
    task: PatternTask,
    state: PolicyState,
    ref: PolicyState,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> GradientVector:
    return _batch_gradient(state.logits, task, ref.log_probs, config, rng)


def reinforce_step(
    task: PatternTask,
    state: PolicyState,
    ref: PolicyState,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> PolicyState:
    """One ascent step on a fresh batch; returns the updated (re-centered) state."""
    grad = _batch_gradient(state.logits, task, ref.log_probs, config, rng)
    return PolicyState(state.logits + config.learning_rate * grad)


def _flow_dacc(task: PatternTask, logits: np.ndarray, log_ref: np.ndarray, beta: float) -> float:
    probs = softmax(logits)
    acc = float(np.dot(probs, task.rates))
    return float(np.dot(probs * (task.rates - acc), _rlvr_gradient(logits, task.rates, log_ref, beta)))


def train_sampler(scenario: Scenario, config: SamplerConfig, purpose: Optional[str] = None) -> Trajectory:
    """
    Run ``config.steps`` REINFORCE steps from the scenario's reference policy.

    Samples are recorded every ``record_stride`` steps and at the last step,
    at time step * learning_rate. ``dacc`` is the exact-flow rate at the
    sampled state.
    """
    if scenario.mode is not FlowMode.SAMPLED:
        raise WrongModeError(f"train_sampler needs a sampled scenario, got {scenario.mode.value}")
    task = scenario.task
    log_ref = scenario.ref.log_probs
    rng = derive_rng(config.seed, purpose or f"sampler:{scenario.digest()}")
    logger.info(
        "Training sampler: %d steps, batch %d, lr %g, baseline %s, seed %d",
        config.steps, config.batch_size, config.learning_rate, config.baseline, config.seed,
    )

    logits = scenario.ref.logits.copy()
    times, rows, accs, daccs = [], [], [], []

    def record(step: int) -> None:
        probs = softmax(logits)
        times.append(step * config.learning_rate)
        rows.append(probs)
        accs.append(float(np.dot(probs, task.rates)))
        daccs.append(_flow_dacc(task, logits, log_ref, config.beta))

    record(0)
    for step in range(1, config.steps + 1):
        grad = _batch_gradient(logits, task, log_ref, config, rng)
        candidate = logits + config.learning_rate * grad
        if not np.all(np.isfinite(candidate)):
            raise TrainingDivergedError(f"non-finite logits at step {step}", last_state=PolicyState(logits))
        logits = candidate - candidate.mean()
        if step % scenario.record_stride == 0 or step == config.steps:
            record(step)

    final = softmax(logits)
    logger.info(
        "Sampler finished: Acc %.6g, KL to reference %.6g",
        float(np.dot(final, task.rates)),
        kl_divergence(final, scenario.ref_probs),
    )
    return Trajectory(
        t=np.array(times),
        probs=np.array(rows),
        acc=np.array(accs),
        dacc=np.array(daccs),
        mode=FlowMode.SAMPLED,
        scenario_digest=scenario.digest(),
        meta=config.model_dump(),
    )
