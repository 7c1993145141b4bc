"""
RLVR and SFT objectives on the tabular policy, their exact logit gradients,
and the closed-form optimum of the KL-regularized reward.

Gradients are returned as plain numpy vectors of length K (one entry per
pattern logit). They always sum to zero: softmax gradients are tangent to the
centered-logit gauge.
"""

from typing import TypeAlias

import numpy as np

from patternflow.core.errors import InvalidInputError
from patternflow.models.models import PatternTask, PolicyState, check_distribution, softmax, stable_log_softmax

GradientVector: TypeAlias = np.ndarray


def _same_k(task: PatternTask, *states: PolicyState) -> None:
    for state in states:
        if state.k != task.k:
            raise InvalidInputError(f"policy has {state.k} patterns, task has {task.k}")


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise InvalidInputError("beta must be a finite non-negative number")
    return beta


def _positive_distribution(probs, k: int, name: str) -> np.ndarray:
    p = check_distribution(probs, k, name=name)
    if np.any(p <= 0):
        raise InvalidInputError(f"{name} must give every pattern positive mass")
    return p


def kl_divergence(probs, ref_probs) -> float:
    """KL(pi || pi_ref) over patterns, with 0 * log 0 = 0."""
    p = np.asarray(probs, dtype=float)
    q = np.asarray(ref_probs, dtype=float)
    if p.shape != q.shape:
        raise InvalidInputError("KL arguments must have the same length")
    if np.any((q <= 0) & (p > 0)):
        raise InvalidInputError("reference policy does not cover the support of the policy")
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def _rlvr_value(logits: np.ndarray, rates: np.ndarray, log_ref: np.ndarray, beta: float) -> float:
    logp = stable_log_softmax(logits)
    p = np.exp(logp)
    value = float(np.dot(p, rates))
    if beta:
        value -= beta * float(np.dot(p, logp - log_ref))
    return value


def _rlvr_gradient(logits: np.ndarray, rates: np.ndarray, log_ref: np.ndarray, beta: float) -> GradientVector:
    # pi_i (p_i - Acc) + beta pi_i (KL - ln(pi_i / ref_i))
    logp = stable_log_softmax(logits)
    p = np.exp(logp)
    grad = p * (rates - np.dot(p, rates))
    if beta:
        log_ratio = logp - log_ref
        grad = grad + beta * p * (np.dot(p, log_ratio) - log_ratio)
    return grad


def rlvr_objective(task: PatternTask, state: PolicyState, ref: PolicyState, beta: float) -> float:
    """E_{r~pi}[p_succ(r)] - beta * KL(pi || pi_ref)."""
    _same_k(task, state, ref)
    return _rlvr_value(state.logits, task.rates, ref.log_probs, _check_beta(beta))


def rlvr_grad(task: PatternTask, state: PolicyState, ref: PolicyState, beta: float) -> GradientVector:
    _same_k(task, state, ref)
    return _rlvr_gradient(state.logits, task.rates, ref.log_probs, _check_beta(beta))


def sft_loss(p_sft, state: PolicyState) -> float:
    """Cross-entropy -sum_r p_sft(r) ln pi(r) of the pattern marginal."""
    target = check_distribution(p_sft, state.k, name="p_sft")
    mask = target > 0
    return float(-np.dot(target[mask], state.log_probs[mask]))


def sft_flow_direction(p_sft, state: PolicyState) -> GradientVector:
    """Descent direction of sft_loss per logit: p_sft(j) - pi(j)."""
    target = check_distribution(p_sft, state.k, name="p_sft")
    return target - state.probs


def entropy(probs) -> float:
    p = np.asarray(probs, dtype=float)
    mask = p > 0
    return float(-np.dot(p[mask], np.log(p[mask])))


def optimal_policy_closed_form(task: PatternTask, ref_probs, beta: float) -> np.ndarray:
    """
    pi_opt(r) = exp(p_succ(r) / beta) * pi_ref(r) / Z, evaluated in log space
    so p_succ / beta may be as large as 1e6.
    """
    beta = _check_beta(beta)
    if beta == 0:
        raise InvalidInputError("beta = 0 has no tilt; use optimal_policy_beta_zero")
    ref = _positive_distribution(ref_probs, task.k, "ref_probs")
    return softmax(task.rates / beta + np.log(ref))


def optimal_policy_beta_zero(task: PatternTask, ref_probs) -> np.ndarray:
    """Limit of the optimum as beta -> 0: all mass on r*."""
    _positive_distribution(ref_probs, task.k, "ref_probs")
    onehot = np.zeros(task.k)
    onehot[task.best_index] = 1.0
    return onehot


def amplified_patterns(task: PatternTask, ref_probs, beta: float) -> list[int]:
    """Patterns the optimal policy selects more often than the reference does."""
    if float(beta) == 0:
        return [task.best_index]
    ref = _positive_distribution(ref_probs, task.k, "ref_probs")
    opt = optimal_policy_closed_form(task, ref, beta)
    return [i for i in range(task.k) if opt[i] > ref[i]]
