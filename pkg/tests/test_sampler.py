from dataclasses import replace

import numpy as np
import pytest

from patternflow.core.errors import TrainingDivergedError, WrongModeError
from patternflow.dynamics.flow import integrate, interpolate_probs
from patternflow.dynamics.objectives import rlvr_grad
from patternflow.dynamics.sampler import (
    draw_batch,
    episode_gradients,
    estimate_gradient,
    reinforce_step,
    sample_episode,
    train_sampler,
)
from patternflow.models.models import FlowMode, PatternTask, PolicyState, Scenario, accuracy
from patternflow.schemas import SamplerConfig
from patternflow.utils import derive_rng


@pytest.fixture
def sampled_scenario(regime1_scenario):
    return replace(regime1_scenario, mode=FlowMode.SAMPLED, horizon=100.0, record_stride=10)


def _tv(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def test_sample_episode_extreme_rates():
    rng = derive_rng(0, "test")
    certain = PatternTask.from_rates((1.0, 1.0))
    hopeless = PatternTask.from_rates((0.0, 0.0))
    state = PolicyState.from_probs([0.3, 0.7])
    for _ in range(100):
        assert sample_episode(certain, state, rng)[1] == 1
        assert sample_episode(hopeless, state, rng)[1] == 0


def test_batch_reward_matches_accuracy(task3):
    rng = derive_rng(1, "test")
    state = PolicyState.from_probs([0.5, 0.3, 0.2])
    n = 100_000
    _, rewards = draw_batch(task3, state, n, rng)
    acc = 0.65
    assert abs(rewards.mean() - acc) < 4 * np.sqrt(acc * (1 - acc) / n)


def test_pattern_frequencies_match_policy(task3):
    rng = derive_rng(2, "test")
    state = PolicyState.from_probs([0.5, 0.3, 0.2])
    n = 100_000
    indices, _ = draw_batch(task3, state, n, rng)
    freq = np.bincount(indices, minlength=3) / n
    np.testing.assert_allclose(freq, [0.5, 0.3, 0.2], atol=4 * np.sqrt(0.25 / n))


def test_single_episode_gradients_are_unbiased(rng):
    task = PatternTask.from_rates((0.9, 0.6, 0.3, 0.1))
    n = 100_000
    # 10 states x 4 components: a family-wise 3 sigma level (two-sided 0.27%)
    # split over 40 comparisons is 3.99 sigma per component
    z = 3.99
    for _ in range(10):
        state = PolicyState(rng.normal(size=4))
        indices, rewards = draw_batch(task, state, n, rng)
        rows = episode_gradients(state.probs, indices, rewards)
        mean = rows.mean(axis=0)
        stderr = rows.std(axis=0, ddof=1) / np.sqrt(n)
        exact = rlvr_grad(task, state, PolicyState.uniform(4), 0.0)
        assert np.all(np.abs(mean - exact) <= z * stderr + 1e-12)


def test_estimate_gradient_averages_the_drawn_episodes(task3):
    state = PolicyState.from_probs([0.5, 0.3, 0.2])
    ref = PolicyState.uniform(3)
    for baseline in ("none", "batch_mean"):
        config = SamplerConfig(batch_size=64, learning_rate=0.1, steps=1, baseline=baseline)
        indices, rewards = draw_batch(task3, state, 64, derive_rng(4, "test"))
        expected = episode_gradients(state.probs, indices, rewards, baseline).mean(axis=0)
        grad = estimate_gradient(task3, state, ref, config, derive_rng(4, "test"))
        np.testing.assert_allclose(grad, expected, atol=1e-14)


def test_reward_marginal_follows_accuracy_during_training(task3):
    rng = derive_rng(6, "test")
    batch, steps, window = 100, 1000, 10_000
    state = PolicyState.from_probs([0.5, 0.3, 0.2])
    rewards, accs = [], []
    for _ in range(steps):
        indices, batch_rewards = draw_batch(task3, state, batch, rng)
        rewards.append(batch_rewards)
        accs.append(np.full(batch, accuracy(task3, state.probs)))
        grad = episode_gradients(state.probs, indices, batch_rewards).mean(axis=0)
        state = PolicyState(state.logits + 0.05 * grad)
    rewards, accs = np.concatenate(rewards), np.concatenate(accs)
    assert accs[-1] > accs[0] + 0.1

    # every window of 1e4 consecutive episodes, sliding one batch at a time
    cum_reward = np.concatenate([[0.0], np.cumsum(rewards)])
    cum_acc = np.concatenate([[0.0], np.cumsum(accs)])
    cum_var = np.concatenate([[0.0], np.cumsum(accs * (1.0 - accs))])
    starts = np.arange(0, rewards.size - window + 1, batch)
    observed = cum_reward[starts + window] - cum_reward[starts]
    expected = cum_acc[starts + window] - cum_acc[starts]
    sigma = np.sqrt(cum_var[starts + window] - cum_var[starts])
    assert np.all(np.abs(observed - expected) <= 5.0 * sigma)


def test_estimate_gradient_adds_exact_kl_term(task3):
    config = SamplerConfig(batch_size=1, learning_rate=0.1, steps=1, beta=0.5)
    zero_rates = PatternTask.from_rates((0.0, 0.0, 0.0))
    state = PolicyState.from_probs([0.6, 0.3, 0.1])
    ref = PolicyState.from_probs([0.2, 0.3, 0.5])
    grad = estimate_gradient(zero_rates, state, ref, config, derive_rng(0, "test"))
    np.testing.assert_allclose(grad, rlvr_grad(zero_rates, state, ref, 0.5), atol=1e-15)


def test_reinforce_step_is_still_at_certain_reward():
    task = PatternTask.from_rates((1.0, 0.0, 0.0))
    state = PolicyState([30.0, -15.0, -15.0])
    config = SamplerConfig(batch_size=64, learning_rate=0.5, steps=1, baseline="batch_mean")
    updated = reinforce_step(task, state, PolicyState.uniform(3), config, derive_rng(3, "test"))
    assert np.max(np.abs(updated.logits - state.logits)) < 1e-6


def test_train_sampler_is_deterministic(sampled_scenario):
    config = SamplerConfig(batch_size=16, learning_rate=0.05, steps=200, seed=11)
    first = train_sampler(sampled_scenario, config)
    second = train_sampler(sampled_scenario, config)
    np.testing.assert_array_equal(first.probs, second.probs)
    np.testing.assert_array_equal(first.t, second.t)

    other = train_sampler(sampled_scenario, config.model_copy(update={"seed": 12}))
    assert not np.array_equal(first.final_probs, other.final_probs)


def test_train_sampler_records_on_stride(sampled_scenario):
    config = SamplerConfig(batch_size=8, learning_rate=0.05, steps=95)
    trajectory = train_sampler(sampled_scenario, config)
    expected = [0.0] + [0.05 * s for s in range(10, 100, 10)] + [0.05 * 95]
    np.testing.assert_allclose(trajectory.t, expected)
    assert trajectory.mode is FlowMode.SAMPLED
    assert trajectory.meta["batch_size"] == 8
    assert trajectory.scenario_digest == sampled_scenario.digest()


def test_train_sampler_rejects_flow_scenarios(regime1_scenario):
    with pytest.raises(WrongModeError):
        train_sampler(regime1_scenario, SamplerConfig(learning_rate=0.1, steps=1))


def test_train_sampler_divergence_reports_last_state(sampled_scenario):
    config = SamplerConfig(learning_rate=float("inf"), steps=5)
    with pytest.raises(TrainingDivergedError) as exc:
        train_sampler(sampled_scenario, config)
    np.testing.assert_allclose(exc.value.last_state.probs, [0.5, 0.3, 0.2], atol=1e-12)


def test_flat_task_stays_near_reference():
    flat = Scenario(
        task=PatternTask.from_rates((0.5, 0.5, 0.5)),
        ref_probs=(0.2, 0.3, 0.5),
        mode=FlowMode.SAMPLED,
        record_stride=500,
    )
    config = SamplerConfig(batch_size=64, learning_rate=0.01, steps=2000, baseline="batch_mean")
    assert _tv(train_sampler(flat, config).final_probs, [0.2, 0.3, 0.5]) < 0.05


def test_small_learning_rate_tracks_the_flow(sampled_scenario):
    config = SamplerConfig(batch_size=256, learning_rate=0.001, steps=50_000, seed=5)
    sampled = train_sampler(replace(sampled_scenario, record_stride=1000), config)
    flow = integrate(replace(sampled_scenario, mode=FlowMode.RLVR_FLOW, horizon=50.0))
    for t, probs in zip(sampled.t, sampled.probs):
        assert _tv(probs, interpolate_probs(flow, min(t, flow.t[-1]))) < 0.05


@pytest.mark.slow
def test_regime1_sampled_runs_pick_the_best_pattern(sampled_scenario):
    hits = 0
    for seed in range(100):
        config = SamplerConfig(batch_size=32, learning_rate=0.05, steps=20_000, seed=seed)
        trajectory = train_sampler(replace(sampled_scenario, record_stride=20_000), config)
        hits += int(np.argmax(trajectory.final_probs) == 0)
    assert hits >= 95


@pytest.mark.slow
def test_larger_batches_track_the_flow_more_closely(sampled_scenario):
    flow = integrate(replace(sampled_scenario, mode=FlowMode.RLVR_FLOW, horizon=10.0))
    mean_tv = []
    for batch in (8, 64, 512):
        distances = []
        for seed in range(20):
            config = SamplerConfig(batch_size=batch, learning_rate=0.01, steps=1000, seed=seed)
            sampled = train_sampler(replace(sampled_scenario, record_stride=100), config)
            distances.append(np.mean([_tv(p, interpolate_probs(flow, t)) for t, p in zip(sampled.t, sampled.probs)]))
        mean_tv.append(np.mean(distances))
    assert mean_tv[0] >= mean_tv[1] >= mean_tv[2]
