from pathlib import Path

import numpy as np
import pytest

from patternflow.models.models import FlowMode, PatternTask, Scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def random_task(rng: np.random.Generator, k: int) -> PatternTask:
    """Distinct success rates so r* and r' are unique."""
    while True:
        rates = rng.uniform(0.0, 1.0, size=k)
        if np.min(np.diff(np.sort(rates))) > 1e-3:
            return PatternTask.from_rates(rates)


def random_simplex(rng: np.random.Generator, k: int, floor: float = 0.0) -> np.ndarray:
    p = rng.dirichlet(np.ones(k))
    p = floor + (1.0 - k * floor) * p
    return p / p.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def task3():
    return PatternTask.from_rates((0.9, 0.6, 0.1))


@pytest.fixture
def regime1_scenario(task3):
    return Scenario(task=task3, ref_probs=(0.5, 0.3, 0.2), horizon=2000.0, step=0.1)


@pytest.fixture
def gamma6_scenario(task3):
    return Scenario(task=task3, ref_probs=(0.05, 0.70, 0.25), horizon=200.0, step=0.1)


@pytest.fixture
def kl_scenario():
    return Scenario(task=PatternTask.from_rates((0.9, 0.1)), ref_probs=(0.5, 0.5), beta=0.4, horizon=2000.0, step=0.1)


@pytest.fixture
def sft_scenario(task3):
    return Scenario(
        task=task3,
        ref_probs=(0.05, 0.70, 0.25),
        horizon=100.0,
        step=0.1,
        mode=FlowMode.SFT_FLOW,
        p_sft=(0.90, 0.05, 0.05),
    )


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR
