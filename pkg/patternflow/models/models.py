"""
Domain types for the tabular question -> reasoning pattern -> answer model.

A task is a fixed set of reasoning patterns with constant success rates; a
policy is the softmax of one logit column over those patterns.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from patternflow.core.errors import IllPosedTaskError, InvalidInputError


class FlowMode(str, Enum):
    RLVR_FLOW = "rlvr_flow"
    SFT_FLOW = "sft_flow"
    SAMPLED = "sampled"


class Regime(str, Enum):
    REGIME1 = "Regime1"
    REGIME2 = "Regime2"
    NEITHER = "Neither"


def as_vector(values, name: str = "vector") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_distribution(probs, k: int, tol: float = 1e-9, name: str = "probs") -> np.ndarray:
    arr = as_vector(probs, name)
    if arr.size != k:
        raise InvalidInputError(f"{name} has length {arr.size}, expected {k}")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > tol:
        raise InvalidInputError(f"{name} is not a probability vector")
    return arr


@dataclass(frozen=True)
class PatternTask:
    """Reasoning patterns with fixed success rates for a single question."""

    names: tuple[str, ...]
    p_succ: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.p_succ):
            raise InvalidInputError("names and p_succ must have the same length")
        if len(self.p_succ) < 2:
            raise InvalidInputError("a task needs at least two reasoning patterns")
        for name, p in zip(self.names, self.p_succ):
            if not (0.0 <= p <= 1.0):
                raise InvalidInputError(f"success rate of pattern {name!r} is outside [0, 1]")

    @classmethod
    def from_rates(cls, rates: Sequence[float], names: Optional[Sequence[str]] = None) -> "PatternTask":
        rates = tuple(float(p) for p in rates)
        if names is None:
            names = tuple(f"r{i + 1}" for i in range(len(rates)))
        return cls(names=tuple(names), p_succ=rates)

    @property
    def k(self) -> int:
        return len(self.p_succ)

    @cached_property
    def rates(self) -> np.ndarray:
        arr = np.array(self.p_succ, dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def _order(self) -> list[int]:
        # stable: equal rates keep declaration order
        return sorted(range(self.k), key=lambda i: -self.p_succ[i])

    @property
    def has_strict_optimum(self) -> bool:
        first, second = self._order[0], self._order[1]
        return self.p_succ[first] > self.p_succ[second]

    @property
    def best_index(self) -> int:
        """r*; raises when the top success rate is tied."""
        if not self.has_strict_optimum:
            raise IllPosedTaskError("the maximum success rate is attained by more than one pattern")
        return self._order[0]

    @property
    def runner_up_index(self) -> int:
        """r'; raises when the second-highest success rate is tied."""
        self.best_index  # r* must be strict first
        second = self._order[1]
        if self.k > 2 and self.p_succ[second] == self.p_succ[self._order[2]]:
            raise IllPosedTaskError("the second-highest success rate is attained by more than one pattern")
        return second

    def permuted(self, order: Sequence[int]) -> "PatternTask":
        return PatternTask(
            names=tuple(self.names[i] for i in order),
            p_succ=tuple(self.p_succ[i] for i in order),
        )


class PolicyState:
    """
    Logit column theta[:, q] with its cached softmax.

    Logits are mean-centered on every write; the softmax is shift invariant so
    the distribution is unchanged.
    """

    __slots__ = ("_logits", "_probs")

    def __init__(self, logits):
        self.set_logits(logits)

    @classmethod
    def from_probs(cls, probs) -> "PolicyState":
        return cls(logits_from_probs(probs))

    @classmethod
    def uniform(cls, k: int) -> "PolicyState":
        return cls(np.zeros(k))

    def set_logits(self, logits) -> None:
        arr = as_vector(logits, "logits").copy()
        arr -= arr.mean()
        arr.setflags(write=False)
        self._logits = arr
        self._probs = softmax(arr)
        self._probs.setflags(write=False)

    @property
    def logits(self) -> np.ndarray:
        return self._logits

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def log_probs(self) -> np.ndarray:
        return log_softmax(self._logits)

    @property
    def k(self) -> int:
        return self._logits.size

    def copy(self) -> "PolicyState":
        # arrays are read-only, so sharing them keeps the logits bit-identical
        clone = PolicyState.__new__(PolicyState)
        clone._logits = self._logits
        clone._probs = self._probs
        return clone

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolicyState):
            return NotImplemented
        return np.array_equal(self._logits, other._logits)

    def __repr__(self) -> str:
        return f"PolicyState(probs={np.array2string(self._probs, precision=6)})"


@dataclass(frozen=True)
class Scenario:
    """
    The unit of experiment: task, reference policy, KL coefficient and
    integrator settings.

    ``ref_probs`` keeps the reference distribution as declared; ``ref`` builds
    a fresh PolicyState from it on every access.
    """

    task: PatternTask
    ref_probs: tuple[float, ...]
    beta: float = 0.0
    horizon: float = 100.0
    step: float = 0.1
    record_stride: int = 1
    seed: int = 0
    mode: FlowMode = FlowMode.RLVR_FLOW
    p_sft: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", FlowMode(self.mode))
        object.__setattr__(self, "ref_probs", tuple(float(p) for p in self.ref_probs))
        ref = check_distribution(self.ref_probs, self.task.k, name="ref_probs")
        if np.any(ref <= 0):
            raise InvalidInputError("reference policy must give every pattern positive mass")
        if self.beta < 0:
            raise InvalidInputError("beta must be non-negative")
        if self.horizon < 0:
            raise InvalidInputError("horizon must be non-negative")
        if self.step <= 0:
            raise InvalidInputError("step must be positive")
        if self.record_stride < 1:
            raise InvalidInputError("record_stride must be at least 1")
        if not (0 <= self.seed < 2**64):
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        if self.p_sft is not None:
            object.__setattr__(self, "p_sft", tuple(float(p) for p in self.p_sft))
            check_distribution(self.p_sft, self.task.k, name="p_sft")
        elif self.mode is FlowMode.SFT_FLOW:
            raise InvalidInputError("sft_flow scenarios need a p_sft distribution")

    @property
    def ref(self) -> PolicyState:
        return PolicyState.from_probs(self.ref_probs)

    @property
    def k(self) -> int:
        return self.task.k

    def canonical(self) -> dict:
        return {
            "names": list(self.task.names),
            "p_succ": [repr(p) for p in self.task.p_succ],
            "pi_ref": [repr(p) for p in self.ref_probs],
            "beta": repr(float(self.beta)),
            "horizon": repr(float(self.horizon)),
            "step": repr(float(self.step)),
            "record_stride": int(self.record_stride),
            "seed": int(self.seed),
            "mode": self.mode.value,
            "p_sft": None if self.p_sft is None else [repr(p) for p in self.p_sft],
        }

    def digest(self) -> str:
        from patternflow.utils import content_digest

        return content_digest(self.canonical())


class TrajectorySample(NamedTuple):
    t: float
    probs: np.ndarray
    acc: float
    dacc: float


@dataclass
class Trajectory:
    """Time-stamped (probs, accuracy, dAcc/dt) samples of one run."""

    t: np.ndarray
    probs: np.ndarray
    acc: np.ndarray
    dacc: np.ndarray
    mode: FlowMode
    scenario_digest: str
    converged: bool = False
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, k: int, mode: FlowMode, scenario_digest: str = "") -> "Trajectory":
        return cls(np.zeros(0), np.zeros((0, k)), np.zeros(0), np.zeros(0), FlowMode(mode), scenario_digest)

    def __len__(self) -> int:
        return int(self.t.size)

    def __iter__(self) -> Iterator[TrajectorySample]:
        for i in range(len(self)):
            yield TrajectorySample(float(self.t[i]), self.probs[i], float(self.acc[i]), float(self.dacc[i]))

    @property
    def samples(self) -> list[TrajectorySample]:
        return list(self)

    @property
    def k(self) -> int:
        return int(self.probs.shape[1])

    @property
    def final_probs(self) -> np.ndarray:
        return self.probs[-1]

    def columns(self) -> list[str]:
        return ["t", "acc", "dacc"] + [f"pi_{i + 1}" for i in range(self.k)]

    def column(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        if name == "acc":
            return self.acc
        if name == "dacc":
            return self.dacc
        if name.startswith("pi_"):
            try:
                idx = int(name[3:]) - 1
            except ValueError:
                idx = -1
            if 0 <= idx < self.k:
                return self.probs[:, idx]
        raise InvalidInputError(f"unknown trajectory column {name!r}")


# Operations

def softmax(logits) -> np.ndarray:
    """Probability vector of a logit vector; max-subtracted for overflow safety."""
    x = as_vector(logits, "logits")
    z = np.exp(x - x.max())
    return z / z.sum()


def stable_log_softmax(x: np.ndarray) -> np.ndarray:
    """Unchecked kernel: integrators look for non-finite states themselves."""
    shifted = x - x.max()
    return shifted - np.log(np.exp(shifted).sum())


def log_softmax(logits) -> np.ndarray:
    return stable_log_softmax(as_vector(logits, "logits"))


def accuracy(task: PatternTask, probs) -> float:
    """Acc = sum_r pi(r) * p_succ(r)."""
    p = check_distribution(probs, task.k)
    return float(np.dot(p, task.rates))


def logits_from_probs(probs) -> np.ndarray:
    """Centered log-probabilities; softmax of the result reproduces ``probs``."""
    p = as_vector(probs, "probs")
    if np.any(p <= 0):
        raise InvalidInputError("every probability must be strictly positive to recover logits")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("probs must sum to 1")
    logits = np.log(p)
    return logits - logits.mean()


def classify_regime(task: PatternTask, ref_probs) -> Regime:
    """
    Regime1 when the initial accuracy beats every non-optimal pattern,
    Regime2 when only r' beats it. Boundary equalities fall to Neither.
    """
    best = task.best_index
    acc = accuracy(task, ref_probs)
    others = [i for i in range(task.k) if i != best]
    if all(acc > task.p_succ[i] for i in others):
        return Regime.REGIME1
    above = [i for i in others if task.p_succ[i] > acc]
    if len(above) == 1:
        runner_up = above[0]
        if all(acc > task.p_succ[i] for i in others if i != runner_up):
            return Regime.REGIME2
    return Regime.NEITHER


def on_regime_boundary(task: PatternTask, probs) -> bool:
    best = task.best_index
    acc = accuracy(task, probs)
    return any(acc == task.p_succ[i] for i in range(task.k) if i != best)
