"""Episodic reward: normalised modelling outcomes, sign constraints, and
discounted credit assignment over an episode's transitions.

Every reward lies in [0, 1]. Non-convergence or any violated behavioural
expectation zeroes the episode outright.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .estimator import EstimationOutcome

METRICS = ("ll", "adj_rho2", "rho2", "aic", "bic", "n_params")

NEGATIVE = "negative"
POSITIVE = "positive"


@dataclass(frozen=True)
class BehaviouralConstraint:
    """Expected strict sign for every coefficient attached to a target.

    ``target`` is an attribute label (``x1``), ``asc``, or an explicit
    shape parameter (``lambda_x4``). Attribute targets match all
    alternative/covariate-level splits of the beta, never the lambda.
    """

    target: str
    expected_sign: str

    def __post_init__(self):
        if self.expected_sign not in (NEGATIVE, POSITIVE):
            raise ValueError(f"expected_sign must be negative|positive, got {self.expected_sign!r}")

    def matches(self, name: str) -> bool:
        if self.target == "asc":
            return name.startswith("asc")
        if self.target.startswith("lambda"):
            return name == self.target
        prefix = f"b_{self.target}"
        return name == prefix or name.startswith(prefix + "_")

    def to_json(self) -> dict:
        return {"target": self.target, "sign": self.expected_sign}


@dataclass(frozen=True)
class RewardConfig:
    weights: dict[str, float]
    constraints: tuple[BehaviouralConstraint, ...] = ()
    gamma: float = 0.99

    def __post_init__(self):
        unknown = set(self.weights) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown reward metrics {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("metric weights must be nonnegative")
        total = sum(self.weights.values())
        if total <= 0:
            raise ValueError("at least one metric must carry positive weight")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        object.__setattr__(
            self, "weights", {m: w / total for m, w in self.weights.items() if w > 0}
        )

    def to_json(self) -> dict:
        return {
            "weights": dict(self.weights),
            "constraints": [c.to_json() for c in self.constraints],
            "gamma": self.gamma,
        }


@dataclass
class NormalizationTracker:
    """Best-so-far bounds for dynamic min-max scaling of raw outcomes."""

    ll0: float
    ll_max: float = -math.inf
    aic_min: float = math.inf
    bic_min: float = math.inf
    n_params_min: int | None = None
    n_params_max: int | None = None

    def update(self, outcome: EstimationOutcome) -> None:
        self.ll_max = max(self.ll_max, outcome.ll)
        self.aic_min = min(self.aic_min, outcome.aic)
        self.bic_min = min(self.bic_min, outcome.bic)
        k = outcome.n_params
        self.n_params_min = k if self.n_params_min is None else min(self.n_params_min, k)
        self.n_params_max = k if self.n_params_max is None else max(self.n_params_max, k)

    def to_json(self) -> dict:
        return {
            "ll0": self.ll0,
            "ll_max": self.ll_max,
            "aic_min": self.aic_min,
            "bic_min": self.bic_min,
            "n_params_min": self.n_params_min,
            "n_params_max": self.n_params_max,
        }


def normalize_ll(ll: float, tracker: NormalizationTracker) -> float:
    """(ll - ll0)/(ll_max - ll0) clipped below at the null; best-so-far maps to 1."""
    if ll > tracker.ll_max:
        tracker.ll_max = ll
    if ll <= tracker.ll0 or tracker.ll_max <= tracker.ll0:
        return 0.0
    return (ll - tracker.ll0) / (tracker.ll_max - tracker.ll0)


def normalize_ic(value: float, kind: str, tracker: NormalizationTracker) -> float:
    """Information criteria scaled between the null-model bound and the best seen."""
    worst = -2.0 * tracker.ll0
    if kind == "aic":
        tracker.aic_min = min(tracker.aic_min, value)
        best = tracker.aic_min
    elif kind == "bic":
        tracker.bic_min = min(tracker.bic_min, value)
        best = tracker.bic_min
    else:
        raise ValueError(f"kind must be aic|bic, got {kind!r}")
    if value >= worst or best >= worst:
        return 0.0
    return (worst - value) / (worst - best)


def _normalize_n_params(k: int, tracker: NormalizationTracker) -> float:
    lo, hi = tracker.n_params_min, tracker.n_params_max
    lo = k if lo is None else min(lo, k)
    hi = k if hi is None else max(hi, k)
    tracker.n_params_min, tracker.n_params_max = lo, hi
    if hi == lo:
        return 1.0  # no parsimony signal until two distinct sizes observed
    return (hi - k) / (hi - lo)


def check_constraints(
    outcome: EstimationOutcome, constraints: tuple[BehaviouralConstraint, ...]
) -> bool:
    """True iff every matching coefficient has the expected strict sign.

    Constraints whose target is absent from the specification are
    vacuously satisfied.
    """
    for c in constraints:
        for name, value in outcome.estimates.items():
            if not c.matches(name):
                continue
            if c.expected_sign == NEGATIVE and not value < 0:
                return False
            if c.expected_sign == POSITIVE and not value > 0:
                return False
    return True


def episode_reward(
    outcome: EstimationOutcome, config: RewardConfig, tracker: NormalizationTracker
) -> float:
    """Weighted sum of normalised metrics, zeroed on non-convergence or any
    violated sign expectation. The tracker absorbs this outcome's metrics
    first, so a new best model scores exactly 1 on its own metric."""
    if not outcome.converged:
        return 0.0
    tracker.update(outcome)
    if not check_constraints(outcome, config.constraints):
        return 0.0
    total = 0.0
    for metric, weight in config.weights.items():
        if metric == "ll":
            value = normalize_ll(outcome.ll, tracker)
        elif metric in ("aic", "bic"):
            value = normalize_ic(getattr(outcome, metric), metric, tracker)
        elif metric == "n_params":
            value = _normalize_n_params(outcome.n_params, tracker)
        else:  # rho2 / adj_rho2 are already on [0, 1); clip invalid fits
            value = min(1.0, max(0.0, getattr(outcome, metric)))
        total += weight * value
    return total


def credit_assign(episode_r: float, n_steps: int, gamma: float) -> np.ndarray:
    """Discounted per-transition rewards: the terminal step receives the full
    episodic reward, step l receives gamma^(L-1-l) of it."""
    if n_steps < 1:
        raise ValueError("need at least one transition")
    powers = np.arange(n_steps - 1, -1, -1, dtype=float)
    return episode_r * gamma**powers


class RewardEngine:
    """Config plus mutable tracker, bundled for the training loop."""

    def __init__(self, config: RewardConfig, ll0: float):
        self.config = config
        self.tracker = NormalizationTracker(ll0=ll0)

    def score(self, outcome: EstimationOutcome) -> float:
        return episode_reward(outcome, self.config, self.tracker)

    def score_frozen(self, outcome: EstimationOutcome) -> float:
        """Score without mutating the tracker (reference-model evaluation)."""
        frozen = copy.deepcopy(self.tracker)
        return episode_reward(outcome, self.config, frozen)

    def credit(self, episode_r: float, n_steps: int) -> np.ndarray:
        return credit_assign(episode_r, n_steps, self.config.gamma)
