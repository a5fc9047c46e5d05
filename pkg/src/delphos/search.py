"""Training loop: episode rollouts against the estimation environment,
cached outcomes, reward propagation, per-episode agent updates, early
stopping, and post-hoc analytics (best-model progression, Pareto front,
coverage summaries).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentConfig, DqnAgent, QNetwork, Transition
from .dataset import ChoiceDataset
from .estimator import (
    EstimationOutcome,
    OptimizerSettings,
    build_design,
    estimate,
    null_log_likelihood,
)
from .reward import RewardConfig, RewardEngine
from .space import (
    EMPTY_SPEC,
    ModellingSpace,
    ModelSpec,
    TERMINATE,
    apply_action,
    canonical_key,
    encode_state,
    encoding_length,
    enumerate_actions,
    valid_mask,
)

EPISODES_CSV_COLUMNS = (
    "episode", "key", "steps", "reward", "converged", "ll", "aic", "bic",
    "adj_rho2", "n_params", "epsilon", "loss", "novel", "wall_ms",
)


class SearchAborted(RuntimeError):
    """Raised when training hits a non-finite loss; carries partial state."""

    def __init__(self, message: str, records, agent):
        super().__init__(message)
        self.records = records
        self.agent = agent


@dataclass
class RunConfig:
    space: ModellingSpace
    reward: RewardConfig
    agent: AgentConfig = field(default_factory=AgentConfig)
    episodes: int = 10_000
    min_episodes: int | None = None  # None disables early stopping
    search_window: int = 100
    stop_threshold: float = 0.05
    seed: int = 0
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    pareto_objective: str = "aic"

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be positive")
        if self.min_episodes is not None and self.min_episodes > self.episodes:
            raise ValueError("min_episodes cannot exceed episodes")
        if self.search_window < 1:
            raise ValueError("search_window must be >= 1")
        if self.pareto_objective not in ("aic", "ll"):
            raise ValueError("pareto_objective must be aic|ll")


class ModelCache:
    """One estimation per canonical key for the lifetime of a run."""

    def __init__(self):
        self._store: dict[str, tuple[ModelSpec, EstimationOutcome]] = {}
        self.n_estimations = 0
        self.n_hits = 0

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, key: str) -> bool:
        return key in self._store

    def get_or_estimate(self, key: str, spec: ModelSpec, estimate_fn):
        if key in self._store:
            self.n_hits += 1
            return self._store[key][1], False
        outcome = estimate_fn(spec)
        self.n_estimations += 1
        self._store[key] = (spec, outcome)
        return outcome, True

    def items(self):
        return list(self._store.items())

    def outcome(self, key: str) -> EstimationOutcome | None:
        entry = self._store.get(key)
        return entry[1] if entry else None


@dataclass
class EpisodeRecord:
    episode: int
    key: str
    steps: int
    reward: float
    converged: bool
    ll: float
    aic: float
    bic: float
    adj_rho2: float
    n_params: float
    epsilon: float
    loss: float
    novel: bool
    wall_ms: int = 0  # deterministic placeholder; timings live in models.jsonl


@dataclass
class SearchResult:
    config: RunConfig
    records: list[EpisodeRecord]
    best_progress: list[tuple[int, str, float]]
    best_spec: ModelSpec | None
    best_outcome: EstimationOutcome | None
    cache: ModelCache
    tracker_state: dict
    reward_engine: RewardEngine
    pareto: list[tuple[str, int, float]]
    action_counts: list[dict]
    stopped_early: bool
    wall_s: float
    policy: QNetwork | None = None

    @property
    def best_reward(self) -> float:
        return self.best_progress[-1][2] if self.best_progress else 0.0


def _failure_outcome(ll0: float, n_obs: int) -> EstimationOutcome:
    nan = float("nan")
    return EstimationOutcome(
        ll=nan, ll0=ll0, rho2=nan, adj_rho2=nan, aic=nan, bic=nan, n_params=0,
        estimates={}, std_errors={}, robust_std_errors={}, converged=False,
        est_time=0.0, n_obs=n_obs,
    )


def run_episode(agent: DqnAgent, space: ModellingSpace, cache: ModelCache,
                engine: RewardEngine, estimate_fn, epsilon: float,
                actions=None) -> tuple[EpisodeRecord, list[Transition]]:
    """One rollout from the empty specification until terminate or step cap.

    Terminated episodes are estimated through the cache; cap-truncated
    episodes receive reward zero without estimation.
    """
    if actions is None:
        actions = enumerate_actions(space)
    state = EMPTY_SPEC
    state_vec = encode_state(space, state)
    steps: list[tuple[np.ndarray, int, np.ndarray, np.ndarray, bool]] = []
    terminated = False
    for _ in range(space.max_steps):
        mask = valid_mask(space, state)
        action_id = agent.act(state_vec, mask, epsilon)
        action = actions[action_id]
        state = apply_action(state, action)
        next_vec = encode_state(space, state)
        next_mask = valid_mask(space, state)
        terminated = action.op == TERMINATE
        steps.append((state_vec, action_id, next_vec, next_mask, terminated))
        state_vec = next_vec
        if terminated:
            break

    key = canonical_key(state)
    nan = float("nan")
    if terminated:
        outcome, novel = cache.get_or_estimate(key, state, estimate_fn)
        reward = engine.score(outcome)
        record = EpisodeRecord(
            episode=0, key=key, steps=len(steps), reward=reward,
            converged=outcome.converged, ll=outcome.ll, aic=outcome.aic,
            bic=outcome.bic, adj_rho2=outcome.adj_rho2,
            n_params=float(outcome.n_params), epsilon=epsilon, loss=nan,
            novel=novel,
        )
    else:
        reward = 0.0
        record = EpisodeRecord(
            episode=0, key=key, steps=len(steps), reward=0.0, converged=False,
            ll=nan, aic=nan, bic=nan, adj_rho2=nan, n_params=nan,
            epsilon=epsilon, loss=nan, novel=False,
        )

    per_step = engine.credit(reward, len(steps))
    transitions = [
        Transition(
            state_vec=s, action_id=a, reward=float(r),
            next_state_vec=ns, next_valid_mask=nm, terminal=term,
        )
        for (s, a, ns, nm, term), r in zip(steps, per_step)
    ]
    return record, transitions


def early_stop_check(records: list[EpisodeRecord], cfg: RunConfig) -> bool:
    """Stop once past min_episodes the reward rolling mean has stabilised
    (relative threshold over two adjacent windows) and no new best model
    appeared within the last window."""
    e = len(records)
    if cfg.min_episodes is None or e <= cfg.min_episodes:
        return False
    w = cfg.search_window
    if e < 2 * w:
        return False
    rewards = np.array([r.reward for r in records])
    recent = rewards[-w:].mean()
    previous = rewards[-2 * w : -w].mean()
    if abs(recent - previous) > cfg.stop_threshold * max(abs(previous), 1e-9):
        return False
    best = -math.inf
    last_improvement = 0
    for r in records:
        if r.reward > best:
            best = r.reward
            last_improvement = r.episode
    return last_improvement <= e - w


def run_search(cfg: RunConfig, ds: ChoiceDataset, progress=None) -> SearchResult:
    """Execute the full training loop; deterministic for a fixed seed."""
    t_start = time.perf_counter()
    space = cfg.space
    actions = enumerate_actions(space)
    agent = DqnAgent(
        encoding_length(space), len(actions), cfg.agent, cfg.episodes, cfg.seed
    )
    cache = ModelCache()
    ll0 = null_log_likelihood(ds)
    engine = RewardEngine(cfg.reward, ll0=ll0)

    def estimate_fn(spec: ModelSpec) -> EstimationOutcome:
        try:
            design = build_design(spec, space, ds)
            return estimate(design, ds, cfg.optimizer)
        except Exception:
            return _failure_outcome(ll0, ds.n_obs)

    records: list[EpisodeRecord] = []
    best_progress: list[tuple[int, str, float]] = []
    best_reward = -math.inf
    best_key = None
    counts = np.zeros(len(actions), dtype=int)
    counts_late = np.zeros(len(actions), dtype=int)
    reward_sums = np.zeros(len(actions))
    stopped_early = False

    for e in range(cfg.episodes):
        epsilon = agent.schedule(e)
        record, transitions = run_episode(
            agent, space, cache, engine, estimate_fn, epsilon, actions
        )
        record.episode = e + 1
        try:
            record.loss = agent.learn(transitions)
        except FloatingPointError as exc:
            raise SearchAborted(
                f"non-finite loss at episode {e + 1}", records, agent
            ) from exc
        if (e + 1) % cfg.agent.target_update == 0:
            agent.sync()
        records.append(record)

        ids = [tr.action_id for tr in transitions]
        counts[ids] += 1
        if e >= cfg.episodes * 3 // 4:
            counts_late[ids] += 1
        for a in ids:
            reward_sums[a] += record.reward

        if record.reward > best_reward:
            best_reward = record.reward
            best_key = record.key
            best_progress.append((record.episode, record.key, record.reward))
        if progress is not None and (e + 1) % 100 == 0:
            window = records[-100:]
            progress(
                record.episode,
                float(np.mean([r.reward for r in window])),
                best_reward,
                len(cache),
            )
        if early_stop_check(records, cfg):
            stopped_early = True
            break

    best_spec = best_outcome = None
    if best_key is not None:
        for key, (spec, outcome) in cache.items():
            if key == best_key:
                best_spec, best_outcome = spec, outcome
                break

    action_counts = [
        {
            "id": a.id,
            "label": a.label(),
            "count": int(counts[a.id]),
            "count_late": int(counts_late[a.id]),
            "mean_episode_reward": float(reward_sums[a.id] / counts[a.id]) if counts[a.id] else 0.0,
        }
        for a in actions
    ]
    return SearchResult(
        config=cfg,
        records=records,
        best_progress=best_progress,
        best_spec=best_spec,
        best_outcome=best_outcome,
        cache=cache,
        tracker_state=engine.tracker.to_json(),
        reward_engine=engine,
        pareto=pareto_front(
            [(k, o) for k, (_, o) in cache.items()], cfg.pareto_objective
        ),
        action_counts=action_counts,
        stopped_early=stopped_early,
        wall_s=time.perf_counter() - t_start,
        policy=agent.policy,
    )


def pareto_front(models, objective: str = "aic") -> list[tuple[str, int, float]]:
    """Non-dominated set under (min n_params, min aic | max ll), sorted by
    parameter count. Only converged models participate."""
    if objective not in ("aic", "ll"):
        raise ValueError("objective must be aic|ll")
    entries = []
    for key, outcome in models:
        if not outcome.converged:
            continue
        value = outcome.aic if objective == "aic" else -outcome.ll
        entries.append((key, int(outcome.n_params), float(value)))
    entries.sort(key=lambda t: (t[1], t[2], t[0]))
    front: list[tuple[str, int, float]] = []
    best = math.inf
    i = 0
    while i < len(entries):
        j = i
        while j < len(entries) and entries[j][1] == entries[i][1]:
            j += 1
        group_min = entries[i][2]
        if group_min < best:
            front.extend(e for e in entries[i:j] if e[2] == group_min)
            best = group_min
        i = j
    return front


def summarise(result: SearchResult, reference=None) -> dict:
    """Coverage and performance summary; ``reference`` is an optional
    (spec, outcome) pair for the known true model."""
    records = result.records
    unique = len(result.cache)
    converged_unique = sum(1 for _, (_, o) in result.cache.items() if o.converged)
    last = records[-100:]
    last_rewards = np.array([r.reward for r in last]) if last else np.zeros(0)
    summary = {
        "unique_models": unique,
        "converged_pct": 100.0 * converged_unique / unique if unique else 0.0,
        "first_recovery": None,
        "reward_last100": float(last_rewards.mean()) if last_rewards.size else 0.0,
        "delta_vs_reference": None,
        "rmse_vs_reference": None,
    }
    if reference is not None:
        ref_spec, ref_outcome = reference
        ref_key = canonical_key(ref_spec)
        for r in records:
            if r.key == ref_key:
                summary["first_recovery"] = r.episode
                break
        ref_reward = result.reward_engine.score_frozen(ref_outcome)
        summary["reference_reward"] = ref_reward
        if last_rewards.size:
            summary["delta_vs_reference"] = float(last_rewards.mean() - ref_reward)
            summary["rmse_vs_reference"] = float(
                np.sqrt(np.mean((last_rewards - ref_reward) ** 2))
            )
    return summary


def write_episodes_csv(records: list[EpisodeRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPISODES_CSV_COLUMNS)
        for r in records:
            writer.writerow([
                r.episode, r.key, r.steps, repr(r.reward), int(r.converged),
                repr(r.ll), repr(r.aic), repr(r.bic), repr(r.adj_rho2),
                repr(r.n_params), repr(r.epsilon), repr(r.loss),
                int(r.novel), r.wall_ms,
            ])


def read_episodes_csv(path) -> list[EpisodeRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(EpisodeRecord(
                episode=int(row["episode"]), key=row["key"], steps=int(row["steps"]),
                reward=float(row["reward"]), converged=bool(int(row["converged"])),
                ll=float(row["ll"]), aic=float(row["aic"]), bic=float(row["bic"]),
                adj_rho2=float(row["adj_rho2"]), n_params=float(row["n_params"]),
                epsilon=float(row["epsilon"]), loss=float(row["loss"]),
                novel=bool(int(row["novel"])), wall_ms=int(row["wall_ms"]),
            ))
    return records


def write_models_jsonl(cache: ModelCache, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, (spec, outcome) in cache.items():
            fh.write(json.dumps(
                {"key": key, "spec": spec.to_json(), "outcome": outcome.to_json()}
            ))
            fh.write("\n")


def write_pareto_csv(pareto, objective: str, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_params", objective, "key"])
        for key, n_params, value in pareto:
            writer.writerow([n_params, repr(value), key])


def write_best_json(result: SearchResult, path) -> None:
    doc = {
        "reward": result.best_reward,
        "key": result.best_progress[-1][1] if result.best_progress else None,
        "spec": result.best_spec.to_json() if result.best_spec else None,
        "outcome": result.best_outcome.to_json() if result.best_outcome else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
