"""Deep Q-learning components: a fully connected Q-network with rectifier
hidden layers, a periodically synchronised target copy, a FIFO replay
buffer, masked epsilon-greedy selection, and temporal-difference updates
with an adaptive-moment optimizer. Everything runs on numpy and is
bit-deterministic for fixed seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

MASK_PENALTY = -1e9


@dataclass
class QNetwork:
    dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "QNetwork":
        return QNetwork(
            dims=self.dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def save(self, path) -> None:
        doc = {
            "format": "delphos-qnet-v1",
            "dims": list(self.dims),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "QNetwork":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != "delphos-qnet-v1":
            raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
        dims = tuple(doc["dims"])
        weights = [
            np.asarray(flat, dtype=float).reshape(dims[i + 1], dims[i])
            for i, flat in enumerate(doc["weights"])
        ]
        biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
        return cls(dims=dims, weights=weights, biases=biases)


def init_network(dims, seed) -> QNetwork:
    """He-scaled uniform weights, zero biases, seed-deterministic.

    ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims) or len(dims) < 2:
        raise ValueError(f"invalid layer widths {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return QNetwork(dims=dims, weights=weights, biases=biases)


def forward(net: QNetwork, x: np.ndarray) -> np.ndarray:
    """Q-values for one state vector (or a batch, row-wise)."""
    a = np.asarray(x, dtype=float)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a


def _forward_cached(net: QNetwork, x: np.ndarray):
    activations = [x]
    pre = []
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        activations.append(a)
    return activations, pre


def select_action(q: np.ndarray, mask: np.ndarray, epsilon: float, rng) -> int:
    """Masked epsilon-greedy: random valid action w.p. epsilon, else the
    argmax of q with masked entries pushed to an extremely negative value.
    Ties resolve to the lowest action id."""
    valid = np.nonzero(mask)[0]
    if valid.size == 0:
        raise ValueError("no valid action to select")
    if rng.random() < epsilon:
        return int(valid[rng.integers(valid.size)])
    return int(np.argmax(np.where(mask, q, MASK_PENALTY)))


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    decay_frac: float = 0.5
    total_episodes: int = 10_000

    def __call__(self, episode: int) -> float:
        horizon = self.decay_frac * self.total_episodes
        if horizon <= 0 or episode >= horizon:
            return self.end
        return self.start + (self.end - self.start) * episode / horizon


@dataclass(frozen=True)
class Transition:
    state_vec: np.ndarray
    action_id: int
    reward: float
    next_state_vec: np.ndarray
    next_valid_mask: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring with strictly FIFO eviction."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._store: list[Transition] = []
        self._pos = 0
        self.n_pushed = 0

    def __len__(self) -> int:
        return len(self._store)

    def push(self, transition: Transition) -> None:
        if len(self._store) < self.capacity:
            self._store.append(transition)
        else:
            self._store[self._pos] = transition
        self._pos = (self._pos + 1) % self.capacity
        self.n_pushed += 1

    def sample(self, batch_size: int, rng) -> list[Transition]:
        k = min(batch_size, len(self._store))
        idx = rng.choice(len(self._store), size=k, replace=False)
        return [self._store[i] for i in idx]

    def contents(self) -> list[Transition]:
        return list(self._store)


def push_and_sample(buffer: ReplayBuffer, new, batch_size: int, rng) -> list[Transition]:
    """FIFO-insert the new transitions, then draw a uniform batch without
    replacement."""
    for tr in new:
        buffer.push(tr)
    return buffer.sample(batch_size, rng)


class AdamState:
    """First/second moment accumulators over all network parameters."""

    def __init__(self, net: QNetwork, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]
        self.v = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]

    def step(self, net: QNetwork, grads: list[np.ndarray]) -> None:
        self.t += 1
        params = net.weights + net.biases
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _batch_targets(target: QNetwork, batch: list[Transition], gamma: float) -> np.ndarray:
    next_states = np.stack([tr.next_state_vec for tr in batch])
    q_next = forward(target, next_states)
    masks = np.stack([tr.next_valid_mask for tr in batch])
    q_next = np.where(masks, q_next, -np.inf)
    best = q_next.max(axis=1)
    y = np.array([tr.reward for tr in batch])
    nonterminal = ~np.array([tr.terminal for tr in batch])
    y[nonterminal] += gamma * best[nonterminal]
    return y


def _loss_and_grads(policy: QNetwork, target: QNetwork, batch: list[Transition], gamma: float):
    """TD loss and its gradient w.r.t. policy parameters (weights then biases);
    gradient flows only through the selected Q-values."""
    states = np.stack([tr.state_vec for tr in batch])
    action_ids = np.array([tr.action_id for tr in batch])
    y = _batch_targets(target, batch, gamma)

    activations, pre = _forward_cached(policy, states)
    q = activations[-1]
    rows = np.arange(len(batch))
    err = q[rows, action_ids] - y
    loss = float(np.mean(err**2))

    dz = np.zeros_like(q)
    dz[rows, action_ids] = 2.0 * err / len(batch)
    w_grads, b_grads = [], []
    for layer in range(len(policy.weights) - 1, -1, -1):
        w_grads.append(dz.T @ activations[layer])
        b_grads.append(dz.sum(axis=0))
        if layer > 0:
            da = dz @ policy.weights[layer]
            dz = da * (pre[layer - 1] > 0)
    w_grads.reverse()
    b_grads.reverse()
    return loss, w_grads + b_grads


def train_step(
    policy: QNetwork,
    target: QNetwork,
    batch: list[Transition],
    gamma: float,
    adam: AdamState,
    clip_norm: float = 10.0,
) -> float:
    """One TD update: squared error between Q(s,a) and the bootstrapped
    target, followed by a single optimizer step."""
    if not batch:
        raise ValueError("empty batch")
    loss, grads = _loss_and_grads(policy, target, batch, gamma)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite TD loss")
    norm = float(np.sqrt(sum(float((g**2).sum()) for g in grads)))
    if norm > clip_norm:
        grads = [g * (clip_norm / norm) for g in grads]
    adam.step(policy, grads)
    return loss


def sync_target(policy: QNetwork, target: QNetwork) -> None:
    """theta_minus := theta, exactly."""
    for tw, pw in zip(target.weights, policy.weights):
        tw[:] = pw
    for tb, pb in zip(target.biases, policy.biases):
        tb[:] = pb


@dataclass
class AgentConfig:
    layers: int = 2
    units: int = 64
    learning_rate: float = 1e-4
    gamma: float = 0.99
    buffer_capacity: int = 10_000
    target_update: int = 10
    batch_size: int = 32
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.5
    grad_clip: float = 10.0

    def to_json(self) -> dict:
        return {
            "layers": self.layers,
            "units": self.units,
            "learning_rate": self.learning_rate,
            "gamma": self.gamma,
            "buffer_capacity": self.buffer_capacity,
            "target_update": self.target_update,
            "batch_size": self.batch_size,
            "eps_start": self.eps_start,
            "eps_end": self.eps_end,
            "eps_decay_frac": self.eps_decay_frac,
            "grad_clip": self.grad_clip,
        }


class DqnAgent:
    """Policy/target networks, buffer, and optimizer behind a small facade."""

    def __init__(self, state_dim: int, n_actions: int, cfg: AgentConfig,
                 total_episodes: int, seed: int):
        self.cfg = cfg
        dims = (state_dim, *([cfg.units] * cfg.layers), n_actions)
        init_seed, action_seed, sample_seed = np.random.SeedSequence(seed).spawn(3)
        self.policy = init_network(dims, seed=init_seed)
        self.target = self.policy.copy()
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.adam = AdamState(self.policy, cfg.learning_rate)
        self.action_rng = np.random.default_rng(action_seed)
        self.sample_rng = np.random.default_rng(sample_seed)
        self.schedule = EpsilonSchedule(
            cfg.eps_start, cfg.eps_end, cfg.eps_decay_frac, total_episodes
        )

    def act(self, state_vec: np.ndarray, mask: np.ndarray, epsilon: float) -> int:
        q = forward(self.policy, state_vec)
        return select_action(q, mask, epsilon, self.action_rng)

    def learn(self, transitions: list[Transition]) -> float:
        batch = push_and_sample(self.buffer, transitions, self.cfg.batch_size, self.sample_rng)
        return train_step(
            self.policy, self.target, batch, self.cfg.gamma, self.adam, self.cfg.grad_clip
        )

    def sync(self) -> None:
        sync_target(self.policy, self.target)
