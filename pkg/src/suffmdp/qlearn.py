"""Q-learning over a feature map, and Monte Carlo policy evaluation.

Both approximators learn ``Q(s, a)`` as a function of ``phi(s)`` by
stochastic semi-gradient updates over shuffled passes through the batch of
transitions:

    theta <- theta + alpha * (u + gamma * max_b F(s', b) - F(s, a)) * dF/dtheta

with the bootstrap target held fixed within a step.  The linear form is
``F(s, a) = theta_a . (1, phi(s))``; the neural form gives each action a
single-hidden-layer network.  Greedy policies break ties toward the
smallest action index.

Policy quality is measured by simulating fresh trajectories from a
generative model and averaging utilities: either the per-step mean over
all steps and rollouts ("per_step_mean", the default) or the mean
discounted sum per rollout ("discounted_sum").
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import Transition
from .features import ACTIVATIONS, FeatureMap
from .rng import substream
from .simgen import GenerativeModelSpec, step_process

__all__ = [
    "LinearQ",
    "NeuralQ",
    "QApproximator",
    "PolicyValue",
    "fit_q_linear",
    "fit_q_nn",
    "greedy_action",
    "greedy_actions",
    "evaluate_policy",
]

_sigmoid = ACTIVATIONS["sigmoid"][0]


@dataclass
class LinearQ:
    """Per-action linear value functions over (1, features)."""

    weights: dict  # action -> (1 + feature_dim,) coefficient vector
    gamma: float
    kind: str = "linear"

    @property
    def actions(self) -> list:
        return sorted(self.weights)

    def action_values(self, feats: np.ndarray) -> np.ndarray:
        x = np.column_stack([np.ones(feats.shape[0]), feats])
        return np.column_stack([x @ self.weights[a] for a in self.actions])

    def to_jsonable(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "weights": {str(a): w.tolist() for a, w in self.weights.items()},
        }

    @staticmethod
    def from_jsonable(data: dict) -> "LinearQ":
        return LinearQ(
            weights={int(a): np.asarray(w) for a, w in data["weights"].items()},
            gamma=data["gamma"],
        )


@dataclass
class NeuralQ:
    """Per-action single-hidden-layer value networks (sigmoid hidden units)."""

    nets: dict  # action -> [(W1, b1), (w2, b2)]
    gamma: float
    kind: str = "neural"

    @property
    def actions(self) -> list:
        return sorted(self.nets)

    def action_values(self, feats: np.ndarray) -> np.ndarray:
        cols = []
        for a in self.actions:
            (w1, b1), (w2, b2) = self.nets[a]
            hidden = _sigmoid(feats @ w1.T + b1)
            cols.append(hidden @ w2 + b2)
        return np.column_stack(cols)

    def to_jsonable(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "nets": {
                str(a): [
                    {"weights": w.tolist(), "bias": np.asarray(b).tolist()}
                    for w, b in layers
                ]
                for a, layers in self.nets.items()
            },
        }

    @staticmethod
    def from_jsonable(data: dict) -> "NeuralQ":
        return NeuralQ(
            nets={
                int(a): [
                    (np.asarray(e["weights"]), np.asarray(e["bias"]))
                    for e in layers
                ]
                for a, layers in data["nets"].items()
            },
            gamma=data["gamma"],
        )


QApproximator = Union[LinearQ, NeuralQ]


def q_approximator_from_jsonable(data: dict) -> QApproximator:
    if data.get("kind") == "linear":
        return LinearQ.from_jsonable(data)
    if data.get("kind") == "neural":
        return NeuralQ.from_jsonable(data)
    raise ValueError(f"unknown Q approximator kind {data.get('kind')!r}")


def greedy_actions(q: QApproximator, feats: np.ndarray) -> np.ndarray:
    """Greedy action per feature row; ties go to the smallest action index."""
    values = q.action_values(np.atleast_2d(feats))
    idx = np.argmax(values, axis=1)  # first maximum = smallest action
    actions = np.asarray(q.actions)
    return actions[idx]


def greedy_action(q: QApproximator, feature: np.ndarray) -> int:
    return int(greedy_actions(q, np.asarray(feature, dtype=np.float64)[None, :])[0])


def _default_schedule(alpha0: float, beta: float) -> Callable[[int], float]:
    return lambda k: alpha0 / (1.0 + k / beta)


def _prepare(transitions: Sequence[Transition], feature_map: FeatureMap,
             n_actions: Optional[int]):
    if not transitions:
        raise ValueError("transitions must be nonempty")
    if feature_map.dim == 0:
        raise ValueError("feature map has empty output; nothing to regress on")
    states = np.stack([tr.state for tr in transitions])
    next_states = np.stack([tr.next_state for tr in transitions])
    feats = feature_map.transform(states)
    feats_next = feature_map.transform(next_states)
    actions = np.array([tr.action for tr in transitions], dtype=np.int64)
    utilities = np.array([tr.utility for tr in transitions])
    k = n_actions if n_actions is not None else int(actions.max())
    return feats, feats_next, actions, utilities, k


def fit_q_linear(
    transitions: Sequence[Transition],
    feature_map: FeatureMap,
    gamma: float = 0.9,
    epochs: int = 20,
    alpha0: float = 0.05,
    beta: float = 10000.0,
    step_schedule: Optional[Callable[[int], float]] = None,
    seed: int = 0,
    n_actions: Optional[int] = None,
) -> LinearQ:
    """Linear semi-gradient Q-learning from batch transitions.

    Runs ``epochs`` shuffled passes; the step size for the k-th update is
    ``step_schedule(k)`` (default ``alpha0 / (1 + k / beta)``).  Weights
    start at zero.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    feats, feats_next, actions, utilities, n_act = _prepare(
        transitions, feature_map, n_actions
    )
    schedule = step_schedule or _default_schedule(alpha0, beta)
    x = np.column_stack([np.ones(len(feats)), feats])
    x_next = np.column_stack([np.ones(len(feats)), feats_next])
    weights = {a: np.zeros(x.shape[1]) for a in range(1, n_act + 1)}
    acts = sorted(weights)
    rng = substream(seed)
    k = 0
    for _ in range(epochs):
        for i in rng.permutation(len(x)):
            a = int(actions[i])
            best_next = max(weights[b] @ x_next[i] for b in acts)
            delta = utilities[i] + gamma * best_next - weights[a] @ x[i]
            weights[a] = weights[a] + schedule(k) * delta * x[i]
            k += 1
    return LinearQ(weights=weights, gamma=gamma)


def fit_q_nn(
    transitions: Sequence[Transition],
    feature_map: FeatureMap,
    gamma: float = 0.9,
    hidden_width: int = 10,
    epochs: int = 20,
    alpha0: float = 0.01,
    beta: float = 10000.0,
    step_schedule: Optional[Callable[[int], float]] = None,
    seed: int = 0,
    n_actions: Optional[int] = None,
) -> NeuralQ:
    """Neural semi-gradient Q-learning from batch transitions.

    One network per action: sigmoid hidden layer of ``hidden_width`` units,
    linear output.  The bootstrap target is held fixed within each update.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    if hidden_width < 1:
        raise ValueError(f"hidden_width must be >= 1, got {hidden_width}")
    feats, feats_next, actions, utilities, n_act = _prepare(
        transitions, feature_map, n_actions
    )
    schedule = step_schedule or _default_schedule(alpha0, beta)
    f_dim = feats.shape[1]
    rng = substream(seed)
    nets = {}
    for a in range(1, n_act + 1):
        lim1 = np.sqrt(6.0 / (f_dim + hidden_width))
        w1 = rng.uniform(-lim1, lim1, size=(hidden_width, f_dim))
        lim2 = np.sqrt(6.0 / (hidden_width + 1))
        w2 = rng.uniform(-lim2, lim2, size=hidden_width)
        nets[a] = [(w1, np.zeros(hidden_width)), (w2, 0.0)]
    acts = sorted(nets)

    def value(a, phi):
        (w1, b1), (w2, b2) = nets[a]
        hidden = _sigmoid(w1 @ phi + b1)
        return hidden @ w2 + b2, hidden

    k = 0
    for _ in range(epochs):
        for i in rng.permutation(len(feats)):
            a = int(actions[i])
            best_next = max(value(b, feats_next[i])[0] for b in acts)
            v, hidden = value(a, feats[i])
            delta = utilities[i] + gamma * best_next - v
            alpha = schedule(k)
            (w1, b1), (w2, b2) = nets[a]
            dz = w2 * hidden * (1.0 - hidden)
            nets[a] = [
                (w1 + alpha * delta * np.outer(dz, feats[i]), b1 + alpha * delta * dz),
                (w2 + alpha * delta * hidden, b2 + alpha * delta),
            ]
            k += 1
    return NeuralQ(nets=nets, gamma=gamma)


@dataclass(frozen=True)
class PolicyValue:
    """Monte Carlo estimate of a policy's outcome in a generative model."""

    mean_outcome: float
    std_error: float
    n_rollouts: int
    horizon: int
    definition: str  # "per_step_mean" or "discounted_sum"
    seed: int

    def to_jsonable(self) -> dict:
        return {
            "mean_outcome": self.mean_outcome,
            "std_error": self.std_error,
            "n_rollouts": self.n_rollouts,
            "horizon": self.horizon,
            "definition": self.definition,
            "seed": self.seed,
        }


def evaluate_policy(
    spec: GenerativeModelSpec,
    feature_map: FeatureMap,
    q: QApproximator,
    n_rollouts: int = 300,
    horizon: int = 90,
    seed: int = 0,
    definition: str = "per_step_mean",
) -> PolicyValue:
    """Simulate fresh trajectories under the greedy policy and average utility.

    ``per_step_mean`` averages utilities over every step of every rollout;
    ``discounted_sum`` averages the per-rollout discounted cumulative
    utility at the approximator's discount.  The standard error is across
    rollouts.  Deterministic given the seed.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1 (no steps to average), got {horizon}")
    if n_rollouts < 1:
        raise ValueError(f"n_rollouts must be >= 1, got {n_rollouts}")
    if definition not in ("per_step_mean", "discounted_sum"):
        raise ValueError(f"unknown definition {definition!r}")
    rng = substream(seed)
    states = 0.5 * rng.standard_normal((n_rollouts, spec.state_dim))
    utilities = np.empty((n_rollouts, horizon))
    for t in range(horizon):
        feats = feature_map.transform(states)
        chosen = greedy_actions(q, feats)
        states, utilities[:, t] = step_process(
            spec, states, chosen.astype(np.float64) - 1.0, rng
        )
    if definition == "per_step_mean":
        per_rollout = utilities.mean(axis=1)
    else:
        discounts = q.gamma ** np.arange(horizon)
        per_rollout = utilities @ discounts
    mean = float(per_rollout.mean())
    se = float(per_rollout.std(ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return PolicyValue(
        mean_outcome=mean,
        std_error=se,
        n_rollouts=n_rollouts,
        horizon=horizon,
        definition=definition,
        seed=seed,
    )
