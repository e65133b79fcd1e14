"""Feature maps: functions from the raw state space R^p to a reduced R^q.

All maps operate on row-stacked state matrices and serialize to JSON with a
``kind`` tag so fitted maps can be stored and reloaded independently of the
models that produced them.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "ACTIVATIONS",
    "FeatureMap",
    "IdentityFeatureMap",
    "CoordinateFeatureMap",
    "LinearFeatureMap",
    "NetworkFeatureMap",
    "TruncatedGFeatureMap",
    "ConcatFeatureMap",
    "feature_map_from_jsonable",
]


def _sigmoid(z):
    return expit(z)


def _sigmoid_deriv(z, activated):
    return activated * (1.0 - activated)


def _arctan(z):
    # Monotone map onto (0, 1).
    return np.arctan(z) / np.pi + 0.5


def _arctan_deriv(z, activated):
    return 1.0 / (np.pi * (1.0 + z * z))


# name -> (function, derivative given (pre-activation, activated output))
ACTIVATIONS = {
    "sigmoid": (_sigmoid, _sigmoid_deriv),
    "arctan": (_arctan, _arctan_deriv),
}


class FeatureMap(ABC):
    """Map from raw states to feature vectors."""

    @property
    @abstractmethod
    def dim(self) -> int:
        """Output dimension."""

    @abstractmethod
    def transform(self, states: np.ndarray) -> np.ndarray:
        """Apply the map to an (m, p) state matrix, returning (m, dim)."""

    @abstractmethod
    def to_jsonable(self) -> dict:
        ...

    def transform_one(self, state: np.ndarray) -> np.ndarray:
        return self.transform(np.asarray(state, dtype=np.float64)[None, :])[0]


class IdentityFeatureMap(FeatureMap):
    def __init__(self, input_dim: int):
        self.input_dim = int(input_dim)

    @property
    def dim(self) -> int:
        return self.input_dim

    def transform(self, states):
        return np.asarray(states, dtype=np.float64)

    def to_jsonable(self):
        return {"kind": "identity", "input_dim": self.input_dim}


class CoordinateFeatureMap(FeatureMap):
    """Selection of a subset of raw coordinates (0-based indices)."""

    def __init__(self, input_dim: int, indices: Sequence[int]):
        self.input_dim = int(input_dim)
        self.indices = [int(j) for j in indices]
        if any(not 0 <= j < input_dim for j in self.indices):
            raise ValueError(f"indices {self.indices} outside 0..{input_dim - 1}")

    @property
    def dim(self) -> int:
        return len(self.indices)

    def transform(self, states):
        return np.asarray(states, dtype=np.float64)[:, self.indices]

    def to_jsonable(self):
        return {
            "kind": "coordinates",
            "input_dim": self.input_dim,
            "indices": self.indices,
        }


class LinearFeatureMap(FeatureMap):
    """Affine map ``s -> W s + offset``."""

    def __init__(self, weights: np.ndarray, offset: Optional[np.ndarray] = None):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a (dim, input_dim) matrix")
        self.offset = (
            np.zeros(self.weights.shape[0])
            if offset is None
            else np.asarray(offset, dtype=np.float64)
        )

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def transform(self, states):
        return np.asarray(states, dtype=np.float64) @ self.weights.T + self.offset

    def to_jsonable(self):
        return {
            "kind": "linear",
            "weights": self.weights.tolist(),
            "offset": self.offset.tolist(),
        }


class NetworkFeatureMap(FeatureMap):
    """Composed affine+activation layers, optionally over a column subset.

    ``layers`` is a list of ``(W, b)`` pairs with ``W`` of shape
    ``(out, in)``; the activation applies after every layer.  When
    ``input_indices`` is set, the map first selects those raw columns, so a
    map fitted on a reduced variable set still accepts full state vectors.
    """

    def __init__(
        self,
        layers: Sequence[tuple],
        activation: str = "sigmoid",
        input_indices: Optional[Sequence[int]] = None,
        input_dim: Optional[int] = None,
    ):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.layers = [
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in layers
        ]
        if not self.layers:
            raise ValueError("need at least one layer")
        self.activation = activation
        self.input_indices = (
            None if input_indices is None else [int(j) for j in input_indices]
        )
        net_in = self.layers[0][0].shape[1]
        if self.input_indices is not None and len(self.input_indices) != net_in:
            raise ValueError(
                f"first layer expects {net_in} inputs but "
                f"{len(self.input_indices)} columns are selected"
            )
        self.input_dim = int(input_dim) if input_dim is not None else net_in

    @property
    def dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def transform(self, states):
        x = np.asarray(states, dtype=np.float64)
        if self.input_indices is not None:
            x = x[:, self.input_indices]
        act = ACTIVATIONS[self.activation][0]
        for w, b in self.layers:
            x = act(x @ w.T + b)
        return x

    def to_jsonable(self):
        return {
            "kind": "network",
            "activation": self.activation,
            "input_dim": self.input_dim,
            "input_indices": self.input_indices,
            "layers": [
                {"weights": w.tolist(), "bias": b.tolist()} for w, b in self.layers
            ],
        }


class TruncatedGFeatureMap(FeatureMap):
    """Three-dimensional map ``(g(s1), g(s2), g(s3) + g(s4))``.

    ``g`` is the transition nonlinearity of a generative model (identity,
    truncated quadratic, or truncated exponential); see :mod:`suffmdp.simgen`.
    """

    def __init__(self, g_kind: str, input_dim: int):
        from .simgen import g_function  # local import to avoid a cycle

        if input_dim < 4:
            raise ValueError("needs at least 4 state coordinates")
        self.g_kind = g_kind
        self.input_dim = int(input_dim)
        self._g = g_function(g_kind)

    @property
    def dim(self) -> int:
        return 3

    def transform(self, states):
        s = np.asarray(states, dtype=np.float64)
        g = self._g(s[:, :4])
        return np.column_stack([g[:, 0], g[:, 1], g[:, 2] + g[:, 3]])

    def to_jsonable(self):
        return {"kind": "oracle3", "g_kind": self.g_kind, "input_dim": self.input_dim}


class ConcatFeatureMap(FeatureMap):
    """Concatenation of several maps applied to the same state."""

    def __init__(self, parts: Sequence[FeatureMap]):
        if not parts:
            raise ValueError("need at least one part")
        self.parts = list(parts)

    @property
    def dim(self) -> int:
        return sum(part.dim for part in self.parts)

    def transform(self, states):
        return np.hstack([part.transform(states) for part in self.parts])

    def to_jsonable(self):
        return {"kind": "concat", "parts": [p.to_jsonable() for p in self.parts]}


def feature_map_from_jsonable(data: dict) -> FeatureMap:
    kind = data.get("kind")
    if kind == "identity":
        return IdentityFeatureMap(data["input_dim"])
    if kind == "coordinates":
        return CoordinateFeatureMap(data["input_dim"], data["indices"])
    if kind == "linear":
        return LinearFeatureMap(np.asarray(data["weights"]), np.asarray(data["offset"]))
    if kind == "network":
        return NetworkFeatureMap(
            layers=[
                (np.asarray(e["weights"]), np.asarray(e["bias"]))
                for e in data["layers"]
            ],
            activation=data["activation"],
            input_indices=data.get("input_indices"),
            input_dim=data.get("input_dim"),
        )
    if kind == "oracle3":
        return TruncatedGFeatureMap(data["g_kind"], data["input_dim"])
    if kind == "concat":
        return ConcatFeatureMap([feature_map_from_jsonable(p) for p in data["parts"]])
    raise ValueError(f"unknown feature map kind {kind!r}")
