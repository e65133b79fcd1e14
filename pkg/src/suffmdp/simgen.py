"""Synthetic decision-process generators used by the experiment harness.

The generative family has a 64-dimensional signal block, two action levels,
and an index nonlinearity ``g`` (identity, ``min(u^2, 3)``, or
``min(exp(u), 3)``; the truncation keeps coordinates on a common scale over
time).  Writing ``A`` for the action coded 0/1 and blocks ``i = 1..16``:

    S^1            ~ Normal(0, 0.25 I)
    S^{t+1}_{4i-3}, S^{t+1}_{4i-2} ~ Normal((1-A) g(S_i^t), 0.01(1-A) + 0.25 A)
    S^{t+1}_{4i-1}, S^{t+1}_{4i}   ~ Normal(A g(S_i^t),     0.01 A + 0.25(1-A))
    U^t ~ Normal((1-A)[2{g(S_1)+g(S_2)} - {g(S_3)+g(S_4)}]
                 + A[2{g(S_3)+g(S_4)} - {g(S_1)+g(S_2)}], 0.01)

so the first 16 coordinates drive the next state and the first 4 drive the
utility.  Optional noise coordinates come in three flavors, roughly a third
each of the requested total ``m``: "dependent" coordinates that evolve by
the same block law among themselves but never touch the utility
(``floor(m/3)`` of them), white noise redrawn ``Normal(0, 0.25)`` every
step, and per-subject constants drawn once at t=1 (``ceil(m/3)`` each).

Actions are stored as 1/2; the formulas above use the 0/1 coding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import TrajectoryDataset
from .features import CoordinateFeatureMap, FeatureMap, TruncatedGFeatureMap
from .rng import substream

__all__ = [
    "GenerativeModelSpec",
    "g_function",
    "sample_trajectories",
    "step_process",
    "transition_mean",
    "oracle_feature_map",
]

SIGNAL_DIM = 64

_G_KINDS = ("linear", "quad", "exp")


def g_function(kind: str):
    """The transition nonlinearity; ``identity`` is accepted for ``linear``."""
    if kind in ("linear", "identity"):
        return lambda u: np.asarray(u, dtype=np.float64)
    if kind == "quad":
        return lambda u: np.minimum(np.square(u), 3.0)
    if kind == "exp":
        return lambda u: np.minimum(np.exp(u), 3.0)
    raise ValueError(f"unknown g kind {kind!r}; expected one of {_G_KINDS}")


@dataclass(frozen=True)
class GenerativeModelSpec:
    """Parameters of one generative model instance.

    ``n_noise`` is the total noise-coordinate count ``m``; the split into
    dependent / white / constant is ``floor(m/3)`` / ``ceil(m/3)`` /
    ``ceil(m/3)``.  ``seed`` is the default sampling stream.
    """

    g_kind: str = "linear"
    n_noise: int = 0
    seed: int = 0
    signal_dim: int = SIGNAL_DIM

    def __post_init__(self):
        g_function(self.g_kind)  # validates
        if self.n_noise < 0:
            raise ValueError(f"n_noise must be >= 0, got {self.n_noise}")
        if self.signal_dim < 4 or self.signal_dim % 4 != 0:
            raise ValueError(
                f"signal_dim must be a positive multiple of 4, got {self.signal_dim}"
            )

    @property
    def n_dependent(self) -> int:
        return self.n_noise // 3

    @property
    def n_white(self) -> int:
        return math.ceil(self.n_noise / 3)

    @property
    def n_constant(self) -> int:
        return math.ceil(self.n_noise / 3)

    @property
    def state_dim(self) -> int:
        return self.signal_dim + self.n_dependent + self.n_white + self.n_constant

    @property
    def n_actions(self) -> int:
        return 2

    # Column layout: [signal | dependent | white | constant], 0-based.
    @property
    def signal_indices(self) -> range:
        return range(self.signal_dim)

    @property
    def dependent_indices(self) -> range:
        return range(self.signal_dim, self.signal_dim + self.n_dependent)

    @property
    def white_indices(self) -> range:
        start = self.signal_dim + self.n_dependent
        return range(start, start + self.n_white)

    @property
    def constant_indices(self) -> range:
        start = self.signal_dim + self.n_dependent + self.n_white
        return range(start, start + self.n_constant)

    def to_jsonable(self) -> dict:
        return {
            "model": self.g_kind,
            "n_noise": self.n_noise,
            "seed": self.seed,
            "signal_dim": self.signal_dim,
        }

    @staticmethod
    def from_jsonable(data: dict) -> "GenerativeModelSpec":
        return GenerativeModelSpec(
            g_kind=data["model"],
            n_noise=int(data.get("n_noise", 0)),
            seed=int(data.get("seed", 0)),
            signal_dim=int(data.get("signal_dim", SIGNAL_DIM)),
        )


def _block_moments(drivers: np.ndarray, a01: np.ndarray, n_cols: int):
    """Means and standard deviations for one self-transitioning block.

    ``drivers`` is the (rollouts, ceil(n_cols/4)) matrix of ``g`` values;
    each driver fills up to four consecutive output columns: two with mean
    ``(1-A) * driver`` and variance ``0.01(1-A) + 0.25 A``, then two with
    mean ``A * driver`` and the complementary variance.
    """
    r = drivers.shape[0]
    n_blocks = drivers.shape[1]
    a = a01[:, None]
    mean = np.empty((r, 4 * n_blocks))
    sd = np.empty((r, 4 * n_blocks))
    low_mean = (1.0 - a) * drivers
    high_mean = a * drivers
    low_sd = np.sqrt(0.01 * (1.0 - a) + 0.25 * a)
    high_sd = np.sqrt(0.01 * a + 0.25 * (1.0 - a))
    for offset in (0, 1):
        mean[:, offset::4] = low_mean
        sd[:, offset::4] = np.broadcast_to(low_sd, low_mean.shape)
    for offset in (2, 3):
        mean[:, offset::4] = high_mean
        sd[:, offset::4] = np.broadcast_to(high_sd, high_mean.shape)
    return mean[:, :n_cols], sd[:, :n_cols]


def transition_mean(spec: GenerativeModelSpec, states: np.ndarray, a01: np.ndarray):
    """Conditional means of the next state and the utility.

    Returns ``(next_state_mean, utility_mean)`` for each row of ``states``
    given 0/1-coded actions ``a01``; white-noise columns have mean zero and
    constant columns carry over unchanged.
    """
    states = np.asarray(states, dtype=np.float64)
    a01 = np.asarray(a01, dtype=np.float64)
    g = g_function(spec.g_kind)
    n_drivers = spec.signal_dim // 4
    g_sig = g(states[:, :n_drivers])
    mean = np.zeros_like(states)
    mean[:, : spec.signal_dim], _ = _block_moments(g_sig, a01, spec.signal_dim)
    if spec.n_dependent > 0:
        dep = states[:, list(spec.dependent_indices)]
        g_dep = g(dep[:, : math.ceil(spec.n_dependent / 4)])
        mean[:, list(spec.dependent_indices)], _ = _block_moments(
            g_dep, a01, spec.n_dependent
        )
    cols = list(spec.constant_indices)
    mean[:, cols] = states[:, cols]
    g4 = g(states[:, :4])
    x = g4[:, 0] + g4[:, 1]
    y = g4[:, 2] + g4[:, 3]
    utility_mean = (1.0 - a01) * (2.0 * x - y) + a01 * (2.0 * y - x)
    return mean, utility_mean


def step_process(
    spec: GenerativeModelSpec,
    states: np.ndarray,
    a01: np.ndarray,
    rng: np.random.Generator,
):
    """Draw ``(next_states, utilities)`` for a batch of current states."""
    states = np.asarray(states, dtype=np.float64)
    a01 = np.asarray(a01, dtype=np.float64)
    g = g_function(spec.g_kind)
    r = states.shape[0]
    nxt = np.empty_like(states)

    n_drivers = spec.signal_dim // 4
    mean, sd = _block_moments(g(states[:, :n_drivers]), a01, spec.signal_dim)
    nxt[:, : spec.signal_dim] = mean + sd * rng.standard_normal((r, spec.signal_dim))

    if spec.n_dependent > 0:
        dep = states[:, list(spec.dependent_indices)]
        mean, sd = _block_moments(
            g(dep[:, : math.ceil(spec.n_dependent / 4)]), a01, spec.n_dependent
        )
        nxt[:, list(spec.dependent_indices)] = mean + sd * rng.standard_normal(
            (r, spec.n_dependent)
        )
    if spec.n_white > 0:
        nxt[:, list(spec.white_indices)] = 0.5 * rng.standard_normal((r, spec.n_white))
    cols = list(spec.constant_indices)
    nxt[:, cols] = states[:, cols]

    _, u_mean = transition_mean(spec, states, a01)
    utilities = u_mean + 0.1 * rng.standard_normal(r)
    return nxt, utilities


def sample_trajectories(
    spec: GenerativeModelSpec,
    n: int,
    horizon: int,
    rng: Union[int, np.random.Generator, None] = None,
) -> TrajectoryDataset:
    """Sample ``n`` i.i.d. trajectories of length ``horizon``.

    Actions are i.i.d. Bernoulli(0.5) over the two levels, stored as 1/2.
    """
    if n < 1 or horizon < 1:
        raise ValueError("need n >= 1 and horizon >= 1")
    if rng is None:
        rng = substream(spec.seed)
    elif isinstance(rng, int):
        rng = substream(rng)
    p = spec.state_dim
    states = np.empty((n, horizon + 1, p))
    actions = np.empty((n, horizon), dtype=np.int64)
    utilities = np.empty((n, horizon))
    states[:, 0] = 0.5 * rng.standard_normal((n, p))
    for t in range(horizon):
        a01 = (rng.random(n) < 0.5).astype(np.float64)
        states[:, t + 1], utilities[:, t] = step_process(spec, states[:, t], a01, rng)
        actions[:, t] = a01.astype(np.int64) + 1
    return TrajectoryDataset(
        states=states,
        actions=actions,
        utilities=utilities,
        n_actions=2,
        utility_bound=1e6,
    )


def oracle_feature_map(spec: GenerativeModelSpec, variant: str) -> FeatureMap:
    """Known-sufficient reference maps for a generative model.

    ``first4`` and ``first16`` select leading coordinates;  ``nonlinear3``
    is the three-dimensional map ``(g(s1), g(s2), g(s3) + g(s4))``.
    """
    if variant == "first4":
        return CoordinateFeatureMap(spec.state_dim, range(4))
    if variant == "first16":
        return CoordinateFeatureMap(spec.state_dim, range(16))
    if variant == "nonlinear3":
        return TruncatedGFeatureMap(spec.g_kind, spec.state_dim)
    raise ValueError(f"unknown oracle variant {variant!r}")
