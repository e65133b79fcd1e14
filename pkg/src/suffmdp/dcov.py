"""Independence testing: distance covariance, permutation and likelihood-ratio
tests, within-action stratification, and order-statistic p-value pooling.

The main statistic is the empirical squared distance covariance

    V2(X, Y) = (1/m^2) * sum_{j,k} A_jk * B_jk,

where ``A`` and ``B`` are the double-centered Euclidean pairwise-distance
matrices of the two samples.  V2 is nonnegative, zero iff the population
version is independent, and the permutation null gives a finite-sample valid
p-value.

Trajectory data are dependent over time within a subject, so a joint test
runs one independence test per time point within each action level, combines
action levels at a time point by Bonferroni, and pools the per-time p-values
through the order-statistic rule

    pooled = min(1, T * p_(u) / u),

with ``p_(u)`` the u-th smallest of the T p-values.  The pooled value is a
valid p-value for any fixed ``u``; ``u = 1`` is the Bonferroni correction,
and the default is ``u = floor(T/20) + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import chi2

from .core import TrajectoryDataset
from .rng import substream

__all__ = [
    "InsufficientDataError",
    "StratumResult",
    "TestReport",
    "dcov_statistic",
    "dcov_permutation_pvalue",
    "lrt_independence_pvalue",
    "pooled_pvalue",
    "default_pool_order",
    "stratified_pooled_test",
]

# Permutation batches are chunked so the (B, m, m) workspace stays small.
_PERM_CHUNK_FLOATS = 4_000_000


class InsufficientDataError(ValueError):
    """Raised when no stratum is large enough to test."""


@dataclass(frozen=True)
class StratumResult:
    """Outcome of one (time, action) stratum test."""

    t: int
    action: int
    sample_size: int
    statistic: float
    p_value: float


@dataclass(frozen=True)
class TestReport:
    """Result of an independence test.

    ``statistic`` is a scalar for a single test and a per-stratum list for
    stratified tests.  ``pooled_u`` records the order-statistic index used
    for pooling (1 for unpooled tests).
    """

    statistic: Union[float, list]
    p_value: float
    strata: list = field(default_factory=list)
    pooled_u: int = 1
    n_permutations: int = 0
    seed: Optional[int] = None
    reject: Optional[bool] = None
    flags: tuple = ()

    def to_jsonable(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "strata": [
                {
                    "t": s.t,
                    "action": s.action,
                    "sample_size": s.sample_size,
                    "statistic": s.statistic,
                    "p_value": s.p_value,
                }
                for s in self.strata
            ],
            "u": self.pooled_u,
            "B": self.n_permutations,
            "seed": self.seed,
            "reject": self.reject,
            "flags": list(self.flags),
        }


def _as_sample(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"{name} must be a vector or matrix, got ndim={x.ndim}")
    if x.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 rows, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def _double_center(d: np.ndarray) -> np.ndarray:
    row = d.mean(axis=1, keepdims=True)
    col = d.mean(axis=0, keepdims=True)
    return d - row - col + d.mean()


def _centered_distances(x: np.ndarray) -> np.ndarray:
    return _double_center(cdist(x, x))


def dcov_statistic(x, y) -> float:
    """Empirical squared distance covariance of two paired samples."""
    x = _as_sample(x, "x")
    y = _as_sample(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"x and y must be paired: {x.shape[0]} vs {y.shape[0]} rows"
        )
    a = _centered_distances(x)
    b = _centered_distances(y)
    # Mathematically nonnegative; clamp roundoff noise.
    return max(0.0, float(np.mean(a * b)))


def _permutation_stats(
    a: np.ndarray, b: np.ndarray, n_permutations: int, rng: np.random.Generator
) -> np.ndarray:
    """Statistics for uniform row permutations of the second sample.

    Permuting rows of Y permutes rows and columns of its centered distance
    matrix, so each permuted statistic is mean(A * B[perm][:, perm]).
    """
    m = a.shape[0]
    out = np.empty(n_permutations)
    chunk = max(1, _PERM_CHUNK_FLOATS // (m * m))
    done = 0
    while done < n_permutations:
        size = min(chunk, n_permutations - done)
        perms = np.argsort(rng.random((size, m)), axis=1)
        permuted = b[perms[:, :, None], perms[:, None, :]]
        out[done : done + size] = np.einsum("ij,bij->b", a, permuted) / (m * m)
        done += size
    return out


def dcov_permutation_pvalue(
    x,
    y,
    n_permutations: int = 199,
    rng: Union[int, np.random.Generator] = 0,
) -> TestReport:
    """Permutation test of independence based on :func:`dcov_statistic`.

    The p-value is ``(1 + #{permuted >= observed}) / (n_permutations + 1)``,
    which is strictly positive and valid in finite samples.
    """
    if n_permutations < 1:
        raise ValueError(f"n_permutations must be >= 1, got {n_permutations}")
    x = _as_sample(x, "x")
    y = _as_sample(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"x and y must be paired: {x.shape[0]} vs {y.shape[0]} rows"
        )
    seed = rng if isinstance(rng, int) else None
    gen = substream(rng) if isinstance(rng, int) else rng
    a = _centered_distances(x)
    b = _centered_distances(y)
    m = x.shape[0]
    observed = max(0.0, float(np.mean(a * b)))
    stats = _permutation_stats(a, b, n_permutations, gen)
    exceed = int(np.sum(stats >= observed))
    return TestReport(
        statistic=observed,
        p_value=(1 + exceed) / (n_permutations + 1),
        n_permutations=n_permutations,
        seed=seed,
    )


def lrt_independence_pvalue(x, y) -> TestReport:
    """Likelihood-ratio (G) test of independence for discrete samples.

    Rows of multi-column inputs are treated as single levels.  Levels never
    observed contribute no cells.  A margin with a single level admits no
    test; the report then carries ``p = 1`` and a ``degenerate-margin`` flag.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"x and y must be paired: {x.shape[0]} vs {y.shape[0]} rows"
        )
    if x.shape[0] < 1:
        raise ValueError("need at least one observation")
    _, xi = np.unique(x, axis=0, return_inverse=True)
    _, yi = np.unique(y, axis=0, return_inverse=True)
    n_x = int(xi.max()) + 1
    n_y = int(yi.max()) + 1
    table = np.zeros((n_x, n_y))
    np.add.at(table, (xi, yi), 1.0)
    if n_x < 2 or n_y < 2:
        return TestReport(statistic=0.0, p_value=1.0, flags=("degenerate-margin",))
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    observed = table[table > 0]
    g_stat = 2.0 * float(np.sum(observed * np.log(observed / expected[table > 0])))
    dof = (n_x - 1) * (n_y - 1)
    return TestReport(statistic=max(0.0, g_stat), p_value=float(chi2.sf(g_stat, dof)))


def pooled_pvalue(pvals: Sequence[float], u: int) -> float:
    """Pool p-values via the u-th order statistic: ``min(1, T * p_(u) / u)``.

    Valid under arbitrary dependence among the inputs; ``u = 1`` is the
    Bonferroni correction.
    """
    ps = np.asarray(list(pvals), dtype=np.float64)
    if ps.size == 0:
        raise ValueError("cannot pool an empty list of p-values")
    if np.any((ps < 0) | (ps > 1)) or not np.all(np.isfinite(ps)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 1 <= u <= ps.size:
        raise ValueError(f"u must be in 1..{ps.size}, got {u}")
    order_stat = np.sort(ps)[u - 1]
    return min(1.0, ps.size * order_stat / u)


def default_pool_order(n_tests: int) -> int:
    """Default order-statistic index ``floor(T/20) + 1``, capped at T."""
    return min(n_tests // 20 + 1, n_tests)


Extractor = Callable[[TrajectoryDataset, int], np.ndarray]


def stratified_pooled_test(
    extract_g: Extractor,
    extract_h: Extractor,
    ds: TrajectoryDataset,
    tau: float = 0.1,
    n_permutations: int = 999,
    seed: int = 0,
    min_stratum: int = 5,
    pool_order: Optional[int] = None,
    actions: Optional[Sequence[int]] = None,
    key: tuple = (),
) -> TestReport:
    """Test ``G^t independent of H^t`` within action levels, pooled over time.

    ``extract_g(ds, t)`` and ``extract_h(ds, t)`` return paired per-subject
    feature rows for time ``t`` (1-based).  For each ``t`` and each tested
    action level with at least ``min_stratum`` subjects, a permutation
    distance-covariance test runs on that stratum; action levels at the same
    time point are combined by Bonferroni over the number of tested strata,
    and the per-time p-values are pooled by :func:`pooled_pvalue`.

    Strata draw permutations from streams keyed ``(seed, *key, t, action)``,
    so results do not depend on evaluation order.  ``actions`` restricts
    testing to a subset of action levels (default: all).
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    tested_actions = sorted(actions) if actions is not None else list(
        range(1, ds.n_actions + 1)
    )
    strata: list[StratumResult] = []
    per_time: list[float] = []
    for t in range(1, ds.horizon + 1):
        g = np.asarray(extract_g(ds, t), dtype=np.float64)
        h = np.asarray(extract_h(ds, t), dtype=np.float64)
        if g.ndim == 1:
            g = g[:, None]
        if h.ndim == 1:
            h = h[:, None]
        at = ds.actions[:, t - 1]
        time_ps = []
        for a in tested_actions:
            rows = at == a
            m = int(rows.sum())
            if m < min_stratum:
                continue
            report = dcov_permutation_pvalue(
                g[rows],
                h[rows],
                n_permutations=n_permutations,
                rng=substream(seed, *key, t, a),
            )
            strata.append(
                StratumResult(
                    t=t,
                    action=a,
                    sample_size=m,
                    statistic=report.statistic,
                    p_value=report.p_value,
                )
            )
            time_ps.append(report.p_value)
        if time_ps:
            per_time.append(min(1.0, len(time_ps) * min(time_ps)))
    if not per_time:
        raise InsufficientDataError(
            f"insufficient per-stratum data: no (t, action) stratum has "
            f">= {min_stratum} subjects"
        )
    u = pool_order if pool_order is not None else default_pool_order(len(per_time))
    u = min(u, len(per_time))
    pooled = pooled_pvalue(per_time, u)
    return TestReport(
        statistic=[s.statistic for s in strata],
        p_value=pooled,
        strata=strata,
        pooled_u=u,
        n_permutations=n_permutations,
        seed=seed,
        reject=pooled <= tau,
    )
