"""Iterative variable screening.

Starting from the empty set, each round tests every unselected state
coordinate for dependence on the utility together with the next-step values
of the already-selected coordinates, within action levels, pooled over time.
A coordinate joins the selected set when its pooled p-value falls at or
below the threshold; the procedure stops at the first round that adds
nothing (or after ``n_max`` rounds).

Per-coordinate tests inside a round draw from streams keyed
``(seed, round, coordinate)``, so the outcome is independent of the scan
order and rounds can fan the per-coordinate tests out across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import TrajectoryDataset
from .dcov import default_pool_order, stratified_pooled_test

__all__ = ["ScreenRound", "ScreenResult", "screen"]


@dataclass(frozen=True)
class ScreenRound:
    round_index: int
    tested: list
    p_values: dict  # coordinate -> pooled p-value
    added: list


@dataclass(frozen=True)
class ScreenResult:
    """Selected coordinate set (0-based) with the full round trace."""

    selected: list
    rounds: list
    tau: float
    converged: bool

    def to_jsonable(self) -> dict:
        return {
            "selected": self.selected,
            "tau": self.tau,
            "converged": self.converged,
            "rounds": [
                {
                    "round": r.round_index,
                    "tested": r.tested,
                    "p_values": {str(j): p for j, p in r.p_values.items()},
                    "added": r.added,
                }
                for r in self.rounds
            ],
        }


def screen(
    ds: TrajectoryDataset,
    tau: float = 0.1,
    n_max: Optional[int] = None,
    n_permutations: int = 999,
    seed: int = 0,
    min_stratum: int = 5,
    pool_order: Optional[int] = None,
    scan_order: Optional[Sequence[int]] = None,
) -> ScreenResult:
    """Screen state coordinates relevant to the utility process.

    ``n_max`` caps the number of rounds (default: one per coordinate, which
    can never bind).  ``scan_order`` fixes the within-round iteration order
    over coordinates; it exists to demonstrate order-independence and has no
    effect on the selected set.
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    p = ds.state_dim
    if n_max is None:
        n_max = p
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    order = list(scan_order) if scan_order is not None else list(range(p))
    if sorted(order) != list(range(p)):
        raise ValueError("scan_order must be a permutation of 0..p-1")

    selected: list[int] = []
    rounds: list[ScreenRound] = []
    converged = False
    for k in range(1, n_max + 1):
        tested = [j for j in order if j not in selected]
        pvals: dict[int, float] = {}
        added: list[int] = []
        for j in tested:
            report = stratified_pooled_test(
                extract_g=lambda d, t, j=j: d.states[:, t - 1, j],
                extract_h=_selected_response_extractor(selected),
                ds=ds,
                tau=tau,
                n_permutations=n_permutations,
                seed=seed,
                min_stratum=min_stratum,
                pool_order=pool_order,
                key=(k, j),
            )
            pvals[j] = report.p_value
            if report.p_value <= tau:
                added.append(j)
        rounds.append(
            ScreenRound(round_index=k, tested=tested, p_values=pvals, added=sorted(added))
        )
        if not added:
            converged = True
            break
        selected = sorted(selected + added)
    return ScreenResult(
        selected=sorted(selected), rounds=rounds, tau=tau, converged=converged
    )


def _selected_response_extractor(selected: Sequence[int]):
    """Extractor for the response block: utility now, selected coords next step."""
    cols = list(selected)

    def extract(ds: TrajectoryDataset, t: int) -> np.ndarray:
        u = ds.utilities[:, t - 1][:, None]
        if not cols:
            return u
        return np.hstack([u, ds.states[:, t, cols]])

    return extract
