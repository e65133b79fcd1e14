"""Trajectory data model: batch trajectories, transition views, CSV I/O.

A dataset holds ``n`` independent subject trajectories observed over a
common horizon ``T``: states ``S^1..S^{T+1}`` in ``R^p``, actions
``A^1..A^T`` in ``{1..K}`` and utilities ``U^1..U^T``.  The utility stored
at time ``t`` is the one realized by taking ``A^t`` in ``S^t`` and landing
in ``S^{t+1}``, so the terminal row of a trajectory carries no action or
utility.

Datasets are immutable after construction (backing arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "DataValidationError",
    "TrajectoryDataset",
    "Transition",
    "CsvSchema",
    "load_dataset_csv",
    "save_dataset_csv",
    "flatten_transitions",
    "regroup_transitions",
]

# Decimal text with 17 significant digits round-trips IEEE-754 doubles.
FLOAT_FORMAT = "%.17g"


class DataValidationError(ValueError):
    """Raised when input data violates the trajectory-data contract."""


def format_float(x: float) -> str:
    return FLOAT_FORMAT % float(x)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TrajectoryDataset:
    """Batch of ``n`` trajectories over a shared horizon.

    Attributes
    ----------
    states : (n, T+1, p) float array
        ``states[i, t-1]`` is subject ``i``'s state at time ``t`` (1-based
        time; 0-based array index).
    actions : (n, T) int array with values in ``{1..n_actions}``
    utilities : (n, T) float array
    n_actions : number of action levels ``K``
    utility_bound : validation cap on ``|U|``
    """

    states: np.ndarray
    actions: np.ndarray
    utilities: np.ndarray
    n_actions: int
    utility_bound: float = 1e6

    def __post_init__(self):
        states = _readonly(np.asarray(self.states, dtype=np.float64))
        actions = _readonly(np.asarray(self.actions, dtype=np.int64))
        utilities = _readonly(np.asarray(self.utilities, dtype=np.float64))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "utilities", utilities)

        if states.ndim != 3:
            raise DataValidationError(
                f"states must be (n, T+1, p), got shape {states.shape}"
            )
        n, t_plus_1, p = states.shape
        if n < 1 or t_plus_1 < 2 or p < 1:
            raise DataValidationError(
                f"need n >= 1, T >= 1, p >= 1; got states shape {states.shape}"
            )
        horizon = t_plus_1 - 1
        if actions.shape != (n, horizon):
            raise DataValidationError(
                f"actions must be (n, T) = ({n}, {horizon}), got {actions.shape}"
            )
        if utilities.shape != (n, horizon):
            raise DataValidationError(
                f"utilities must be (n, T) = ({n}, {horizon}), got {utilities.shape}"
            )
        if self.n_actions < 1:
            raise DataValidationError(f"n_actions must be >= 1, got {self.n_actions}")
        if not np.all(np.isfinite(states)):
            raise DataValidationError("states contain non-finite values")
        if not np.all(np.isfinite(utilities)):
            raise DataValidationError("utilities contain non-finite values")
        if np.any(np.abs(utilities) > self.utility_bound):
            raise DataValidationError(
                f"utility magnitude exceeds bound {self.utility_bound}"
            )
        bad = (actions < 1) | (actions > self.n_actions)
        if np.any(bad):
            i, t = np.argwhere(bad)[0]
            raise DataValidationError(
                f"action out of range: subject {i} at t={t + 1} has "
                f"a={actions[i, t]}, expected 1..{self.n_actions}"
            )

    @property
    def n_subjects(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    def restrict_columns(self, columns: Sequence[int]) -> "TrajectoryDataset":
        """Dataset with the state restricted to the given (0-based) columns."""
        cols = list(columns)
        if len(cols) == 0:
            raise DataValidationError("cannot restrict to an empty column set")
        return TrajectoryDataset(
            states=self.states[:, :, cols],
            actions=self.actions,
            utilities=self.utilities,
            n_actions=self.n_actions,
            utility_bound=self.utility_bound,
        )

    def subset_subjects(self, index: Sequence[int]) -> "TrajectoryDataset":
        idx = list(index)
        return TrajectoryDataset(
            states=self.states[idx],
            actions=self.actions[idx],
            utilities=self.utilities[idx],
            n_actions=self.n_actions,
            utility_bound=self.utility_bound,
        )

    def equals(self, other: "TrajectoryDataset") -> bool:
        return (
            self.n_actions == other.n_actions
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.utilities, other.utilities)
        )


@dataclass(frozen=True)
class Transition:
    """One ``(S^t, A^t, U^t, S^{t+1})`` step of a trajectory."""

    subject_id: int
    t: int  # 1-based time of the step, in 1..T
    state: np.ndarray
    action: int
    utility: float
    next_state: np.ndarray


def flatten_transitions(
    ds: TrajectoryDataset, action_filter: Optional[int] = None
) -> list[Transition]:
    """All per-step transitions, optionally restricted to one action level."""
    if action_filter is not None and not 1 <= action_filter <= ds.n_actions:
        raise DataValidationError(
            f"action_filter {action_filter} outside 1..{ds.n_actions}"
        )
    out = []
    for i in range(ds.n_subjects):
        for t in range(ds.horizon):
            a = int(ds.actions[i, t])
            if action_filter is not None and a != action_filter:
                continue
            out.append(
                Transition(
                    subject_id=i,
                    t=t + 1,
                    state=ds.states[i, t],
                    action=a,
                    utility=float(ds.utilities[i, t]),
                    next_state=ds.states[i, t + 1],
                )
            )
    return out


def regroup_transitions(
    transitions: Iterable[Transition], n_actions: int, utility_bound: float = 1e6
) -> TrajectoryDataset:
    """Inverse of unfiltered :func:`flatten_transitions`."""
    by_subject: dict[int, list[Transition]] = {}
    for tr in transitions:
        by_subject.setdefault(tr.subject_id, []).append(tr)
    subjects = sorted(by_subject)
    states, actions, utilities = [], [], []
    for i in subjects:
        steps = sorted(by_subject[i], key=lambda tr: tr.t)
        if [tr.t for tr in steps] != list(range(1, len(steps) + 1)):
            raise DataValidationError(f"subject {i} has missing or duplicate steps")
        states.append([tr.state for tr in steps] + [steps[-1].next_state])
        actions.append([tr.action for tr in steps])
        utilities.append([tr.utility for tr in steps])
    return TrajectoryDataset(
        states=np.asarray(states, dtype=np.float64),
        actions=np.asarray(actions, dtype=np.int64),
        utilities=np.asarray(utilities, dtype=np.float64),
        n_actions=n_actions,
        utility_bound=utility_bound,
    )


# ---------------------------------------------------------------------------
# CSV ingestion / emission
#
# One row per (subject, time): columns id, t, a, u, s_1..s_p.  Rows exist for
# t = 1..T+1; a and u are empty (or ignored) at t = T+1.  The state dimension
# p is inferred from the header.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    """Column contract for trajectory CSV files.

    ``n_actions`` fixes the action range; when None the largest observed
    action is used.
    """

    n_actions: Optional[int] = None
    utility_bound: float = 1e6


def _parse_float(raw: str, sid: str, t: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataValidationError(
            f"could not parse value {raw!r} for subject {sid} at t={t}, "
            f"column {column}"
        ) from None


def load_dataset_csv(path, schema: Optional[CsvSchema] = None) -> TrajectoryDataset:
    """Read a trajectory CSV; subjects keep their order of first appearance."""
    schema = schema or CsvSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        rows = list(reader)

    expected_fixed = ["id", "t", "a", "u"]
    if header[: len(expected_fixed)] != expected_fixed:
        raise DataValidationError(
            f"{path}: header must start with id,t,a,u; got {header[:4]}"
        )
    state_cols = header[len(expected_fixed) :]
    p = len(state_cols)
    if p == 0 or state_cols != [f"s_{j}" for j in range(1, p + 1)]:
        raise DataValidationError(
            f"{path}: state columns must be s_1..s_p in order; got {state_cols}"
        )

    per_subject: dict[str, dict[int, list[str]]] = {}
    order: list[str] = []
    for line_no, row in enumerate(rows, start=2):
        if len(row) != 4 + p:
            raise DataValidationError(
                f"{path}: line {line_no} has {len(row)} fields, expected {4 + p}"
            )
        sid = row[0]
        if sid == "":
            raise DataValidationError(f"{path}: line {line_no} has empty id")
        try:
            t = int(row[1])
        except ValueError:
            raise DataValidationError(
                f"{path}: line {line_no}: t {row[1]!r} is not an integer"
            ) from None
        if t < 1:
            raise DataValidationError(f"{path}: subject {sid} has t={t} < 1")
        if sid not in per_subject:
            per_subject[sid] = {}
            order.append(sid)
        if t in per_subject[sid]:
            raise DataValidationError(f"{path}: duplicate row for subject {sid}, t={t}")
        per_subject[sid][t] = row

    horizons = {sid: max(ts) for sid, ts in per_subject.items()}
    t_max = horizons[order[0]]
    for sid, h in horizons.items():
        if h != t_max:
            raise DataValidationError(
                f"ragged horizons across subjects: subject {sid} ends at t={h}, "
                f"subject {order[0]} at t={t_max}"
            )
    if t_max < 2:
        raise DataValidationError("each subject needs at least t=1 and t=2 rows")
    horizon = t_max - 1

    states = np.empty((len(order), t_max, p))
    actions = np.empty((len(order), horizon), dtype=np.int64)
    utilities = np.empty((len(order), horizon))
    for i, sid in enumerate(order):
        rows_t = per_subject[sid]
        for t in range(1, t_max + 1):
            if t not in rows_t:
                raise DataValidationError(
                    f"missing row for subject {sid} at t={t}"
                )
            row = rows_t[t]
            for j in range(p):
                raw = row[4 + j]
                if raw == "":
                    raise DataValidationError(
                        f"missing value for subject {sid} at t={t}, column s_{j + 1}"
                    )
                states[i, t - 1, j] = _parse_float(raw, sid, t, f"s_{j + 1}")
            if t <= horizon:
                if row[2] == "":
                    raise DataValidationError(
                        f"missing value for subject {sid} at t={t}, column a"
                    )
                if row[3] == "":
                    raise DataValidationError(
                        f"missing value for subject {sid} at t={t}, column u"
                    )
                try:
                    actions[i, t - 1] = int(row[2])
                except ValueError:
                    raise DataValidationError(
                        f"action {row[2]!r} for subject {sid} at t={t} is not "
                        f"an integer"
                    ) from None
                utilities[i, t - 1] = _parse_float(raw=row[3], sid=sid, t=t, column="u")

    n_actions = schema.n_actions
    if n_actions is None:
        n_actions = int(actions.max())
    return TrajectoryDataset(
        states=states,
        actions=actions,
        utilities=utilities,
        n_actions=n_actions,
        utility_bound=schema.utility_bound,
    )


def save_dataset_csv(ds: TrajectoryDataset, path) -> None:
    """Write a dataset in the schema read by :func:`load_dataset_csv`."""
    p = ds.state_dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "t", "a", "u"] + [f"s_{j}" for j in range(1, p + 1)])
        for i in range(ds.n_subjects):
            for t in range(1, ds.horizon + 2):
                if t <= ds.horizon:
                    a = str(int(ds.actions[i, t - 1]))
                    u = format_float(ds.utilities[i, t - 1])
                else:
                    a = ""
                    u = ""
                writer.writerow(
                    [str(i + 1), str(t), a, u]
                    + [format_float(x) for x in ds.states[i, t - 1]]
                )
