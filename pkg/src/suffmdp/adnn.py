"""Alternating network feature learner.

A shared feature network maps the state into a low-dimensional bounded
feature vector; one regression head per action predicts the response
``Y^{t+1} = (U^t, S^{t+1})`` from the features.  Training alternates over
actions: each outer iteration takes, for every action in turn, one
subgradient descent step on (shared network, that action's head) using a
minibatch of that action's transitions, leaving the other heads untouched.

The fit criterion is penalized least squares

    C(theta) = (1/n) sum_i sum_t ||prediction(S_i^t, A_i^t) - Y_i^{t+1}||^2
               + lam * sum_j ||column j of W1||_2,

where ``W1`` is the first feature-layer weight matrix; the column-norm
penalty is a group lasso over input variables, so a column driven to zero
removes that raw coordinate from the feature map entirely.

On top of the fit sit: subject-level cross-validation of
(width, depth, penalty), residual-based dimension selection (smallest
feature dimension whose residuals pass an independence test against the
state), and the outer pipeline that alternates screening, fitting, and
restriction to the active variables until nothing shrinks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import TrajectoryDataset, Transition
from .dcov import TestReport, stratified_pooled_test
from .features import ACTIVATIONS, NetworkFeatureMap
from .rng import derive_seed, substream
from .screening import ScreenResult, screen

__all__ = [
    "ConvergenceError",
    "Architecture",
    "FitConfig",
    "AdnnModel",
    "feature_forward",
    "adnn_forward",
    "adnn_cost",
    "adnn_subgradient",
    "fit_adnn",
    "default_grid",
    "CrossValidationResult",
    "cross_validate_adnn",
    "residual_independence_pvalue",
    "DimensionSelection",
    "select_feature_dimension",
    "active_inputs",
    "default_dims",
    "PipelineConfig",
    "PipelineResult",
    "construct_sufficient_features",
]


class ConvergenceError(RuntimeError):
    """Raised when training produces non-finite parameters or costs."""


@dataclass(frozen=True)
class Architecture:
    """Network shapes.

    The feature network has ``depth`` affine+activation layers taking the
    state from ``input_dim`` through ``depth - 1`` hidden layers of
    ``hidden_width`` units to ``feature_dim``.  Each head mirrors that:
    ``depth`` layers from ``feature_dim`` to ``output_dim``, with the final
    head layer affine (the response is not range-bounded, so no activation
    is applied to it).
    """

    input_dim: int
    feature_dim: int
    output_dim: int
    hidden_width: int = 4
    depth: int = 1
    n_actions: int = 2
    activation: str = "sigmoid"

    def __post_init__(self):
        for name in ("input_dim", "feature_dim", "output_dim", "hidden_width", "depth", "n_actions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def feature_widths(self) -> list:
        return [self.input_dim] + [self.hidden_width] * (self.depth - 1) + [self.feature_dim]

    def head_widths(self) -> list:
        return [self.feature_dim] + [self.hidden_width] * (self.depth - 1) + [self.output_dim]

    def to_jsonable(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "feature_dim": self.feature_dim,
            "output_dim": self.output_dim,
            "hidden_width": self.hidden_width,
            "depth": self.depth,
            "n_actions": self.n_actions,
            "activation": self.activation,
        }


@dataclass(frozen=True)
class FitConfig:
    """Training hyperparameters.

    The step size decays as ``alpha0 / (1 + b / beta)`` over outer
    iterations ``b``.  Weights initialize uniformly on
    ``+-sqrt(6 / (fan_in + fan_out))`` and biases at zero, from the stream
    given by ``seed``.
    """

    lam: float = 0.0
    batch_fraction: float = 0.1
    alpha0: float = 0.05
    beta: float = 200.0
    tolerance: float = 1e-5
    n_max: int = 5000
    seed: int = 0
    check_every: int = 1  # full-data cost evaluations every this many iterations

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not 0 < self.batch_fraction < 1:
            raise ValueError(f"batch_fraction must be in (0, 1), got {self.batch_fraction}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.n_max < 0:
            raise ValueError(f"n_max must be >= 0, got {self.n_max}")
        if self.check_every < 1:
            raise ValueError(f"check_every must be >= 1, got {self.check_every}")

    def step_size(self, b: int) -> float:
        return self.alpha0 / (1.0 + b / self.beta)


@dataclass
class AdnnModel:
    """Fitted feature network plus per-action regression heads.

    ``trace`` records the per-action full-data cost after every outer
    iteration (index 0 is the initialization).  Fitted models are treated
    as immutable; nothing in the package mutates one after `fit_adnn`
    returns.
    """

    architecture: Architecture
    feature_layers: list
    heads: dict
    trace: list = field(default_factory=list)

    @property
    def activation(self) -> str:
        return self.architecture.activation

    @property
    def actions(self) -> list:
        return sorted(self.heads)

    @property
    def first_layer(self) -> np.ndarray:
        return self.feature_layers[0][0]

    def feature_map(self, input_indices: Optional[Sequence[int]] = None,
                    input_dim: Optional[int] = None) -> NetworkFeatureMap:
        return NetworkFeatureMap(
            layers=[(w.copy(), b.copy()) for w, b in self.feature_layers],
            activation=self.activation,
            input_indices=input_indices,
            input_dim=input_dim,
        )

    def features(self, states: np.ndarray) -> np.ndarray:
        x = np.asarray(states, dtype=np.float64)
        act = ACTIVATIONS[self.activation][0]
        for w, b in self.feature_layers:
            x = act(x @ w.T + b)
        return x

    def predict(self, states: np.ndarray, action: int) -> np.ndarray:
        """Predicted response ``(U, next-state)`` rows under one action."""
        return self._head_forward(self.features(states), action)

    def _head_forward(self, feats: np.ndarray, action: int) -> np.ndarray:
        if action not in self.heads:
            raise ValueError(f"unknown action {action}; model has {self.actions}")
        act = ACTIVATIONS[self.activation][0]
        layers = self.heads[action]
        x = feats
        for i, (w, b) in enumerate(layers):
            z = x @ w.T + b
            x = act(z) if i < len(layers) - 1 else z
        return x

    def to_jsonable(self) -> dict:
        return {
            "architecture": self.architecture.to_jsonable(),
            "feature_layers": [
                {"weights": w.tolist(), "bias": b.tolist()}
                for w, b in self.feature_layers
            ],
            "heads": {
                str(a): [
                    {"weights": w.tolist(), "bias": b.tolist()} for w, b in layers
                ]
                for a, layers in self.heads.items()
            },
            "trace": [{str(a): c for a, c in entry.items()} for entry in self.trace],
        }

    @staticmethod
    def from_jsonable(data: dict) -> "AdnnModel":
        def load_layers(entries):
            return [
                (np.asarray(e["weights"], dtype=np.float64),
                 np.asarray(e["bias"], dtype=np.float64))
                for e in entries
            ]

        return AdnnModel(
            architecture=Architecture(**data["architecture"]),
            feature_layers=load_layers(data["feature_layers"]),
            heads={int(a): load_layers(ls) for a, ls in data["heads"].items()},
            trace=[{int(a): c for a, c in e.items()} for e in data.get("trace", [])],
        )


def feature_forward(states, feature_map) -> np.ndarray:
    """Apply a feature map (or a model's feature network) to states."""
    one = np.asarray(states).ndim == 1
    x = np.atleast_2d(np.asarray(states, dtype=np.float64))
    out = feature_map.features(x) if isinstance(feature_map, AdnnModel) else feature_map.transform(x)
    return out[0] if one else out


def adnn_forward(states, action: int, model: AdnnModel) -> np.ndarray:
    """Predicted response for states under one action."""
    one = np.asarray(states).ndim == 1
    out = model.predict(np.atleast_2d(np.asarray(states, dtype=np.float64)), action)
    return out[0] if one else out


# ---------------------------------------------------------------------------
# Cost, gradients, training
# ---------------------------------------------------------------------------


def _init_model(arch: Architecture, actions: Sequence[int], rng: np.random.Generator) -> AdnnModel:
    def init_layers(widths):
        layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append((w, np.zeros(fan_out)))
        return layers

    feature_layers = init_layers(arch.feature_widths())
    heads = {a: init_layers(arch.head_widths()) for a in sorted(actions)}
    return AdnnModel(architecture=arch, feature_layers=feature_layers, heads=heads)


def _penalty(model: AdnnModel, lam: float) -> float:
    if lam == 0.0:
        return 0.0
    return lam * float(np.sqrt(np.square(model.first_layer).sum(axis=0)).sum())


def _flatten_dataset(ds: TrajectoryDataset):
    """Row-stacked transitions: states, responses (U, S'), actions."""
    n, horizon, p = ds.n_subjects, ds.horizon, ds.state_dim
    s = ds.states[:, :horizon].reshape(n * horizon, p)
    y = np.empty((n * horizon, p + 1))
    y[:, 0] = ds.utilities.reshape(-1)
    y[:, 1:] = ds.states[:, 1:].reshape(n * horizon, p)
    a = ds.actions.reshape(-1)
    return s, y, a


def _costs_by_action(sflat, yflat, aflat, n_subjects, model, lam, actions):
    """Per-action cost: that action's squared-error share plus the penalty."""
    pen = _penalty(model, lam)
    feats = model.features(sflat)
    costs = {}
    for a in actions:
        idx = aflat == a
        pred = model._head_forward(feats[idx], a)
        err = float(np.square(pred - yflat[idx]).sum())
        costs[a] = err / n_subjects + pen
    return costs


def adnn_cost(ds: TrajectoryDataset, model: AdnnModel, lam: float) -> float:
    """Penalized least-squares criterion over a whole dataset."""
    sflat, yflat, aflat = _flatten_dataset(ds)
    costs = _costs_by_action(sflat, yflat, aflat, ds.n_subjects, model, lam, model.actions)
    pen = _penalty(model, lam)
    return sum(c - pen for c in costs.values()) + pen


def _batch_gradients(s, y, model, lam, action):
    """Gradients of the batch-mean squared error plus penalty subgradient.

    Returns ``(feature_grads, head_grads)`` shaped like the parameters.
    The group-lasso subgradient on the first feature layer is
    ``lam * column / ||column||`` for nonzero columns and zero otherwise.
    """
    m = s.shape[0]
    act, dact = ACTIVATIONS[model.activation]

    f_in = [s]
    f_pre = []
    x = s
    for w, b in model.feature_layers:
        z = x @ w.T + b
        f_pre.append(z)
        x = act(z)
        f_in.append(x)

    head = model.heads[action]
    h_in = [x]
    h_pre = []
    for i, (w, b) in enumerate(head):
        z = h_in[-1] @ w.T + b
        h_pre.append(z)
        h_in.append(act(z) if i < len(head) - 1 else z)

    delta = 2.0 * (h_in[-1] - y) / m
    head_grads = [None] * len(head)
    for i in range(len(head) - 1, -1, -1):
        dz = delta if i == len(head) - 1 else delta * dact(h_pre[i], h_in[i + 1])
        head_grads[i] = (dz.T @ h_in[i], dz.sum(axis=0))
        delta = dz @ head[i][0]

    feature_grads = [None] * len(model.feature_layers)
    for i in range(len(model.feature_layers) - 1, -1, -1):
        dz = delta * dact(f_pre[i], f_in[i + 1])
        feature_grads[i] = (dz.T @ f_in[i], dz.sum(axis=0))
        delta = dz @ model.feature_layers[i][0]

    if lam > 0.0:
        w1 = model.feature_layers[0][0]
        norms = np.sqrt(np.square(w1).sum(axis=0))
        scale = np.divide(lam, norms, out=np.zeros_like(norms), where=norms > 0)
        dw1, db1 = feature_grads[0]
        feature_grads[0] = (dw1 + w1 * scale[None, :], db1)
    return feature_grads, head_grads


def adnn_subgradient(batch: Sequence[Transition], model: AdnnModel, lam: float, action: int):
    """Subgradient of the batch cost for one action's alternation step.

    Every transition in the batch must carry ``action``; the result pairs
    gradients for the shared feature layers with gradients for that
    action's head only.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    if any(tr.action != action for tr in batch):
        raise ValueError(f"batch contains transitions with action != {action}")
    s = np.stack([tr.state for tr in batch])
    y = np.hstack([
        np.array([[tr.utility] for tr in batch]),
        np.stack([tr.next_state for tr in batch]),
    ])
    return _batch_gradients(s, y, model, lam, action)


def fit_adnn(
    ds: TrajectoryDataset,
    arch: Architecture,
    cfg: FitConfig,
    actions_subset: Optional[Sequence[int]] = None,
) -> AdnnModel:
    """Alternating minibatch subgradient training.

    Per outer iteration, each trained action draws
    ``floor(batch_fraction * n_a)`` of its transitions without replacement
    and descends on (shared layers, its head).  Training stops when the
    largest per-action change in full-data cost drops to ``tolerance`` or
    after ``n_max`` iterations.  Identical inputs and seed reproduce the
    fitted parameters bit for bit.

    ``actions_subset`` trains heads for a subset of action levels only
    (used by the per-action baseline); transitions with other actions are
    ignored.
    """
    if arch.input_dim != ds.state_dim:
        raise ValueError(f"architecture input_dim {arch.input_dim} != state dim {ds.state_dim}")
    if arch.output_dim != ds.state_dim + 1:
        raise ValueError(
            f"architecture output_dim {arch.output_dim} != state dim + 1 = {ds.state_dim + 1}"
        )
    actions = sorted(actions_subset) if actions_subset is not None else list(
        range(1, ds.n_actions + 1)
    )
    sflat, yflat, aflat = _flatten_dataset(ds)
    action_rows = {}
    for a in actions:
        rows = np.flatnonzero(aflat == a)
        if rows.size == 0:
            raise ValueError(f"action {a} is absent from the data")
        if int(cfg.batch_fraction * rows.size) == 0:
            raise ValueError(
                f"batch fraction too small: floor({cfg.batch_fraction} * {rows.size}) = 0 "
                f"for action {a}"
            )
        action_rows[a] = rows

    rng = substream(cfg.seed)
    model = _init_model(arch, actions, rng)
    n = ds.n_subjects
    costs = _costs_by_action(sflat, yflat, aflat, n, model, cfg.lam, actions)
    model.trace = [costs]
    for b in range(1, cfg.n_max + 1):
        alpha = cfg.step_size(b)
        for a in actions:
            rows = action_rows[a]
            take = int(cfg.batch_fraction * rows.size)
            batch = rows[rng.choice(rows.size, size=take, replace=False)]
            f_grads, h_grads = _batch_gradients(
                sflat[batch], yflat[batch], model, cfg.lam, a
            )
            model.feature_layers = [
                (w - alpha * dw, bias - alpha * db)
                for (w, bias), (dw, db) in zip(model.feature_layers, f_grads)
            ]
            model.heads[a] = [
                (w - alpha * dw, bias - alpha * db)
                for (w, bias), (dw, db) in zip(model.heads[a], h_grads)
            ]
        if b % cfg.check_every != 0 and b != cfg.n_max:
            continue
        new_costs = _costs_by_action(sflat, yflat, aflat, n, model, cfg.lam, actions)
        model.trace.append(new_costs)
        if not all(np.isfinite(c) for c in new_costs.values()):
            raise ConvergenceError(
                f"training diverged at iteration {b}: non-finite cost"
            )
        if max(abs(new_costs[a] - costs[a]) for a in actions) <= cfg.tolerance:
            break
        costs = new_costs
    return model


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


def default_grid(
    hidden_widths: Sequence[int] = (2, 4, 8),
    depths: Sequence[int] = (1, 2),
    lams: Sequence[float] = (0.001, 0.01, 0.1, 1.0),
) -> list:
    """Grid cells ``(hidden_width, depth, lam)`` in deterministic order."""
    return list(itertools.product(hidden_widths, depths, lams))


@dataclass(frozen=True)
class CrossValidationResult:
    best: tuple  # (hidden_width, depth, lam)
    scores: list  # [(cell, mean held-out error)]


def cross_validate_adnn(
    ds: TrajectoryDataset,
    feature_dim: int,
    grid: Sequence[tuple],
    folds: int = 5,
    cfg: FitConfig = FitConfig(),
    activation: str = "sigmoid",
    actions_subset: Optional[Sequence[int]] = None,
) -> CrossValidationResult:
    """Pick (width, depth, penalty) by subject-level cross-validation.

    Whole trajectories stay in one fold.  The validation score is the
    unpenalized squared prediction error per held-out subject, averaged
    over folds; ties break toward smaller depth, then smaller width, then
    larger penalty.
    """
    cells = list(grid)
    if not cells:
        raise ValueError("grid must be nonempty")
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if folds > ds.n_subjects:
        raise ValueError(f"folds {folds} > n_subjects {ds.n_subjects}")
    perm = substream(cfg.seed, 0xF01D).permutation(ds.n_subjects)
    fold_members = np.array_split(perm, folds)
    fold_sets = [
        (np.setdiff1d(perm, members), members) for members in fold_members
    ]

    scores = []
    for width, depth, lam in cells:
        arch = Architecture(
            input_dim=ds.state_dim,
            feature_dim=feature_dim,
            output_dim=ds.state_dim + 1,
            hidden_width=width,
            depth=depth,
            n_actions=ds.n_actions,
            activation=activation,
        )
        # seeds keyed by cell content: duplicate cells score identically and
        # results do not depend on grid order
        lam_bits = int(np.float64(lam).view(np.uint64))
        fold_errors = []
        for fi, (train_idx, valid_idx) in enumerate(fold_sets):
            train = ds.subset_subjects(train_idx)
            valid = ds.subset_subjects(valid_idx)
            fit_cfg = replace(
                cfg, lam=lam, seed=derive_seed(cfg.seed, width, depth, lam_bits, fi)
            )
            model = fit_adnn(train, arch, fit_cfg, actions_subset=actions_subset)
            fold_errors.append(_validation_error(valid, model, actions_subset))
        scores.append(((width, depth, lam), float(np.mean(fold_errors))))

    best = min(scores, key=lambda item: (item[1], item[0][1], item[0][0], -item[0][2]))
    return CrossValidationResult(best=best[0], scores=scores)


def _validation_error(ds: TrajectoryDataset, model: AdnnModel, actions_subset) -> float:
    sflat, yflat, aflat = _flatten_dataset(ds)
    actions = sorted(actions_subset) if actions_subset is not None else model.actions
    feats = model.features(sflat)
    err = 0.0
    for a in actions:
        idx = aflat == a
        if not np.any(idx):
            continue
        pred = model._head_forward(feats[idx], a)
        err += float(np.square(pred - yflat[idx]).sum())
    return err / ds.n_subjects


# ---------------------------------------------------------------------------
# Dimension selection and the full pipeline
# ---------------------------------------------------------------------------


def residual_independence_pvalue(
    ds: TrajectoryDataset,
    model,
    n_permutations: int = 999,
    seed: int = 0,
    tau: float = 0.05,
    min_stratum: int = 5,
    pool_order: Optional[int] = None,
    actions_subset: Optional[Sequence[int]] = None,
) -> TestReport:
    """Test prediction residuals for independence of the current state.

    ``model`` is anything with ``predict(states, action) -> (m, p+1)``.
    Residuals ``Y^{t+1} - prediction`` are tested against ``S^t`` within
    action levels and pooled over time; failing to reject supports the
    model's features as capturing all state information relevant to the
    response.
    """
    n, horizon, p = ds.n_subjects, ds.horizon, ds.state_dim
    actions = sorted(actions_subset) if actions_subset is not None else list(
        range(1, ds.n_actions + 1)
    )
    sflat, yflat, aflat = _flatten_dataset(ds)
    resid = np.full((n * horizon, p + 1), np.nan)
    for a in actions:
        idx = aflat == a
        resid[idx] = yflat[idx] - model.predict(sflat[idx], a)
    resid = resid.reshape(n, horizon, p + 1)

    return stratified_pooled_test(
        extract_g=lambda d, t: resid[:, t - 1],
        extract_h=lambda d, t: d.states[:, t - 1],
        ds=ds,
        tau=tau,
        n_permutations=n_permutations,
        seed=seed,
        min_stratum=min_stratum,
        pool_order=pool_order,
        actions=actions,
    )


@dataclass(frozen=True)
class DimensionSelection:
    feature_dim: int
    model: AdnnModel
    reports: list  # [(dim, best cell, cv score, TestReport)]
    none_sufficient: bool
    tau: float


def select_feature_dimension(
    ds: TrajectoryDataset,
    dims: Sequence[int],
    tau: float = 0.05,
    grid: Optional[Sequence[tuple]] = None,
    cfg: FitConfig = FitConfig(),
    folds: int = 5,
    n_permutations: int = 999,
    seed: int = 0,
    min_stratum: int = 5,
    activation: str = "sigmoid",
    actions_subset: Optional[Sequence[int]] = None,
    cv_cfg: Optional[FitConfig] = None,
) -> DimensionSelection:
    """Smallest feature dimension whose residuals pass the independence test.

    Candidate dimensions are tried in ascending order; each is tuned by
    cross-validation, refit on the full data, and accepted when the pooled
    residual p-value exceeds ``tau``.  If none passes, the largest
    dimension is returned with ``none_sufficient`` set.  ``cv_cfg`` lets
    cross-validation run on a lighter training budget than the final fit.
    """
    dims = [int(r) for r in dims]
    if not dims:
        raise ValueError("dims must be nonempty")
    if any(r < 1 for r in dims) or sorted(dims) != dims:
        raise ValueError(f"dims must be ascending positive integers, got {dims}")
    cells = list(grid) if grid is not None else default_grid()

    reports = []
    model = None
    for r in dims:
        cv = cross_validate_adnn(
            ds,
            feature_dim=r,
            grid=cells,
            folds=folds,
            cfg=replace(cv_cfg or cfg, seed=derive_seed(seed, r, 0)),
            activation=activation,
            actions_subset=actions_subset,
        )
        width, depth, lam = cv.best
        arch = Architecture(
            input_dim=ds.state_dim,
            feature_dim=r,
            output_dim=ds.state_dim + 1,
            hidden_width=width,
            depth=depth,
            n_actions=ds.n_actions,
            activation=activation,
        )
        model = fit_adnn(
            ds,
            arch,
            replace(cfg, lam=lam, seed=derive_seed(seed, r, 1)),
            actions_subset=actions_subset,
        )
        report = residual_independence_pvalue(
            ds,
            model,
            n_permutations=n_permutations,
            seed=derive_seed(seed, r, 2),
            tau=tau,
            min_stratum=min_stratum,
            actions_subset=actions_subset,
        )
        best_score = dict(cv.scores)[cv.best]
        reports.append((r, cv.best, best_score, report))
        if report.p_value > tau:
            return DimensionSelection(
                feature_dim=r, model=model, reports=reports,
                none_sufficient=False, tau=tau,
            )
    return DimensionSelection(
        feature_dim=dims[-1], model=model, reports=reports,
        none_sufficient=True, tau=tau,
    )


def active_inputs(model: AdnnModel, col_tol: float = 0.05) -> list:
    """Raw inputs the feature map actually uses (0-based indices).

    A column of the first feature-layer weight matrix marks its input
    active when its norm exceeds ``col_tol`` times the largest column norm.
    Plain subgradient descent never produces exact zeros: suppressed
    columns keep wandering at the scale of (step size x penalty), around
    one to ten percent of a live column's norm, hence the relative
    tolerance.
    """
    if col_tol < 0:
        raise ValueError(f"col_tol must be >= 0, got {col_tol}")
    norms = np.sqrt(np.square(model.first_layer).sum(axis=0))
    threshold = col_tol * norms.max() if norms.size else 0.0
    return [int(j) for j in np.flatnonzero(norms > threshold)]


def default_dims(max_dim: int) -> list:
    """Ascending candidate feature dimensions up to ``max_dim``."""
    ladder = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256]
    dims = [d for d in ladder if d <= max_dim]
    if not dims or dims[-1] != max_dim:
        dims.append(max_dim)
    return dims


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for the full feature-construction pipeline.

    ``tau`` is the screening level; ``tau_dim`` the level at which the
    residual test must fail to reject for a dimension to be accepted.
    """

    tau: float = 0.1
    tau_dim: float = 0.05
    dims: Optional[tuple] = None  # default: ladder up to the variable count
    grid: Optional[tuple] = None  # default: default_grid()
    folds: int = 5
    fit: FitConfig = FitConfig()
    cv_fit: Optional[FitConfig] = None  # lighter budget for CV fits
    n_permutations: int = 999
    min_stratum: int = 5
    col_tol: float = 0.05
    activation: str = "sigmoid"
    seed: int = 0
    max_iterations: int = 10
    screen_n_max: Optional[int] = None

    def to_jsonable(self) -> dict:
        def fit_dict(fit):
            return None if fit is None else {
                "lam": fit.lam,
                "batch_fraction": fit.batch_fraction,
                "alpha0": fit.alpha0,
                "beta": fit.beta,
                "tolerance": fit.tolerance,
                "n_max": fit.n_max,
                "seed": fit.seed,
                "check_every": fit.check_every,
            }

        return {
            "tau": self.tau,
            "tau_dim": self.tau_dim,
            "dims": None if self.dims is None else list(self.dims),
            "grid": None if self.grid is None else [list(c) for c in self.grid],
            "folds": self.folds,
            "n_permutations": self.n_permutations,
            "min_stratum": self.min_stratum,
            "col_tol": self.col_tol,
            "activation": self.activation,
            "seed": self.seed,
            "max_iterations": self.max_iterations,
            "screen_n_max": self.screen_n_max,
            "fit": fit_dict(self.fit),
            "cv_fit": fit_dict(self.cv_fit),
        }

    @staticmethod
    def from_jsonable(data: dict) -> "PipelineConfig":
        fit = FitConfig(**data["fit"]) if data.get("fit") else FitConfig()
        cv_fit = FitConfig(**data["cv_fit"]) if data.get("cv_fit") else None
        return PipelineConfig(
            tau=data.get("tau", 0.1),
            tau_dim=data.get("tau_dim", 0.05),
            dims=None if data.get("dims") is None else tuple(data["dims"]),
            grid=None if data.get("grid") is None else tuple(
                tuple(c) for c in data["grid"]
            ),
            folds=data.get("folds", 5),
            fit=fit,
            cv_fit=cv_fit,
            n_permutations=data.get("n_permutations", 999),
            min_stratum=data.get("min_stratum", 5),
            col_tol=data.get("col_tol", 0.05),
            activation=data.get("activation", "sigmoid"),
            seed=data.get("seed", 0),
            max_iterations=data.get("max_iterations", 10),
            screen_n_max=data.get("screen_n_max"),
        )


@dataclass(frozen=True)
class PipelineIteration:
    variables: list
    feature_dim: int
    active: list
    none_sufficient: bool


@dataclass(frozen=True)
class PipelineResult:
    """Outcome of the screening + fitting + restriction pipeline.

    ``variables`` are the surviving raw coordinates (0-based);
    ``feature_map`` accepts full state vectors and selects those columns
    itself.  ``feature_map`` is None when screening selects nothing.
    """

    feature_map: Optional[NetworkFeatureMap]
    variables: list
    feature_dim: int
    screen_result: ScreenResult
    iterations: list
    model: Optional[AdnnModel]
    flags: tuple = ()

    @property
    def n_var(self) -> int:
        return len(self.variables)

    @property
    def n_dim(self) -> int:
        return self.feature_dim

    def to_jsonable(self) -> dict:
        return {
            "variables": self.variables,
            "feature_dim": self.feature_dim,
            "flags": list(self.flags),
            "screen": self.screen_result.to_jsonable(),
            "iterations": [
                {
                    "variables": it.variables,
                    "feature_dim": it.feature_dim,
                    "active": it.active,
                    "none_sufficient": it.none_sufficient,
                }
                for it in self.iterations
            ],
            "feature_map": None
            if self.feature_map is None
            else self.feature_map.to_jsonable(),
        }


def construct_sufficient_features(
    ds: TrajectoryDataset, config: PipelineConfig = PipelineConfig()
) -> PipelineResult:
    """Full pipeline: screen, fit at the selected dimension, restrict, repeat.

    Screening restricts the state to coordinates tied to the utility
    process.  Each iteration then selects the feature dimension on the
    restricted data and keeps only the active inputs of the fitted map;
    iteration stops when the variable set stops shrinking (further passes
    would see identical inputs).  The returned feature map composes the
    final network with the raw-variable selection.
    """
    scr = screen(
        ds,
        tau=config.tau,
        n_max=config.screen_n_max,
        n_permutations=config.n_permutations,
        seed=derive_seed(config.seed, 0),
        min_stratum=config.min_stratum,
    )
    if not scr.selected:
        return PipelineResult(
            feature_map=None,
            variables=[],
            feature_dim=0,
            screen_result=scr,
            iterations=[],
            model=None,
            flags=("utility-independent-of-state",),
        )

    variables = list(scr.selected)
    iterations: list[PipelineIteration] = []
    flags: tuple = ()
    selection = None
    for it in range(1, config.max_iterations + 1):
        sub = ds.restrict_columns(variables)
        dims = (
            [d for d in config.dims if d >= 1]
            if config.dims is not None
            else default_dims(len(variables))
        )
        selection = select_feature_dimension(
            sub,
            dims=dims,
            tau=config.tau_dim,
            grid=config.grid,
            cfg=config.fit,
            folds=min(config.folds, ds.n_subjects),
            n_permutations=config.n_permutations,
            seed=derive_seed(config.seed, it),
            min_stratum=config.min_stratum,
            activation=config.activation,
            cv_cfg=config.cv_fit,
        )
        active = active_inputs(selection.model, config.col_tol)
        active_abs = [variables[j] for j in active]
        iterations.append(
            PipelineIteration(
                variables=list(variables),
                feature_dim=selection.feature_dim,
                active=active_abs,
                none_sufficient=selection.none_sufficient,
            )
        )
        if selection.none_sufficient:
            flags += ("none-sufficient",)
        if not active_abs:
            flags += ("all-inputs-shrunk",)
            break
        if set(active_abs) == set(variables):
            break
        variables = active_abs
    else:
        flags += ("iteration-limit-reached",)

    fmap = selection.model.feature_map(
        input_indices=variables, input_dim=ds.state_dim
    )
    return PipelineResult(
        feature_map=fmap,
        variables=variables,
        feature_dim=selection.feature_dim,
        screen_result=scr,
        iterations=iterations,
        model=selection.model,
        flags=flags,
    )
