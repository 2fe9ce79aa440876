#!/usr/bin/env python3
"""
Cross-fitted estimators of the six conditional characteristic function
components used by the deviation statistic.

g1 = E[exp(i(mu'S_{t+q+k} + nu'X_{t-1})) | X_t..X_{t+q+k-1}]
g2 = E[exp(i mu'S_{t+q+k}) | X_{t+q}..X_{t+q+k-1}]
g3 = E[exp(i nu'X_{t-1}) | X_t..X_{t+q+k-1}]

each split into a cos (real) and sin (imag) regression fit on the
training trajectories only.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from sklearn.neighbors import KNeighborsRegressor
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.tree import DecisionTreeRegressor

from seeding import derive_rng, derive_seed
from trajectory import Dataset, sliding_windows

BACKENDS = ('forest', 'knn', 'oracle')
WHICH = ('g1', 'g2', 'g3')
PARTS = ('real', 'imag')

# a forest block holds at least this many minimum-size leaves
BLOCK_LEAVES = 8


@dataclass(frozen=True)
class SplitAssignment:
    """0-based trajectory indices of the evaluation half and the training half."""

    eval_ids: Tuple[int, ...]
    train_ids: Tuple[int, ...]

    @property
    def n_eval(self) -> int:
        return len(self.eval_ids)


@dataclass(frozen=True, eq=False)
class Direction:
    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        nu = np.array(self.nu, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(nu))):
            raise ValueError("direction entries must be finite")
        if nu.shape[0] != mu.shape[0] + 1:
            raise ValueError(f"nu must have dimension p+1={mu.shape[0] + 1}, got {nu.shape[0]}")
        mu.setflags(write=False)
        nu.setflags(write=False)
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'nu', nu)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Direction):
            return NotImplemented
        return bool(np.array_equal(self.mu, other.mu) and np.array_equal(self.nu, other.nu))

    __hash__ = None


@dataclass(frozen=True)
class CcfTask:
    which: str
    part: str
    k: int
    q: int
    direction: Direction

    def __post_init__(self):
        if self.which not in WHICH:
            raise ValueError(f"unknown component '{self.which}'")
        if self.part not in PARTS:
            raise ValueError(f"unknown part '{self.part}'")
        if self.k < 1 or self.q < 0:
            raise ValueError(f"invalid grid cell k={self.k}, q={self.q}")


@dataclass(frozen=True)
class BackendSpec:
    """Regression backend and its hyperparameters.

    ``oracle`` is a callable ``(task, features) -> values`` used only by tests.
    """

    kind: str = 'forest'
    trees: int = 100
    min_leaf: int = 5
    knn_k: Optional[int] = None
    oracle: Optional[Callable[[CcfTask, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in BACKENDS:
            raise ValueError(f"unknown backend '{self.kind}'; use one of {', '.join(BACKENDS)}")
        if self.trees < 1:
            raise ValueError(f"trees must be at least 1, got {self.trees}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be at least 1, got {self.min_leaf}")
        if self.knn_k is not None and self.knn_k < 1:
            raise ValueError(f"knn_k must be at least 1, got {self.knn_k}")
        if self.kind == 'oracle' and self.oracle is None:
            raise ValueError("the oracle backend needs a closed-form function")

    def describe(self) -> Dict[str, Any]:
        info = {'kind': self.kind}
        if self.kind == 'forest':
            info.update(trees=self.trees, min_leaf=self.min_leaf)
        elif self.kind == 'knn':
            info.update(knn_k=self.knn_k)
        return info


class _ConstantRegressor:
    """Predicts the single target value seen in training."""

    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.full(features.shape[0], self.value)


class BlockForest:
    """Random-feature regression trees, each grown on its own block of rows.

    Blocks are disjoint, so with targets unrelated to the features the
    variance of the averaged prediction is E[1/leaf size] / n_trees whatever
    the feature dimension. In a bootstrap forest the leaves of different
    trees share rows, and they share more of them in fewer dimensions.
    """

    def __init__(self, trees: int, min_leaf: int, random_state: int = 0):
        self.trees = trees
        self.min_leaf = min_leaf
        self.random_state = random_state
        self.estimators_: List[DecisionTreeRegressor] = []
        self.blocks_: List[np.ndarray] = []

    def fit(self, features: np.ndarray, targets: np.ndarray) -> 'BlockForest':
        n, d = features.shape
        n_trees = max(1, min(self.trees, n // (BLOCK_LEAVES * self.min_leaf)))
        order = derive_rng(self.random_state, 'blocks').permutation(n)
        self.blocks_ = np.array_split(order, n_trees)
        self.estimators_ = [
            DecisionTreeRegressor(
                criterion='squared_error',
                max_features=max(1, math.ceil(d / 3)),
                min_samples_leaf=self.min_leaf,
                random_state=derive_seed(self.random_state, 'tree', i),
            ).fit(features[rows], targets[rows])
            for i, rows in enumerate(self.blocks_)
        ]
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.mean([tree.predict(features) for tree in self.estimators_], axis=0)


class _OracleRegressor:
    def __init__(self, fn: Callable[[CcfTask, np.ndarray], np.ndarray], task: CcfTask):
        self.fn = fn
        self.task = task

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(self.task, features), dtype=float).reshape(-1)


@dataclass(frozen=True)
class FittedCcf:
    estimator: Any
    n_features: int
    n_rows: int
    kind: str


@dataclass(frozen=True)
class CcfModelSet:
    """Six fitted components for one (k, q, direction) cell."""

    g1_real: FittedCcf
    g1_imag: FittedCcf
    g2_real: FittedCcf
    g2_imag: FittedCcf
    g3_real: FittedCcf
    g3_imag: FittedCcf
    backend: Dict[str, Any] = field(default_factory=dict)
    n_train_rows: int = 0


def split_sample(dataset: Dataset, seed: int) -> SplitAssignment:
    """Random halves; with odd N the training side gets the extra trajectory."""
    if dataset.N < 2:
        raise ValueError(f"sample splitting needs N >= 2, got {dataset.N}")
    perm = derive_rng(seed, 'split').permutation(dataset.N)
    n_eval = dataset.N // 2
    return SplitAssignment(
        eval_ids=tuple(sorted(int(i) for i in perm[:n_eval])),
        train_ids=tuple(sorted(int(i) for i in perm[n_eval:])),
    )


def draw_directions(B: int, p: int, seed: int) -> List[Direction]:
    """B i.i.d. pairs mu ~ N_p(0, I), nu ~ N_{p+1}(0, I)."""
    if B < 1:
        raise ValueError(f"B must be at least 1, got {B}")
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    rng = derive_rng(seed, 'directions')
    draws = rng.standard_normal((B, 2 * p + 1))
    return [Direction(mu=row[:p], nu=row[p:]) for row in draws]


def _wave(values: np.ndarray, part: str) -> np.ndarray:
    return np.cos(values) if part == 'real' else np.sin(values)


def component_rows(chain: np.ndarray, task: CcfTask) -> Tuple[np.ndarray, np.ndarray]:
    """Feature/target rows for ``task`` from an (N, T, p+1) chain tensor.

    g1, g3: window X_t..X_{t+q+k-1} for 2 <= t <= T-q-k.
    g2: window X_s..X_{s+k-1} for 1 <= s <= T-k, pooled over s.
    """
    n, T, d = chain.shape
    p = d - 1
    mu, nu = task.direction.mu, task.direction.nu
    k, q = task.k, task.q
    if task.which == 'g2':
        if T - k < 1:
            raise ValueError(f"no g2 training rows for k={k} with T={T}")
        features = sliding_windows(chain, k, 0, T - k)
        next_states = chain[:, k:, :p].reshape(-1, p)
        return features, _wave(next_states @ mu, task.part)

    length = q + k
    # 0-based window starts 1..T-length-1
    if T - length - 1 < 1:
        raise ValueError(f"no training rows for k={k}, q={q} with T={T}")
    features = sliding_windows(chain, length, 1, T - length)
    future = chain[:, length + 1:, :p].reshape(-1, p)
    past = chain[:, :T - length - 1, :].reshape(-1, d)
    if task.which == 'g1':
        angle = future @ mu + past @ nu
    else:
        angle = past @ nu
    return features, _wave(angle, task.part)


def build_training_rows(dataset: Dataset, split: SplitAssignment,
                        task: CcfTask) -> Tuple[np.ndarray, np.ndarray]:
    """Rows pooled over all training trajectories."""
    return component_rows(dataset.subset(split.train_ids), task)


def canonical_rows(features: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rows sorted by feature columns, then target.

    A fit then sees the same rows whatever order the training trajectories
    were stacked in.
    """
    order = np.lexsort(np.column_stack([features, targets]).T[::-1])
    return features[order], targets[order]


def fit_ccf(features: np.ndarray, targets: np.ndarray, backend: BackendSpec,
            task: Optional[CcfTask] = None, random_state: int = 0) -> FittedCcf:
    """Fit one component regression.

    Forest and nearest-neighbor predictions are averages of training
    targets, so they stay inside [-1, 1].
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if features.ndim != 2 or features.shape[0] != targets.shape[0]:
        raise ValueError(f"features {features.shape} do not match targets {targets.shape}")
    n, d = features.shape
    if n < 1:
        raise ValueError("cannot fit a component regression on zero rows")

    if backend.kind == 'oracle':
        if task is None:
            raise ValueError("the oracle backend needs the task it stands in for")
        estimator = _OracleRegressor(backend.oracle, task)
    elif np.all(targets == targets[0]):
        estimator = _ConstantRegressor(targets[0])
    elif backend.kind == 'forest':
        features, targets = canonical_rows(features, targets)
        estimator = BlockForest(backend.trees, backend.min_leaf, random_state).fit(features, targets)
    else:
        features, targets = canonical_rows(features, targets)
        n_neighbors = backend.knn_k or math.ceil(n ** (2.0 / 3.0))
        estimator = make_pipeline(
            StandardScaler(),
            KNeighborsRegressor(n_neighbors=min(n_neighbors, n), metric='euclidean'),
        ).fit(features, targets)
    return FittedCcf(estimator=estimator, n_features=d, n_rows=n, kind=backend.kind)


def predict_ccf(model: FittedCcf, features: np.ndarray):
    """Predictions in [-1, 1]; a single 1-D query returns a float."""
    query = np.asarray(features, dtype=float)
    single = query.ndim == 1
    if single:
        query = query[None, :]
    if query.ndim != 2 or query.shape[1] != model.n_features:
        raise ValueError(
            f"feature dimension {query.shape[-1]} does not match the {model.n_features} used in training"
        )
    values = np.clip(model.estimator.predict(query), -1.0, 1.0)
    return float(values[0]) if single else values


def fit_component(dataset: Dataset, split: SplitAssignment, task: CcfTask,
                  backend: BackendSpec, random_state: int) -> FittedCcf:
    features, targets = build_training_rows(dataset, split, task)
    model = fit_ccf(features, targets, backend, task=task, random_state=random_state)
    logging.debug(
        f"Fitted {task.which}/{task.part} k={task.k} q={task.q}: {model.n_rows} rows x {model.n_features} features"
    )
    return model


def fit_g2_pair(dataset: Dataset, split: SplitAssignment, k: int, direction: Direction,
                backend: BackendSpec, seeds: Tuple[int, int]) -> Tuple[FittedCcf, FittedCcf]:
    """g2 depends on neither q nor nu, so one pair serves every q of a (k, b) column."""
    real = fit_component(dataset, split, CcfTask('g2', 'real', k, 0, direction), backend, seeds[0])
    imag = fit_component(dataset, split, CcfTask('g2', 'imag', k, 0, direction), backend, seeds[1])
    return real, imag


def fit_window_models(dataset: Dataset, split: SplitAssignment, length: int, direction: Direction,
                      backend: BackendSpec, seeds: Dict[str, int]) -> Dict[str, FittedCcf]:
    """g1 and g3 regressions for one window length.

    Their rows depend on (k, q) only through q + k, so every cell with the
    same window length shares these four models. The tasks are written
    with k = length and q = 0.
    """
    fitted = {}
    for which in ('g1', 'g3'):
        for part in PARTS:
            name = f"{which}_{part}"
            fitted[name] = fit_component(dataset, split, CcfTask(which, part, length, 0, direction),
                                         backend, seeds[name])
    return fitted


def fit_model_set(dataset: Dataset, split: SplitAssignment, k: int, q: int,
                  direction: Direction, backend: BackendSpec, seeds: Dict[str, int],
                  g2_pair: Optional[Tuple[FittedCcf, FittedCcf]] = None,
                  window_models: Optional[Dict[str, FittedCcf]] = None) -> CcfModelSet:
    """Assemble the six components of one cell; ``seeds`` maps 'g1_real' etc. to random states.

    Components not passed in are fit here.
    """
    if g2_pair is None:
        g2_pair = fit_g2_pair(dataset, split, k, direction, backend,
                              (seeds['g2_real'], seeds['g2_imag']))
    if window_models is None:
        window_models = fit_window_models(dataset, split, q + k, direction, backend, seeds)
    return CcfModelSet(
        g1_real=window_models['g1_real'], g1_imag=window_models['g1_imag'],
        g2_real=g2_pair[0], g2_imag=g2_pair[1],
        g3_real=window_models['g3_real'], g3_imag=window_models['g3_imag'],
        backend=backend.describe(),
        n_train_rows=window_models['g1_real'].n_rows,
    )
