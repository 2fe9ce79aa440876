#!/usr/bin/env python3
"""
Empirical deviation statistic on the evaluation half and its max over the
(q, direction) grid.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ccf_regression import (CcfModelSet, Direction, SplitAssignment, fit_g2_pair,
                            fit_model_set, fit_window_models, predict_ccf)
from seeding import derive_seed
from trajectory import Dataset, sliding_windows

# each residual part is a sum of three terms bounded by 1 in magnitude
GAMMA_UPPER_BOUND = 18.0


@dataclass(frozen=True)
class GammaCell:
    k: int
    q: int
    b: int
    value: float
    summand_count: int

    def __post_init__(self):
        if not 0.0 <= self.value <= GAMMA_UPPER_BOUND:
            raise ValueError(
                f"gamma for k={self.k}, q={self.q}, b={self.b} is {self.value}, outside [0, {GAMMA_UPPER_BOUND}]"
            )
        if self.summand_count < 1:
            raise ValueError(f"gamma for k={self.k}, q={self.q}, b={self.b} averages no summands")


@dataclass(frozen=True)
class PiSequence:
    """Pi^(k) for k = 0..K with Pi^(0) pinned to 1."""

    values: Tuple[float, ...]
    cells: Tuple[GammaCell, ...] = field(default=(), repr=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values or values[0] != 1.0:
            raise ValueError("Pi sequence must start with Pi^(0) = 1")
        if any(v < 0 for v in values):
            raise ValueError("Pi values must be non-negative")
        object.__setattr__(self, 'values', values)

    @property
    def K(self) -> int:
        return len(self.values) - 1


def residual_components(g1_real, g1_imag, g2_real, g2_imag, g3_real, g3_imag):
    """Real and imaginary parts of g1 - g2 * g3."""
    g_rm = g1_real - g2_real * g3_real + g2_imag * g3_imag
    g_im = g1_imag - g2_imag * g3_real - g2_real * g3_imag
    return g_rm, g_im


def residual_pair(models: CcfModelSet, full_window: np.ndarray, suffix_window: np.ndarray):
    """(g_Rm, g_Im) at evaluation point(s).

    ``full_window`` is X_t..X_{t+q+k-1}, ``suffix_window`` its last k steps.
    """
    g1 = (predict_ccf(models.g1_real, full_window), predict_ccf(models.g1_imag, full_window))
    g2 = (predict_ccf(models.g2_real, suffix_window), predict_ccf(models.g2_imag, suffix_window))
    g3 = (predict_ccf(models.g3_real, full_window), predict_ccf(models.g3_imag, full_window))
    return residual_components(g1[0], g1[1], g2[0], g2[1], g3[0], g3[1])


def evaluation_windows(dataset: Dataset, ids: Sequence[int], k: int, q: int) -> Tuple[np.ndarray, np.ndarray]:
    """Full and k-suffix windows for every evaluation index 2 <= t <= T-q-k."""
    T = dataset.T
    length = q + k
    if T - length - 1 < 1:
        raise ValueError(f"empty evaluation range for k={k}, q={q} with T={T}")
    full = sliding_windows(dataset.subset(ids), length, 1, T - length)
    d = dataset.p + 1
    return full, full[:, q * d:]


def gamma_hat(dataset: Dataset, split: SplitAssignment, models: CcfModelSet,
              k: int, q: int, direction: Direction, b: int = 1) -> GammaCell:
    """Average squared modulus of the factorization defect over the evaluation half."""
    full, suffix = evaluation_windows(dataset, split.eval_ids, k, q)
    g_rm, g_im = residual_pair(models, full, suffix)
    summands = np.square(g_rm) + np.square(g_im)
    # numpy reduces contiguous float arrays pairwise
    value = float(np.sum(summands)) / summands.shape[0]
    return GammaCell(k=k, q=q, b=b, value=value, summand_count=int(summands.shape[0]))


def pi_statistic(cells: Iterable[GammaCell]) -> float:
    values = [cell.value for cell in cells]
    if not values:
        raise ValueError("Pi needs at least one grid cell")
    return max(values)


def _g2_column(dataset, split, k, b, direction, backend, seed):
    seeds = (derive_seed(seed, 'fit', k, b, 'g2_real'), derive_seed(seed, 'fit', k, b, 'g2_imag'))
    try:
        return fit_g2_pair(dataset, split, k, direction, backend, seeds)
    except ValueError as e:
        raise ValueError(f"fitting g2 for k={k}, b={b}: {e}") from e


def _window_column(dataset, split, length, b, direction, backend, seed):
    seeds = {
        name: derive_seed(seed, 'fit', 'window', length, b, name)
        for name in ('g1_real', 'g1_imag', 'g3_real', 'g3_imag')
    }
    try:
        return fit_window_models(dataset, split, length, direction, backend, seeds)
    except ValueError as e:
        raise ValueError(f"fitting g1/g3 for window length {length}, b={b}: {e}") from e


def _gamma_cell(dataset, split, k, q, b, direction, backend, g2_pair, window_models) -> GammaCell:
    try:
        models = fit_model_set(dataset, split, k, q, direction, backend, {},
                               g2_pair=g2_pair, window_models=window_models)
        return gamma_hat(dataset, split, models, k, q, direction, b=b)
    except ValueError as e:
        raise ValueError(f"grid cell k={k}, q={q}, b={b}: {e}") from e
    except Exception as e:
        raise RuntimeError(f"grid cell k={k}, q={q}, b={b}: {e}") from e


def compute_pi_sequence(dataset: Dataset, split: SplitAssignment,
                        directions: Sequence[Direction], config) -> PiSequence:
    """Pi^(1..K) over q = 0..Q and all directions, models fit on the training half.

    g2 is fit once per (k, b) and g1/g3 once per (q + k, b); the grid cells
    only evaluate.
    """
    K, Q = config.K, config.Q
    if K < 1 or Q < 0 or not directions:
        raise ValueError(f"need K >= 1, Q >= 0 and at least one direction (K={K}, Q={Q}, B={len(directions)})")
    if dataset.T - Q - K - 1 < 1:
        raise ValueError(f"T={dataset.T} leaves no evaluation points for k={K}, q={Q}")

    B = len(directions)
    parallel = Parallel(n_jobs=config.threads, prefer='threads')
    columns = [(k, b) for k in range(1, K + 1) for b in range(1, B + 1)]
    g2_pairs = parallel(
        delayed(_g2_column)(dataset, split, k, b, directions[b - 1], config.backend, config.seed)
        for k, b in columns
    )
    g2_lookup = dict(zip(columns, g2_pairs))
    windows = [(length, b) for length in range(1, K + Q + 1) for b in range(1, B + 1)]
    window_fits = parallel(
        delayed(_window_column)(dataset, split, length, b, directions[b - 1], config.backend, config.seed)
        for length, b in windows
    )
    window_lookup = dict(zip(windows, window_fits))
    logging.debug(f"Fitted {len(columns)} g2 columns and {len(windows)} g1/g3 window columns")

    grid = [(k, q, b) for k in range(1, K + 1) for q in range(Q + 1) for b in range(1, B + 1)]
    cells: List[GammaCell] = parallel(
        delayed(_gamma_cell)(dataset, split, k, q, b, directions[b - 1], config.backend,
                             g2_lookup[(k, b)], window_lookup[(q + k, b)])
        for k, q, b in grid
    )

    values = [1.0]
    for k in range(1, K + 1):
        values.append(pi_statistic(cell for cell in cells if cell.k == k))
    logging.debug(f"Pi sequence: {values}")
    return PiSequence(values=tuple(values), cells=tuple(cells))


def write_gamma_grid(cells: Sequence[GammaCell], path: Union[str, Path]) -> Path:
    """CSV with columns k,q,b,value,count in grid order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [(c.k, c.q, c.b, c.value, c.summand_count) for c in cells],
        columns=['k', 'q', 'b', 'value', 'count'],
    )
    frame.to_csv(path, index=False, float_format='%.17g')
    return path
