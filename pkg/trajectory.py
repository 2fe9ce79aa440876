#!/usr/bin/env python3
"""
Trajectory data model for mdporder.

Trajectories hold (state, action, optional reward) triplets of a common
length T. Time indices are 1-based in every public function and error
message; storage is plain 0-based numpy arrays.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

SUPPORTED_FORMATS = ('csv', 'ndjson')
NDJSON_KEYS = {'traj', 't', 'state', 'action', 'reward'}


def _frozen_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One trajectory: states (T, p), actions (T,), optional rewards (T,)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: Optional[np.ndarray] = None

    def __post_init__(self):
        states = _frozen_array(self.states, 'states', 2)
        actions = _frozen_array(self.actions, 'actions', 1)
        if states.shape[0] < 1 or states.shape[1] < 1:
            raise ValueError(f"states must have T >= 1 and p >= 1, got shape {states.shape}")
        if actions.shape[0] != states.shape[0]:
            raise ValueError(
                f"actions length {actions.shape[0]} does not match states length {states.shape[0]}"
            )
        object.__setattr__(self, 'states', states)
        object.__setattr__(self, 'actions', actions)
        if self.rewards is not None:
            rewards = _frozen_array(self.rewards, 'rewards', 1)
            if rewards.shape[0] != states.shape[0]:
                raise ValueError(
                    f"rewards length {rewards.shape[0]} does not match states length {states.shape[0]}"
                )
            object.__setattr__(self, 'rewards', rewards)

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def p(self) -> int:
        return self.states.shape[1]

    @cached_property
    def chain(self) -> np.ndarray:
        """X_t = (S_t, A_t) stacked as a (T, p+1) array."""
        arr = np.hstack([self.states, self.actions[:, None]])
        arr.setflags(write=False)
        return arr

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        if (self.rewards is None) != (other.rewards is None):
            return False
        same = (np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions))
        if self.rewards is not None:
            same = same and np.array_equal(self.rewards, other.rewards)
        return bool(same)

    __hash__ = None


@dataclass(frozen=True)
class ChainVector:
    values: np.ndarray


@dataclass(frozen=True)
class Window:
    flat: np.ndarray
    span: Tuple[int, int]


@dataclass(frozen=True)
class Dataset:
    """N i.i.d. trajectories sharing p and T."""

    trajectories: Tuple[Trajectory, ...] = field(default_factory=tuple)

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, 'trajectories', trajs)
        if len(trajs) < 2:
            raise ValueError(f"a dataset needs at least 2 trajectories, got {len(trajs)}")
        first = trajs[0]
        for j, traj in enumerate(trajs, start=1):
            if traj.p != first.p:
                raise ValueError(f"trajectory {j} has state dimension {traj.p}, expected {first.p}")
            if traj.T != first.T:
                raise ValueError(f"trajectory {j} has length {traj.T}, expected {first.T}")
            if (traj.rewards is None) != (first.rewards is None):
                raise ValueError(f"trajectory {j}: rewards must be present on all trajectories or none")

    @property
    def N(self) -> int:
        return len(self.trajectories)

    @property
    def T(self) -> int:
        return self.trajectories[0].T

    @property
    def p(self) -> int:
        return self.trajectories[0].p

    @property
    def has_rewards(self) -> bool:
        return all(traj.rewards is not None for traj in self.trajectories)

    @cached_property
    def chain_tensor(self) -> np.ndarray:
        """All X_t as an (N, T, p+1) array."""
        arr = np.stack([traj.chain for traj in self.trajectories])
        arr.setflags(write=False)
        return arr

    def subset(self, ids: Iterable[int]) -> np.ndarray:
        """Chain tensor rows for the given 0-based trajectory indices."""
        return self.chain_tensor[np.asarray(list(ids), dtype=int)]


def chain_vector(traj: Trajectory, t: int) -> ChainVector:
    """X_t = (S_t^T, A_t)^T for 1 <= t <= T."""
    if not 1 <= t <= traj.T:
        raise ValueError(f"time index {t} out of range 1..{traj.T}")
    return ChainVector(values=traj.chain[t - 1].copy())


def window(traj: Trajectory, t1: int, t2: int) -> Window:
    """X_{t1} || ... || X_{t2} flattened in increasing t."""
    if not 1 <= t1 <= t2 <= traj.T:
        raise ValueError(f"invalid window span ({t1}, {t2}) for trajectory of length {traj.T}")
    return Window(flat=traj.chain[t1 - 1:t2].reshape(-1).copy(), span=(t1, t2))


def sliding_windows(chain: np.ndarray, length: int, start: int = 0,
                    stop: Optional[int] = None) -> np.ndarray:
    """Flattened windows of ``length`` consecutive X rows.

    ``chain`` is (N, T, d); returns (N * n_windows, length * d) for window
    starts ``start <= s < stop`` (0-based), trajectory-major.
    """
    n, T, d = chain.shape
    stop = T - length + 1 if stop is None else stop
    if start < 0 or stop > T - length + 1 or stop <= start:
        raise ValueError(f"empty window range: start={start}, stop={stop}, length={length}, T={T}")
    views = np.lib.stride_tricks.sliding_window_view(chain, length, axis=1)
    # views is (N, T-length+1, d, length); reorder so each X_t stays contiguous
    views = views[:, start:stop].transpose(0, 1, 3, 2)
    return views.reshape(n * (stop - start), length * d)


def dataset_to_records(dataset: Dataset) -> List[Dict[str, Any]]:
    """One NDJSON-shaped dict per time step, traj and t 1-based."""
    records = []
    for j, traj in enumerate(dataset.trajectories, start=1):
        for t in range(traj.T):
            row = {
                'traj': j,
                't': t + 1,
                'state': [float(v) for v in traj.states[t]],
                'action': float(traj.actions[t]),
            }
            if traj.rewards is not None:
                row['reward'] = float(traj.rewards[t])
            records.append(row)
    return records


def _assemble(grouped: Dict[Any, List[Tuple[int, int, list, float, Optional[float]]]]) -> Dataset:
    trajectories = []
    for traj_id, steps in grouped.items():
        expected = list(range(1, len(steps) + 1))
        observed = [t for _, t, _, _, _ in steps]
        if observed != expected:
            raise ValueError(f"trajectory {traj_id}: t must run 1..T contiguously, got {observed[:5]}...")
        has_reward = [r is not None for _, _, _, _, r in steps]
        if any(has_reward) and not all(has_reward):
            missing = steps[has_reward.index(False)][0]
            raise ValueError(f"row {missing}: reward missing while other rows of trajectory {traj_id} have one")
        trajectories.append(Trajectory(
            states=np.array([s for _, _, s, _, _ in steps], dtype=float),
            actions=np.array([a for _, _, _, a, _ in steps], dtype=float),
            rewards=np.array([r for _, _, _, _, r in steps], dtype=float) if all(has_reward) else None,
        ))
    lengths = {traj.T for traj in trajectories}
    if len(lengths) > 1:
        raise ValueError(f"ragged trajectories: lengths {sorted(lengths)}")
    return Dataset(tuple(trajectories))


def _check_finite(row_no: int, name: str, value) -> float:
    if isinstance(value, bool):
        raise ValueError(f"row {row_no}: {name} must be a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"row {row_no}: {name} is not a number ({value!r})")
    if not math.isfinite(number):
        raise ValueError(f"row {row_no}: {name} is not finite ({value!r})")
    return number


def dataset_from_records(records: Iterable[Dict[str, Any]]) -> Dataset:
    """Build a Dataset from NDJSON-shaped dicts (rows sorted by traj, t)."""
    grouped: Dict[Any, list] = {}
    last_key = None
    p = None
    for row_no, row in enumerate(records, start=1):
        if not isinstance(row, dict):
            raise ValueError(f"row {row_no}: expected an object, got {type(row).__name__}")
        unknown = set(row) - NDJSON_KEYS
        if unknown:
            raise ValueError(f"row {row_no}: unknown fields {sorted(unknown)}")
        for key in ('traj', 't', 'state', 'action'):
            if key not in row:
                raise ValueError(f"row {row_no}: missing field '{key}'")
        traj_id, t = row['traj'], row['t']
        if isinstance(traj_id, bool) or not isinstance(traj_id, (int, str)):
            raise ValueError(f"row {row_no}: traj must be an integer or a string label, got {traj_id!r}")
        if not isinstance(t, int) or isinstance(t, bool):
            raise ValueError(f"row {row_no}: t must be an integer, got {t!r}")
        if last_key is not None and traj_id != last_key[0] and traj_id in grouped:
            raise ValueError(f"row {row_no}: rows of trajectory {traj_id} are not contiguous")
        last_key = (traj_id, t)
        state = row['state']
        if not isinstance(state, list) or not state:
            raise ValueError(f"row {row_no}: state must be a non-empty list")
        if p is None:
            p = len(state)
        elif len(state) != p:
            raise ValueError(f"row {row_no}: state has dimension {len(state)}, expected {p}")
        values = [_check_finite(row_no, f"state[{i}]", v) for i, v in enumerate(state)]
        action = _check_finite(row_no, 'action', row['action'])
        reward = _check_finite(row_no, 'reward', row['reward']) if row.get('reward') is not None else None
        grouped.setdefault(traj_id, []).append((row_no, t, values, action, reward))
    if not grouped:
        raise ValueError("no rows found")
    return _assemble(grouped)


def _read_csv(path: Path) -> Dataset:
    try:
        frame = pd.read_csv(path, float_precision='round_trip', dtype={'traj': str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValueError(f"malformed CSV {path}: {e}")
    columns = list(frame.columns)
    if columns[:2] != ['traj', 't']:
        raise ValueError(f"CSV header must start with traj,t; got {','.join(columns[:2])}")
    rest = columns[2:]
    has_reward = bool(rest) and rest[-1] == 'reward'
    if has_reward:
        rest = rest[:-1]
    if not rest or rest[-1] != 'action':
        raise ValueError("CSV header must contain an action column after the state columns")
    state_cols = rest[:-1]
    expected = [f"s{i}" for i in range(1, len(state_cols) + 1)]
    if not state_cols or state_cols != expected:
        unknown = [c for c in state_cols if c not in expected] or state_cols
        raise ValueError(f"unknown or misordered columns {unknown}; expected {expected or ['s1']}")

    numeric = frame[columns[1:]].apply(pd.to_numeric, errors='coerce')
    values = numeric.to_numpy(dtype=float)
    finite = np.isfinite(values)
    if not finite.all():
        bad_row, bad_col = np.argwhere(~finite)[0]
        # data row n is file line n + 1
        raise ValueError(
            f"row {bad_row + 2}: column '{columns[1 + bad_col]}' is missing or not finite"
        )
    records = []
    p = len(state_cols)
    for i, traj_id in enumerate(frame['traj']):
        t_value = values[i, 0]
        if t_value != int(t_value):
            raise ValueError(f"row {i + 2}: t must be an integer, got {t_value}")
        row = {
            'traj': traj_id,
            't': int(t_value),
            'state': values[i, 1:1 + p].tolist(),
            'action': values[i, 1 + p],
        }
        if has_reward:
            row['reward'] = values[i, 2 + p]
        records.append(row)
    return dataset_from_records(records)


def _read_ndjson(path: Path) -> Dataset:
    records = []
    with open(path, 'r') as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"row {line_no}: invalid JSON ({e.msg})")
    return dataset_from_records(records)


def infer_format(path: Union[str, Path], fmt: Optional[str] = None) -> str:
    if fmt is None:
        suffix = Path(path).suffix.lower().lstrip('.')
        fmt = {'jsonl': 'ndjson', 'json': 'ndjson'}.get(suffix, suffix)
    if fmt not in SUPPORTED_FORMATS:
        raise ValueError(f"unsupported dataset format '{fmt}'; use one of {', '.join(SUPPORTED_FORMATS)}")
    return fmt


def read_dataset(path: Union[str, Path], fmt: Optional[str] = None) -> Dataset:
    """Load a dataset from CSV or NDJSON; format inferred from the suffix when omitted."""
    path = Path(path)
    fmt = infer_format(path, fmt)
    dataset = _read_csv(path) if fmt == 'csv' else _read_ndjson(path)
    logging.info(f"Loaded dataset {path}: N={dataset.N}, T={dataset.T}, p={dataset.p}")
    return dataset


def write_dataset(dataset: Dataset, path: Union[str, Path], fmt: Optional[str] = None) -> Path:
    """Write a dataset; values keep 17 significant digits so reading back is exact."""
    path = Path(path)
    fmt = infer_format(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == 'ndjson':
        with open(path, 'w') as f:
            for row in dataset_to_records(dataset):
                f.write(json.dumps(row) + '\n')
    else:
        blocks = []
        for j, traj in enumerate(dataset.trajectories, start=1):
            block = pd.DataFrame(traj.states, columns=[f"s{i}" for i in range(1, dataset.p + 1)])
            block.insert(0, 't', np.arange(1, traj.T + 1))
            block.insert(0, 'traj', j)
            block['action'] = traj.actions
            if dataset.has_rewards:
                block['reward'] = traj.rewards
            blocks.append(block)
        pd.concat(blocks, ignore_index=True).to_csv(path, index=False, float_format='%.17g')
    logging.info(f"Wrote dataset {path} ({fmt}): N={dataset.N}, T={dataset.T}, p={dataset.p}")
    return path
