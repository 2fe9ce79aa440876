#!/usr/bin/env python3
"""
Synthetic data generators: the two order-2 VAR-type decision processes,
the glucose/insulin process that mimics the OhioT1DM cohort, and an i.i.d.
null model.

Every trajectory draws from its own substreams keyed by
(seed, model, trajectory index, stream tag), so trajectories can be built
independently and in parallel and equal specs give identical datasets.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from seeding import derive_rng
from trajectory import Dataset, Trajectory

MODELS = ('model1', 'model2', 'ohio', 'iid')
DEFAULT_BURN_IN = 100

# Glucose-process coefficients on X_t and X_{t+1}, X = (glucose, intake, exercise, insulin)
OHIO_LAG2 = np.array([-0.377, 0.165, 0.329, -5.271])
OHIO_LAG1 = np.array([1.145, 0.3, -4.388, -1.387])
OHIO_ACTION_PMF = (0.8, 0.155, 0.03, 0.01, 0.005)
OHIO_INTAKE_PROB = 0.1
OHIO_INTAKE_DF = 10
OHIO_EXERCISE_PROB = 0.015
OHIO_EXERCISE_RATE = 5


@dataclass(frozen=True)
class SimSpec:
    """Experimental design knobs for one synthetic dataset."""

    model: str
    N: int
    T: int
    p: int = 3
    seed: int = 0
    burn_in: int = DEFAULT_BURN_IN
    noise_scale_override: Optional[float] = None
    initial_states: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model '{self.model}'; use one of {', '.join(MODELS)}")
        if self.N < 2:
            raise ValueError(f"N must be at least 2, got {self.N}")
        if self.T < 10:
            raise ValueError(f"T must be at least 10, got {self.T}")
        if self.p < 1:
            raise ValueError(f"p must be at least 1, got {self.p}")
        if self.model == 'ohio' and self.p != 3:
            raise ValueError(f"the ohio model has a 3-dimensional state, got p={self.p}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be non-negative, got {self.burn_in}")
        if self.noise_scale_override is not None and not self.noise_scale_override >= 0:
            raise ValueError(f"noise_scale_override must be non-negative, got {self.noise_scale_override}")
        if self.initial_states is not None:
            if self.model not in ('model1', 'model2'):
                raise ValueError("initial_states only applies to model1 and model2")
            if len(self.initial_states) != 2 or any(len(s) != self.p for s in self.initial_states):
                raise ValueError(f"initial_states must be two state vectors of dimension {self.p}")


def exchange_matrix(p: int) -> np.ndarray:
    """p x p anti-diagonal matrix of ones."""
    return np.fliplr(np.eye(p))


def action_rule(state: np.ndarray) -> float:
    """A_t = 1(1^T S_t > 0)."""
    return 1.0 if float(np.sum(state)) > 0 else 0.0


def switch_matrix(action: float, p: int) -> np.ndarray:
    """M(a) = a * exchange + (1 - a) * identity."""
    return action * exchange_matrix(p) + (1.0 - action) * np.eye(p)


def model1_step(s_lag2: np.ndarray, action_lag1: float, eps: np.ndarray) -> np.ndarray:
    return 0.8 * switch_matrix(action_lag1, s_lag2.shape[0]) @ s_lag2 + eps


def model2_lag2_coefficient(N: int, T: int) -> float:
    """sqrt(ln(NT)^3 / (NT)); shrinks to 0 as NT grows."""
    nt = float(N) * float(T)
    return math.sqrt(math.log(nt) ** 3 / nt)


def model2_step(s_lag2: np.ndarray, s_lag1: np.ndarray, action_lag1: float,
                eps: np.ndarray, lag2_coef: float) -> np.ndarray:
    m = switch_matrix(action_lag1, s_lag2.shape[0])
    return lag2_coef * m @ s_lag2 + 0.4 * m @ s_lag1 + eps


def ohio_glucose_step(x_lag2: np.ndarray, x_lag1: np.ndarray, eps: float) -> float:
    """Glucose at t+2 from X_t and X_{t+1}."""
    return float(OHIO_LAG2 @ x_lag2 + OHIO_LAG1 @ x_lag1 + eps)


def _rewards(states: np.ndarray) -> np.ndarray:
    # R_t = mean of S_{t+1}; the last step has no successor
    rewards = np.zeros(states.shape[0])
    rewards[:-1] = states[1:].mean(axis=1)
    return rewards


def _vector_trajectory(spec: SimSpec, j: int) -> Trajectory:
    p = spec.p
    scale = math.sqrt(3.0 / p) if spec.noise_scale_override is None else spec.noise_scale_override
    total = spec.burn_in + spec.T
    states = np.zeros((total, p))
    actions = np.zeros(total)
    if spec.initial_states is not None:
        states[0] = spec.initial_states[0]
        states[1] = spec.initial_states[1]
    else:
        states[:2] = scale * derive_rng(spec.seed, spec.model, j, 'init').standard_normal((2, p))
    eps = scale * derive_rng(spec.seed, spec.model, j, 'noise').standard_normal((total, p))
    actions[0] = action_rule(states[0])
    actions[1] = action_rule(states[1])
    lag2_coef = model2_lag2_coefficient(spec.N, spec.T) if spec.model == 'model2' else 0.0
    for t in range(2, total):
        if spec.model == 'model1':
            states[t] = model1_step(states[t - 2], actions[t - 1], eps[t])
        else:
            states[t] = model2_step(states[t - 2], states[t - 1], actions[t - 1], eps[t], lag2_coef)
        actions[t] = action_rule(states[t])
    states, actions = states[spec.burn_in:], actions[spec.burn_in:]
    return Trajectory(states=states, actions=actions, rewards=_rewards(states))


def _ohio_trajectory(spec: SimSpec, j: int) -> Trajectory:
    scale = 1.0 if spec.noise_scale_override is None else spec.noise_scale_override
    total = spec.burn_in + spec.T

    intake_rng = derive_rng(spec.seed, 'ohio', j, 'intake')
    intake_on = intake_rng.random(total) < OHIO_INTAKE_PROB
    intake = np.where(intake_on, intake_rng.chisquare(OHIO_INTAKE_DF, total), 0.0)

    exercise_rng = derive_rng(spec.seed, 'ohio', j, 'exercise')
    exercise_on = exercise_rng.random(total) < OHIO_EXERCISE_PROB
    exercise = np.where(exercise_on, exercise_rng.poisson(OHIO_EXERCISE_RATE, total), 0.0)

    insulin = derive_rng(spec.seed, 'ohio', j, 'action').choice(
        len(OHIO_ACTION_PMF), size=total, p=OHIO_ACTION_PMF
    ).astype(float)

    glucose = np.zeros(total)
    glucose[:2] = scale * derive_rng(spec.seed, 'ohio', j, 'init').standard_normal(2)
    eps = scale * derive_rng(spec.seed, 'ohio', j, 'noise').standard_normal(total)
    chain = np.column_stack([glucose, intake, exercise, insulin])
    for t in range(2, total):
        chain[t, 0] = ohio_glucose_step(chain[t - 2], chain[t - 1], eps[t])
    chain = chain[spec.burn_in:]
    states = chain[:, :3]
    return Trajectory(states=states, actions=chain[:, 3], rewards=_rewards(states))


def _iid_trajectory(spec: SimSpec, j: int) -> Trajectory:
    scale = 1.0 if spec.noise_scale_override is None else spec.noise_scale_override
    states = scale * derive_rng(spec.seed, 'iid', j, 'state').standard_normal((spec.T, spec.p))
    actions = derive_rng(spec.seed, 'iid', j, 'action').integers(0, 2, spec.T).astype(float)
    return Trajectory(states=states, actions=actions, rewards=_rewards(states))


_BUILDERS = {
    'model1': _vector_trajectory,
    'model2': _vector_trajectory,
    'ohio': _ohio_trajectory,
    'iid': _iid_trajectory,
}


def _simulate(spec: SimSpec, expected: Sequence[str], n_jobs: int) -> Dataset:
    if spec.model not in expected:
        raise ValueError(f"spec is for model '{spec.model}', expected {' or '.join(expected)}")
    builder = _BUILDERS[spec.model]
    trajectories = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(builder)(spec, j) for j in range(spec.N)
    )
    logging.debug(f"Simulated {spec.model}: N={spec.N}, T={spec.T}, p={spec.p}, seed={spec.seed}")
    return Dataset(tuple(trajectories))


def simulate_model1(spec: SimSpec, n_jobs: int = 1) -> Dataset:
    return _simulate(spec, ('model1',), n_jobs)


def simulate_model2(spec: SimSpec, n_jobs: int = 1) -> Dataset:
    return _simulate(spec, ('model2',), n_jobs)


def simulate_ohio(spec: SimSpec, n_jobs: int = 1) -> Dataset:
    return _simulate(spec, ('ohio',), n_jobs)


def simulate_iid(spec: SimSpec, n_jobs: int = 1) -> Dataset:
    return _simulate(spec, ('iid',), n_jobs)


def simulate(spec: SimSpec, n_jobs: int = 1) -> Dataset:
    """Dispatch on ``spec.model``."""
    return _simulate(spec, MODELS, n_jobs)


def default_true_order(model: str) -> int:
    return 1 if model == 'iid' else 2
