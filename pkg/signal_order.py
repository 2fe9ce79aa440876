#!/usr/bin/env python3
"""
Ridge-ratio signal curve and the order estimate.

Omega^(k) = ((Pi^(k))^eta + c) / ((Pi^(k-1))^eta + c) is small at the true
order and close to 1 beyond it; the estimate is the largest k whose
Omega^(k) is at most tau.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from gamma_engine import PiSequence

RIDGE_MODES = ('semi', 'plain')


@dataclass(frozen=True)
class RidgeSchedule:
    """c_{N,T} = c0 * ln(n)^(a/2 + 1) * n^(-a/2) with n = N_eval * T."""

    c0: float = 0.1
    a: float = 1.0

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError(f"ridge c0 must be positive, got {self.c0}")
        if not self.a > 0:
            raise ValueError(f"ridge exponent a must be positive, got {self.a}")

    def value(self, n_eval: int, T: int) -> float:
        return ridge_value(self, n_eval, T)


@dataclass(frozen=True)
class SignalCurve:
    omega: Tuple[float, ...]
    ridge_used: float
    eta: float
    degenerate: bool = False
    mode: str = 'semi'


@dataclass(frozen=True)
class OrderEstimate:
    k_hat: Optional[int]
    tau: float
    curve: SignalCurve
    undetermined: bool
    pi: Optional[PiSequence] = None


def ridge_value(schedule: RidgeSchedule, n_eval: int, T: int) -> float:
    if n_eval < 1 or T < 1:
        raise ValueError(f"ridge needs positive N_eval and T, got {n_eval} and {T}")
    n = float(n_eval) * float(T)
    if n < 2:
        raise ValueError(f"ridge needs N_eval * T >= 2, got {n:g}")
    return schedule.c0 * math.log(n) ** (schedule.a / 2.0 + 1.0) * n ** (-schedule.a / 2.0)


def signal_curve(pi: PiSequence, schedule: RidgeSchedule, eta: float, n_eval: int, T: int,
                 mode: str = 'semi') -> SignalCurve:
    """Omega^(k) for k = 1..K.

    ``semi`` scales the ridge by (max_k Pi^(k))^eta, which amounts to
    rescaling Pi by its maximum; ``plain`` adds the raw ridge.
    """
    if mode not in RIDGE_MODES:
        raise ValueError(f"unknown ridge mode '{mode}'; use one of {', '.join(RIDGE_MODES)}")
    values = np.asarray(pi.values, dtype=float)
    if values[0] != 1.0:
        raise ValueError("Pi sequence must start with Pi^(0) = 1")
    ridge = ridge_value(schedule, n_eval, T)
    peak = float(values[1:].max())
    K = values.shape[0] - 1
    if peak == 0.0:
        return SignalCurve(omega=(1.0,) * K, ridge_used=0.0 if mode == 'semi' else ridge,
                           eta=eta, degenerate=True, mode=mode)

    if mode == 'semi':
        powered = (values / peak) ** eta
        ridge_used = ridge * peak ** eta
    else:
        powered = values ** eta
        ridge_used = ridge
    omega = (powered[1:] + ridge) / (powered[:-1] + ridge)
    return SignalCurve(omega=tuple(float(w) for w in omega), ridge_used=float(ridge_used),
                       eta=eta, degenerate=False, mode=mode)


def estimate_order(curve: SignalCurve, tau: float) -> OrderEstimate:
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    below = [k for k, w in enumerate(curve.omega, start=1) if w <= tau]
    if not below:
        return OrderEstimate(k_hat=None, tau=tau, curve=curve, undetermined=True)
    return OrderEstimate(k_hat=max(below), tau=tau, curve=curve, undetermined=False)


def estimate_to_dict(estimate: OrderEstimate, pi: Optional[PiSequence] = None) -> Dict[str, Any]:
    """JSON shape emitted by ``estimate``: k_hat, undetermined, tau, eta, ridge, pi, omega."""
    pi = pi if pi is not None else estimate.pi
    if pi is None:
        raise ValueError("the estimate carries no Pi sequence")
    return {
        'k_hat': estimate.k_hat,
        'undetermined': estimate.undetermined,
        'tau': estimate.tau,
        'eta': estimate.curve.eta,
        'ridge': estimate.curve.ridge_used,
        'pi': list(pi.values),
        'omega': list(estimate.curve.omega),
    }


def write_curve_csv(omega, path: Union[str, Path]) -> Path:
    """Two-column k,omega CSV, k = 1..K."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({'k': np.arange(1, len(omega) + 1), 'omega': list(omega)})
    frame.to_csv(path, index=False, float_format='%.17g')
    return path
