import os
import math
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Any, List, Optional

import yaml

from ccf_regression import BackendSpec
from signal_order import RIDGE_MODES, RidgeSchedule

THREADS_ENV = 'MDPORDER_THREADS'

# Keys accepted in YAML parameter files, named like the CLI flags
CONFIG_KEYS = {
    'K', 'Q', 'B', 'eta', 'tau', 'c0', 'a', 'ridge_mode', 'seed', 'threads',
    'backend', 'trees', 'min_leaf', 'knn_k',
}
INTEGER_KEYS = ('K', 'Q', 'B', 'seed', 'threads')


def _as_int(key: str, value: Any) -> int:
    """Integer value of ``key``; fractional floats and booleans are rejected, not truncated."""
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ValueError(f"{key} must be an integer, got {value!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ValueError(f"{key} must be an integer, got {value!r}")


def default_directions(N: int, T: int) -> int:
    """B = floor((NT)^(1/4)), never below 1."""
    return max(1, int(math.floor((N * T) ** 0.25)))


def resolve_threads(requested: Optional[int] = None) -> int:
    """MDPORDER_THREADS beats the requested count; default is every core."""
    env_value = os.environ.get(THREADS_ENV)
    if env_value:
        try:
            threads = int(env_value)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got '{env_value}'")
    elif requested is not None:
        threads = _as_int('threads', requested)
    else:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"thread count must be at least 1, got {threads}")
    return threads


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning of the order estimator. ``B=None`` resolves to floor((NT)^(1/4))."""

    K: int = 6
    Q: int = 5
    B: Optional[int] = None
    eta: float = 3.0
    tau: float = 0.5
    c0: float = 0.1
    a: float = 1.0
    ridge_mode: str = 'semi'
    backend: BackendSpec = field(default_factory=BackendSpec)
    seed: int = 0
    threads: int = 1

    @property
    def ridge(self) -> RidgeSchedule:
        return RidgeSchedule(c0=self.c0, a=self.a)

    def resolve(self, N: int, T: int) -> 'EstimatorConfig':
        """Fill in the data-dependent default for B."""
        if self.B is not None:
            return self
        return replace(self, B=default_directions(N, T))

    def check(self, T: Optional[int] = None, N: Optional[int] = None) -> 'EstimatorConfig':
        result = validate_config(self, T, N)
        for warning in result['warnings']:
            logging.warning(f"Estimator config: {warning}")
        if not result['valid']:
            raise ValueError('; '.join(result['errors']))
        return self

    @classmethod
    def from_mapping(cls, values: Dict[str, Any], base: Optional['EstimatorConfig'] = None) -> 'EstimatorConfig':
        """Overlay ``values`` (YAML/JSON/CLI names) on ``base``."""
        unknown = set(values) - CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        config = base or cls()
        backend = config.backend
        backend_changes = {}
        if values.get('backend') is not None:
            backend_changes['kind'] = values['backend']
        if values.get('trees') is not None:
            backend_changes['trees'] = _as_int('trees', values['trees'])
        if values.get('min_leaf') is not None:
            backend_changes['min_leaf'] = _as_int('min_leaf', values['min_leaf'])
        if values.get('knn_k') is not None:
            backend_changes['knn_k'] = _as_int('knn_k', values['knn_k'])
        if backend_changes:
            backend = replace(backend, **backend_changes)

        changes: Dict[str, Any] = {'backend': backend}
        for key in INTEGER_KEYS:
            if values.get(key) is not None:
                changes[key] = _as_int(key, values[key])
        casts = {'eta': float, 'tau': float, 'c0': float, 'a': float, 'ridge_mode': str}
        for key, cast in casts.items():
            if values.get(key) is not None:
                try:
                    changes[key] = cast(values[key])
                except (TypeError, ValueError):
                    raise ValueError(f"{key} must be a valid {cast.__name__}, got {values[key]!r}")
        return replace(config, **changes)


def validate_config(config: EstimatorConfig, T: Optional[int] = None, N: Optional[int] = None) -> Dict[str, Any]:
    """Validate estimator parameters, optionally against the dataset shape."""
    errors: List[str] = []
    warnings: List[str] = []

    if config.K < 1:
        errors.append(f"K must be at least 1, got {config.K}")
    if config.Q < 0:
        errors.append(f"Q must be non-negative, got {config.Q}")
    if config.B is not None and config.B < 1:
        errors.append(f"B must be at least 1, got {config.B}")
    if not 0 < config.tau < 1:
        errors.append(f"tau must lie in (0, 1), got {config.tau}")
    if not config.eta >= 1:
        errors.append(f"eta must be at least 1, got {config.eta}")
    elif config.eta > 6:
        warnings.append(f"eta={config.eta} strongly favours overestimating the order")
    if not config.c0 > 0:
        errors.append(f"c0 must be positive, got {config.c0}")
    if not config.a > 0:
        errors.append(f"ridge exponent a must be positive, got {config.a}")
    if config.ridge_mode not in RIDGE_MODES:
        errors.append(f"ridge_mode must be one of {', '.join(RIDGE_MODES)}, got '{config.ridge_mode}'")
    if config.seed < 0:
        errors.append(f"seed must be non-negative, got {config.seed}")
    if config.threads < 1:
        errors.append(f"threads must be at least 1, got {config.threads}")
    if T is not None and config.Q + config.K > T - 2:
        errors.append(f"Q + K must not exceed T - 2 (Q={config.Q}, K={config.K}, T={T})")
    if N is not None and T is not None and config.B is not None and config.B > 4 * default_directions(N, T):
        warnings.append(f"B={config.B} is far above the default {default_directions(N, T)} for N={N}, T={T}")
    if config.backend.kind == 'oracle':
        warnings.append("the oracle backend is meant for tests only")

    return {
        'valid': len(errors) == 0,
        'errors': errors,
        'warnings': warnings,
    }


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a YAML parameter file into a plain mapping."""
    with open(path, 'r') as f:
        values = yaml.safe_load(f) or {}
    if not isinstance(values, dict):
        raise ValueError(f"configuration file {path} must hold a mapping")
    logging.info(f"Loaded estimator parameters from {path}: {sorted(values)}")
    return values
