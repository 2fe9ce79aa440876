#!/usr/bin/env python3
"""
Estimation pipeline and Monte Carlo harness.

run_estimate: split -> directions -> fit -> Pi -> Omega -> k_hat.
run_mc: repeated simulate -> estimate with per-rep seed substreams,
aggregated into the mean/MSE/empirical-distribution layout of the
simulation tables.
"""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ccf_regression import draw_directions, split_sample
from gamma_engine import compute_pi_sequence
from order_config import EstimatorConfig
from seeding import derive_seed
from signal_order import OrderEstimate, estimate_order, signal_curve
from simulators import SimSpec, default_true_order, simulate
from trajectory import Dataset

DISTRIBUTION_BINS = ('-1', '0', '1', '2', '3', '4', 'other', 'undetermined', 'error')
DEFAULT_REPS = 100
DEFAULT_TABLE_SETTINGS = ((6, 450), (12, 450), (18, 450))


class StageError(RuntimeError):
    """A pipeline failure annotated with the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def is_validation(self) -> bool:
        return isinstance(self.cause, ValueError)


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


def run_estimate(dataset: Dataset, config: EstimatorConfig) -> OrderEstimate:
    """Estimate the order of ``dataset``; identical inputs give identical output."""
    config = config.resolve(dataset.N, dataset.T).check(dataset.T, dataset.N)
    with _stage('split'):
        split = split_sample(dataset, config.seed)
    logging.debug(f"Split: eval={split.eval_ids}, train={split.train_ids}")
    with _stage('directions'):
        directions = draw_directions(config.B, dataset.p, config.seed)
    with _stage('fit'):
        pi = compute_pi_sequence(dataset, split, directions, config)
    with _stage('signal'):
        curve = signal_curve(pi, config.ridge, config.eta, split.n_eval, dataset.T,
                             mode=config.ridge_mode)
        estimate = estimate_order(curve, config.tau)
    if curve.degenerate:
        logging.warning("All Pi values are zero; the order is left undetermined")
    logging.debug(f"Estimated order {estimate.k_hat} (undetermined={estimate.undetermined})")
    return replace(estimate, pi=pi)


@dataclass(frozen=True)
class RepOutcome:
    rep: int
    k_hat: Optional[int]
    undetermined: bool
    omega: Optional[Tuple[float, ...]]
    error: Optional[str]
    seconds: float


@dataclass(frozen=True)
class McReport:
    """Aggregated Monte Carlo outcome; mean and MSE cover determined reps only."""

    spec: SimSpec
    k0: int
    reps: int
    k_hats: Tuple[Optional[int], ...]
    undetermined: Tuple[bool, ...]
    errors: Tuple[Optional[str], ...]
    seconds: Tuple[float, ...]
    mean: Optional[float]
    mse: Optional[float]
    distribution: Dict[str, float]
    mean_omega: Tuple[float, ...] = field(default=())

    @property
    def wall_clock(self) -> Dict[str, float]:
        times = np.asarray(self.seconds)
        return {'total': float(times.sum()), 'mean': float(times.mean()), 'max': float(times.max())}


def _mc_rep(spec: SimSpec, config: EstimatorConfig, rep: int, master_seed: int) -> RepOutcome:
    rep_spec = replace(spec, seed=derive_seed(master_seed, 'rep', rep, 'simulate'))
    rep_config = replace(config, seed=derive_seed(master_seed, 'rep', rep, 'estimate'), threads=1)
    start = time.perf_counter()
    try:
        with _stage('simulate'):
            dataset = simulate(rep_spec)
        estimate = run_estimate(dataset, rep_config)
    except Exception as e:
        logging.warning(f"Rep {rep} failed: {e}")
        return RepOutcome(rep, None, False, None, str(e), time.perf_counter() - start)
    elapsed = time.perf_counter() - start
    logging.info(f"Rep {rep}: k_hat={estimate.k_hat} ({elapsed:.1f}s)")
    return RepOutcome(rep, estimate.k_hat, estimate.undetermined, estimate.curve.omega, None, elapsed)


def _bin_for(outcome: RepOutcome, k0: int) -> str:
    if outcome.error is not None:
        return 'error'
    if outcome.undetermined:
        return 'undetermined'
    label = str(outcome.k_hat - k0)
    return label if label in DISTRIBUTION_BINS else 'other'


def aggregate(spec: SimSpec, outcomes: Sequence[RepOutcome], k0: int) -> McReport:
    """Fold rep outcomes in rep order."""
    outcomes = sorted(outcomes, key=lambda o: o.rep)
    reps = len(outcomes)
    counts = {label: 0 for label in DISTRIBUTION_BINS}
    for outcome in outcomes:
        counts[_bin_for(outcome, k0)] += 1
    determined = [o.k_hat for o in outcomes if o.error is None and not o.undetermined]
    mean = mse = None
    if determined:
        values = np.asarray(determined, dtype=float)
        mean = float(values.mean())
        mse = float(np.mean((values - k0) ** 2))
    curves = [o.omega for o in outcomes if o.omega is not None]
    mean_omega = tuple(float(v) for v in np.mean(np.asarray(curves), axis=0)) if curves else ()
    return McReport(
        spec=spec,
        k0=k0,
        reps=reps,
        k_hats=tuple(o.k_hat for o in outcomes),
        undetermined=tuple(o.undetermined for o in outcomes),
        errors=tuple(o.error for o in outcomes),
        seconds=tuple(o.seconds for o in outcomes),
        mean=mean,
        mse=mse,
        distribution={label: counts[label] / reps for label in DISTRIBUTION_BINS},
        mean_omega=mean_omega,
    )


def run_mc(spec: SimSpec, config: EstimatorConfig, reps: int, k0: Optional[int] = None,
           threads: int = 1) -> McReport:
    """``reps`` independent simulate -> estimate runs; failures are counted, not raised."""
    if reps < 1:
        raise ValueError(f"reps must be at least 1, got {reps}")
    k0 = default_true_order(spec.model) if k0 is None else k0
    config.resolve(spec.N, spec.T).check(spec.T, spec.N)
    logging.info(f"Monte Carlo: {reps} reps of {spec.model} (N={spec.N}, T={spec.T}, p={spec.p}) on {threads} workers")
    outcomes = Parallel(n_jobs=threads)(
        delayed(_mc_rep)(spec, config, rep, config.seed) for rep in range(1, reps + 1)
    )
    report = aggregate(spec, outcomes, k0)
    logging.info(f"Monte Carlo done: mean={report.mean}, mse={report.mse}")
    return report


def mc_summary(report: McReport, config: Optional[EstimatorConfig] = None,
               include_timings: bool = False) -> Dict[str, Any]:
    summary: Dict[str, Any] = {
        'model': report.spec.model,
        'n': report.spec.N,
        't': report.spec.T,
        'p': report.spec.p,
        'k0': report.k0,
        'reps': report.reps,
        'mean': report.mean,
        'mse': report.mse,
        'bins': dict(report.distribution),
        'errors': sum(1 for e in report.errors if e is not None),
        'mean_omega': list(report.mean_omega),
    }
    if config is not None:
        params = asdict(replace(config, threads=1))
        params.pop('threads')
        params['backend'] = config.backend.describe()
        summary['config'] = params
    if include_timings:
        summary['wall_clock'] = report.wall_clock
    return summary


def write_mc_outputs(report: McReport, csv_path: Union[str, Path], json_path: Optional[Union[str, Path]] = None,
                     config: Optional[EstimatorConfig] = None, include_timings: bool = False) -> Tuple[Path, Path]:
    """Per-rep CSV plus a JSON summary sidecar.

    The seconds column stays empty unless ``include_timings`` is set, so
    repeated runs produce identical files.
    """
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path is not None else csv_path.with_suffix('.json')
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        'rep': range(1, report.reps + 1),
        'k_hat': pd.Series(list(report.k_hats), dtype=object),
        'undetermined': [str(u).lower() for u in report.undetermined],
        'seconds': pd.Series([f"{s:.3f}" if include_timings else None for s in report.seconds], dtype=object),
    })
    frame.to_csv(csv_path, index=False)
    with open(json_path, 'w') as f:
        json.dump(mc_summary(report, config, include_timings), f, indent=2)
        f.write('\n')
    logging.info(f"Monte Carlo results saved to {csv_path} and {json_path}")
    return csv_path, json_path


def run_table(spec: SimSpec, config: EstimatorConfig, reps: int,
              settings: Sequence[Tuple[int, int]] = DEFAULT_TABLE_SETTINGS,
              k0: Optional[int] = None, threads: int = 1) -> List[McReport]:
    """One Monte Carlo run per (N, T) setting; B and the Model 2 coefficient follow each setting."""
    reports = []
    for n, t in settings:
        setting_spec = replace(spec, N=n, T=t)
        reports.append(run_mc(setting_spec, config, reps, k0=k0, threads=threads))
    return reports


def write_table_csv(reports: Sequence[McReport], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for report in reports:
        row = {'n': report.spec.N, 't': report.spec.T, 'reps': report.reps,
               'mean': report.mean, 'mse': report.mse}
        row.update({f"d{label}" if label.lstrip('-').isdigit() else label: share
                    for label, share in report.distribution.items()})
        rows.append(row)
    pd.DataFrame(rows).to_csv(path, index=False, float_format='%.6g')
    return path
