from flask import request, jsonify
import logging
import time

from experiment import StageError, run_estimate
from gamma_engine import PiSequence
from order_config import EstimatorConfig, resolve_threads
from signal_order import RidgeSchedule, estimate_order, estimate_to_dict, signal_curve
from simulators import DEFAULT_BURN_IN, SimSpec, simulate
from trajectory import dataset_from_records, dataset_to_records

SPEC_FIELDS = {'model', 'n', 't', 'p', 'seed', 'burn_in', 'noise_scale'}
SIGNAL_FIELDS = {'pi', 'n_eval', 't', 'eta', 'tau', 'c0', 'a', 'ridge_mode'}


def _json_body() -> dict:
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise ValueError("request body must be a JSON object")
    return data


def _int_field(data: dict, key: str, default=None) -> int:
    value = data.get(key, default)
    if value is None:
        raise ValueError(f"missing field '{key}'")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"'{key}' must be an integer, got {value!r}")
    return value


def sim_spec_from_json(data: dict) -> SimSpec:
    """SimSpec from the lower-case field names used by the CLI flags."""
    if not isinstance(data, dict):
        raise ValueError("'spec' must be an object")
    unknown = set(data) - SPEC_FIELDS
    if unknown:
        raise ValueError(f"unknown spec fields: {', '.join(sorted(unknown))}")
    if 'model' not in data:
        raise ValueError("missing field 'model'")
    noise = data.get('noise_scale')
    return SimSpec(
        model=str(data['model']),
        N=_int_field(data, 'n'),
        T=_int_field(data, 't'),
        p=_int_field(data, 'p', 3),
        seed=_int_field(data, 'seed', 0),
        burn_in=_int_field(data, 'burn_in', DEFAULT_BURN_IN),
        noise_scale_override=float(noise) if noise is not None else None,
    )


def _error(message: str, status: int):
    return jsonify({'success': False, 'error': message}), status


def register_routes(app, limiter):
    """Register all routes with the Flask app"""

    @app.route('/health')
    @limiter.exempt  # Exempt from rate limiting for health checks
    def health():
        return jsonify({
            "status": "healthy",
            "timestamp": int(time.time())
        }), 200

    @app.route('/api/simulate', methods=['POST'])
    @limiter.limit("30 per minute")
    def simulate_dataset():
        """Simulate a dataset and return it as NDJSON-shaped records"""
        try:
            spec = sim_spec_from_json(_json_body().get('spec'))
            dataset = simulate(spec)
            logging.info(f"Simulated {spec.model} dataset N={spec.N}, T={spec.T} for API request")
            return jsonify({'success': True, 'records': dataset_to_records(dataset)})
        except ValueError as e:
            return _error(str(e), 400)
        except Exception as e:
            logging.error(f"Error simulating dataset: {str(e)}")
            return _error(str(e), 500)

    @app.route('/api/estimate', methods=['POST'])
    @limiter.limit("10 per minute")
    def estimate():
        """Estimate the order of the posted trajectories"""
        try:
            data = _json_body()
            records = data.get('records')
            if not isinstance(records, list):
                raise ValueError("'records' must be a list of rows")
            values = dict(data.get('config') or {})
            values['threads'] = resolve_threads(values.get('threads', 1))
            config = EstimatorConfig.from_mapping(values)
            result = run_estimate(dataset_from_records(records), config)
            response = estimate_to_dict(result)
            response['success'] = True
            return jsonify(response)
        except StageError as e:
            if e.is_validation:
                return _error(str(e), 400)
            logging.error(f"Error estimating order: {str(e)}")
            return _error(str(e), 500)
        except ValueError as e:
            return _error(str(e), 400)
        except Exception as e:
            logging.error(f"Error estimating order: {str(e)}")
            return _error(str(e), 500)

    @app.route('/api/signal', methods=['POST'])
    @limiter.limit("60 per minute")
    def signal():
        """Re-threshold a stored Pi sequence without refitting"""
        try:
            data = _json_body()
            unknown = set(data) - SIGNAL_FIELDS
            if unknown:
                raise ValueError(f"unknown fields: {', '.join(sorted(unknown))}")
            if not isinstance(data.get('pi'), list):
                raise ValueError("'pi' must be a list starting with 1")
            defaults = EstimatorConfig()
            pi = PiSequence(values=tuple(float(v) for v in data['pi']))
            if pi.K < 1:
                raise ValueError("'pi' needs at least Pi^(0) and Pi^(1)")
            schedule = RidgeSchedule(c0=float(data.get('c0', defaults.c0)), a=float(data.get('a', defaults.a)))
            curve = signal_curve(
                pi, schedule,
                eta=float(data.get('eta', defaults.eta)),
                n_eval=_int_field(data, 'n_eval'),
                T=_int_field(data, 't'),
                mode=str(data.get('ridge_mode', defaults.ridge_mode)),
            )
            result = estimate_order(curve, float(data.get('tau', defaults.tau)))
            response = estimate_to_dict(result, pi)
            response['success'] = True
            return jsonify(response)
        except (TypeError, ValueError) as e:
            return _error(str(e), 400)
        except Exception as e:
            logging.error(f"Error computing signal curve: {str(e)}")
            return _error(str(e), 500)

    @app.errorhandler(404)
    def not_found(error):
        return _error('Not found', 404)

    @app.errorhandler(500)
    def internal_error(error):
        return _error('Internal server error', 500)
