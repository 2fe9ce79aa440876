import os
import logging
from flask import Flask
from flask_limiter import Limiter
from flask_limiter.util import get_remote_address
from prometheus_flask_exporter import PrometheusMetrics
import routes

RATE_LIMITS_ENV = 'MDPORDER_RATE_LIMITS'
DEFAULT_RATE_LIMITS = ["200 per day", "50 per hour"]

# Set up logging
logging.basicConfig(level=os.environ.get('MDPORDER_LOG_LEVEL', 'INFO').upper())


def rate_limits() -> list:
    """Default limits, or the ';'-separated list in MDPORDER_RATE_LIMITS."""
    configured = os.environ.get(RATE_LIMITS_ENV)
    if not configured:
        return list(DEFAULT_RATE_LIMITS)
    limits = [item.strip() for item in configured.split(';') if item.strip()]
    logging.info(f"Rate limits from {RATE_LIMITS_ENV}: {limits}")
    return limits


# Initialize Flask app
app = Flask(__name__)

# Configure rate limiting
limiter = Limiter(
    get_remote_address,
    app=app,
    default_limits=rate_limits(),
    storage_uri="memory://",
    strategy="fixed-window"
)

# Initialize Prometheus metrics
metrics = PrometheusMetrics(app)

# Register routes after app initialization to avoid circular imports
routes.register_routes(app, limiter)

if __name__ == '__main__':
    app.run(host='0.0.0.0', port=5000, debug=False)
