# Run telemetry: logging setup, structured events, health check
import logging
import os
import time
from datetime import datetime

from config import Config

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level=None, log_file=None):
    """Configure root logging for entry points"""
    level = (level or Config.LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)

    log_file = log_file or Config.LOG_FILE
    root = logging.getLogger()
    if log_file and not any(getattr(h, 'baseFilename', None) == os.path.abspath(log_file) for h in root.handlers):
        try:
            handler = logging.FileHandler(log_file)
            handler.setLevel(getattr(logging, level, logging.INFO))
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            root.addHandler(handler)
        except OSError as e:
            logging.getLogger(__name__).error(f"❌ Failed to open log file {log_file}: {e}")


class RunMonitor:
    """Structured events and timings for one run"""

    def __init__(self, run_name='run', logger_name=None):
        self.run_name = run_name
        self.logger = logging.getLogger(logger_name or __name__)
        self.events = []
        self.timings = []

    def log_custom_event(self, event_name, properties=None, measurements=None):
        """Record and log a custom event"""
        event_data = {
            'event': event_name,
            'run': self.run_name,
            'properties': properties or {},
            'measurements': measurements or {}
        }
        self.events.append(event_data)
        self.logger.info(f"📊 Event: {event_data}")
        return event_data

    def log_timing(self, name, start_time, duration, success):
        """Record a timed step (fit, plan, episode)"""
        timing = {
            'name': name,
            'start_time': start_time,
            'duration_ms': duration * 1000.0,
            'success': success
        }
        self.timings.append(timing)
        self.logger.debug(f"⏱️ Timing: {timing}")
        return timing

    def timed(self, name):
        return _TimedBlock(self, name)

    def events_named(self, event_name):
        return [e for e in self.events if e['event'] == event_name]


class _TimedBlock:
    def __init__(self, monitor, name):
        self.monitor = monitor
        self.name = name
        self.start = None
        self.duration = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.duration = time.perf_counter() - self.start
        self.monitor.log_timing(self.name, self.start, self.duration, exc_type is None)
        return False


def health_check(output_dir=None):
    """Environment health check with per-check diagnostics"""
    health_data = {
        'status': 'healthy',
        'timestamp': datetime.utcnow().isoformat(),
        'checks': {}
    }

    for module_name in ('numpy', 'scipy', 'sklearn', 'pandas'):
        try:
            module = __import__(module_name)
            health_data['checks'][module_name] = {
                'status': 'healthy',
                'version': getattr(module, '__version__', 'unknown')
            }
        except ImportError as e:
            health_data['checks'][module_name] = {'status': 'unhealthy', 'error': str(e)}

    output_dir = output_dir or Config.OUTPUT_DIR
    try:
        os.makedirs(output_dir, exist_ok=True)
        writable = os.access(output_dir, os.W_OK)
        health_data['checks']['output_dir'] = {
            'status': 'healthy' if writable else 'unhealthy',
            'path': os.path.abspath(output_dir)
        }
    except OSError as e:
        health_data['checks']['output_dir'] = {'status': 'unhealthy', 'error': str(e)}

    unhealthy_checks = [
        check for check in health_data['checks'].values()
        if check['status'] != 'healthy'
    ]
    if unhealthy_checks:
        health_data['status'] = 'degraded'

    return health_data
