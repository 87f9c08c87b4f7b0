"""
Optimistic MBRL Toolkit - Monitoring Tests
"""

import os
import sys
import tempfile

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from monitoring import RunMonitor, health_check


def test_custom_events_recorded():
    monitor = RunMonitor('unit')
    event = monitor.log_custom_event('episode', {'strategy': 'hucrl'}, {'return': 1.5})
    assert event['run'] == 'unit'
    assert monitor.events_named('episode') == [event]
    assert monitor.events_named('fit') == []


def test_timed_block_records_failure():
    monitor = RunMonitor()
    with monitor.timed('fit'):
        pass
    try:
        with monitor.timed('plan'):
            raise ValueError('boom')
    except ValueError:
        pass
    assert [t['success'] for t in monitor.timings] == [True, False]
    assert all(t['duration_ms'] >= 0 for t in monitor.timings)


def test_health_check():
    """Environment health check"""
    print("\n🩺 Testing Health Check...")
    with tempfile.TemporaryDirectory() as tmp:
        health = health_check(os.path.join(tmp, 'runs'))
        assert health['status'] == 'healthy'
        for name in ('numpy', 'scipy', 'sklearn', 'pandas', 'output_dir'):
            assert health['checks'][name]['status'] == 'healthy'
            print(f"   ✅ {name}")
