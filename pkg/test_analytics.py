"""
Optimistic MBRL Toolkit - Analytics Tests
"""

import json
import math
import os
import sys
import tempfile

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from analytics import (
    SUMMARY_COLUMNS,
    RunAnalyzer,
    count_noise_violations,
    domain_radius,
    find_manifests,
    noise_bound,
    noise_bound_diagnostic,
    read_curve_csv,
    regret_curve,
    summarize_manifests,
    write_curve_csv,
    write_hashed_csv,
    write_summary,
)
from config import Config, config_hash, dump_config, minimal_run_config


def _manifest(returns, strategy='hucrl', rho=0.1, seed=0, solved_last=False, status='complete'):
    config = minimal_run_config(strategy, episodes=len(returns), seed=seed, rho=rho)
    episodes = [{
        'index': i + 1,
        'episode_return': value,
        'complexity_increment': 0.5 / (i + 1),
        'calibration_coverage': 0.9,
        'max_state_norm': 3.0 + i,
        'wall_ms': 10.0,
        'solved': solved_last and i == len(returns) - 1,
        'information_gain': 1.0,
        'dataset_size': 20 * (i + 1),
        'retained_points': 20 * (i + 1),
        'beta': 1.0,
        'noise_violations': 0,
    } for i, value in enumerate(returns)]
    return {
        'schema_version': Config.MANIFEST_SCHEMA_VERSION,
        'version': '1.0.0',
        'git_revision': None,
        'config_hash': config_hash(config),
        'config': dump_config(config),
        'status': status,
        'error': None,
        'oracle_return': None,
        'oracle_tag': None,
        'cumulative_complexity': sum(e['complexity_increment'] for e in episodes),
        'episodes': episodes,
    }


def _write(root, name, manifest):
    directory = os.path.join(root, name)
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, 'manifest.json')
    with open(path, 'w') as f:
        json.dump(manifest, f)
    return path


def test_regret_curve_is_cumulative():
    assert regret_curve(_manifest([4.0, 6.0, 9.0]), 10.0) == [6.0, 10.0, 11.0]


def test_regret_ignores_returns_above_oracle():
    curve = regret_curve(_manifest([5.0, 12.0, 10.0]), 10.0)
    assert curve == [5.0, 5.0, 5.0]
    assert regret_curve(_manifest([3.0, 3.0]), 3.0) == [0.0, 0.0]
    assert regret_curve(_manifest([1.0]), 3.0) == [2.0]

    rng = np.random.default_rng(0)
    curve = regret_curve(_manifest(rng.normal(0.0, 5.0, 30).tolist()), 1.0)
    assert all(b >= a for a, b in zip(curve, curve[1:]))


def test_curve_csv_round_trip():
    manifest = _manifest([1.0, 2.0])
    with tempfile.TemporaryDirectory() as tmp:
        path = write_curve_csv(manifest, os.path.join(tmp, 'curve.csv'), oracle=3.0)
        with open(path) as f:
            assert f.readline().startswith(f"# config_hash: {manifest['config_hash']}")
        frame = read_curve_csv(path)
        assert list(frame.columns) == ['episode', 'return', 'complexity', 'coverage', 'regret']
        assert frame['complexity'].tolist() == [0.5, 0.75]
        assert frame['regret'].tolist() == [2.0, 3.0]


def test_curve_without_oracle_leaves_regret_empty():
    frame = RunAnalyzer(_manifest([1.0])).get_learning_curve()
    assert frame['regret'].isna().all()


def test_comprehensive_report():
    report = RunAnalyzer(_manifest([1.0, 5.0, 3.0], solved_last=True), oracle=6.0).get_comprehensive_report()
    assert report['final_return'] == 3.0
    assert report['best_return'] == 5.0
    assert report['solved_episodes'] == 1
    assert report['cumulative_regret'] == 9.0
    assert report['noise_diagnostic']['noise_violations'] == [0, 0, 0]


def test_report_flags_state_norms_and_exports():
    manifest = _manifest([1.0, 2.0])
    manifest['config']['diagnostics']['state_norm_bound'] = 3.5
    analyzer = RunAnalyzer(manifest, oracle=2.0)
    with tempfile.TemporaryDirectory() as tmp:
        path = analyzer.export_to_json(os.path.join(tmp, 'report.json'))
        with open(path) as f:
            report = json.load(f)
    assert report['noise_diagnostic']['state_norm_ok'] == [True, False]
    assert report['cumulative_regret'] == 1.0
    assert report['config_hash'] == manifest['config_hash']


def test_hashed_csv_header():
    frame = pd.DataFrame({'a': [1, 2], 'b': [0.5, 0.25]})
    with tempfile.TemporaryDirectory() as tmp:
        path = write_hashed_csv(frame, os.path.join(tmp, 'x.csv'), 'abc123')
        with open(path) as f:
            assert f.readline() == '# config_hash: abc123\n'
        assert pd.read_csv(path, comment='#').equals(frame)


def test_noise_bound_values():
    sigma, delta = 0.01, 0.1
    expected = 2 * sigma * 2 + (4 * sigma / math.e) * math.log(math.pi ** 2 / (3 * delta))
    assert abs(float(noise_bound(0, sigma, 2, delta)) - expected) < 1e-12
    assert noise_bound(10, sigma, 2, delta) > noise_bound(0, sigma, 2, delta)


def test_count_noise_violations():
    assert count_noise_violations(np.zeros((50, 2)), 0.01, 0.1) == 0
    assert count_noise_violations(np.ones((5, 2)), 0.01, 0.1) == 5
    assert count_noise_violations(np.ones((5, 2)), 0.0, 0.1) == 0


def test_gaussian_noise_rarely_violates_bound():
    rng = np.random.default_rng(0)
    noise = rng.standard_normal((400, 2)) * np.array([0.001, 0.01])
    assert count_noise_violations(noise, 0.01, 0.1) == 0


def test_domain_radius_formula():
    value = domain_radius(n=2, horizon=3, steps=10, sigma=0.01, state_dim=2, delta=0.1, lipschitz=1.5,
                          initial_bound=1.0)
    noise_term = math.sqrt(0.04 + (0.04 / math.e) * math.log(10 * math.pi ** 2 * 4 / 0.3))
    expected = 1.5 ** 2 * 10 * (1.0 + noise_term)
    assert abs(value - expected) < 1e-9 * expected


def test_noise_bound_diagnostic_from_manifest():
    manifest = _manifest([1.0, 2.0])
    result = noise_bound_diagnostic(manifest, state_bound=3.5, lipschitz=1.1, initial_bound=1.0)
    assert result['noise_violations'] == [0, 0]
    assert result['exceedance_rate'] == 0.0
    assert result['within_delta']
    assert result['state_norm_ok'] == [True, False]
    assert len(result['domain_radius']) == 2
    assert result['domain_radius'][1] > result['domain_radius'][0]


def test_summary_statistics():
    with tempfile.TemporaryDirectory() as tmp:
        for seed, final in enumerate([1.0, 2.0, 3.0]):
            _write(tmp, f'hucrl/rho_0.1/seed_{seed}', _manifest([0.0, final], seed=seed, solved_last=seed == 2))
        _write(tmp, 'greedy/rho_0.1/seed_0', _manifest([0.0, 0.5], strategy='greedy'))
        _write(tmp, 'greedy/rho_0.1/seed_1', _manifest([0.0], strategy='greedy', seed=1, status='partial'))

        summary = summarize_manifests(find_manifests(tmp))
        assert list(summary.columns) == SUMMARY_COLUMNS
        assert summary['strategy'].tolist() == ['greedy', 'hucrl']
        hucrl = summary[summary['strategy'] == 'hucrl'].iloc[0]
        assert hucrl['median_final_return'] == 2.0
        assert hucrl['iqr_lo'] == 1.5
        assert hucrl['iqr_hi'] == 2.5
        assert abs(hucrl['solve_rate'] - 1 / 3) < 1e-12
        assert hucrl['n_seeds'] == 3
        assert summary[summary['strategy'] == 'greedy'].iloc[0]['n_seeds'] == 1

        path = write_summary(summary, os.path.join(tmp, 'summary.csv'))
        with open(path) as f:
            assert f.readline().strip() == ','.join(SUMMARY_COLUMNS)


def test_cell_hash_ignores_seed():
    with tempfile.TemporaryDirectory() as tmp:
        for seed in (0, 1):
            _write(tmp, f'seed_{seed}', _manifest([1.0], seed=seed))
        summary = summarize_manifests(find_manifests(tmp))
        assert len(summary) == 1
        assert summary.iloc[0]['n_seeds'] == 2


def test_empty_summary_has_header():
    summary = summarize_manifests([])
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 0
