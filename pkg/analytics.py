"""
Optimistic MBRL Toolkit - Analytics Module
Learning curves, regret, noise-bound diagnostics and experiment summaries
"""

import glob
import json
import logging
import math
import os

import numpy as np
import pandas as pd

from config import Config, ConfigError, payload_hash

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ['episode', 'return', 'complexity', 'coverage', 'regret']
SUMMARY_COLUMNS = ['strategy', 'rho', 'median_final_return', 'iqr_lo', 'iqr_hi', 'solve_rate', 'n_seeds',
                   'config_hash']


def _as_dict(manifest):
    return manifest.to_dict() if hasattr(manifest, 'to_dict') else manifest


def _records(manifest):
    return getattr(manifest, 'records', None)


def load_manifest(path):
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    if data.get('schema_version') != Config.MANIFEST_SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported manifest schema {data.get('schema_version')}")
    return data


class RunAnalyzer:
    def __init__(self, manifest, oracle=None):
        self.manifest = manifest
        self.data = _as_dict(manifest)
        self.oracle = oracle if oracle is not None else self.data.get('oracle_return')

    def get_learning_curve(self):
        """Per-episode return, cumulative complexity, coverage and cumulative regret"""
        episodes = self.data['episodes']
        frame = pd.DataFrame({
            'episode': [e['index'] for e in episodes],
            'return': [e['episode_return'] for e in episodes],
            'complexity': np.cumsum([e['complexity_increment'] for e in episodes]),
            'coverage': [np.nan if e['calibration_coverage'] is None else e['calibration_coverage']
                         for e in episodes],
        }, columns=CURVE_COLUMNS[:-1])
        frame['regret'] = regret_curve(self.data, self.oracle) if self.oracle is not None else np.nan
        return frame

    def get_comprehensive_report(self):
        episodes = self.data['episodes']
        returns = [e['episode_return'] for e in episodes]
        report = {
            'config_hash': self.data['config_hash'],
            'status': self.data['status'],
            'episodes': len(episodes),
            'final_return': returns[-1] if returns else None,
            'best_return': max(returns) if returns else None,
            'cumulative_complexity': self.data['cumulative_complexity'],
            'solved_episodes': sum(1 for e in episodes if e['solved']),
            'oracle_return': self.oracle,
        }
        if self.oracle is not None and returns:
            report['cumulative_regret'] = regret_curve(self.data, self.oracle)[-1]
        if 'config' in self.data:
            report['noise_diagnostic'] = noise_bound_diagnostic(self.manifest)
        return report

    def export_to_json(self, filename):
        with open(filename, 'w', encoding='utf-8') as f:
            json.dump(self.get_comprehensive_report(), f, indent=2, sort_keys=True)
        return filename


def regret_curve(manifest, oracle):
    """Cumulative sum of max(0, oracle - episode return); nondecreasing"""
    episodes = _as_dict(manifest)['episodes']
    return np.cumsum([max(0.0, oracle - e['episode_return']) for e in episodes]).tolist()


def write_hashed_csv(frame, path, config_hash, schema=None):
    """CSV preceded by a '# config_hash: ...' line (read back with comment='#')"""
    header = f"# config_hash: {config_hash}"
    if schema is not None:
        header += f" schema: {schema}"
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(header + '\n')
        frame.to_csv(f, index=False, float_format='%.10g')
    return path


def write_curve_csv(manifest, path, oracle=None):
    frame = RunAnalyzer(manifest, oracle).get_learning_curve()
    return write_hashed_csv(frame, path, _as_dict(manifest)['config_hash'], Config.CURVE_SCHEMA_VERSION)


def read_curve_csv(path):
    return pd.read_csv(path, comment='#')


# ---------------------------------------------------------------------------
# Noise and domain-size diagnostics
# ---------------------------------------------------------------------------

def noise_bound(t, sigma, state_dim, delta):
    """Uniform-in-time bound on the squared noise norm at step t"""
    t = np.asarray(t, dtype=float)
    return 2.0 * sigma * state_dim + (4.0 * sigma / math.e) * np.log((t + 1) ** 2 * math.pi ** 2 / (3.0 * delta))


def count_noise_violations(noise, sigma, delta):
    noise = np.asarray(noise, dtype=float)
    if sigma == 0 or len(noise) == 0:
        return 0
    squared = np.sum(noise ** 2, axis=1)
    return int(np.sum(squared > noise_bound(np.arange(len(noise)), sigma, noise.shape[1], delta)))


def domain_radius(n, horizon, steps, sigma, state_dim, delta, lipschitz, initial_bound):
    """Radius of the ball holding every trajectory up to episode n (reported, never enforced)"""
    noise_term = math.sqrt(2.0 * sigma * state_dim
                           + (4.0 * sigma / math.e) * math.log(steps * math.pi ** 2 * n ** 2 / (3.0 * delta)))
    return lipschitz ** (horizon - 1) * steps * (initial_bound + noise_term)


def noise_bound_diagnostic(manifest, delta=None, state_bound=None, lipschitz=None, initial_bound=None):
    """Check realized noise and state norms against the uniform bounds"""
    data = _as_dict(manifest)
    config = data['config']
    diagnostics = config['diagnostics']
    delta = delta if delta is not None else diagnostics['noise_delta']
    state_bound = state_bound if state_bound is not None else diagnostics['state_norm_bound']
    lipschitz = lipschitz if lipschitz is not None else diagnostics['lipschitz']
    initial_bound = initial_bound if initial_bound is not None else diagnostics['initial_bound']
    sigma = max(config['env']['noise_std'])
    steps = config['env']['horizon']

    records = _records(manifest)
    if records and all(r.trajectory is not None for r in records):
        violations = [count_noise_violations(r.trajectory.noise, sigma, delta) for r in records]
    else:
        violations = [e['noise_violations'] for e in data['episodes']]

    episodes = data['episodes']
    exceedance = float(np.mean([v > 0 for v in violations])) if violations else 0.0
    result = {
        'delta': delta,
        'noise_violations': violations,
        'exceedance_rate': exceedance,
        'within_delta': exceedance <= delta,
        'max_state_norms': [e['max_state_norm'] for e in episodes],
    }
    if state_bound is not None:
        result['state_norm_bound'] = state_bound
        result['state_norm_ok'] = [e['max_state_norm'] <= state_bound for e in episodes]
    if lipschitz is not None and initial_bound is not None:
        result['domain_radius'] = [
            domain_radius(e['index'], config['planner']['horizon'], steps, sigma, 2, delta, lipschitz,
                          initial_bound)
            for e in episodes
        ]
    if exceedance > delta:
        logger.warning(f"Noise bound exceeded in {exceedance:.1%} of episodes (delta={delta})")
    return result


# ---------------------------------------------------------------------------
# Experiment summaries
# ---------------------------------------------------------------------------

def cell_hash(config):
    """Hash of a run config with the seed removed, shared by all seeds of a cell"""
    return payload_hash({k: v for k, v in config.items() if k != 'seed'})


def find_manifests(root):
    return sorted(glob.glob(os.path.join(root, '**', 'manifest.json'), recursive=True))


def summarize_manifests(paths):
    """Median and IQR of final returns and solve rate per (strategy, rho)"""
    rows = []
    for path in paths:
        data = load_manifest(path)
        if data['status'] != 'complete' or not data['episodes']:
            logger.warning(f"Skipping {data['status']} run {path}")
            continue
        final = data['episodes'][-1]
        rows.append({
            'strategy': data['config']['strategy']['name'],
            'rho': data['config']['rho'],
            'final_return': final['episode_return'],
            'solved': bool(final['solved']),
            'config_hash': cell_hash(data['config']),
        })
    if not rows:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)

    frame = pd.DataFrame(rows)
    summary = frame.groupby(['strategy', 'rho'], sort=True).agg(
        median_final_return=('final_return', 'median'),
        iqr_lo=('final_return', lambda x: x.quantile(0.25)),
        iqr_hi=('final_return', lambda x: x.quantile(0.75)),
        solve_rate=('solved', 'mean'),
        n_seeds=('final_return', 'size'),
        config_hash=('config_hash', 'first'),
    ).reset_index()
    return summary[SUMMARY_COLUMNS]


def write_summary(summary, path):
    summary.to_csv(path, index=False, float_format='%.10g')
    logger.info(f"📈 Summary of {int(summary['n_seeds'].sum()) if len(summary) else 0} runs written to {path}")
    return path
