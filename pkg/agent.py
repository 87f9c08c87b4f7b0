"""
Optimistic MBRL Toolkit - Agent
Episodic learn-plan-act loop, oracle baseline and run manifests
"""

import dataclasses
import json
import logging
import os
import subprocess
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from analytics import RunAnalyzer, count_noise_violations, write_curve_csv, write_hashed_csv
from config import Config, HucrlError, RunAborted, config_hash, dump_config
from env import PendulumEnv, is_swung_up, make_reward, pendulum_delta_fn, wrap_angle
from gp_model import (
    GpDataset,
    beta,
    calibration_coverage,
    fit,
    information_gain_increment,
    predict_batch,
    sample_rff,
    subsample_max_variance,
)
from hallucination import DynamicsAdapter
from monitoring import RunMonitor
from planner import mpc_episode, write_plan_trace

logger = logging.getLogger(__name__)

VERSION = '1.0.0'

# SeedSequence tags for the per-episode streams
ENV_STREAM, PLAN_STREAM, THOMPSON_STREAM, ORACLE_ENV_STREAM, ORACLE_PLAN_STREAM = 1, 2, 3, 4, 5


@dataclass
class EpisodeRecord:
    index: int
    episode_return: float
    complexity_increment: float
    calibration_coverage: Optional[float]
    max_state_norm: float
    wall_ms: float
    solved: bool
    information_gain: float
    dataset_size: int
    retained_points: int
    beta: Optional[float]
    noise_violations: int
    trajectory: object = field(default=None, repr=False)

    def to_dict(self):
        data = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != 'trajectory'}
        return data


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    version: str
    git_revision: Optional[str]
    records: List[EpisodeRecord] = field(default_factory=list)
    status: str = 'running'
    error: Optional[str] = None
    oracle_return: Optional[float] = None
    oracle_tag: Optional[str] = None

    @property
    def returns(self):
        return [r.episode_return for r in self.records]

    @property
    def cumulative_complexity(self):
        return float(sum(r.complexity_increment for r in self.records))

    def to_dict(self):
        return {
            'schema_version': Config.MANIFEST_SCHEMA_VERSION,
            'version': self.version,
            'git_revision': self.git_revision,
            'config_hash': self.config_hash,
            'config': self.config,
            'status': self.status,
            'error': self.error,
            'oracle_return': self.oracle_return,
            'oracle_tag': self.oracle_tag,
            'cumulative_complexity': self.cumulative_complexity,
            'episodes': [r.to_dict() for r in self.records],
        }

    def write(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')
        return path


class AgentState:
    """Dataset, current posterior and episode counter for one run"""

    def __init__(self, config, monitor=None):
        self.config = config
        self.monitor = monitor or RunMonitor(f'{config.strategy.name}-seed{config.seed}')
        self.dataset = GpDataset.empty(2, config.planner.action_dim)
        self.posterior = fit(self.dataset, config.model.kernel)
        self.episode_index = 0

    def episode_seed(self, stream):
        return [self.config.seed, self.episode_index + 1, stream]


def _git_revision():
    try:
        output = subprocess.run(['git', 'rev-parse', 'HEAD'], capture_output=True, text=True, timeout=5,
                                cwd=os.path.dirname(os.path.abspath(__file__)))
        if output.returncode != 0:
            return None
        return output.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def transition_deltas(trajectory, angle_dims=(0,)):
    """Targets s_{t+1} - s_t with angle differences wrapped"""
    deltas = np.diff(trajectory.states, axis=0)
    if angle_dims:
        deltas[:, list(angle_dims)] = wrap_angle(deltas[:, list(angle_dims)])
    return deltas


def build_adapter(config, post, beta_value, thompson_seed):
    process_noise = tuple(config.env.noise_std) if config.planner.plan_process_noise else None
    name = config.strategy.name
    if name == 'hucrl':
        return DynamicsAdapter.hucrl(post, beta_value, process_noise=process_noise)
    if name == 'thompson':
        return DynamicsAdapter.thompson(post, sample_rff(post, config.model.rff_features, thompson_seed),
                                        process_noise=process_noise)
    return DynamicsAdapter.greedy(post, process_noise=process_noise,
                                  sample_epistemic=config.strategy.sample_epistemic)


def run_episode(agent, rng=None):
    """Plan against the current model, act on the system, refit"""
    config = agent.config
    n = agent.episode_index + 1
    post = agent.posterior
    start = time.perf_counter()

    beta_value = config.strategy.beta if config.strategy.beta is not None else beta(config.model.beta, post)
    thompson_seed = int(np.random.SeedSequence(agent.episode_seed(THOMPSON_STREAM)).generate_state(1)[0])
    adapter = build_adapter(config, post, beta_value, thompson_seed)
    rng = rng if rng is not None else np.random.default_rng(agent.episode_seed(PLAN_STREAM))
    env = PendulumEnv(config.env, seed=agent.episode_seed(ENV_STREAM))

    with agent.monitor.timed(f'episode_{n}'):
        reward = make_reward(config.rho, config.reward, config.env)
        trajectory = mpc_episode(env, adapter, reward, config.planner, None, rng, monitor=agent.monitor)

    states = trajectory.states[:-1]
    targets = transition_deltas(trajectory)
    _, std = predict_batch(post, states, trajectory.actions)
    complexity = float(np.sum(std ** 2))
    coverage = None
    if config.diagnostics.coverage:
        coverage = calibration_coverage(post, GpDataset(states, trajectory.actions, targets), beta_value)
    info_gain = information_gain_increment(post, states, trajectory.actions)

    with agent.monitor.timed(f'fit_{n}'):
        agent.dataset = agent.dataset.append(states, trajectory.actions, targets)
        retained, _ = subsample_max_variance(agent.dataset, config.model.kernel, config.model.max_points)
        agent.posterior = fit(retained, config.model.kernel)
    agent.monitor.log_custom_event('model_refit', {'strategy': config.strategy.name},
                                   {'dataset_size': len(agent.dataset), 'retained_points': len(retained)})
    agent.episode_index = n

    record = EpisodeRecord(
        index=n,
        episode_return=trajectory.total_return,
        complexity_increment=complexity,
        calibration_coverage=coverage,
        max_state_norm=float(np.max(np.linalg.norm(trajectory.states, axis=1))),
        wall_ms=(time.perf_counter() - start) * 1000.0,
        solved=is_swung_up(trajectory.states[:, 0]),
        information_gain=info_gain,
        dataset_size=len(agent.dataset),
        retained_points=len(retained),
        beta=float(beta_value) if config.strategy.name == 'hucrl' else None,
        noise_violations=count_noise_violations(trajectory.noise, max(config.env.noise_std),
                                                config.diagnostics.noise_delta),
        trajectory=trajectory,
    )
    agent.monitor.log_custom_event('episode_completed', {'strategy': config.strategy.name, 'seed': config.seed},
                                   {'index': n, 'return': record.episode_return,
                                    'complexity': complexity, 'solved': float(record.solved)})
    logger.info(f"Episode {n}/{config.episodes} [{config.strategy.name}, rho={config.rho}]: "
                f"return {record.episode_return:.3f}, complexity {complexity:.4f}, "
                f"dataset {len(agent.dataset)} ({len(retained)} retained)")
    return record


def _write_episode_outputs(config, record, output_dir, digest):
    if config.diagnostics.export_trajectories:
        traj_dir = os.path.join(output_dir, 'trajectories')
        os.makedirs(traj_dir, exist_ok=True)
        write_hashed_csv(record.trajectory.to_frame(), os.path.join(traj_dir, f'episode_{record.index:03d}.csv'),
                         digest)
    if config.diagnostics.plan_trace:
        trace_dir = os.path.join(output_dir, 'plan_traces')
        os.makedirs(trace_dir, exist_ok=True)
        write_plan_trace(record.trajectory.plan_traces, os.path.join(trace_dir, f'episode_{record.index:03d}.csv'),
                         digest)


def run(config, output_dir=None, oracle=None, monitor=None):
    """Run all episodes; writes manifest.json, curve.csv and report.json when output_dir is set"""
    agent = AgentState(config, monitor)
    manifest = RunManifest(
        config=dump_config(config),
        config_hash=config_hash(config),
        version=VERSION,
        git_revision=_git_revision(),
        oracle_return=oracle,
        oracle_tag=Config.ORACLE_TAG if oracle is not None else None,
    )
    manifest_path = None
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        manifest_path = os.path.join(output_dir, 'manifest.json')

    logger.info(f"🚀 Starting run: {config.strategy.name}, rho={config.rho}, seed={config.seed}, "
                f"{config.episodes} episodes (config {manifest.config_hash[:12]})")
    run_properties = {'strategy': config.strategy.name, 'rho': config.rho, 'seed': config.seed}
    agent.monitor.log_custom_event('run_started', run_properties, {'episodes': config.episodes})
    try:
        for _ in range(config.episodes):
            record = run_episode(agent)
            manifest.records.append(record)
            if output_dir:
                _write_episode_outputs(config, record, output_dir, manifest.config_hash)
    except HucrlError as e:
        manifest.status = 'partial'
        manifest.error = f'{type(e).__name__}: {e}'
        logger.error(f"❌ Run aborted after {len(manifest.records)} episodes: {manifest.error}")
        agent.monitor.log_custom_event('run_aborted', dict(run_properties, error=manifest.error),
                                       {'episodes': len(manifest.records)})
        if manifest_path:
            manifest.write(manifest_path)
            write_curve_csv(manifest, os.path.join(output_dir, 'curve.csv'))
            RunAnalyzer(manifest).export_to_json(os.path.join(output_dir, 'report.json'))
        raise RunAborted(manifest.error, manifest_path=manifest_path) from e

    manifest.status = 'complete'
    agent.monitor.log_custom_event('run_completed', run_properties,
                                   {'episodes': len(manifest.records), 'complexity': manifest.cumulative_complexity})
    if manifest_path:
        manifest.write(manifest_path)
        write_curve_csv(manifest, os.path.join(output_dir, 'curve.csv'))
        RunAnalyzer(manifest).export_to_json(os.path.join(output_dir, 'report.json'))
        logger.info(f"✅ Run complete, manifest written to {manifest_path}")
    return manifest


def oracle_rollouts(config, seeds=None, particle_scale=Config.ORACLE_PARTICLE_SCALE,
                    iter_scale=Config.ORACLE_ITER_SCALE):
    """High-budget CEM-MPC episodes on the true dynamics, one per seed"""
    planner = dataclasses.replace(
        config.planner,
        n_particles=config.planner.n_particles * particle_scale,
        n_iters=config.planner.n_iters * iter_scale,
        n_elites=None if config.planner.n_elites is None else config.planner.n_elites * particle_scale,
    )
    adapter = DynamicsAdapter.oracle(pendulum_delta_fn(config.env), state_dim=2,
                                     action_dim=planner.action_dim, angle_dims=(0,))
    reward = make_reward(config.rho, config.reward, config.env)
    seeds = seeds if seeds is not None else range(Config.ORACLE_SEEDS)

    trajectories = []
    for seed in seeds:
        env = PendulumEnv(config.env, seed=[seed, 0, ORACLE_ENV_STREAM])
        rng = np.random.default_rng([seed, 0, ORACLE_PLAN_STREAM])
        trajectories.append(mpc_episode(env, adapter, reward, planner, None, rng))
    return trajectories


def oracle_return(config, seeds=None, particle_scale=Config.ORACLE_PARTICLE_SCALE,
                  iter_scale=Config.ORACLE_ITER_SCALE):
    """Estimate of the best achievable return: mean oracle episode return over seeds"""
    trajectories = oracle_rollouts(config, seeds, particle_scale, iter_scale)
    returns = [t.total_return for t in trajectories]
    solved = sum(is_swung_up(t.states[:, 0]) for t in trajectories)
    value = float(np.mean(returns))
    logger.info(f"Oracle return estimate over {len(returns)} seeds: {value:.3f}, {solved} swung up")
    return value
