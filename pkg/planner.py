"""
Optimistic MBRL Toolkit - CEM-MPC Planner
Cross-entropy search over (action, hallucinated control) sequences and the
receding-horizon control loop
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from analytics import write_hashed_csv
from config import DivergedRolloutError, PlanningError
from hallucination import AugmentedAction

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ActionSeqDistribution:
    """Per-step Gaussian over H x (q + eta_dim) sequences"""
    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def initial(cls, config, eta_dim):
        means = np.tile(np.concatenate([_midpoint(config), np.zeros(eta_dim)]), (config.horizon, 1))
        stds = np.tile(_initial_std(config, eta_dim), (config.horizon, 1))
        return cls(means, stds)

    def shifted(self, config, eta_dim):
        """Warm start: drop the executed step, reset the tail to the prior"""
        means = np.vstack([self.means[1:], np.concatenate([_midpoint(config), np.zeros(eta_dim)])])
        stds = np.vstack([self.stds[1:], _initial_std(config, eta_dim)])
        return ActionSeqDistribution(means, stds)


def _midpoint(config):
    return np.array([(lo + hi) / 2.0 for lo, hi in config.action_bounds])


def _initial_std(config, eta_dim):
    return np.concatenate([np.asarray(config.init_std, dtype=float), np.full(eta_dim, config.eta_init_std)])


@dataclass
class PlanResult:
    action: AugmentedAction
    predicted_return: float
    final_distribution: ActionSeqDistribution
    best_sequence: np.ndarray
    trace: List[float] = field(default_factory=list)


@dataclass
class Trajectory:
    """One executed episode on the true system"""
    states: np.ndarray
    actions: np.ndarray
    etas: np.ndarray
    rewards: np.ndarray
    noise: np.ndarray
    predicted_returns: np.ndarray
    plan_traces: List[List[float]] = field(default_factory=list)

    @property
    def total_return(self):
        return float(np.sum(self.rewards))

    def __len__(self):
        return len(self.rewards)

    def to_frame(self, state_names=('theta', 'omega')):
        frame = pd.DataFrame({'t': np.arange(len(self))})
        for j, name in enumerate(state_names):
            frame[name] = self.states[:-1, j]
        for j in range(self.actions.shape[1]):
            frame['u' if self.actions.shape[1] == 1 else f'u{j}'] = self.actions[:, j]
        frame['reward'] = self.rewards
        return frame


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

def rollout_batch(adapter, reward, start, actions, etas=None, rng=None, discount=1.0, strict=False):
    """Discounted returns of P sequences under the adapter

    actions is (P, H, q) and etas (P, H, eta_dim). Diverged particles score
    -inf unless strict, in which case the first divergence raises.
    """
    actions = np.asarray(actions, dtype=float)
    n_particles, horizon, _ = actions.shape
    states = np.tile(np.asarray(start, dtype=float).reshape(1, -1), (n_particles, 1))
    returns = np.zeros(n_particles)
    alive = np.ones(n_particles, dtype=bool)

    for t in range(horizon):
        step_actions = actions[:, t, :]
        step_etas = None
        if adapter.eta_dim:
            step_etas = etas[:, t, :] if etas is not None else np.zeros((n_particles, adapter.eta_dim))
        rewards = np.asarray(reward(states, step_actions), dtype=float)
        returns = returns + np.where(alive, (discount ** t) * rewards, 0.0)
        states = adapter.step(states, step_actions, step_etas, rng)

        finite = np.all(np.isfinite(states), axis=1) & np.isfinite(returns)
        if not np.all(finite[alive]):
            if strict:
                raise DivergedRolloutError(f'rollout diverged at step {t}', step=t)
            alive &= finite
            states[~finite] = 0.0

    returns[~alive] = -np.inf
    return returns


def rollout(adapter, reward, start, sequence, rng=None, discount=1.0):
    """Return of one sequence of AugmentedActions; raises on divergence"""
    actions = np.array([np.atleast_1d(a.u) for a in sequence], dtype=float)[None]
    etas = None
    if adapter.eta_dim:
        etas = np.array([np.asarray(a.eta, dtype=float) for a in sequence])[None]
        for a in sequence:
            a.check_eta()
    return float(rollout_batch(adapter, reward, start, actions, etas, rng, discount, strict=True)[0])


# ---------------------------------------------------------------------------
# Cross-entropy method
# ---------------------------------------------------------------------------

def _clipped_normal(rng, means, stds, lower, upper, n_particles):
    draws = rng.standard_normal((n_particles,) + means.shape)
    return np.clip(means + stds * draws, lower, upper)


def plan_cem(adapter, reward, start, config, rng, warm_start=None):
    """CEM over action and hallucinated-control sequences

    Action proposals, hallucinated-control proposals and rollout noise use
    separate streams derived from one draw of rng and the iteration index,
    row i of each draw belonging to particle i.
    """
    q = config.action_dim
    eta_dim = adapter.eta_dim
    dist = warm_start or ActionSeqDistribution.initial(config, eta_dim)
    if dist.means.shape != (config.horizon, q + eta_dim):
        raise PlanningError(f'warm start has shape {dist.means.shape}, expected {(config.horizon, q + eta_dim)}')

    lower = np.array([lo for lo, _ in config.action_bounds])
    upper = np.array([hi for _, hi in config.action_bounds])
    means, stds = dist.means.copy(), dist.stds.copy()
    n_elites = config.elite_count
    base_seed = int(rng.integers(0, 2 ** 32))

    best_return = -np.inf
    best_sequence = None
    trace = []
    for iteration in range(config.n_iters):
        action_rng = np.random.default_rng([base_seed, iteration, 0])
        actions = _clipped_normal(action_rng, means[:, :q], stds[:, :q], lower, upper, config.n_particles)
        etas = None
        if eta_dim:
            eta_rng = np.random.default_rng([base_seed, iteration, 1])
            etas = _clipped_normal(eta_rng, means[:, q:], stds[:, q:], -1.0, 1.0, config.n_particles)

        if config.elitism and best_sequence is not None:
            actions[0] = best_sequence[:, :q]
            if eta_dim:
                etas[0] = best_sequence[:, q:]

        noise_iteration = 0 if config.common_random_numbers else iteration
        rollout_rng = np.random.default_rng([base_seed, noise_iteration, 2])
        returns = rollout_batch(adapter, reward, start, actions, etas, rollout_rng, config.discount)
        if not np.any(np.isfinite(returns)):
            raise PlanningError(f'all {config.n_particles} rollouts diverged at iteration {iteration}')

        order = np.argsort(-returns, kind='stable')[:n_elites]
        samples = actions if etas is None else np.concatenate([actions, etas], axis=2)
        elites = samples[order]
        trace.append(float(returns[order[0]]))
        if returns[order[0]] > best_return:
            best_return = float(returns[order[0]])
            best_sequence = samples[order[0]].copy()

        means = config.alpha * means + (1.0 - config.alpha) * elites.mean(axis=0)
        stds = config.alpha * stds + (1.0 - config.alpha) * elites.std(axis=0)
        stds = np.maximum(stds, config.std_floor)

    first = best_sequence[0]
    eta = first[q:] if eta_dim else np.zeros(adapter.state_dim)
    return PlanResult(
        action=AugmentedAction(first[:q].copy(), eta.copy()),
        predicted_return=best_return,
        final_distribution=ActionSeqDistribution(means, stds),
        best_sequence=best_sequence,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# Receding-horizon control
# ---------------------------------------------------------------------------

def mpc_episode(env, adapter, reward, config, warm_start=None, rng=None, monitor=None):
    """Plan at every step, execute the first action on the true system"""
    rng = rng if rng is not None else np.random.default_rng()
    state = env.reset()
    horizon = env.horizon
    states = [state]
    actions, etas, rewards, noises, predicted, traces = [], [], [], [], [], []
    dist = warm_start

    for t in range(horizon):
        try:
            result = plan_cem(adapter, reward, state, config, rng, warm_start=dist)
        except PlanningError as e:
            if monitor is not None:
                monitor.log_custom_event('plan_failed', {'strategy': adapter.strategy, 'error': str(e)},
                                         {'step': t})
            raise
        u = result.action.u
        rewards.append(float(np.asarray(reward(state[None], u[None]))[0]))
        state, noise = env.step(u)

        states.append(state)
        actions.append(u)
        etas.append(result.action.eta)
        noises.append(noise)
        predicted.append(result.predicted_return)
        traces.append(result.trace)
        dist = result.final_distribution.shifted(config, adapter.eta_dim)

    if monitor is not None:
        monitor.log_custom_event('mpc_episode', {'strategy': adapter.strategy},
                                 {'return': float(np.sum(rewards)), 'steps': horizon})
    return Trajectory(
        states=np.array(states),
        actions=np.array(actions),
        etas=np.array(etas),
        rewards=np.array(rewards),
        noise=np.array(noises),
        predicted_returns=np.array(predicted),
        plan_traces=traces,
    )


def write_plan_trace(traces, path, config_hash):
    """CSV of the per-iteration best elite return at every control step"""
    rows = [{'step': t, 'iteration': i, 'best_return': value}
            for t, step_trace in enumerate(traces) for i, value in enumerate(step_trace)]
    return write_hashed_csv(pd.DataFrame(rows, columns=['step', 'iteration', 'best_return']), path, config_hash)
