"""
Optimistic MBRL Toolkit - Hallucinated Dynamics
Turns a fitted GP into planner-facing transition functions: greedy sampling,
Thompson samples and hallucinated-control (optimistic) steps
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from config import ContractViolation, DimensionError, OutOfBandError
from env import wrap_angle
from gp_model import GpPosterior, RffSample, predict, predict_batch

logger = logging.getLogger(__name__)

ETA_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AugmentedAction:
    """Control u plus hallucinated control eta in [-1, 1]^p"""
    u: np.ndarray
    eta: np.ndarray

    @classmethod
    def plain(cls, u, state_dim):
        return cls(np.atleast_1d(np.asarray(u, dtype=float)), np.zeros(state_dim))

    def check_eta(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.size and np.max(np.abs(eta)) > 1.0 + ETA_TOLERANCE:
            raise ContractViolation(f'hallucinated control outside [-1, 1]: {eta.tolist()}')


@dataclass(frozen=True, eq=False)
class DynamicsAdapter:
    """Batched transition function s' = s + delta + process noise"""
    strategy: str
    state_dim: int
    action_dim: int
    posterior: Optional[GpPosterior] = None
    beta: float = 0.0
    sample: Optional[RffSample] = None
    delta_fn: Optional[Callable] = None
    process_noise: Optional[Tuple[float, ...]] = None
    sample_epistemic: bool = True
    angle_dims: Tuple[int, ...] = ()

    @classmethod
    def greedy(cls, post, process_noise=None, sample_epistemic=True):
        return cls('greedy', post.dataset.state_dim, post.dataset.action_dim, posterior=post,
                   process_noise=process_noise, sample_epistemic=sample_epistemic,
                   angle_dims=tuple(post.kernel.angle_dims))

    @classmethod
    def thompson(cls, post, sample, process_noise=None):
        return cls('thompson', post.dataset.state_dim, post.dataset.action_dim, posterior=post,
                   sample=sample, process_noise=process_noise, angle_dims=tuple(post.kernel.angle_dims))

    @classmethod
    def hucrl(cls, post, beta_value, process_noise=None):
        if beta_value < 0:
            raise ContractViolation(f'beta must be >= 0, got {beta_value}')
        return cls('hucrl', post.dataset.state_dim, post.dataset.action_dim, posterior=post,
                   beta=float(beta_value), process_noise=process_noise,
                   angle_dims=tuple(post.kernel.angle_dims))

    @classmethod
    def oracle(cls, delta_fn, state_dim, action_dim, angle_dims=(), process_noise=None):
        """Known dynamics with zero epistemic spread"""
        return cls('oracle', state_dim, action_dim, delta_fn=delta_fn, process_noise=process_noise,
                   angle_dims=tuple(angle_dims))

    @property
    def eta_dim(self):
        return self.state_dim if self.strategy == 'hucrl' else 0

    def predict(self, states, actions):
        """Mean and std of the delta; the oracle reports zero std"""
        if self.strategy == 'oracle':
            mean = np.asarray(self.delta_fn(states, actions), dtype=float).reshape(len(states), self.state_dim)
            return mean, np.zeros_like(mean)
        return predict_batch(self.posterior, states, actions)

    def step(self, states, actions, etas=None, rng=None):
        """Advance a batch of particles; process noise is drawn before epistemic noise"""
        states = np.asarray(states, dtype=float)
        actions = np.asarray(actions, dtype=float)
        if states.ndim != 2 or states.shape[1] != self.state_dim:
            raise DimensionError(f'expected (P, {self.state_dim}) states, got {states.shape}')
        if actions.shape != (len(states), self.action_dim):
            raise DimensionError(f'expected ({len(states)}, {self.action_dim}) actions, got {actions.shape}')

        noise = self._process_noise(rng, states.shape)
        if self.strategy == 'thompson':
            delta = self.sample.evaluate(states, actions)
        elif self.strategy == 'greedy':
            mean, std = self.predict(states, actions)
            if self.sample_epistemic:
                delta = mean + std * _require_rng(rng).standard_normal(states.shape)
            else:
                delta = mean
        elif self.strategy == 'hucrl':
            mean, std = self.predict(states, actions)
            etas = np.asarray(etas, dtype=float) if etas is not None else np.zeros(states.shape)
            if etas.shape != states.shape:
                raise DimensionError(f'expected {states.shape} hallucinated controls, got {etas.shape}')
            if etas.size and np.max(np.abs(etas)) > 1.0 + ETA_TOLERANCE:
                raise ContractViolation('hallucinated control outside [-1, 1]')
            delta = mean + self.beta * std * etas
        else:
            delta, _ = self.predict(states, actions)

        next_states = states + delta + noise
        if self.angle_dims:
            next_states[:, list(self.angle_dims)] = wrap_angle(next_states[:, list(self.angle_dims)])
        return next_states

    def _process_noise(self, rng, shape):
        if self.process_noise is None:
            return np.zeros(shape)
        return _require_rng(rng).standard_normal(shape) * np.asarray(self.process_noise, dtype=float)


def _require_rng(rng):
    if rng is None:
        raise ContractViolation('a random generator is required for stochastic steps')
    return rng


def _single(adapter, expected, state, u, eta, rng):
    if adapter.strategy != expected:
        raise ContractViolation(f'{expected} step called on a {adapter.strategy} adapter')
    state = np.asarray(state, dtype=float).reshape(1, -1)
    u = np.asarray(u, dtype=float).reshape(1, -1)
    etas = None if eta is None else np.asarray(eta, dtype=float).reshape(1, -1)
    return adapter.step(state, u, etas, rng)[0]


def step_greedy(adapter, state, u, rng):
    return _single(adapter, 'greedy', state, u, None, rng)


def step_thompson(adapter, state, u, rng=None):
    return _single(adapter, 'thompson', state, u, None, rng)


def step_hallucinated(adapter, state, action, rng=None):
    """s + mean + beta * std * eta (+ process noise when enabled)"""
    action.check_eta()
    return _single(adapter, 'hucrl', state, action.u, action.eta, rng)


def recover_eta(post, beta_value, state, u, target_delta):
    """Hallucinated control that reproduces target_delta; 0/0 resolves to 0"""
    prediction = predict(post, state, u)
    target_delta = np.asarray(target_delta, dtype=float).reshape(-1)
    if target_delta.shape != prediction.mean.shape:
        raise DimensionError(f'target delta has shape {target_delta.shape}, expected {prediction.mean.shape}')

    diff = target_delta - prediction.mean
    width = beta_value * prediction.std
    excess = np.abs(diff) - width
    slack = ETA_TOLERANCE * (1.0 + width)
    if np.any(excess > slack):
        worst = int(np.argmax(excess - slack))
        raise OutOfBandError(
            f'target delta outside the confidence band in dim {worst} by {excess[worst]:.3e}',
            dimension=worst, excess=float(excess[worst]))

    eta = np.zeros_like(diff)
    positive = width > 0
    eta[positive] = diff[positive] / width[positive]
    return np.clip(eta, -1.0, 1.0)
