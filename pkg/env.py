"""
Optimistic MBRL Toolkit - Environments
Sparse swing-up pendulum, tolerance rewards and the 1-D bandit counterexample
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from config import Config, ConfigError, KernelParams, PendulumParams, SimulatorFault
from gp_model import GpDataset, fit, predict_batch

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Tolerance reward
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToleranceSpec:
    lower: float
    upper: float
    margin: float = 0.0
    value_at_margin: float = 0.1

    def __post_init__(self):
        if self.lower > self.upper:
            raise ConfigError(f'tolerance lower {self.lower} > upper {self.upper}')
        if self.margin < 0:
            raise ConfigError('tolerance margin must be >= 0')
        if not 0 < self.value_at_margin < 1:
            raise ConfigError('tolerance value_at_margin must lie in (0, 1)')


ANGLE_TOLERANCE = ToleranceSpec(0.95, 1.0, margin=0.1)
VELOCITY_TOLERANCE = ToleranceSpec(-0.5, 0.5, margin=0.5)
ACTION_TOLERANCE = ToleranceSpec(-0.1, 0.1, margin=0.1)


def tolerance(x, spec):
    """1 on [lower, upper], Gaussian sigmoid of the distance outside"""
    x = np.asarray(x, dtype=float)
    in_bounds = (x >= spec.lower) & (x <= spec.upper)
    if spec.margin == 0:
        value = np.where(in_bounds, 1.0, 0.0)
    else:
        distance = np.where(x < spec.lower, spec.lower - x, x - spec.upper) / spec.margin
        scale = math.sqrt(-2.0 * math.log(spec.value_at_margin))
        value = np.where(in_bounds, 1.0, np.exp(-0.5 * (distance * scale) ** 2))
    return float(value) if value.ndim == 0 else value


def pendulum_reward(state, u, rho):
    """r_theta * r_omega + rho * r_u with r_u = tolerance(u) - 1"""
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == state.ndim:
        u = u[..., 0]
    theta = state[..., 0]
    omega = state[..., 1]
    r_theta = tolerance(np.cos(theta), ANGLE_TOLERANCE)
    r_omega = tolerance(omega, VELOCITY_TOLERANCE)
    r_u = tolerance(u, ACTION_TOLERANCE) - 1.0
    reward = np.asarray(r_theta * r_omega + rho * r_u)
    return float(reward) if reward.ndim == 0 else reward


def dense_pendulum_reward(state, u, rho, params):
    """Height plus energy shaping toward the upright energy; 1 at rest upright, -1 at rest hanging"""
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == state.ndim:
        u = u[..., 0]
    theta = state[..., 0]
    omega = state[..., 1]
    top = params.mass * params.gravity * params.length
    energy = 0.5 * params.mass * params.length ** 2 * omega ** 2 + top * np.cos(theta)
    gap = (energy - top) / (2.0 * top)
    r_u = tolerance(u, ACTION_TOLERANCE) - 1.0
    reward = np.asarray(0.5 * (1.0 + np.cos(theta)) - gap ** 2 + rho * r_u)
    return float(reward) if reward.ndim == 0 else reward


def make_reward(rho, kind='sparse', params=None):
    """Batched reward(states (P, 2), actions (P, 1)) -> (P,)"""
    if kind not in Config.REWARDS:
        raise ConfigError(f"reward must be one of {', '.join(Config.REWARDS)}, got {kind!r}")
    params = params or PendulumParams()

    def reward(states, actions):
        if kind == 'dense':
            return np.atleast_1d(dense_pendulum_reward(states, actions, rho, params))
        return np.atleast_1d(pendulum_reward(states, actions, rho))
    reward.rho = rho
    reward.kind = kind
    return reward


# ---------------------------------------------------------------------------
# Pendulum
# ---------------------------------------------------------------------------

def wrap_angle(theta):
    """Wrap to (-pi, pi]"""
    theta = np.asarray(theta, dtype=float)
    wrapped = theta - 2.0 * math.pi * np.ceil((theta - math.pi) / (2.0 * math.pi))
    return float(wrapped) if wrapped.ndim == 0 else wrapped


@dataclass(frozen=True)
class PendulumState:
    theta: float
    omega: float

    @property
    def observation(self):
        return np.array([math.sin(self.theta), math.cos(self.theta), self.omega])

    def as_array(self):
        return np.array([self.theta, self.omega])

    @classmethod
    def from_array(cls, values):
        return cls(float(values[0]), float(values[1]))


def _angular_acceleration(params, theta, omega, u):
    inertia = params.mass * params.length ** 2
    return (params.gravity / params.length) * np.sin(theta) - (params.friction / inertia) * omega + u / inertia


def integrate(params, theta, omega, u):
    """Noise-free semi-implicit Euler step (upright at theta = 0)"""
    u = np.clip(u, -params.max_torque, params.max_torque)
    omega_next = omega + params.dt * _angular_acceleration(params, theta, omega, u)
    theta_next = theta + params.dt * omega_next
    return theta_next, omega_next


def transition_noise(params, rng):
    if rng is None:
        return np.zeros(2)
    return rng.standard_normal(2) * np.asarray(params.noise_std, dtype=float)


def pendulum_step(params, state, u, rng=None, noise=None):
    u = float(np.asarray(u, dtype=float).reshape(-1)[0])
    theta_next, omega_next = integrate(params, state.theta, state.omega, u)
    if noise is None:
        noise = transition_noise(params, rng)
    theta_next = theta_next + noise[0]
    omega_next = omega_next + noise[1]
    if not (math.isfinite(theta_next) and math.isfinite(omega_next)):
        raise SimulatorFault(f'non-finite pendulum state from theta={state.theta}, omega={state.omega}, u={u}')
    return PendulumState(wrap_angle(theta_next), float(omega_next))


def episode_reset(params):
    return PendulumState(math.pi, 0.0)


def pendulum_energy(state, params):
    """Mechanical energy with the potential maximal upright"""
    inertia = params.mass * params.length ** 2
    return 0.5 * inertia * state.omega ** 2 + params.mass * params.gravity * params.length * math.cos(state.theta)


def pendulum_delta_fn(params):
    """Batched noise-free delta function for planning on the true dynamics"""
    def delta(states, actions):
        states = np.asarray(states, dtype=float)
        actions = np.asarray(actions, dtype=float)
        theta_next, omega_next = integrate(params, states[:, 0], states[:, 1], actions[:, 0])
        return np.column_stack([theta_next - states[:, 0], omega_next - states[:, 1]])
    return delta


def is_swung_up(thetas, threshold=Config.SOLVE_THRESHOLD, hold=Config.SOLVE_HOLD):
    """True when |theta| < threshold holds for at least `hold` consecutive steps"""
    run = 0
    for theta in np.abs(np.asarray(thetas, dtype=float)):
        run = run + 1 if theta < threshold else 0
        if run >= hold:
            return True
    return False


class PendulumEnv:
    """Single-owner pendulum state machine"""

    state_dim = 2
    action_dim = 1

    def __init__(self, params=None, seed=None):
        self.params = params or PendulumParams()
        self.rng = np.random.default_rng(seed)
        self.state = episode_reset(self.params)

    @property
    def horizon(self):
        return self.params.horizon

    def reset(self):
        self.state = episode_reset(self.params)
        return self.state.as_array()

    def step(self, u):
        """Advance one step; returns (next state array, realized noise)"""
        noise = transition_noise(self.params, self.rng)
        self.state = pendulum_step(self.params, self.state, u, noise=noise)
        return self.state.as_array(), noise

    def observation(self):
        return self.state.observation


# ---------------------------------------------------------------------------
# Bandit counterexample
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BanditProblem:
    centers: Tuple[float, ...] = (Config.BANDIT['decoy_center'], Config.BANDIT['global_center'])
    heights: Tuple[float, ...] = (Config.BANDIT['decoy_height'], Config.BANDIT['global_height'])
    width: float = Config.BANDIT['bump_width']
    grid: Tuple[float, ...] = field(
        default_factory=lambda: tuple(np.linspace(0.0, 1.0, Config.BANDIT['grid_size']).tolist()))
    noise_std: float = Config.BANDIT['noise_std']

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        value = sum(h * np.exp(-0.5 * ((x - c) / self.width) ** 2) for c, h in zip(self.centers, self.heights))
        return float(value) if np.ndim(value) == 0 else value

    def observe(self, x, rng):
        return self.objective(x) + self.noise_std * float(rng.standard_normal())

    @property
    def grid_array(self):
        return np.asarray(self.grid, dtype=float)

    @property
    def global_index(self):
        return int(np.argmax(self.objective(self.grid_array)))

    def nearest_index(self, x):
        return int(np.argmin(np.abs(self.grid_array - x)))


def bandit_kernel():
    return KernelParams(
        lengthscales=(Config.BANDIT['lengthscale'],),
        signal_variance=Config.BANDIT['signal_variance'],
        noise_variance=Config.BANDIT['noise_variance'],
        angle_dims=(),
    )


def gp_ucb_select(post, beta_value, grid):
    """argmax over grid of mean + beta * std (lowest index on ties)"""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ConfigError('GP-UCB grid must be non-empty')
    mean, std = predict_batch(post, np.zeros((grid.size, 0)), grid.reshape(-1, 1))
    scores = mean[:, 0] + beta_value * std[:, 0]
    return float(grid[int(np.argmax(scores))])


@dataclass
class BanditTrace:
    beta: float
    xs: list
    indices: list
    values: list
    final_mean: np.ndarray
    final_std: np.ndarray


def run_gp_ucb(problem, beta_value, rounds=Config.BANDIT['rounds'], kernel_params=None,
               initial_x=None, seed=0):
    """GP-UCB on the fixed-context bandit; the first observation is at initial_x"""
    kernel_params = kernel_params or bandit_kernel()
    rng = np.random.default_rng(seed)
    grid = problem.grid_array
    initial_x = problem.centers[0] if initial_x is None else initial_x
    initial_x = float(grid[problem.nearest_index(initial_x)])

    dataset = GpDataset.empty(0, 1, 1).append(np.zeros((1, 0)), [[initial_x]], [[problem.observe(initial_x, rng)]])
    xs, indices, values = [], [], []
    for _ in range(rounds):
        post = fit(dataset, kernel_params)
        x = gp_ucb_select(post, beta_value, grid)
        y = problem.observe(x, rng)
        xs.append(x)
        indices.append(problem.nearest_index(x))
        values.append(y)
        dataset = dataset.append(np.zeros((1, 0)), [[x]], [[y]])

    post = fit(dataset, kernel_params)
    final_mean, final_std = predict_batch(post, np.zeros((grid.size, 0)), grid.reshape(-1, 1))
    logger.info(f"GP-UCB beta={beta_value}: final index {indices[-1] if indices else None}, "
                f"global index {problem.global_index}")
    return BanditTrace(beta_value, xs, indices, values, final_mean[:, 0], final_std[:, 0])
