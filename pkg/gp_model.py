"""
Optimistic MBRL Toolkit - Gaussian Process Model
Exact multi-output GP regression with calibrated confidence scaling,
information accounting and random-feature posterior sampling
"""

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky, solve_triangular
from sklearn.gaussian_process.kernels import RBF, ConstantKernel
from sklearn.kernel_approximation import RBFSampler

from config import (
    Config,
    ConfigError,
    DimensionError,
    FactorizationError,
    KernelParams,
    NumericalError,
)

logger = logging.getLogger(__name__)


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GpDataset:
    """Transition data: (state, action) inputs and next-state delta targets"""
    states: np.ndarray
    actions: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        states = _frozen(self.states)
        actions = _frozen(self.actions)
        targets = _frozen(self.targets)
        if states.ndim != 2 or actions.ndim != 2 or targets.ndim != 2:
            raise DimensionError('dataset arrays must be 2-D (n, dim)')
        if not (len(states) == len(actions) == len(targets)):
            raise DimensionError(
                f'dataset length mismatch: {len(states)} states, {len(actions)} actions, {len(targets)} targets')
        object.__setattr__(self, 'states', states)
        object.__setattr__(self, 'actions', actions)
        object.__setattr__(self, 'targets', targets)

    @classmethod
    def empty(cls, state_dim, action_dim, output_dim=None):
        output_dim = state_dim if output_dim is None else output_dim
        return cls(np.zeros((0, state_dim)), np.zeros((0, action_dim)), np.zeros((0, output_dim)))

    def __len__(self):
        return len(self.states)

    @property
    def state_dim(self):
        return self.states.shape[1]

    @property
    def action_dim(self):
        return self.actions.shape[1]

    @property
    def output_dim(self):
        return self.targets.shape[1]

    def append(self, states, actions, targets):
        """Return a new dataset with the rows added"""
        states = np.asarray(states, dtype=float).reshape(-1, self.state_dim)
        actions = np.asarray(actions, dtype=float).reshape(-1, self.action_dim)
        targets = np.asarray(targets, dtype=float).reshape(-1, self.output_dim)
        return GpDataset(
            np.vstack([self.states, states]),
            np.vstack([self.actions, actions]),
            np.vstack([self.targets, targets]),
        )

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return GpDataset(self.states[indices], self.actions[indices], self.targets[indices])


@dataclass(frozen=True)
class CalibratedPrediction:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True, eq=False)
class GpPosterior:
    """Immutable fitted snapshot; the factor covers K + (noise + jitter) I"""
    dataset: GpDataset
    kernel: KernelParams
    inputs: np.ndarray
    chol: np.ndarray
    alphas: np.ndarray
    jitter: float

    @property
    def effective_noise(self):
        return self.kernel.noise_variance + self.jitter

    @property
    def n_points(self):
        return len(self.dataset)


@dataclass(frozen=True, eq=False)
class RffSample:
    """Frozen random-feature function sample"""
    frequencies: np.ndarray
    phases: np.ndarray
    weights: np.ndarray
    m: int
    scale: float
    angle_dims: Tuple[int, ...]
    seed: int

    def evaluate(self, states, actions):
        features = self.features(encode_inputs(states, actions, self.angle_dims))
        return features @ self.weights.T

    def features(self, inputs):
        return self.scale * np.cos(inputs @ self.frequencies.T + self.phases)


# ---------------------------------------------------------------------------
# Kernel helpers
# ---------------------------------------------------------------------------

def make_kernel(kernel_params):
    """Squared-exponential kernel with fixed hyperparameters"""
    return (ConstantKernel(kernel_params.signal_variance, constant_value_bounds='fixed')
            * RBF(length_scale=np.asarray(kernel_params.lengthscales, dtype=float),
                  length_scale_bounds='fixed'))


def encode_inputs(states, actions, angle_dims=()):
    """Kernel inputs: angle state dims as (sin, cos), other dims raw, then actions"""
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if states.ndim != 2 or actions.ndim != 2 or states.shape[0] != actions.shape[0]:
        raise DimensionError(f'expected (n, p) states and (n, q) actions, got {states.shape} and {actions.shape}')
    if any(d >= states.shape[1] for d in angle_dims):
        raise DimensionError(f'angle_dims {angle_dims} out of range for state dim {states.shape[1]}')
    columns = []
    for j in range(states.shape[1]):
        if j in angle_dims:
            columns.append(np.sin(states[:, j]))
            columns.append(np.cos(states[:, j]))
        else:
            columns.append(states[:, j])
    for j in range(actions.shape[1]):
        columns.append(actions[:, j])
    if not columns:
        return np.zeros((states.shape[0], 0))
    return np.column_stack(columns)


def _check_input_dim(kernel_params, inputs):
    if inputs.shape[1] != len(kernel_params.lengthscales):
        raise DimensionError(
            f'kernel expects {len(kernel_params.lengthscales)} input dims, got {inputs.shape[1]}')


def kernel_metric(kernel_params, x, x_prime):
    """Kernel-induced distance sqrt(k(x,x) + k(x',x') - 2k(x,x'))"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_prime = np.atleast_2d(np.asarray(x_prime, dtype=float))
    _check_input_dim(kernel_params, x)
    _check_input_dim(kernel_params, x_prime)
    kern = make_kernel(kernel_params)
    squared = kern.diag(x)[0] + kern.diag(x_prime)[0] - 2.0 * kern(x, x_prime)[0, 0]
    return math.sqrt(max(squared, 0.0))


# ---------------------------------------------------------------------------
# Fitting and prediction
# ---------------------------------------------------------------------------

def fit(dataset, kernel_params):
    """Condition independent per-output GPs sharing one input kernel matrix"""
    inputs = encode_inputs(dataset.states, dataset.actions, kernel_params.angle_dims)
    _check_input_dim(kernel_params, inputs)
    n = len(dataset)
    if n == 0:
        return GpPosterior(dataset, kernel_params, _frozen(inputs), _frozen(np.zeros((0, 0))),
                           _frozen(np.zeros((dataset.output_dim, 0))), 0.0)

    gram = make_kernel(kernel_params)(inputs)
    signal = kernel_params.signal_variance
    jitter = Config.JITTER_START * signal
    identity = np.eye(n)
    while True:
        try:
            chol = cholesky(gram + (kernel_params.noise_variance + jitter) * identity, lower=True)
            break
        except LinAlgError:
            next_jitter = jitter * Config.JITTER_GROWTH
            if next_jitter > Config.JITTER_MAX * signal * (1 + 1e-9):
                matrix = gram + (kernel_params.noise_variance + jitter) * identity
                smallest = float(np.linalg.eigvalsh(matrix)[0])
                raise FactorizationError(
                    f'Cholesky failed for {n} points (smallest pivot {smallest:.3e}, jitter {jitter:.1e}); '
                    'duplicate inputs with near-zero noise?', smallest_pivot=smallest, jitter=jitter)
            logger.warning(f"Cholesky failed at jitter {jitter:.1e}, retrying with {next_jitter:.1e}")
            jitter = next_jitter

    alphas = cho_solve((chol, True), dataset.targets).T
    return GpPosterior(dataset, kernel_params, _frozen(inputs), _frozen(chol), _frozen(alphas), jitter)


def _clamp_variance(variance, signal_variance):
    tolerance = Config.VARIANCE_CLAMP_TOL * max(1.0, signal_variance)
    worst = float(np.min(variance)) if variance.size else 0.0
    if worst < -tolerance:
        raise NumericalError(f'negative predictive variance {worst:.3e} below tolerance {tolerance:.1e}')
    return np.maximum(variance, 0.0)


def predict_inputs(post, inputs):
    """Mean (m, d) and std (m, d) at encoded kernel inputs"""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    _check_input_dim(post.kernel, inputs)
    kern = make_kernel(post.kernel)
    prior_variance = kern.diag(inputs)
    d = post.dataset.output_dim

    if post.n_points == 0:
        mean = np.zeros((len(inputs), d))
        variance = prior_variance
    else:
        cross = kern(post.inputs, inputs)
        mean = cross.T @ post.alphas.T
        v = solve_triangular(post.chol, cross, lower=True)
        variance = prior_variance - np.sum(v * v, axis=0)

    std = np.sqrt(_clamp_variance(variance, post.kernel.signal_variance))
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
        raise NumericalError('non-finite GP prediction')
    return mean, np.repeat(std[:, None], d, axis=1)


def _as_batch(post, states, actions):
    try:
        actions = np.asarray(actions, dtype=float).reshape(-1, post.dataset.action_dim)
        states = np.asarray(states, dtype=float).reshape(len(actions), post.dataset.state_dim)
    except ValueError:
        raise DimensionError(
            f'expected state dim {post.dataset.state_dim} and action dim {post.dataset.action_dim}') from None
    return states, actions


def predict_batch(post, states, actions):
    states, actions = _as_batch(post, states, actions)
    return predict_inputs(post, encode_inputs(states, actions, post.kernel.angle_dims))


def predict(post, state, action):
    """Calibrated (mean, std) of the next-state delta at one (state, action)"""
    state = np.asarray(state, dtype=float).reshape(1, -1)
    action = np.asarray(action, dtype=float).reshape(1, -1)
    if state.shape[1] != post.dataset.state_dim or action.shape[1] != post.dataset.action_dim:
        raise DimensionError(
            f'expected state dim {post.dataset.state_dim} and action dim {post.dataset.action_dim}, '
            f'got {state.shape[1]} and {action.shape[1]}')
    mean, std = predict_inputs(post, encode_inputs(state, action, post.kernel.angle_dims))
    return CalibratedPrediction(mean=mean[0], std=std[0])


def posterior_covariance(post, states, actions):
    """Full latent posterior covariance at a batch of inputs"""
    states, actions = _as_batch(post, states, actions)
    inputs = encode_inputs(states, actions, post.kernel.angle_dims)
    _check_input_dim(post.kernel, inputs)
    kern = make_kernel(post.kernel)
    cov = kern(inputs)
    if post.n_points:
        v = solve_triangular(post.chol, kern(post.inputs, inputs), lower=True)
        cov = cov - v.T @ v
    return cov


# ---------------------------------------------------------------------------
# Information accounting and confidence scaling
# ---------------------------------------------------------------------------

def mutual_information(post):
    """0.5 log det(I + K / noise) from the cached factor"""
    n = post.n_points
    if n == 0:
        return 0.0
    value = float(np.sum(np.log(np.diag(post.chol))) - 0.5 * n * math.log(post.effective_noise))
    return max(value, 0.0)


def information_gain_increment(post, states, actions):
    """Sum of 0.5 log(1 + var / noise) along a batch of inputs"""
    _, std = predict_batch(post, states, actions)
    variance = std[:, 0] ** 2
    return float(0.5 * np.sum(np.log1p(variance / post.kernel.noise_variance)))


def beta(schedule, post):
    if schedule.mode == 'fixed':
        return float(schedule.value)
    if schedule.mode == 'rkhs':
        noise_std = math.sqrt(post.kernel.noise_variance)
        info = mutual_information(post)
        return float(schedule.rkhs_bound
                     + 4.0 * noise_std * math.sqrt(info + 1.0 + math.log(1.0 / schedule.delta)))
    raise ConfigError(f'unknown beta mode {schedule.mode!r}')


def calibration_coverage(post, holdout, beta_value):
    """Fraction of holdout rows with |target - mean| <= beta * std in every dim"""
    if len(holdout) == 0:
        raise DimensionError('holdout dataset is empty')
    mean, std = predict_batch(post, holdout.states, holdout.actions)
    inside = np.abs(holdout.targets - mean) <= beta_value * std
    return float(np.mean(np.all(inside, axis=1)))


# ---------------------------------------------------------------------------
# Posterior sampling with random Fourier features
# ---------------------------------------------------------------------------

def sample_rff(post, m, seed):
    """Draw a frozen function sample from the approximate posterior"""
    if m < 1:
        raise ConfigError('feature count must be >= 1')
    lengthscales = np.asarray(post.kernel.lengthscales, dtype=float)
    dim = len(lengthscales)

    # RBFSampler with gamma=0.5 draws unit-lengthscale spectral frequencies
    sampler = RBFSampler(gamma=0.5, n_components=m, random_state=seed).fit(np.zeros((1, dim)))
    frequencies = (sampler.random_weights_ / lengthscales[:, None]).T
    phases = np.array(sampler.random_offset_, dtype=float)
    scale = math.sqrt(2.0 * post.kernel.signal_variance / m)

    rng = np.random.default_rng(seed)
    d = post.dataset.output_dim
    prior_weights = rng.standard_normal((d, m))
    weights = prior_weights
    n = post.n_points
    if n:
        features = scale * np.cos(post.inputs @ frequencies.T + phases)
        noise = rng.normal(0.0, math.sqrt(post.kernel.noise_variance), size=(n, d))
        gram = features @ features.T + post.kernel.noise_variance * np.eye(n)
        residual = post.dataset.targets + noise - features @ prior_weights.T
        weights = prior_weights + (features.T @ cho_solve(cho_factor(gram, lower=True), residual)).T

    return RffSample(frequencies=_frozen(frequencies), phases=_frozen(phases), weights=_frozen(weights),
                     m=m, scale=scale, angle_dims=tuple(post.kernel.angle_dims), seed=seed)


# ---------------------------------------------------------------------------
# Dataset cap
# ---------------------------------------------------------------------------

def subsample_max_variance(dataset, kernel_params, max_points):
    """Greedy max-posterior-variance subset (ties go to the lowest index)"""
    n = len(dataset)
    if n <= max_points:
        return dataset, np.arange(n)

    inputs = encode_inputs(dataset.states, dataset.actions, kernel_params.angle_dims)
    kern = make_kernel(kernel_params)
    variance = kern.diag(inputs).copy()
    factors = np.zeros((max_points, n))
    noise = kernel_params.noise_variance
    selected = []
    for j in range(max_points):
        i = int(np.argmax(variance))
        selected.append(i)
        row = kern(inputs[i:i + 1], inputs)[0] - factors[:j, i] @ factors[:j]
        factors[j] = row / math.sqrt(variance[i] + noise)
        variance = variance - factors[j] ** 2
        variance[selected] = -np.inf

    indices = np.array(sorted(selected))
    logger.info(f"Subsampled dataset from {n} to {len(indices)} points by max posterior variance")
    return dataset.subset(indices), indices


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------

MODEL_FORMAT = 'hucrl-gp-model'


def save_posterior(post, path):
    """Write kernel params and dataset; the factor is rebuilt on load"""
    payload = {
        'format': MODEL_FORMAT,
        'version': Config.MODEL_FILE_VERSION,
        'kernel': dataclasses.asdict(post.kernel),
        'dataset': {
            'state_dim': post.dataset.state_dim,
            'action_dim': post.dataset.action_dim,
            'output_dim': post.dataset.output_dim,
            'states': post.dataset.states.tolist(),
            'actions': post.dataset.actions.tolist(),
            'targets': post.dataset.targets.tolist(),
        },
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f)
    return path


def load_posterior(path):
    with open(path, 'r', encoding='utf-8') as f:
        payload = json.load(f)
    if payload.get('format') != MODEL_FORMAT:
        raise ConfigError(f'{path}: not a {MODEL_FORMAT} file')
    if payload.get('version') != Config.MODEL_FILE_VERSION:
        raise ConfigError(f"{path}: unsupported model file version {payload.get('version')}")

    kernel = payload['kernel']
    kernel_params = KernelParams(
        lengthscales=tuple(kernel['lengthscales']),
        signal_variance=kernel['signal_variance'],
        noise_variance=kernel['noise_variance'],
        angle_dims=tuple(kernel['angle_dims']),
    )
    data = payload['dataset']
    dataset = GpDataset(
        np.asarray(data['states'], dtype=float).reshape(-1, data['state_dim']),
        np.asarray(data['actions'], dtype=float).reshape(-1, data['action_dim']),
        np.asarray(data['targets'], dtype=float).reshape(-1, data['output_dim']),
    )
    return fit(dataset, kernel_params)
