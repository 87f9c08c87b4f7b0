"""
Optimistic MBRL Toolkit - Configuration
Process settings, run configuration dataclasses and error types
"""
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple, Union, get_type_hints

from dotenv import load_dotenv

load_dotenv()


class Config:
    # Output / runtime
    OUTPUT_DIR = os.getenv('HUCRL_OUTPUT_DIR', 'runs')
    LOG_LEVEL = os.getenv('HUCRL_LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('HUCRL_LOG_FILE')
    WORKERS = int(os.getenv('HUCRL_WORKERS', 1))

    # Model defaults
    RFF_FEATURES = int(os.getenv('HUCRL_RFF_FEATURES', 512))
    MAX_POINTS = 600
    JITTER_START = 1e-8  # relative to signal_variance
    JITTER_MAX = 1e-4
    JITTER_GROWTH = 10.0
    VARIANCE_CLAMP_TOL = 1e-10

    # Oracle baseline
    ORACLE_SEEDS = int(os.getenv('HUCRL_ORACLE_SEEDS', 5))
    ORACLE_PARTICLE_SCALE = 4
    ORACLE_ITER_SCALE = 2
    ORACLE_TAG = 'estimate: high-budget CEM-MPC on true dynamics'

    # Solve event (final trajectory holds |theta| < threshold for hold steps)
    SOLVE_THRESHOLD = 0.5
    SOLVE_HOLD = 50

    STRATEGIES = ('greedy', 'thompson', 'hucrl')
    REWARDS = ('sparse', 'dense')

    # Schema versions
    MANIFEST_SCHEMA_VERSION = 1
    CURVE_SCHEMA_VERSION = 1
    MODEL_FILE_VERSION = 1

    # Bandit demo: two Gaussian bumps on [0, 1], decoy found first
    BANDIT = {
        'decoy_center': 0.2,
        'decoy_height': 0.4,
        'global_center': 0.75,
        'global_height': 1.0,
        'bump_width': 0.06,
        'grid_size': 51,
        'noise_std': 0.01,
        'rounds': 40,
        'lengthscale': 0.1,
        'signal_variance': 1.0,
        'noise_variance': 1e-4,
    }


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class HucrlError(Exception):
    """Base class for toolkit errors"""


class ConfigError(HucrlError):
    pass


class DimensionError(HucrlError):
    pass


class FactorizationError(HucrlError):
    def __init__(self, message, smallest_pivot=None, jitter=None):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot
        self.jitter = jitter


class NumericalError(HucrlError):
    pass


class ContractViolation(HucrlError):
    pass


class OutOfBandError(HucrlError):
    def __init__(self, message, dimension, excess):
        super().__init__(message)
        self.dimension = dimension
        self.excess = excess


class DivergedRolloutError(HucrlError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class PlanningError(HucrlError):
    pass


class SimulatorFault(HucrlError):
    pass


class RunAborted(HucrlError):
    def __init__(self, message, manifest_path=None):
        super().__init__(message)
        self.manifest_path = manifest_path


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

def _require(condition, message):
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class PendulumParams:
    # Peak gravity torque m*g*l = 1.47 against max_torque 1: one pump swings it up
    mass: float = 0.3
    length: float = 0.5
    gravity: float = 9.81
    dt: float = 0.02
    max_torque: float = 1.0
    friction: float = 0.005
    noise_std: Tuple[float, ...] = (0.001, 0.01)
    horizon: int = 400

    def __post_init__(self):
        _require(self.dt > 0, 'env.dt must be > 0')
        _require(self.horizon >= 1, 'env.horizon must be >= 1')
        _require(self.mass > 0 and self.length > 0, 'env.mass and env.length must be > 0')
        _require(self.max_torque > 0, 'env.max_torque must be > 0')
        _require(self.friction >= 0, 'env.friction must be >= 0')
        _require(len(self.noise_std) == 2, 'env.noise_std must have 2 entries (theta, omega)')
        _require(all(s >= 0 for s in self.noise_std), 'env.noise_std must be >= 0')


@dataclass(frozen=True)
class KernelParams:
    # Input order: state dims (angles as sin, cos), then action dims
    lengthscales: Tuple[float, ...] = (0.8, 0.8, 3.0, 1.0)
    signal_variance: float = 0.05
    noise_variance: float = 1e-4
    angle_dims: Tuple[int, ...] = (0,)

    def __post_init__(self):
        _require(len(self.lengthscales) >= 1, 'kernel.lengthscales must be non-empty')
        _require(all(ls > 0 for ls in self.lengthscales), 'kernel.lengthscales must be > 0')
        _require(self.signal_variance > 0, 'kernel.signal_variance must be > 0')
        _require(self.noise_variance > 0, 'kernel.noise_variance must be > 0')
        _require(len(set(self.angle_dims)) == len(self.angle_dims), 'kernel.angle_dims must be unique')

    def input_dim(self, state_dim, action_dim):
        return state_dim + len(self.angle_dims) + action_dim


@dataclass(frozen=True)
class BetaSchedule:
    mode: str = 'fixed'
    value: float = 1.0
    rkhs_bound: float = 1.0
    delta: float = 0.1

    def __post_init__(self):
        _require(self.mode in ('fixed', 'rkhs'), f"beta.mode must be 'fixed' or 'rkhs', got {self.mode!r}")
        _require(self.value >= 0, 'beta.value must be >= 0')
        if self.mode == 'rkhs':
            _require(self.rkhs_bound > 0, 'beta.rkhs_bound must be > 0')
            _require(0 < self.delta < 1, 'beta.delta must lie in (0, 1)')


@dataclass(frozen=True)
class ModelConfig:
    kernel: KernelParams = field(default_factory=KernelParams)
    beta: BetaSchedule = field(default_factory=BetaSchedule)
    max_points: int = Config.MAX_POINTS
    rff_features: int = Config.RFF_FEATURES

    def __post_init__(self):
        _require(self.max_points >= 1, 'model.max_points must be >= 1')
        _require(self.rff_features >= 1, 'model.rff_features must be >= 1')


@dataclass(frozen=True)
class CemConfig:
    horizon: int = 40
    n_particles: int = 400
    n_iters: int = 5
    n_elites: Optional[int] = None
    init_std: Tuple[float, ...] = (0.5,)
    eta_init_std: float = 0.5
    alpha: float = 0.1
    std_floor: float = 0.02
    action_bounds: Tuple[Tuple[float, float], ...] = ((-1.0, 1.0),)
    discount: float = 1.0
    elitism: bool = True
    common_random_numbers: bool = False
    plan_process_noise: bool = False

    def __post_init__(self):
        _require(self.horizon >= 1, 'planner.horizon must be >= 1')
        _require(self.n_particles >= 1, 'planner.n_particles must be >= 1')
        _require(self.n_iters >= 1, 'planner.n_iters must be >= 1')
        _require(self.elite_count <= self.n_particles, 'planner.n_elites must be <= planner.n_particles')
        _require(self.elite_count >= 1, 'planner.n_elites must be >= 1')
        _require(len(self.init_std) == len(self.action_bounds),
                 'planner.init_std must have one entry per action dimension')
        _require(all(s > 0 for s in self.init_std) and self.eta_init_std > 0, 'planner init stds must be > 0')
        _require(0.0 <= self.alpha <= 1.0, 'planner.alpha must lie in [0, 1]')
        _require(self.std_floor > 0, 'planner.std_floor must be > 0')
        _require(all(len(b) == 2 and b[0] <= b[1] for b in self.action_bounds),
                 'planner.action_bounds entries must be [lo, hi] with lo <= hi')
        _require(0.0 < self.discount <= 1.0, 'planner.discount must lie in (0, 1]')

    @property
    def elite_count(self):
        if self.n_elites is not None:
            return self.n_elites
        return max(1, int(math.ceil(0.1 * self.n_particles)))

    @property
    def action_dim(self):
        return len(self.action_bounds)


@dataclass(frozen=True)
class StrategyTag:
    name: str
    beta: Optional[float] = None
    sample_epistemic: bool = True

    def __post_init__(self):
        _require(self.name in Config.STRATEGIES,
                 f"strategy.name must be one of {', '.join(Config.STRATEGIES)}, got {self.name!r}")
        _require(self.beta is None or self.beta >= 0, 'strategy.beta must be >= 0')


@dataclass(frozen=True)
class DiagnosticsConfig:
    coverage: bool = True
    export_trajectories: bool = True
    plan_trace: bool = False
    state_norm_bound: Optional[float] = None
    noise_delta: float = 0.1
    lipschitz: Optional[float] = None
    initial_bound: Optional[float] = None

    def __post_init__(self):
        _require(0 < self.noise_delta < 1, 'diagnostics.noise_delta must lie in (0, 1)')


@dataclass(frozen=True)
class RunConfig:
    episodes: int
    env: PendulumParams = field(default_factory=PendulumParams)
    rho: float = 0.0
    strategy: StrategyTag = field(default_factory=lambda: StrategyTag('hucrl'))
    planner: CemConfig = field(default_factory=CemConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    reward: str = 'sparse'

    def __post_init__(self):
        _require(self.episodes >= 1, 'episodes must be >= 1')
        _require(self.rho >= 0, 'rho must be >= 0')
        _require(self.reward in Config.REWARDS,
                 f"reward must be one of {', '.join(Config.REWARDS)}, got {self.reward!r}")
        _require(self.planner.action_dim == 1, 'pendulum runs need exactly one action dimension')
        state_dim = 2
        expected = self.model.kernel.input_dim(state_dim, self.planner.action_dim)
        _require(len(self.model.kernel.lengthscales) == expected,
                 f'model.kernel.lengthscales must have {expected} entries for the pendulum')


@dataclass(frozen=True)
class ExperimentMatrix:
    strategies: Tuple[StrategyTag, ...]
    rhos: Tuple[float, ...]
    seeds: Tuple[int, ...]
    base: RunConfig = field(default_factory=lambda: RunConfig(episodes=20))
    output_dir: str = Config.OUTPUT_DIR

    def __post_init__(self):
        _require(len(self.strategies) > 0, 'strategies must be non-empty')
        _require(len(self.rhos) > 0, 'rhos must be non-empty')
        _require(len(self.seeds) > 0, 'seeds must be non-empty')

    def cells(self):
        """Expand into (strategy, rho, seed, RunConfig) cells"""
        for strategy in self.strategies:
            for rho in self.rhos:
                for seed in self.seeds:
                    yield strategy, rho, seed, dataclasses.replace(
                        self.base, strategy=strategy, rho=rho, seed=seed)


# ---------------------------------------------------------------------------
# Strict (de)serialization
# ---------------------------------------------------------------------------

_NoneType = type(None)


def _convert(value, tp, path):
    origin = getattr(tp, '__origin__', None)
    args = getattr(tp, '__args__', ())

    if origin is Union:
        if value is None and _NoneType in args:
            return None
        inner = [a for a in args if a is not _NoneType]
        return _convert(value, inner[0], path)

    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return _from_dict(tp, value, path)

    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))

    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _from_dict(cls, data, path=''):
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown field '{_join(path, unknown[0])}'")

    kwargs = {}
    for f in dataclasses.fields(cls):
        field_path = _join(path, f.name)
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"missing required field '{field_path}'")
            continue
        kwargs[f.name] = _convert(data[f.name], hints[f.name], field_path)
    try:
        return cls(**kwargs)
    except ConfigError as e:
        raise ConfigError(f"{path or 'config'}: {e}") from None


def _join(path, name):
    return f"{path}.{name}" if path else name


def parse_config(data):
    """Parse a decoded JSON object into RunConfig or ExperimentMatrix"""
    if not isinstance(data, dict):
        raise ConfigError('config root must be a JSON object')
    if 'strategies' in data:
        return _from_dict(ExperimentMatrix, data)
    return _from_dict(RunConfig, data)


def load_config(path):
    """Load a strict JSON config file"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None

    if not text.strip():
        raise ConfigError(f"{path}: empty config file")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    return parse_config(data)


def dump_config(cfg):
    """Materialize every field (defaults included) as JSON-ready dict"""
    return _jsonable(dataclasses.asdict(cfg))


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def save_config(cfg, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(dump_config(cfg), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def payload_hash(data):
    """sha256 of the canonical (sorted, compact) JSON of a plain payload"""
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def config_hash(cfg):
    return payload_hash(dump_config(cfg))


def minimal_run_config(strategy='hucrl', episodes=2, seed=0, rho=0.0):
    """Small config used by smoke runs and the test suite"""
    return RunConfig(
        episodes=episodes,
        env=PendulumParams(horizon=20),
        rho=rho,
        strategy=StrategyTag(strategy),
        planner=CemConfig(horizon=5, n_particles=24, n_iters=2),
        model=ModelConfig(max_points=60, rff_features=64),
        seed=seed,
    )
