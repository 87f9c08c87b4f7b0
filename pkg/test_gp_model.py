"""
Optimistic MBRL Toolkit - GP Model Tests
"""

import math
import os
import sys
import tempfile

import numpy as np

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config import ConfigError, DimensionError, KernelParams
from gp_model import (
    GpDataset,
    beta,
    calibration_coverage,
    fit,
    information_gain_increment,
    kernel_metric,
    load_posterior,
    make_kernel,
    mutual_information,
    posterior_covariance,
    predict,
    predict_batch,
    sample_rff,
    save_posterior,
    subsample_max_variance,
)
from config import BetaSchedule


def _kernel(lengthscales=(1.0, 1.0), signal=1.0, noise=1e-2):
    return KernelParams(lengthscales=lengthscales, signal_variance=signal, noise_variance=noise, angle_dims=())


def _random_dataset(n, seed=0, noise_std=0.1):
    rng = np.random.default_rng(seed)
    states = rng.uniform(-2, 2, size=(n, 1))
    actions = rng.uniform(-1, 1, size=(n, 1))
    targets = np.sin(states) + 0.5 * actions + noise_std * rng.standard_normal((n, 1))
    return GpDataset(states, actions, targets)


def test_prior_prediction():
    """Empty dataset predicts the prior"""
    post = fit(GpDataset.empty(1, 1), _kernel(signal=0.25))
    prediction = predict(post, [0.3], [0.1])
    assert np.allclose(prediction.mean, 0.0)
    assert np.allclose(prediction.std, 0.5)
    print("   ✅ Prior mean 0, std sqrt(signal_variance)")


def test_interpolates_training_point():
    kernel = _kernel(noise=1e-6)
    dataset = GpDataset([[0.5]], [[0.2]], [[1.3]])
    prediction = predict(fit(dataset, kernel), [0.5], [0.2])
    assert abs(prediction.mean[0] - 1.3) < 1e-4
    assert prediction.std[0] < 2e-3


def test_matches_dense_solve():
    kernel = _kernel(lengthscales=(0.7, 1.3))
    dataset = _random_dataset(25, seed=3)
    post = fit(dataset, kernel)
    rng = np.random.default_rng(4)
    test_states = rng.uniform(-2, 2, size=(10, 1))
    test_actions = rng.uniform(-1, 1, size=(10, 1))
    mean, std = predict_batch(post, test_states, test_actions)

    kern = make_kernel(kernel)
    train_x = np.hstack([dataset.states, dataset.actions])
    test_x = np.hstack([test_states, test_actions])
    gram = kern(train_x) + (kernel.noise_variance + post.jitter) * np.eye(len(dataset))
    cross = kern(train_x, test_x)
    expected_mean = cross.T @ np.linalg.solve(gram, dataset.targets)
    expected_var = kern.diag(test_x) - np.sum(cross * np.linalg.solve(gram, cross), axis=0)
    assert np.allclose(mean, expected_mean, atol=1e-8)
    assert np.allclose(std[:, 0], np.sqrt(np.maximum(expected_var, 0.0)), atol=1e-7)


def test_variance_never_increases_with_data():
    kernel = _kernel()
    dataset = _random_dataset(30, seed=1)
    rng = np.random.default_rng(2)
    test_states = rng.uniform(-3, 3, size=(50, 1))
    test_actions = rng.uniform(-1, 1, size=(50, 1))

    previous = predict_batch(fit(GpDataset.empty(1, 1), kernel), test_states, test_actions)[1]
    for n in (5, 10, 20, 30):
        current = predict_batch(fit(dataset.subset(range(n)), kernel), test_states, test_actions)[1]
        assert np.all(current <= previous + 1e-9)
        previous = current
    print("   ✅ Posterior std monotone in data")


def test_far_from_data_reverts_to_prior():
    kernel = _kernel(lengthscales=(0.2, 0.2), signal=0.5)
    post = fit(_random_dataset(20), kernel)
    prediction = predict(post, [50.0], [0.0])
    assert abs(prediction.mean[0]) < 1e-8
    assert abs(prediction.std[0] - math.sqrt(0.5)) < 1e-8


def test_angle_inputs_are_periodic():
    kernel = KernelParams()
    rng = np.random.default_rng(0)
    states = np.column_stack([rng.uniform(-math.pi, math.pi, 30), rng.uniform(-2, 2, 30)])
    actions = rng.uniform(-1, 1, size=(30, 1))
    post = fit(GpDataset(states, actions, 0.01 * rng.standard_normal((30, 2))), kernel)
    a = predict(post, [0.4, 0.1], [0.2])
    b = predict(post, [0.4 + 2 * math.pi, 0.1], [0.2])
    assert np.allclose(a.mean, b.mean, atol=1e-10)
    assert np.allclose(a.std, b.std, atol=1e-10)


def test_multi_output_shares_std():
    kernel = KernelParams()
    rng = np.random.default_rng(5)
    states = rng.uniform(-1, 1, size=(10, 2))
    actions = rng.uniform(-1, 1, size=(10, 1))
    post = fit(GpDataset(states, actions, rng.standard_normal((10, 2)) * 0.1), kernel)
    prediction = predict(post, [0.1, 0.2], [0.0])
    assert prediction.mean.shape == (2,)
    assert prediction.std[0] == prediction.std[1]


def test_dimension_errors():
    post = fit(_random_dataset(5), _kernel())
    try:
        predict(post, [0.1, 0.2], [0.0])
        assert False, 'expected DimensionError'
    except DimensionError:
        pass
    try:
        fit(GpDataset.empty(2, 1), _kernel())
        assert False, 'expected DimensionError for lengthscale count'
    except DimensionError:
        pass


def test_duplicate_inputs_factorize():
    kernel = _kernel(noise=1e-8)
    dataset = GpDataset(np.zeros((20, 1)), np.zeros((20, 1)), np.ones((20, 1)))
    post = fit(dataset, kernel)
    assert post.jitter >= 1e-8
    assert abs(predict(post, [0.0], [0.0]).mean[0] - 1.0) < 1e-3


def test_mutual_information_matches_logdet():
    kernel = _kernel()
    dataset = _random_dataset(15, seed=7)
    post = fit(dataset, kernel)
    inputs = np.hstack([dataset.states, dataset.actions])
    gram = make_kernel(kernel)(inputs)
    _, logdet = np.linalg.slogdet(np.eye(15) + gram / post.effective_noise)
    assert abs(mutual_information(post) - 0.5 * logdet) < 1e-8 * max(1.0, logdet)
    assert mutual_information(fit(GpDataset.empty(1, 1), kernel)) == 0.0


def test_information_gain_increment_single_point():
    kernel = _kernel()
    dataset = _random_dataset(10, seed=8)
    post = fit(dataset, kernel)
    extended = fit(dataset.append([[0.7]], [[0.3]], [[0.0]]), kernel)
    increment = information_gain_increment(post, [[0.7]], [[0.3]])
    assert abs((mutual_information(extended) - mutual_information(post)) - increment) < 1e-4 * max(1.0, increment)


def test_information_gain_increment_upper_bounds_batch_gain():
    kernel = _kernel()
    dataset = _random_dataset(10, seed=9)
    batch = _random_dataset(8, seed=10)
    post = fit(dataset, kernel)
    extended = fit(dataset.append(batch.states, batch.actions, batch.targets), kernel)
    gain = mutual_information(extended) - mutual_information(post)
    assert gain <= information_gain_increment(post, batch.states, batch.actions) + 1e-6


def test_beta_schedules():
    post = fit(_random_dataset(10), _kernel())
    assert beta(BetaSchedule(mode='fixed', value=2.5), post) == 2.5
    schedule = BetaSchedule(mode='rkhs', rkhs_bound=1.0, delta=0.1)
    expected = 1.0 + 4.0 * 0.1 * math.sqrt(mutual_information(post) + 1.0 + math.log(10.0))
    assert abs(beta(schedule, post) - expected) < 1e-12
    bigger = fit(_random_dataset(30), _kernel())
    assert beta(schedule, bigger) >= beta(schedule, fit(GpDataset.empty(1, 1), _kernel()))


def test_calibration_coverage_edges():
    post = fit(_random_dataset(10), _kernel())
    holdout = _random_dataset(20, seed=11)
    mean, std = predict_batch(post, holdout.states, holdout.actions)
    on_mean = GpDataset(holdout.states, holdout.actions, mean)
    assert calibration_coverage(post, on_mean, 0.0) == 1.0
    two_sigma = GpDataset(holdout.states, holdout.actions, mean + 2.0 * std)
    assert calibration_coverage(post, two_sigma, 1.0) == 0.0
    assert calibration_coverage(post, two_sigma, 2.5) == 1.0
    try:
        calibration_coverage(post, GpDataset.empty(1, 1, 1), 1.0)
        assert False, 'expected DimensionError'
    except DimensionError:
        pass


def test_calibration_on_prior_draws():
    """Latent functions drawn from the prior land inside 2 std about 95% of the time"""
    kernel = _kernel(lengthscales=(0.8, 0.8), noise=1e-2)
    kern = make_kernel(kernel)
    coverages = []
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        x = rng.uniform(-2, 2, size=(115, 2))
        chol = np.linalg.cholesky(kern(x) + 1e-8 * np.eye(len(x)))
        latent = chol @ rng.standard_normal(len(x))
        train = GpDataset(x[:15, :1], x[:15, 1:], (latent[:15] + 0.1 * rng.standard_normal(15))[:, None])
        holdout = GpDataset(x[15:, :1], x[15:, 1:], latent[15:, None])
        coverages.append(calibration_coverage(fit(train, kernel), holdout, 2.0))
    assert np.mean(coverages) >= 0.9
    print(f"   ✅ Mean 2-std coverage {np.mean(coverages):.3f}")


def test_posterior_covariance_diagonal():
    post = fit(_random_dataset(12), _kernel())
    states = np.linspace(-1, 1, 6)[:, None]
    actions = np.zeros((6, 1))
    cov = posterior_covariance(post, states, actions)
    _, std = predict_batch(post, states, actions)
    assert np.allclose(np.diag(cov), std[:, 0] ** 2, atol=1e-10)
    assert np.allclose(cov, cov.T)


def test_kernel_metric():
    kernel = _kernel(lengthscales=(0.5, 0.5), signal=2.0)
    assert kernel_metric(kernel, [0.1, 0.2], [0.1, 0.2]) == 0.0
    assert abs(kernel_metric(kernel, [0.0, 0.0], [100.0, 0.0]) - 2.0) < 1e-10


def test_kernel_metric_unit_distance():
    kernel = _kernel(lengthscales=(1.0, 1.0), signal=1.0)
    expected = math.sqrt(2.0 - 2.0 * math.exp(-0.5))
    assert abs(kernel_metric(kernel, [0.0, 0.0], [1.0, 0.0]) - expected) < 1e-12
    assert abs(kernel_metric(kernel, [0.3, -0.2], [0.3, 0.8]) - expected) < 1e-12


def test_std_is_lipschitz_in_kernel_metric():
    """|std(x) - std(x')| <= d_k(x, x') over random pairs"""
    kernel = _kernel(lengthscales=(0.6, 0.9), signal=1.5, noise=1e-2)
    post = fit(_random_dataset(30, seed=12), kernel)
    rng = np.random.default_rng(13)
    n = 10_000
    a = rng.uniform(-3, 3, size=(n, 2))
    b = a + rng.normal(scale=rng.uniform(0.01, 2.0, size=(n, 1)), size=(n, 2))
    std_a = predict_batch(post, a[:, :1], a[:, 1:])[1][:, 0]
    std_b = predict_batch(post, b[:, :1], b[:, 1:])[1][:, 0]
    distances = np.array([kernel_metric(kernel, x, y) for x, y in zip(a, b)])
    assert np.all(np.abs(std_a - std_b) <= distances + 1e-9)
    print(f"   ✅ Lipschitz bound holds on {n} pairs")


def test_mutual_information_single_point():
    """One point with signal equal to noise carries 0.5 log 2"""
    kernel = _kernel(signal=1.0, noise=1.0)
    post = fit(GpDataset([[0.2]], [[-0.4]], [[0.7]]), kernel)
    assert abs(mutual_information(post) - 0.5 * math.log(2.0)) < 1e-8


def test_mutual_information_grows_with_data():
    kernel = _kernel()
    dataset = _random_dataset(40, seed=14)
    previous = 0.0
    for n in range(1, len(dataset) + 1):
        current = mutual_information(fit(dataset.subset(range(n)), kernel))
        assert current >= previous - 1e-10
        previous = current
    assert previous > 0.0


def test_factor_reconstructs_regularized_gram():
    kernel = _kernel(lengthscales=(0.4, 1.1))
    dataset = _random_dataset(25, seed=15)
    post = fit(dataset, kernel)
    inputs = np.hstack([dataset.states, dataset.actions])
    expected = make_kernel(kernel)(inputs) + post.effective_noise * np.eye(len(dataset))
    assert np.allclose(post.chol @ post.chol.T, expected, atol=1e-10)
    assert np.allclose(post.chol, np.tril(post.chol))


# ---------------------------------------------------------------------------
# Random-feature samples
# ---------------------------------------------------------------------------

def test_rff_prior_variance():
    post = fit(GpDataset.empty(1, 1), _kernel(signal=0.5))
    values = [sample_rff(post, 64, seed).evaluate([[0.3]], [[-0.2]])[0, 0] for seed in range(500)]
    assert abs(np.var(values) - 0.5) < 0.1
    assert abs(np.mean(values)) < 0.15


def test_rff_posterior_fits_data():
    kernel = _kernel(lengthscales=(0.8, 0.8), noise=1e-4)
    states = np.linspace(-1.5, 1.5, 5)[:, None]
    actions = np.zeros((5, 1))
    targets = np.sin(states)
    post = fit(GpDataset(states, actions, targets), kernel)
    sample = sample_rff(post, 2048, seed=3)
    assert np.max(np.abs(sample.evaluate(states, actions) - targets)) < 0.1


def test_rff_samples_frozen_by_seed():
    post = fit(_random_dataset(10), _kernel())
    x_states = np.linspace(-1, 1, 7)[:, None]
    x_actions = np.zeros((7, 1))
    a = sample_rff(post, 128, seed=11).evaluate(x_states, x_actions)
    b = sample_rff(post, 128, seed=11).evaluate(x_states, x_actions)
    c = sample_rff(post, 128, seed=12).evaluate(x_states, x_actions)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    try:
        sample_rff(post, 0, seed=1)
        assert False, 'expected ConfigError'
    except ConfigError:
        pass


# ---------------------------------------------------------------------------
# Dataset cap and model file
# ---------------------------------------------------------------------------

def test_subsample_keeps_small_datasets():
    dataset = _random_dataset(10)
    subset, indices = subsample_max_variance(dataset, _kernel(), 10)
    assert subset is dataset
    assert indices.tolist() == list(range(10))


def test_subsample_prefers_informative_points():
    kernel = _kernel(lengthscales=(0.1, 0.1))
    states = np.array([[0.0], [0.0], [5.0], [5.0], [10.0], [10.0]])
    dataset = GpDataset(states, np.zeros((6, 1)), np.zeros((6, 1)))
    subset, indices = subsample_max_variance(dataset, kernel, 3)
    assert indices.tolist() == [0, 2, 4]
    assert len(subset) == 3


def test_model_file_round_trip():
    post = fit(_random_dataset(12), KernelParams(lengthscales=(0.5, 2.0), angle_dims=()))
    with tempfile.TemporaryDirectory() as tmp:
        path = save_posterior(post, os.path.join(tmp, 'model.json'))
        loaded = load_posterior(path)
        states = np.linspace(-1, 1, 5)[:, None]
        actions = np.zeros((5, 1))
        assert np.allclose(predict_batch(post, states, actions)[0], predict_batch(loaded, states, actions)[0])
        assert loaded.kernel == post.kernel

        bad = os.path.join(tmp, 'bad.json')
        with open(bad, 'w') as f:
            f.write('{"format": "something-else", "version": 1}')
        try:
            load_posterior(bad)
            assert False, 'expected ConfigError'
        except ConfigError:
            pass
