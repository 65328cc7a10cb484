import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqe_saddle import (AnsatzLayout, ConfigurationError, VQELandscape, exact_gradient,
                        exact_noise_covariance, finite_difference_gradient, hessian,
                        hessian_eigenvalues, jacobi_eigh, sampled_gradient, second_moment_trace)
from vqe_saddle.observables import single_z

ONE = AnsatzLayout(1, 1)
Z = single_z()


def analytic_z(theta):
    """L = cos(theta) for RY(theta)|0> measured in Z."""
    return np.cos(theta), -np.sin(theta), -np.cos(theta)


# ---------------------------------------------------------------- single qubit

@pytest.mark.parametrize("theta", [0.0, 0.3, np.pi / 2, 2.0, -1.1])
def test_single_qubit_gradient_and_hessian(theta):
    _, d1, d2 = analytic_z(theta)
    assert exact_gradient(ONE, [theta], Z).values[0] == pytest.approx(d1, abs=1e-14)
    assert hessian(ONE, [theta], Z).entries[0, 0] == pytest.approx(d2, abs=1e-14)


def test_single_qubit_examples():
    assert exact_gradient(ONE, [np.pi / 2], Z).values[0] == pytest.approx(-1.0)
    assert hessian(ONE, [0.0], Z).entries[0, 0] == pytest.approx(-1.0)
    fd = finite_difference_gradient(ONE, [np.pi / 2], Z, 1e-5)
    assert fd.values[0] == pytest.approx(-1.0, abs=1e-9)
    assert fd.estimator_kind == "finite-difference"


def test_finite_difference_at_shift_shares_parameter_shift_numerator(landscape, layout, heisenberg):
    # both difference the same two shifted losses; only the divisor differs (2*eps vs 2)
    theta = np.random.default_rng(0).uniform(0, 2 * np.pi, 16)
    fd = finite_difference_gradient(layout, theta, heisenberg, np.pi / 2).values
    np.testing.assert_allclose(fd * np.pi / 2, landscape.gradient(theta), atol=1e-12)


def test_finite_difference_bias_is_second_order():
    theta, eps = 0.7, 0.1
    fd = finite_difference_gradient(ONE, [theta], Z, eps).values[0]
    # (sin(t+e) - sin(t-e)) / 2e = sin(t) * sin(e) / e: error ~ sin(t) e^2 / 6
    assert fd - (-np.sin(theta)) == pytest.approx(np.sin(theta) * eps**2 / 6, rel=1e-2)


def test_finite_difference_rejects_bad_step():
    with pytest.raises(ConfigurationError):
        finite_difference_gradient(ONE, [0.1], Z, 0.0)


def test_single_qubit_noise_examples(rng):
    assert exact_noise_covariance(ONE, [0.0], Z, 1).diagonal[0] == pytest.approx(0.5)
    draws = np.array([sampled_gradient(ONE, [0.0], Z, 10, rng).values[0] for _ in range(10_000)])
    assert draws.var() == pytest.approx(1 / 20, rel=0.1)
    assert second_moment_trace(ONE, [np.pi / 2], Z, 1) == pytest.approx(1.0, abs=1e-14)
    # at the minimum theta = pi the shifted states are |+>, |->: noise survives
    assert exact_noise_covariance(ONE, [np.pi], Z, 4).diagonal[0] == pytest.approx(2 / 16)


def test_sampled_gradient_rejects_zero_shots(rng):
    with pytest.raises(ConfigurationError):
        sampled_gradient(ONE, [0.0], Z, 0, rng)


# ---------------------------------------------------------------- 16 parameters

def test_parameter_shift_matches_finite_differences(landscape, layout, heisenberg):
    rng = np.random.default_rng(1)
    for theta in rng.uniform(-np.pi, np.pi, (100, 16)):
        fd = finite_difference_gradient(layout, theta, heisenberg, 1e-5).values
        assert np.max(np.abs(landscape.gradient(theta) - fd)) < 1e-7


def test_gradient_vanishes_at_ground_state(landscape, checkpoints):
    assert np.linalg.norm(landscape.gradient(checkpoints["ground"].params)) < 1e-6


def test_noise_covariance_matches_independent_oracle(landscape, layout, heisenberg):
    """Rebuild the diagonal from exact_variance on explicitly shifted states."""
    from vqe_saddle import exact_variance, prepare_ansatz_state

    theta = np.random.default_rng(2).uniform(0, 2 * np.pi, 16)
    n_shots = 7
    expected = np.zeros(16)
    for i in range(16):
        for sign in (1, -1):
            shifted = theta.copy()
            shifted[i] += sign * np.pi / 2
            psi = prepare_ansatz_state(layout, shifted)
            expected[i] += sum(exact_variance(psi, g) for g in heisenberg.groups)
    expected /= 4 * n_shots
    np.testing.assert_allclose(landscape.noise_variance(theta, n_shots), expected, atol=1e-12)
    cov = exact_noise_covariance(layout, theta, heisenberg, n_shots)
    assert np.all(cov.diagonal >= 0)
    assert np.count_nonzero(cov.matrix() - np.diag(np.diag(cov.matrix()))) == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 500))
def test_noise_scales_inverse_with_shots(landscape, seed, k):
    theta = np.random.default_rng(seed).uniform(0, 2 * np.pi, 16)
    np.testing.assert_array_equal(landscape.noise_variance(theta, 2 * k),
                                  landscape.noise_variance(theta, k) / 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_shots=st.integers(1, 1000))
def test_second_moment_identity(layout, heisenberg, landscape, seed, n_shots):
    theta = np.random.default_rng(seed).uniform(0, 2 * np.pi, 16)
    grad, var = landscape.gradient_and_variance(theta, n_shots)
    assert second_moment_trace(layout, theta, heisenberg, n_shots) == pytest.approx(
        var.sum() + grad @ grad, rel=1e-12)


def test_second_moment_equals_covariance_at_critical_point(layout, heisenberg, checkpoints):
    theta = checkpoints["saddle"].params
    tr_c = exact_noise_covariance(layout, theta, heisenberg, 100).trace
    assert second_moment_trace(layout, theta, heisenberg, 100) == pytest.approx(tr_c, rel=1e-12)


@pytest.mark.parametrize("n_shots", [10, 100])
def test_sampled_gradient_statistics(landscape, n_shots):
    rng = np.random.default_rng(3 + n_shots)
    theta = rng.uniform(0, 2 * np.pi, 16)
    draws = np.array([landscape.sampled_gradient(theta, n_shots, rng) for _ in range(10_000)])
    grad, var = landscape.gradient_and_variance(theta, n_shots)
    assert np.all(np.abs(draws.mean(axis=0) - grad) < 5 * np.sqrt(var / 10_000))
    np.testing.assert_allclose(draws.var(axis=0), var, rtol=0.1)
    corr = np.corrcoef(draws.T)
    assert np.max(np.abs(corr[~np.eye(16, dtype=bool)])) < 4 / np.sqrt(10_000)
    second = np.sum(draws**2, axis=1)
    se = second.std() / np.sqrt(second.size)
    assert abs(second.mean() - (var.sum() + grad @ grad)) < 3 * se


def test_batched_sampling_needs_one_generator_per_row(landscape):
    theta = np.zeros((3, 16))
    with pytest.raises(ConfigurationError):
        landscape.sampled_gradient(theta, 10, [np.random.default_rng(0)])


def test_batched_sampling_rows_are_independent_of_batch(landscape):
    thetas = np.random.default_rng(4).uniform(0, 6, (3, 16))
    gens = lambda: [np.random.default_rng(s) for s in (10, 11, 12)]  # noqa: E731
    together = landscape.sampled_gradient(thetas, 20, gens())
    alone = landscape.sampled_gradient(thetas[1:2], 20, gens()[1:2])
    np.testing.assert_array_equal(together[1], alone[0])


# ---------------------------------------------------------------- Hessian

def test_hessian_matches_finite_differences(landscape):
    rng = np.random.default_rng(5)
    eps = 1e-4
    for theta in rng.uniform(0, 2 * np.pi, (3, 16)):
        h = landscape.hessian(theta)
        assert np.max(np.abs(h - h.T)) < 1e-9
        fd = np.empty((16, 16))
        for j in range(16):
            e = np.zeros(16)
            e[j] = eps
            fd[:, j] = (landscape.gradient(theta + e) - landscape.gradient(theta - e)) / (2 * eps)
        assert np.max(np.abs(h - fd)) < 1e-6


def test_jacobi_examples():
    np.testing.assert_allclose(hessian_eigenvalues(np.eye(3)), [1, 1, 1])
    np.testing.assert_allclose(hessian_eigenvalues(np.diag([2.0, -1.0, 0.0])), [-1, 0, 2])
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        jacobi_eigh(np.ones((2, 3)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 20), scale=st.floats(1e-6, 1e6))
def test_jacobi_against_lapack(seed, n, scale):
    a = np.random.default_rng(seed).standard_normal((n, n)) * scale
    a = a + a.T
    values, vectors = jacobi_eigh(a)
    assert np.all(np.diff(values) >= 0)
    norm = max(1.0, np.linalg.norm(a))
    np.testing.assert_allclose(values, np.linalg.eigvalsh(a), atol=1e-10 * norm)
    assert np.max(np.abs(a @ vectors - vectors * values)) < 1e-8 * norm
    assert abs(values.sum() - np.trace(a)) < 1e-8 * norm


def test_hessian_spectrum_at_saddle(landscape, checkpoints):
    eigs = hessian_eigenvalues(landscape.hessian(checkpoints["saddle"].params))
    assert eigs[0] < -0.01
    assert np.count_nonzero(np.abs(eigs) < 0.05) >= 3
    assert 5 <= eigs[-1] <= 15
