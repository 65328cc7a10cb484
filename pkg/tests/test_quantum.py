from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqe_saddle import (AnsatzLayout, ConfigurationError, StateVector, apply_cnot, apply_ry,
                        init_zero_state, prepare_ansatz_state)

angles = st.floats(-10.0, 10.0, allow_nan=False)


def random_state(rng, n):
    amp = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return StateVector(n, amp / np.linalg.norm(amp))


def basis(n, bits):
    """Computational basis state; ``bits[q]`` is the value of qubit q."""
    amp = np.zeros(2**n, dtype=complex)
    amp[sum(b << q for q, b in enumerate(bits))] = 1
    return StateVector(n, amp)


# dense oracle: every gate as a 2^n x 2^n matrix, qubit 0 rightmost in the kron
def dense_ry(n, qubit, angle):
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    ops = [np.array([[c, -s], [s, c]]) if q == qubit else np.eye(2) for q in range(n)]
    return reduce(np.kron, ops[::-1])


def dense_cnot(n, control, target):
    m = np.zeros((2**n, 2**n))
    for i in range(2**n):
        j = i ^ (1 << target) if (i >> control) & 1 else i
        m[j, i] = 1
    return m


def dense_ansatz(layout, params):
    n = layout.n_qubits
    psi = np.zeros(2**n)
    psi[0] = 1
    for layer in range(layout.n_layers):
        for q in range(n):
            psi = dense_ry(n, q, params[layer * n + q]) @ psi
        if layer < layout.n_layers - 1:
            for c, t in layout.entangler:
                psi = dense_cnot(n, c, t) @ psi
    return psi


@pytest.mark.parametrize("n", [1, 2, 4])
def test_zero_state(n):
    amp = init_zero_state(n).amplitudes
    assert amp.shape == (2**n,)
    assert amp[0] == 1 and np.all(amp[1:] == 0)


@pytest.mark.parametrize("n", [0, 25, -1])
def test_zero_state_rejects_bad_width(n):
    with pytest.raises(ConfigurationError):
        init_zero_state(n)


def test_ry_examples():
    psi = init_zero_state(1)
    np.testing.assert_allclose(apply_ry(psi, 0, 0.0).amplitudes, psi.amplitudes)
    np.testing.assert_allclose(apply_ry(psi, 0, np.pi).amplitudes, [0, 1], atol=1e-15)
    np.testing.assert_allclose(apply_ry(psi, 0, np.pi / 2).amplitudes, [2**-0.5, 2**-0.5])


def test_ry_index_error():
    with pytest.raises(IndexError):
        apply_ry(init_zero_state(2), 2, 0.1)


def test_cnot_examples():
    assert np.allclose(apply_cnot(basis(2, [0, 0]), 0, 1).amplitudes, basis(2, [0, 0]).amplitudes)
    assert np.allclose(apply_cnot(basis(2, [1, 0]), 0, 1).amplitudes, basis(2, [1, 1]).amplitudes)
    psi = random_state(np.random.default_rng(0), 3)
    twice = apply_cnot(apply_cnot(psi, 2, 0), 2, 0)
    np.testing.assert_allclose(twice.amplitudes, psi.amplitudes)


@pytest.mark.parametrize("pair", [(0, 0), (0, 3), (-1, 1)])
def test_cnot_index_error(pair):
    with pytest.raises(IndexError):
        apply_cnot(init_zero_state(3), *pair)


def test_ansatz_examples():
    layout = AnsatzLayout(4, 4)
    assert layout.n_params == 16
    assert layout.entangler == ((0, 1), (1, 2), (2, 3))
    zero = prepare_ansatz_state(layout, np.zeros(16)).amplitudes
    np.testing.assert_allclose(zero, init_zero_state(4).amplitudes)
    one = prepare_ansatz_state(AnsatzLayout(1, 1), [np.pi]).amplitudes
    np.testing.assert_allclose(one, [0, 1], atol=1e-15)


def test_ansatz_length_mismatch():
    with pytest.raises(ConfigurationError):
        prepare_ansatz_state(AnsatzLayout(4, 4), np.zeros(15))
    with pytest.raises(ConfigurationError):
        prepare_ansatz_state(AnsatzLayout(4, 4), np.full(16, np.nan))


@pytest.mark.parametrize("pairs", [((0, 0),), ((0, 4),)])
def test_layout_rejects_bad_entangler(pairs):
    with pytest.raises(ConfigurationError):
        AnsatzLayout(4, 2, pairs)


def test_ansatz_matches_dense_oracle():
    rng = np.random.default_rng(7)
    layout = AnsatzLayout(4, 4)
    for _ in range(20):
        params = rng.uniform(-2 * np.pi, 2 * np.pi, 16)
        state = prepare_ansatz_state(layout, params)
        assert abs(state.norm() - 1) < 1e-12
        np.testing.assert_allclose(state.amplitudes, dense_ansatz(layout, params), atol=1e-10)


def test_ansatz_custom_entangler_matches_oracle():
    layout = AnsatzLayout(3, 3, ((2, 0), (0, 1)))
    params = np.random.default_rng(3).uniform(-3, 3, 9)
    np.testing.assert_allclose(prepare_ansatz_state(layout, params).amplitudes,
                               dense_ansatz(layout, params), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), qubit=st.integers(0, 3), angle=angles,
       control=st.integers(0, 3), shift=st.integers(1, 3))
def test_gates_preserve_norm_and_inner_products(seed, qubit, angle, control, shift):
    rng = np.random.default_rng(seed)
    a, b = random_state(rng, 4), random_state(rng, 4)
    target = (control + shift) % 4
    for gate in (lambda s: apply_ry(s, qubit, angle), lambda s: apply_cnot(s, control, target)):
        ga, gb = gate(a), gate(b)
        assert abs(ga.norm() ** 2 - 1) < 1e-12
        assert abs(np.vdot(ga.amplitudes, gb.amplitudes) - np.vdot(a.amplitudes, b.amplitudes)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), qubit=st.integers(0, 3), angle=angles)
def test_gates_are_linear(seed, qubit, angle):
    rng = np.random.default_rng(seed)
    a, b = random_state(rng, 4), random_state(rng, 4)
    alpha, beta = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    mix = StateVector(4, alpha * a.amplitudes + beta * b.amplitudes)
    for gate in (lambda s: apply_ry(s, qubit, angle), lambda s: apply_cnot(s, qubit, (qubit + 1) % 4)):
        lhs = gate(mix).amplitudes
        rhs = alpha * gate(a).amplitudes + beta * gate(b).amplitudes
        assert np.max(np.abs(lhs - rhs)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(params=st.lists(angles, min_size=16, max_size=16))
def test_ansatz_norm_property(params):
    state = prepare_ansatz_state(AnsatzLayout(4, 4), params)
    assert abs(state.norm() ** 2 - 1) < 1e-12
