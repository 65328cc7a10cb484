"""Parameter-shift gradients, shot-noise covariance and Hessians.

Every RY generator has eigenvalues +-1/2, so shifting one angle by +-pi/2
gives the exact derivative.  The finite-shot estimator measures each of the
``2 * n_params`` shifted circuits, group by group, with ``n_shots`` fresh
shots.  Components therefore never share shots and the noise covariance is
diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .observables import GroupTables, Hamiltonian
from .quantum import AnsatzLayout, ansatz_rows, check_params

SHIFT = np.pi / 2


@dataclass
class GradientEstimate:
    values: np.ndarray
    shots_per_group: int | None
    estimator_kind: str  # "parameter-shift", "finite-difference" or "exact"


@dataclass
class NoiseCovariance:
    """Diagonal of the estimator covariance; off-diagonals are zero by construction."""

    diagonal: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.sum(self.diagonal))

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)


@dataclass
class HessianMatrix:
    entries: np.ndarray


def _check_shots(n_shots):
    if n_shots is None or int(n_shots) < 1:
        raise ConfigurationError(f"shots per group must be >= 1, got {n_shots!r}")
    return int(n_shots)


class VQELandscape:
    """Loss, gradients and shot noise of one ansatz/Hamiltonian pair.

    All methods take parameters with shape ``(..., n_params)`` and evaluate
    every leading index independently, so whole ensembles of trajectories
    advance in one call.
    """

    def __init__(self, layout: AnsatzLayout, hamiltonian: Hamiltonian):
        if layout.n_qubits != hamiltonian.n_qubits:
            raise ConfigurationError(
                f"ansatz has {layout.n_qubits} qubits, Hamiltonian {hamiltonian.n_qubits}"
            )
        self.layout = layout
        self.hamiltonian = hamiltonian
        self.tables = GroupTables(hamiltonian)
        self.n_params = layout.n_params
        self._shifts = np.concatenate([np.eye(self.n_params), -np.eye(self.n_params)]) * SHIFT

    def states(self, theta):
        return ansatz_rows(self.layout, check_params(self.layout, theta))

    def loss(self, theta) -> np.ndarray:
        return self.tables.means(self.states(theta)).sum(axis=-1)

    def _shifted_states(self, theta):
        theta = check_params(self.layout, theta)
        return ansatz_rows(self.layout, theta[..., None, :] + self._shifts)

    def _split(self, per_shift):
        p = self.n_params
        return per_shift[..., :p], per_shift[..., p:]

    def gradient(self, theta) -> np.ndarray:
        plus, minus = self._split(self.tables.means(self._shifted_states(theta)).sum(axis=-1))
        return (plus - minus) / 2.0

    def gradient_and_variance(self, theta, n_shots):
        """Exact gradient and the diagonal estimator covariance at ``n_shots``."""
        n_shots = _check_shots(n_shots)
        means, variances = self.tables.moments(self._shifted_states(theta))
        plus, minus = self._split(means.sum(axis=-1))
        var_plus, var_minus = self._split(variances.sum(axis=-1))
        return (plus - minus) / 2.0, (var_plus + var_minus) / (4.0 * n_shots)

    def noise_variance(self, theta, n_shots) -> np.ndarray:
        return self.gradient_and_variance(theta, n_shots)[1]

    def sampled_gradient(self, theta, n_shots, rng) -> np.ndarray:
        """Shot-noise gradient.

        For a stack of parameter vectors pass one generator per row in
        ``rng``; each row then consumes only its own stream.
        """
        n_shots = _check_shots(n_shots)
        level_probs = self.tables.level_probabilities(self._shifted_states(theta))
        if level_probs.ndim == 3:
            energies = self.tables.draw_means(level_probs, n_shots, rng).sum(axis=-1)
        else:
            flat = level_probs.reshape((-1,) + level_probs.shape[-3:])
            if len(rng) != flat.shape[0]:
                raise ConfigurationError("need one random generator per parameter vector")
            energies = np.stack([
                self.tables.draw_means(lp, n_shots, g).sum(axis=-1) for lp, g in zip(flat, rng)
            ]).reshape(level_probs.shape[:-3] + (2 * self.n_params,))
        plus, minus = self._split(energies)
        return (plus - minus) / 2.0

    def hessian(self, theta) -> np.ndarray:
        theta = check_params(self.layout, theta)
        p = self.n_params
        eye = np.eye(p) * SHIFT
        signs = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        points = np.stack([theta + a * eye[:, None, :] + b * eye[None, :, :] for a, b in signs])
        losses = self.loss(points)
        h = (losses[0] - losses[1] - losses[2] + losses[3]) / 4.0
        return (h + h.T) / 2.0


# ---------------------------------------------------------------------------
# single-point operations

def exact_gradient(layout, params, hamiltonian) -> GradientEstimate:
    return GradientEstimate(VQELandscape(layout, hamiltonian).gradient(params), None, "exact")


def sampled_gradient(layout, params, hamiltonian, shots_per_group, rng) -> GradientEstimate:
    values = VQELandscape(layout, hamiltonian).sampled_gradient(
        np.asarray(params, dtype=float), shots_per_group, rng)
    return GradientEstimate(values, int(shots_per_group), "parameter-shift")


def finite_difference_gradient(layout, params, hamiltonian, epsilon,
                               shots_per_group=None, rng=None) -> GradientEstimate:
    """Central differences with step ``epsilon``; exact loss unless shots are given."""
    if not epsilon > 0:
        raise ConfigurationError("finite-difference step must be positive")
    land = VQELandscape(layout, hamiltonian)
    params = check_params(layout, params)
    points = params + np.concatenate([np.eye(land.n_params), -np.eye(land.n_params)]) * epsilon
    if shots_per_group is None:
        losses = land.loss(points)
    else:
        n_shots = _check_shots(shots_per_group)
        losses = land.tables.sample_means(land.states(points), n_shots, rng).sum(axis=-1)
    plus, minus = losses[: land.n_params], losses[land.n_params:]
    return GradientEstimate((plus - minus) / (2 * epsilon), shots_per_group, "finite-difference")


def exact_noise_covariance(layout, params, hamiltonian, n_shots) -> NoiseCovariance:
    return NoiseCovariance(VQELandscape(layout, hamiltonian).noise_variance(params, n_shots))


def second_moment_trace(layout, params, hamiltonian, n_shots) -> float:
    """Trace of E[g g^T] = Tr C + |grad L|^2."""
    grad, var = VQELandscape(layout, hamiltonian).gradient_and_variance(params, n_shots)
    return float(np.sum(var) + np.dot(grad, grad))


def hessian(layout, params, hamiltonian) -> HessianMatrix:
    return HessianMatrix(VQELandscape(layout, hamiltonian).hessian(params))


# ---------------------------------------------------------------------------
# cyclic Jacobi eigensolver

def jacobi_eigh(matrix, tol=1e-12, max_sweeps=100):
    """Eigenvalues (ascending) and eigenvectors of a real symmetric matrix.

    Stops when the off-diagonal Frobenius norm drops below
    ``tol * max(1, |A|_F)`` or after ``max_sweeps`` sweeps.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-9, rtol=0):
        raise ValueError("matrix must be symmetric")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    scale = max(1.0, np.linalg.norm(a))
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.sqrt(np.sum(a[offdiag] ** 2)) < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = np.copysign(1.0, tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    evals = np.diag(a).copy()
    order = np.argsort(evals)
    return evals[order], v[:, order]


def hessian_eigenvalues(h) -> np.ndarray:
    entries = h.entries if isinstance(h, HessianMatrix) else h
    return jacobi_eigh(entries)[0]
