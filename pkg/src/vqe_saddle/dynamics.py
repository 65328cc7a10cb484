"""GD, shot-noise SGD and the Euler-Maruyama SDE, plus trajectory runners.

Steppers take a *provider*: any object with ``n_params`` and the methods
``loss``, ``gradient``, ``sampled_gradient``, ``gradient_and_variance`` and
``hessian`` (see ``VQELandscape`` and ``QuadraticLandscape``).  Parameters
are never wrapped modulo 2*pi.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError

KINDS = ("gd", "sgd", "sde")


class NumericalError(FloatingPointError):
    """A trajectory produced non-finite parameters."""


@dataclass
class OptimizerConfig:
    kind: str = "sgd"
    learning_rate: float = 0.05
    shots_per_group: int | None = 100
    sde_time_step: float | None = None
    max_steps: int = 1000
    record_stride: int = 1
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.kind not in KINDS:
            errors.append(f"kind: must be one of {KINDS}, got {self.kind!r}")
        if not (self.learning_rate > 0):
            errors.append("learning_rate: must be positive")
        if self.kind in ("sgd", "sde"):
            if self.shots_per_group is None or int(self.shots_per_group) < 1:
                errors.append("shots_per_group: must be >= 1 for sgd/sde")
        if self.kind == "sde":
            if self.sde_time_step is None:
                self.sde_time_step = min(self.learning_rate, 0.01)
            if not (0 < self.sde_time_step <= self.learning_rate):
                errors.append("sde_time_step: must satisfy 0 < dt <= learning_rate")
        if int(self.max_steps) < 1:
            errors.append("max_steps: must be >= 1")
        if int(self.record_stride) < 1:
            errors.append("record_stride: must be >= 1")
        if errors:
            raise ConfigurationError("; ".join(errors))

    @property
    def time_step(self) -> float:
        return self.sde_time_step if self.kind == "sde" else self.learning_rate

    @property
    def noise_strength(self) -> float:
        if self.shots_per_group is None:
            return 0.0
        return math.sqrt(self.learning_rate / self.shots_per_group)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    steps: np.ndarray
    times: np.ndarray
    losses: np.ndarray
    final_params: np.ndarray
    config: OptimizerConfig
    params: np.ndarray | None = None
    clamped: int = 0

    @property
    def records(self):
        return list(zip(self.steps.tolist(), self.times.tolist(), self.losses.tolist()))


@dataclass
class SdeDiagnostics:
    clamped: int = 0


class QuadraticLandscape:
    """Synthetic loss sum(lambda_i * theta_i**2) / 2 with Gaussian gradient noise.

    The noisy gradient is ``lambda * theta + sqrt(noise / n_shots) * z`` so the
    estimator covariance is ``diag(noise) / n_shots`` everywhere.  Negative
    curvatures turn the origin into a saddle.
    """

    def __init__(self, curvatures, noise=None, center=None):
        self.curvatures = np.asarray(curvatures, dtype=float)
        self.n_params = self.curvatures.size
        self.noise = np.zeros(self.n_params) if noise is None else np.broadcast_to(
            np.asarray(noise, dtype=float), (self.n_params,)).copy()
        self.center = np.zeros(self.n_params) if center is None else np.asarray(center, float)

    def loss(self, theta):
        d = np.asarray(theta, float) - self.center
        return 0.5 * np.sum(self.curvatures * d**2, axis=-1)

    def gradient(self, theta):
        return self.curvatures * (np.asarray(theta, float) - self.center)

    def gradient_and_variance(self, theta, n_shots):
        theta = np.asarray(theta, float)
        var = np.broadcast_to(self.noise / _shots_array(n_shots, theta), theta.shape)
        return self.gradient(theta), var

    def noise_variance(self, theta, n_shots):
        return self.gradient_and_variance(theta, n_shots)[1]

    def sampled_gradient(self, theta, n_shots, rng):
        grad, var = self.gradient_and_variance(theta, n_shots)
        return grad + np.sqrt(var) * _normals(rng, grad.shape)

    def hessian(self, theta):
        return np.diag(self.curvatures)


def _shots_array(n_shots, theta):
    shots = np.asarray(n_shots, dtype=float)
    if np.any(shots < 1):
        raise ConfigurationError("shots per group must be >= 1")
    return shots[..., None] if shots.ndim and np.ndim(theta) > 1 else shots


def _normals(rng, shape):
    """Standard normals; a list of generators fills one row each."""
    if isinstance(rng, np.random.Generator):
        return rng.standard_normal(shape)
    rows = [g.standard_normal(shape[-1]) for g in rng]
    return np.stack(rows).reshape(shape)


# ---------------------------------------------------------------------------
# single steps

def gd_step(params, eta, provider):
    if not eta > 0:
        raise ConfigurationError("learning rate must be positive")
    return np.asarray(params, float) - eta * provider.gradient(params)


def sgd_step(params, eta, n_shots, rng, provider):
    if not eta > 0:
        raise ConfigurationError("learning rate must be positive")
    return np.asarray(params, float) - eta * provider.sampled_gradient(params, n_shots, rng)


def sde_step(params, dt, eta, n_shots, rng, provider, diagnostics: SdeDiagnostics | None = None):
    """One Ito Euler-Maruyama step of d theta = -grad L dt + sqrt(eta C) dW."""
    if not dt > 0:
        raise ConfigurationError("SDE time step must be positive")
    params = np.asarray(params, float)
    grad, var = provider.gradient_and_variance(params, n_shots)
    negative = var < 0
    if np.any(negative):
        if diagnostics is not None:
            diagnostics.clamped += int(np.count_nonzero(negative))
        var = np.where(negative, 0.0, var)
    z = _normals(rng, params.shape)
    return params - grad * dt + np.sqrt(eta * var * dt) * z


def _step(params, config: OptimizerConfig, rng, provider, diagnostics, n_shots=None):
    n_shots = config.shots_per_group if n_shots is None else n_shots
    if config.kind == "gd":
        return gd_step(params, config.learning_rate, provider)
    if config.kind == "sgd":
        return sgd_step(params, config.learning_rate, n_shots, rng, provider)
    return sde_step(params, config.sde_time_step, config.learning_rate, n_shots,
                    rng, provider, diagnostics)


# ---------------------------------------------------------------------------
# runners

def run_trajectory(provider, initial_params, config: OptimizerConfig,
                   keep_params: bool = False, stop_below: float | None = None) -> Trajectory:
    """Iterate the configured stepper, recording the exact loss every ``record_stride`` steps.

    The recorded loss is always exact, whatever the optimizer sees.  With
    ``stop_below`` the run ends at the first step whose loss is below it.
    """
    rng = np.random.default_rng(config.seed)
    diagnostics = SdeDiagnostics()
    theta = np.array(initial_params, dtype=float)
    dt = config.time_step
    steps, losses, snapshots = [0], [float(provider.loss(theta))], [theta.copy()]
    for k in range(1, int(config.max_steps) + 1):
        theta = _step(theta, config, rng, provider, diagnostics)
        if not np.all(np.isfinite(theta)):
            raise NumericalError(f"non-finite parameters at step {k} ({config.kind}, seed {config.seed})")
        loss = None
        if k % config.record_stride == 0 or stop_below is not None:
            loss = float(provider.loss(theta))
        if k % config.record_stride == 0 or (stop_below is not None and loss < stop_below):
            steps.append(k)
            losses.append(loss)
            if keep_params:
                snapshots.append(theta.copy())
        if stop_below is not None and loss < stop_below:
            break
    steps = np.array(steps)
    return Trajectory(steps, steps * dt, np.array(losses), theta, config,
                      np.array(snapshots) if keep_params else None, diagnostics.clamped)


@dataclass
class EnsembleResult:
    """First-passage outcome for each instance; ``nan`` time means censored."""

    escape_steps: np.ndarray
    escape_times: np.ndarray
    final_params: np.ndarray
    clamped: int = 0
    seeds: list = field(default_factory=list)

    @property
    def censored(self) -> int:
        return int(np.count_nonzero(np.isnan(self.escape_times)))


def run_ensemble(provider, initial_params, config: OptimizerConfig, seeds,
                 stop_below: float, max_steps: int | None = None) -> EnsembleResult:
    """Advance independent instances in lockstep until each crosses ``stop_below``.

    Instance ``i`` draws only from ``np.random.default_rng(seeds[i])`` and
    every numerical kernel acts row by row, so an instance's outcome does
    not depend on which other instances share the batch.
    """
    max_steps = int(config.max_steps if max_steps is None else max_steps)
    n = len(seeds)
    rngs = [np.random.default_rng(s) for s in seeds]
    theta = np.tile(np.asarray(initial_params, float), (n, 1))
    escape = np.full(n, -1)
    active = np.arange(n)
    diagnostics = SdeDiagnostics()
    if float(provider.loss(theta[0])) < stop_below:
        escape[:] = 0
        active = active[:0]
    k = 0
    while active.size and k < max_steps:
        k += 1
        sub = theta[active]
        sub_rngs = [rngs[i] for i in active]
        sub = _step(sub, config, sub_rngs, provider, diagnostics)
        if not np.all(np.isfinite(sub)):
            raise NumericalError(f"non-finite parameters at step {k} ({config.kind})")
        theta[active] = sub
        crossed = provider.loss(sub) < stop_below
        escape[active[crossed]] = k
        active = active[~crossed]
    times = np.where(escape >= 0, escape * config.time_step, np.nan)
    return EnsembleResult(escape, times, theta, diagnostics.clamped, list(seeds))
