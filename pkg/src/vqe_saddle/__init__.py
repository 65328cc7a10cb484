"""Shot-noise SGD escape from saddle points of a hardware-efficient VQE ansatz.

A small statevector simulator, parameter-shift gradients with exact
shot-noise statistics, GD/SGD/SDE dynamics and the sweep, fit and
diagnostic tooling used by the ``vqe-saddle`` command.
"""
from importlib import resources

from .dynamics import (NumericalError, OptimizerConfig, QuadraticLandscape, Trajectory,
                       gd_step, run_ensemble, run_trajectory, sde_step, sgd_step)
from .errors import ConfigurationError, FitError, LocatorError, ResourceError
from .experiments import (CriticalPointCheckpoint, EscapeResult, PowerLawFit, SweepCell,
                          collapse_check, escape_sweep, fdr_scan, find_excited_state, find_saddle,
                          fit_power_law, load_checkpoint, measurement_cost, save_checkpoint)
from .gradients import (VQELandscape, exact_gradient, exact_noise_covariance,
                        finite_difference_gradient, hessian, hessian_eigenvalues, jacobi_eigh,
                        sampled_gradient, second_moment_trace)
from .observables import (Hamiltonian, ObservableGroup, PauliString, exact_diagonalize,
                          exact_expectation, exact_variance, heisenberg_preset, sample_group_mean)
from .quantum import (AnsatzLayout, StateVector, apply_cnot, apply_ry, init_zero_state,
                      prepare_ansatz_state)

__version__ = "0.1.0"

CHECKPOINTS = {
    "saddle": "heisenberg_saddle.ckpt",
    "excited": "heisenberg_excited.ckpt",
    "ground": "heisenberg_ground.ckpt",
    "xyz-saddle": "xyz_saddle.ckpt",
}


def bundled_checkpoint(name):
    """Load one of the frozen checkpoints (see ``CHECKPOINTS``)."""
    if name not in CHECKPOINTS:
        raise ConfigurationError(f"unknown checkpoint {name!r}; choose from {sorted(CHECKPOINTS)}")
    with resources.as_file(resources.files(__package__) / "data" / CHECKPOINTS[name]) as path:
        return load_checkpoint(path)
