"""Dense statevector simulation of the layered RY/CNOT ansatz.

Bit convention: qubit ``q`` is bit ``q`` of the basis index, so qubit 0 is the
least significant bit.  ``|0101>`` written as a list of qubit values
``[1, 0, 1, 0]`` (qubit 0 first) is basis index ``0b0101 = 5``.

The low-level helpers (``ry_rows``, ``cnot_rows``, ``ansatz_rows``) work on
stacked amplitude arrays of shape ``(..., 2**n)`` so that many circuits can be
simulated at once; the public ``StateVector`` functions are thin wrappers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError

MAX_QUBITS = 24


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ConfigurationError(
                f"expected {2**self.n_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def _ladder(n_qubits):
    return tuple((q, q + 1) for q in range(n_qubits - 1))


@dataclass(frozen=True)
class AnsatzLayout:
    """Alternating RY layers and a fixed CNOT entangler.

    The entangler is applied after every RY layer except the last one.
    Parameter ``layer * n_qubits + qubit`` drives the RY on ``qubit`` in
    ``layer``.
    """

    n_qubits: int
    n_layers: int
    entangler: tuple = field(default=None)

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_qubits > MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        if self.n_layers < 1:
            raise ConfigurationError("n_layers must be positive")
        ent = _ladder(self.n_qubits) if self.entangler is None else self.entangler
        ent = tuple((int(c), int(t)) for c, t in ent)
        for c, t in ent:
            if c == t or not (0 <= c < self.n_qubits and 0 <= t < self.n_qubits):
                raise ConfigurationError(f"invalid entangler pair ({c}, {t})")
        object.__setattr__(self, "entangler", ent)

    @property
    def n_params(self) -> int:
        return self.n_qubits * self.n_layers

    def describe(self) -> str:
        pairs = ",".join(f"{c}-{t}" for c, t in self.entangler)
        return f"ry_ladder n_qubits={self.n_qubits} n_layers={self.n_layers} entangler={pairs}"


def check_params(layout: AnsatzLayout, params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape[-1:] != (layout.n_params,):
        raise ConfigurationError(
            f"expected {layout.n_params} parameters, got shape {params.shape}"
        )
    if not np.all(np.isfinite(params)):
        raise ConfigurationError("parameters must be finite")
    return params


# ---------------------------------------------------------------------------
# stacked-array kernels

def zero_rows(n_qubits: int, batch_shape=()) -> np.ndarray:
    rows = np.zeros(tuple(batch_shape) + (2**n_qubits,))
    rows[..., 0] = 1.0
    return rows


def ry_rows(rows: np.ndarray, n_qubits: int, qubit: int, angles) -> np.ndarray:
    """RY(angle) on ``qubit`` for every row; ``angles`` broadcasts over the batch."""
    batch = rows.shape[:-1]
    view = rows.reshape(batch + (2 ** (n_qubits - 1 - qubit), 2, 2**qubit))
    half = np.asarray(angles, dtype=float)[..., None, None] / 2.0
    c, s = np.cos(half), np.sin(half)
    a0, a1 = view[..., 0, :], view[..., 1, :]
    out = np.empty(view.shape, dtype=np.result_type(rows.dtype, float))
    out[..., 0, :] = c * a0 - s * a1
    out[..., 1, :] = s * a0 + c * a1
    return out.reshape(rows.shape)


@lru_cache(maxsize=None)
def cnot_permutation(n_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    flip = ((idx >> control) & 1).astype(bool)
    perm = idx.copy()
    perm[flip] ^= 1 << target
    return perm


def cnot_rows(rows: np.ndarray, n_qubits: int, control: int, target: int) -> np.ndarray:
    return rows[..., cnot_permutation(n_qubits, control, target)]


def ansatz_rows(layout: AnsatzLayout, params: np.ndarray) -> np.ndarray:
    """Ansatz states for a stack of parameter vectors, shape ``(..., 2**n)``."""
    n = layout.n_qubits
    rows = zero_rows(n, params.shape[:-1])
    for layer in range(layout.n_layers):
        for q in range(n):
            rows = ry_rows(rows, n, q, params[..., layer * n + q])
        if layer < layout.n_layers - 1:
            for c, t in layout.entangler:
                rows = cnot_rows(rows, n, c, t)
    return rows


# ---------------------------------------------------------------------------
# public single-state API

def init_zero_state(n_qubits: int) -> StateVector:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}")
    return StateVector(int(n_qubits), zero_rows(int(n_qubits)).astype(complex))


def _check_qubit(state: StateVector, qubit: int):
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits} qubits")


def apply_ry(state: StateVector, qubit: int, angle: float) -> StateVector:
    _check_qubit(state, qubit)
    return StateVector(state.n_qubits, ry_rows(state.amplitudes, state.n_qubits, qubit, angle))


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise IndexError("control and target must differ")
    return StateVector(state.n_qubits, cnot_rows(state.amplitudes, state.n_qubits, control, target))


def prepare_ansatz_state(layout: AnsatzLayout, params) -> StateVector:
    params = check_params(layout, params)
    if params.ndim != 1:
        raise ConfigurationError("prepare_ansatz_state takes a single parameter vector")
    return StateVector(layout.n_qubits, ansatz_rows(layout, params).astype(complex))
