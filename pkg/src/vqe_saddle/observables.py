"""Pauli-string Hamiltonians, exact moments and finite-shot measurement.

A Pauli string is written with one letter per qubit, qubit 0 first, so
``"XXII"`` acts with X on qubits 0 and 1.  A measurement group collects
strings whose non-identity letters all share one basis; one local basis
change per qubit diagonalizes the whole group, and every shot of the group
is a single computational-basis bitstring.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConfigurationError, ResourceError
from .quantum import AnsatzLayout, StateVector, ansatz_rows, check_params, prepare_ansatz_state

PAULI_LETTERS = "IXYZ"
MAX_DIAG_QUBITS = 10

_SQ2 = 1.0 / np.sqrt(2.0)
HADAMARD = np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]])
# H @ S^dagger: conjugates Y into Z
Y_TO_Z = np.array([[_SQ2, -1j * _SQ2], [_SQ2, 1j * _SQ2]])
BASIS_CHANGE = {"X": HADAMARD, "Y": Y_TO_Z, "Z": None}

PAULI_MATRICES = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    coefficient: float
    paulis: str

    def __post_init__(self):
        if not np.isfinite(self.coefficient):
            raise ConfigurationError("Pauli coefficient must be finite")
        if any(ch not in PAULI_LETTERS for ch in self.paulis):
            raise ConfigurationError(f"invalid Pauli letters in {self.paulis!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.paulis)

    def mask(self, letters: str) -> int:
        return sum(1 << q for q, ch in enumerate(self.paulis) if ch in letters)

    def matrix(self) -> np.ndarray:
        # qubit 0 is the least significant bit, so it is the rightmost factor
        return reduce(np.kron, [PAULI_MATRICES[ch] for ch in reversed(self.paulis)]) * self.coefficient


@dataclass(frozen=True)
class ObservableGroup:
    basis: str
    strings: tuple

    def __post_init__(self):
        if self.basis not in ("X", "Y", "Z"):
            raise ConfigurationError(f"group basis must be X, Y or Z, got {self.basis!r}")
        strings = tuple(self.strings)
        if not strings:
            raise ConfigurationError("a measurement group needs at least one string")
        widths = {s.n_qubits for s in strings}
        if len(widths) != 1:
            raise ConfigurationError("all strings in a group must have the same width")
        for s in strings:
            if any(ch not in ("I", self.basis) for ch in s.paulis):
                raise ConfigurationError(f"string {s.paulis} does not belong to the {self.basis} group")
        object.__setattr__(self, "strings", strings)

    @property
    def n_qubits(self) -> int:
        return self.strings[0].n_qubits

    @property
    def active_qubits(self) -> list:
        mask = 0
        for s in self.strings:
            mask |= s.mask("XYZ")
        return [q for q in range(self.n_qubits) if mask >> q & 1]

    def diagonal(self) -> np.ndarray:
        """Eigenvalue of the group for each basis index after the basis change."""
        idx = np.arange(2**self.n_qubits)
        diag = np.zeros(idx.shape)
        for s in self.strings:
            parity = _popcount(idx & s.mask("XYZ")) & 1
            diag += s.coefficient * (1 - 2 * parity)
        return diag

    def matrix(self) -> np.ndarray:
        return sum(s.matrix() for s in self.strings)


@dataclass
class Hamiltonian:
    groups: list
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.groups = list(self.groups)
        if not self.groups:
            raise ConfigurationError("Hamiltonian needs at least one group")
        if len({g.n_qubits for g in self.groups}) != 1:
            raise ConfigurationError("all groups must act on the same number of qubits")

    @property
    def n_qubits(self) -> int:
        return self.groups[0].n_qubits

    @property
    def strings(self) -> list:
        return [s for g in self.groups for s in g.strings]

    def matrix(self) -> np.ndarray:
        if self.n_qubits > MAX_DIAG_QUBITS:
            raise ResourceError(f"dense matrix limited to {MAX_DIAG_QUBITS} qubits")
        return sum(g.matrix() for g in self.groups)

    def describe(self) -> str:
        extra = " ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.name} {extra}".strip()


def _popcount(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    count = np.zeros_like(a)
    while np.any(a):
        count += a & 1
        a = a >> 1
    return count


def heisenberg_preset(n_sites: int, jx: float = 1.0, jy: float = 1.0, jz: float = 1.0,
                      periodic: bool = True) -> Hamiltonian:
    """Nearest-neighbour XYZ chain split into XX, YY and ZZ measurement groups."""
    if n_sites < 2:
        raise ConfigurationError("a spin chain needs at least 2 sites")
    bonds = [(i, i + 1) for i in range(n_sites - 1)]
    if periodic:
        bonds.append((n_sites - 1, 0))
    groups = []
    for letter, coupling in (("X", jx), ("Y", jy), ("Z", jz)):
        strings = []
        for a, b in bonds:
            letters = ["I"] * n_sites
            letters[a] = letters[b] = letter
            strings.append(PauliString(float(coupling), "".join(letters)))
        groups.append(ObservableGroup(letter, strings))
    name = "heisenberg" if jx == jy == jz else "xyz"
    return Hamiltonian(groups, name, {"n_sites": n_sites, "jx": jx, "jy": jy, "jz": jz,
                                      "periodic": periodic})


def single_z(n_qubits: int = 1, qubit: int = 0, coefficient: float = 1.0) -> Hamiltonian:
    letters = ["I"] * n_qubits
    letters[qubit] = "Z"
    return Hamiltonian([ObservableGroup("Z", [PauliString(coefficient, "".join(letters))])], "z")


# ---------------------------------------------------------------------------
# exact moments by direct operator application

def apply_pauli_string(amplitudes: np.ndarray, string: PauliString) -> np.ndarray:
    idx = np.arange(amplitudes.shape[-1])
    flip = string.mask("XY")
    n_y = string.paulis.count("Y")
    sign = 1 - 2 * (_popcount(idx & string.mask("YZ")) & 1)
    out = np.empty(amplitudes.shape, dtype=complex)
    out[..., idx ^ flip] = (string.coefficient * (1j**n_y)) * sign * amplitudes
    return out


def _apply_group(amplitudes, group):
    return sum(apply_pauli_string(amplitudes, s) for s in group.strings)


def _strings_of(obs):
    if isinstance(obs, Hamiltonian):
        return obs.strings
    if isinstance(obs, ObservableGroup):
        return list(obs.strings)
    if isinstance(obs, PauliString):
        return [obs]
    raise TypeError(f"unsupported observable {type(obs).__name__}")


def _check_width(state: StateVector, n_qubits: int):
    if state.n_qubits != n_qubits:
        raise ConfigurationError(
            f"state has {state.n_qubits} qubits but observable acts on {n_qubits}"
        )


def exact_expectation(state: StateVector, obs) -> float:
    strings = _strings_of(obs)
    _check_width(state, strings[0].n_qubits)
    psi = state.amplitudes
    value = sum(np.vdot(psi, apply_pauli_string(psi, s)) for s in strings)
    if abs(value.imag) > 1e-10:
        raise ArithmeticError(f"expectation has imaginary part {value.imag}")
    return float(value.real)


def exact_variance(state: StateVector, group: ObservableGroup) -> float:
    _check_width(state, group.n_qubits)
    psi = state.amplitudes
    h_psi = _apply_group(psi, group)
    mean = np.vdot(psi, h_psi).real
    second = np.vdot(h_psi, h_psi).real
    return max(float(second - mean**2), 0.0)


# ---------------------------------------------------------------------------
# measurement-basis statistics on stacked states

def apply_1q_rows(rows: np.ndarray, n_qubits: int, qubit: int, matrix: np.ndarray) -> np.ndarray:
    batch = rows.shape[:-1]
    view = rows.reshape(batch + (2 ** (n_qubits - 1 - qubit), 2, 2**qubit))
    a0, a1 = view[..., 0, :], view[..., 1, :]
    out = np.empty(view.shape, dtype=np.result_type(rows.dtype, matrix.dtype))
    out[..., 0, :] = matrix[0, 0] * a0 + matrix[0, 1] * a1
    out[..., 1, :] = matrix[1, 0] * a0 + matrix[1, 1] * a1
    return out.reshape(rows.shape)


def measurement_probabilities(rows: np.ndarray, group: ObservableGroup) -> np.ndarray:
    """Outcome distribution over bitstrings after the group's basis change."""
    change = BASIS_CHANGE[group.basis]
    if change is not None:
        for q in group.active_qubits:
            rows = apply_1q_rows(rows, group.n_qubits, q, change)
    return rows.real**2 + rows.imag**2 if np.iscomplexobj(rows) else rows**2


class GroupTables:
    """Precomputed diagonals so group moments reduce to weighted sums.

    For sampling, basis states sharing an eigenvalue are merged into one
    outcome level: the shot mean depends only on how many shots land on
    each level, and the level histogram is again multinomial.
    """

    def __init__(self, hamiltonian: Hamiltonian):
        self.hamiltonian = hamiltonian
        self.n_qubits = hamiltonian.n_qubits
        self.diagonals = [g.diagonal() for g in hamiltonian.groups]
        self.levels = []
        self.level_members = []
        for diag in self.diagonals:
            values = np.unique(np.round(diag, 12))
            self.levels.append(values)
            self.level_members.append([np.flatnonzero(np.isclose(diag, v, atol=1e-12, rtol=0))
                                       for v in values])
        self.n_levels = max(len(v) for v in self.levels)
        self.level_values = np.zeros((len(self.levels), self.n_levels))
        for k, values in enumerate(self.levels):
            self.level_values[k, : len(values)] = values

    def probabilities(self, rows: np.ndarray) -> list:
        return [measurement_probabilities(rows, g) for g in self.hamiltonian.groups]

    def moments(self, rows: np.ndarray):
        """Per-group means and variances, each of shape ``batch + (n_groups,)``."""
        means, variances = [], []
        for probs, diag in zip(self.probabilities(rows), self.diagonals):
            m = np.sum(probs * diag, axis=-1)
            second = np.sum(probs * diag**2, axis=-1)
            means.append(m)
            variances.append(np.maximum(second - m**2, 0.0))
        return np.stack(means, axis=-1), np.stack(variances, axis=-1)

    def means(self, rows: np.ndarray) -> np.ndarray:
        return np.stack([np.sum(p * d, axis=-1) for p, d in
                         zip(self.probabilities(rows), self.diagonals)], axis=-1)

    def level_probabilities(self, rows: np.ndarray) -> np.ndarray:
        """Outcome-level distribution, shape ``batch + (n_groups, n_levels)``."""
        out = np.zeros(rows.shape[:-1] + (len(self.levels), self.n_levels))
        for k, probs in enumerate(self.probabilities(rows)):
            for j, members in enumerate(self.level_members[k]):
                out[..., k, j] = np.sum(probs[..., members], axis=-1)
        out /= out.sum(axis=-1, keepdims=True)
        return out

    def draw_means(self, level_probs: np.ndarray, shots: int,
                   rng: np.random.Generator) -> np.ndarray:
        """Shot-averaged group values with fresh shots for every row and group."""
        flat = level_probs.reshape(-1, self.n_levels)
        counts = rng.multinomial(shots, flat).reshape(level_probs.shape)
        return np.sum(counts * self.level_values, axis=-1) / shots

    def sample_means(self, rows: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
        return self.draw_means(self.level_probabilities(rows), shots, rng)


def sample_group_mean(state: StateVector, group: ObservableGroup, shots: int,
                      rng: np.random.Generator) -> float:
    """Mean group value over ``shots`` simulated bitstring measurements."""
    _check_width(state, group.n_qubits)
    if shots < 1:
        raise ConfigurationError("shots must be at least 1")
    probs = measurement_probabilities(state.amplitudes, group)
    cdf = np.cumsum(probs)
    outcomes = np.searchsorted(cdf / cdf[-1], rng.random(shots), side="right")
    outcomes = np.minimum(outcomes, probs.size - 1)
    return float(np.mean(group.diagonal()[outcomes]))


def estimate_energy(layout: AnsatzLayout, params, hamiltonian: Hamiltonian,
                    shots_per_group: int, rng: np.random.Generator) -> float:
    state = prepare_ansatz_state(layout, params)
    return sum(sample_group_mean(state, g, shots_per_group, rng) for g in hamiltonian.groups)


def ansatz_energy(layout: AnsatzLayout, params, hamiltonian: Hamiltonian):
    """Exact loss for one or many parameter vectors (vectorized)."""
    params = check_params(layout, params)
    return GroupTables(hamiltonian).means(ansatz_rows(layout, params)).sum(axis=-1)


def exact_diagonalize(hamiltonian: Hamiltonian, eigenvectors: bool = False):
    if hamiltonian.n_qubits > MAX_DIAG_QUBITS:
        raise ResourceError(f"exact diagonalization limited to {MAX_DIAG_QUBITS} qubits")
    matrix = hamiltonian.matrix()
    if eigenvectors:
        return np.linalg.eigh(matrix)
    return np.linalg.eigvalsh(matrix)
