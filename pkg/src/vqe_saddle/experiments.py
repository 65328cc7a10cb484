"""Critical points, escape-time sweeps, scaling fits and fluctuation diagnostics."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import least_squares

from .dynamics import OptimizerConfig, run_ensemble
from .errors import ConfigurationError, FitError, LocatorError
from .gradients import jacobi_eigh

log = logging.getLogger(__name__)

SADDLE_EIG = -1e-3
MARGINAL_EIG = 1e-3
MINIMUM_EIG = -1e-6


@dataclass
class CriticalPointCheckpoint:
    params: np.ndarray
    loss: float
    grad_norm: float
    hessian_eigenvalues: np.ndarray
    kind: str
    grad_tol: float
    time: float | None = None

    @property
    def min_eigenvalue(self) -> float:
        return float(self.hessian_eigenvalues[0])


def classify(eigenvalues, loss, excited_levels=(), level_tol=1e-2) -> str:
    """saddle / excited / minimum from the Hessian spectrum.

    ``excited_levels`` are exact energies above the ground level; a flat point
    sitting on one of them counts as excited.
    """
    lowest = float(np.min(eigenvalues))
    if lowest < SADDLE_EIG:
        return "saddle"
    if any(abs(loss - e) < level_tol for e in excited_levels) and abs(lowest) <= MARGINAL_EIG:
        return "excited"
    return "minimum"


def make_checkpoint(provider, params, grad_tol, excited_levels=(), time=None):
    params = np.asarray(params, dtype=float)
    grad = provider.gradient(params)
    eigs = jacobi_eigh(provider.hessian(params))[0]
    loss = float(provider.loss(params))
    return CriticalPointCheckpoint(params, loss, float(np.linalg.norm(grad)), eigs,
                                   classify(eigs, loss, excited_levels), grad_tol, time)


def refine_critical_point(provider, params, max_nfev=200):
    """Polish an approximate critical point by Levenberg-Marquardt on grad L = 0."""
    result = least_squares(provider.gradient, np.asarray(params, float), jac=provider.hessian,
                           method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    return result.x


def excited_levels(provider):
    hamiltonian = getattr(provider, "hamiltonian", None)
    if hamiltonian is None:
        return ()
    from .observables import exact_diagonalize

    levels = np.unique(np.round(exact_diagonalize(hamiltonian), 9))
    return tuple(levels[1:])


def find_saddle(provider, init_params, eta=0.05, stop_time=None, grad_tol=1e-3,
                max_steps=20000, scout_tol=0.05, refine=True) -> CriticalPointCheckpoint:
    """Follow exact GD to the first plateau and return it as a checkpoint.

    Without ``refine`` the checkpoint is the first GD iterate with
    ``|grad L| < grad_tol`` (or the iterate at ``stop_time``).  With
    ``refine``, GD stops at the bottom of the first dip of ``|grad L|`` below
    ``scout_tol`` and that iterate is polished onto the nearby critical point.
    """
    theta = np.asarray(init_params, dtype=float).copy()
    levels = excited_levels(provider)
    limit = max_steps if stop_time is None else min(max_steps, int(round(stop_time / eta)))
    norms = []
    best = None
    for k in range(limit + 1):
        norm = float(np.linalg.norm(provider.gradient(theta)))
        norms.append(norm)
        if norm < grad_tol:
            best = (k, theta)
            break
        if refine and best is not None and norm > norms[-2]:
            break
        if refine and norm < scout_tol and (best is None or norm < norms[-2]):
            best = (k, theta.copy())
        if k < limit:
            theta = theta - eta * provider.gradient(theta)
    if best is None:
        if stop_time is not None:
            best = (limit, theta)
        else:
            raise LocatorError(f"no plateau with |grad| < {scout_tol} within {limit} GD steps",
                               np.array(norms))
    k, point = best
    if refine and np.linalg.norm(provider.gradient(point)) >= grad_tol:
        point = refine_critical_point(provider, point)
    cp = make_checkpoint(provider, point, grad_tol, levels, time=k * eta)
    if cp.grad_norm >= grad_tol and stop_time is None:
        raise LocatorError(f"refinement stalled at |grad| = {cp.grad_norm:.3g}", np.array(norms))
    return cp


def find_excited_state(provider, target, tolerance, grad_tol=1e-3, eta=0.05, n_starts=64,
                       max_steps=3000, seed=0, batch=64, check_every=50) -> CriticalPointCheckpoint:
    """Scan random starts with exact GD for a marginally stable point at ``target``.

    Every ``check_every`` steps, GD iterates within ``tolerance`` of the
    target with ``|grad L| < grad_tol`` have their Hessian checked; the first
    one with ``|lambda_min| <= 1e-3`` is returned.
    """
    levels = excited_levels(provider)
    hamiltonian = getattr(provider, "hamiltonian", None)
    if hamiltonian is not None:
        from .observables import exact_diagonalize

        spectrum = exact_diagonalize(hamiltonian)
        if np.min(np.abs(spectrum - target)) > 1e-6:
            raise ConfigurationError(f"target energy {target} is not an eigenvalue")
    rng = np.random.default_rng(seed)
    tried = 0
    while tried < n_starts and tolerance > 0:
        size = min(batch, n_starts - tried)
        theta = rng.uniform(0.0, 2 * np.pi, (size, provider.n_params))
        tried += size
        for k in range(max_steps + 1):
            grad = provider.gradient(theta)
            if k % check_every == 0 or k == max_steps:
                near = np.abs(provider.loss(theta) - target) < tolerance
                near &= np.linalg.norm(grad, axis=-1) < grad_tol
                for idx in np.flatnonzero(near):
                    cp = make_checkpoint(provider, theta[idx], grad_tol, levels, time=k * eta)
                    if abs(cp.min_eigenvalue) <= MARGINAL_EIG:
                        cp.kind = "excited"
                        return cp
            theta = theta - eta * grad
    raise LocatorError(f"no marginally stable point near {target} in {n_starts} starts")


# ---------------------------------------------------------------------------
# checkpoint files

CHECKPOINT_VERSION = 1


def save_checkpoint(path, checkpoint: CriticalPointCheckpoint, layout, hamiltonian, note=""):
    h = hamiltonian.params
    lines = [
        f"# vqe-saddle checkpoint{(' - ' + note) if note else ''}",
        f"version = {CHECKPOINT_VERSION}",
        f"kind = {checkpoint.kind}",
        f"model = {hamiltonian.name}",
        f"n_sites = {h.get('n_sites', hamiltonian.n_qubits)}",
        f"jx = {float(h.get('jx', 1.0))!r}",
        f"jy = {float(h.get('jy', 1.0))!r}",
        f"jz = {float(h.get('jz', 1.0))!r}",
        f"periodic = {str(bool(h.get('periodic', True))).lower()}",
        f"n_qubits = {layout.n_qubits}",
        f"n_layers = {layout.n_layers}",
        "entangler = " + ",".join(f"{c}-{t}" for c, t in layout.entangler),
        f"loss = {checkpoint.loss!r}",
        f"grad_norm = {checkpoint.grad_norm!r}",
        f"grad_tol = {checkpoint.grad_tol!r}",
        "hessian_eigenvalues = " + " ".join(f"{x:.17g}" for x in checkpoint.hessian_eigenvalues),
        "params = " + " ".join(float(x).hex() for x in checkpoint.params),
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Return ``(checkpoint, layout, hamiltonian)`` from a checkpoint file."""
    from .observables import heisenberg_preset
    from .quantum import AnsatzLayout

    fields = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    if int(fields.get("version", -1)) != CHECKPOINT_VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint version {fields.get('version')}")
    pairs = [tuple(int(q) for q in p.split("-")) for p in fields["entangler"].split(",") if p]
    layout = AnsatzLayout(int(fields["n_qubits"]), int(fields["n_layers"]), tuple(pairs))
    hamiltonian = heisenberg_preset(int(fields["n_sites"]), float(fields["jx"]), float(fields["jy"]),
                                    float(fields["jz"]), fields["periodic"] == "true")
    cp = CriticalPointCheckpoint(
        params=np.array([float.fromhex(x) for x in fields["params"].split()]),
        loss=float(fields["loss"]),
        grad_norm=float(fields["grad_norm"]),
        hessian_eigenvalues=np.array([float(x) for x in fields["hessian_eigenvalues"].split()]),
        kind=fields["kind"],
        grad_tol=float(fields["grad_tol"]),
    )
    return cp, layout, hamiltonian


# ---------------------------------------------------------------------------
# escape sweeps

KIND_CODES = {"gd": 0, "sgd": 1, "sde": 2}


@dataclass(frozen=True)
class SweepCell:
    eta: float
    n_shots: int
    kind: str = "sgd"
    dt: float | None = None

    @property
    def v(self) -> float:
        return math.sqrt(self.eta / self.n_shots)


@dataclass
class EscapeResult:
    eta: float
    n_shots: int
    v: float
    kind: str
    instances: int
    escape_times: np.ndarray  # sorted; censored instances are excluded
    mean: float
    stderr: float
    censored: int
    max_time: float
    dt: float | None = None

    @property
    def measurement_cost(self) -> float:
        return measurement_cost(self)


def instance_seed(master_seed, cell_index, instance, kind="sgd"):
    return np.random.SeedSequence(int(master_seed),
                                  spawn_key=(KIND_CODES[kind], int(cell_index), int(instance)))


def v_grid_cells(etas, v_values, kind="sgd", dt=None):
    """Cells with ``n_shots = round(eta / v**2)``; cells with ``n_shots < 1`` are skipped."""
    cells = []
    for eta in etas:
        for v in v_values:
            n = int(round(eta / v**2))
            if n >= 1:
                cells.append(SweepCell(float(eta), n, kind, dt))
    return cells


def summarize_escape(cell: SweepCell, times, max_time) -> EscapeResult:
    times = np.asarray(times, dtype=float)
    done = np.sort(times[~np.isnan(times)])
    n_done = done.size
    mean = float(done.mean()) if n_done else math.nan
    se = float(done.std(ddof=1) / math.sqrt(n_done)) if n_done > 1 else math.nan
    return EscapeResult(cell.eta, cell.n_shots, cell.v, cell.kind, times.size, done, mean, se,
                        int(times.size - n_done), float(max_time), cell.dt)


def _run_cell(args):
    provider, params, threshold, cell, cell_index, instances, master_seed, max_time = args
    config = OptimizerConfig(cell.kind, cell.eta, cell.n_shots, cell.dt,
                             max_steps=max(1, int(math.ceil(max_time / _time_step(cell) - 1e-9))))
    seeds = [instance_seed(master_seed, cell_index, i, cell.kind) for i in range(instances)]
    result = run_ensemble(provider, params, config, seeds, stop_below=threshold)
    return summarize_escape(cell, result.escape_times, max_time)


def _time_step(cell):
    if cell.kind == "sde":
        return cell.dt if cell.dt is not None else min(cell.eta, 0.01)
    return cell.eta


def escape_sweep(provider, checkpoint: CriticalPointCheckpoint, threshold, cells, instances,
                 master_seed, max_time, threads=1) -> list:
    """Escape statistics for every cell, started from ``checkpoint.params``.

    Instance ``i`` of cell ``c`` is seeded from ``(master_seed, kind, c, i)``
    so results do not depend on scheduling or on ``threads``.
    """
    if threshold >= checkpoint.loss:
        raise ConfigurationError(f"threshold {threshold} must lie below the checkpoint loss {checkpoint.loss}")
    if instances < 1:
        raise ConfigurationError("instances must be >= 1")
    cells = [c if isinstance(c, SweepCell) else SweepCell(*c) for c in cells]
    jobs = [(provider, checkpoint.params, threshold, cell, i, instances, master_seed, max_time)
            for i, cell in enumerate(cells)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_cell(job))
            r = results[-1]
            log.info("%s eta=%g n_shots=%d v=%.4f mean=%.4g se=%.3g censored=%d",
                     r.kind, r.eta, r.n_shots, r.v, r.mean, r.stderr, r.censored)
    return results


def default_threads() -> int:
    return int(os.environ.get("VQE_SADDLE_THREADS", "1"))


# ---------------------------------------------------------------------------
# fits and reports

@dataclass
class PowerLawFit:
    exponent: float
    log_prefactor: float
    exponent_se: float
    r2: float
    n_points: int

    @property
    def prefactor(self) -> float:
        return math.exp(self.log_prefactor)


def fit_power_law(v, t, se=None) -> PowerLawFit:
    """Weighted least squares of log t on log v, weights (se / t)**-2.

    Unweighted when no (or any non-positive) standard error is given.
    """
    v = np.asarray(v, dtype=float)
    t = np.asarray(t, dtype=float)
    if v.size < 3 or v.size != t.size:
        raise FitError("need at least 3 matching points")
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(t)) and np.all(v > 0) and np.all(t > 0)):
        raise FitError("all points must be finite and positive")
    x, y = np.log(v), np.log(t)
    if se is None or np.any(~np.isfinite(se)) or np.any(np.asarray(se) <= 0):
        w = np.ones_like(x)
        known_sigma = False
    else:
        w = (np.asarray(se, dtype=float) / t) ** -2
        known_sigma = True
    design = np.stack([x, np.ones_like(x)], axis=1)
    normal = design.T @ (w[:, None] * design)
    slope, intercept = np.linalg.solve(normal, design.T @ (w * y))
    resid = y - (slope * x + intercept)
    cov = np.linalg.inv(normal)
    if not known_sigma:
        dof = max(x.size - 2, 1)
        cov = cov * np.sum(w * resid**2) / dof
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(slope), float(intercept), float(math.sqrt(max(cov[0, 0], 0.0))),
                       float(r2), int(x.size))


def fit_escape_results(results) -> PowerLawFit:
    usable = [r for r in results if r.censored == 0 and np.isfinite(r.mean) and r.mean > 0]
    return fit_power_law([r.v for r in usable], [r.mean for r in usable],
                         [r.stderr for r in usable])


@dataclass
class CollapseGroup:
    v: float
    etas: list
    max_z: float


@dataclass
class CollapseReport:
    groups: list = field(default_factory=list)

    @property
    def max_z(self) -> float:
        return max((g.max_z for g in self.groups), default=math.nan)

    def passed(self, limit=2.5) -> bool:
        return bool(self.groups) and all(g.max_z <= limit for g in self.groups)


def collapse_check(results, v_tol=1e-9) -> CollapseReport:
    """Pairwise z-scores of mean escape time between cells sharing one v."""
    groups = []
    for r in sorted(results, key=lambda r: r.v):
        if groups and abs(groups[-1][0].v - r.v) <= v_tol:
            groups[-1].append(r)
        else:
            groups.append([r])
    report = CollapseReport()
    for members in groups:
        if len({m.eta for m in members}) < 2:
            continue
        zs = []
        for a, b in combinations(members, 2):
            denom = math.sqrt(a.stderr**2 + b.stderr**2)
            diff = abs(a.mean - b.mean)
            zs.append(0.0 if diff == 0 else (diff / denom if denom > 0 else math.inf))
        report.groups.append(CollapseGroup(members[0].v, [m.eta for m in members], max(zs)))
    if not report.groups:
        log.warning("collapse check: no v value is shared by two learning rates")
    return report


def measurement_cost(result: EscapeResult) -> float:
    """Total shots needed to escape, proportional to mean t_esc / v**2."""
    if not np.isfinite(result.mean):
        raise ValueError("all instances censored: measurement cost undefined")
    return result.mean / result.v**2


# ---------------------------------------------------------------------------
# fluctuation-dissipation scan

@dataclass
class FdrRow:
    eta: float
    n_shots: int
    lhs: float
    rhs: float
    trace_ratio: float
    steps: int
    valid: bool = True

    @property
    def noise_ratio(self) -> float:
        return self.eta / self.n_shots


def fdr_scan(provider, checkpoint_params, etas, ratio=0.0005, window=10_000, burn_in=None,
             seed=0, escape_threshold=None, max_window_time=None) -> list:
    """SGD time averages of (theta - theta*) . grad L, Tr C~ and Tr C around a critical point.

    ``lhs`` is the average of ``(theta - theta*) . grad L`` and ``rhs`` is
    ``eta / 2`` times the average of ``Tr C~``; measuring the displacement
    from the starting critical point ``theta*`` leaves the stationary
    identity unchanged and keeps the averages well conditioned.  The window
    length in steps is capped at ``max_window_time / eta`` when given.
    """
    center = np.asarray(checkpoint_params, dtype=float)
    rows = []
    for i, eta in enumerate(etas):
        n_shots = max(1, int(round(eta / ratio)))
        steps = int(window)
        if max_window_time is not None:
            steps = max(10, min(steps, int(max_window_time / eta)))
        burn = int(0.1 * steps) if burn_in is None else int(burn_in)
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(i,)))
        theta = center.copy()
        lhs = tr_c = grad_sq = 0.0
        valid = True
        for k in range(burn + steps):
            grad, var = provider.gradient_and_variance(theta, n_shots)
            if k >= burn:
                lhs += float(np.dot(theta - center, grad))
                tr_c += float(np.sum(var))
                grad_sq += float(np.dot(grad, grad))
            theta = theta - eta * provider.sampled_gradient(theta, n_shots, rng)
            if escape_threshold is not None and provider.loss(theta) < escape_threshold:
                valid = False
                steps = max(k + 1 - burn, 1)
                break
        lhs /= steps
        tr_c /= steps
        grad_sq /= steps
        rows.append(FdrRow(float(eta), n_shots, lhs, eta / 2 * (tr_c + grad_sq),
                           (tr_c + grad_sq) / tr_c if tr_c > 0 else math.nan, steps, valid))
    return rows
