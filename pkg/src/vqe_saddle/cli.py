"""Command-line front end: ``vqe-saddle <command> [--config FILE] [options]``.

The config is an INI document with the sections ``model``, ``ansatz``,
``optimizer`` and ``experiment``; every key is optional.  Flags override the
file, and ``VQE_SADDLE_THREADS`` overrides the configured thread count.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import CHECKPOINTS, bundled_checkpoint
from .dynamics import NumericalError, OptimizerConfig, QuadraticLandscape, run_trajectory
from .errors import ConfigurationError, FitError, LocatorError, ResourceError
from .experiments import (collapse_check, escape_sweep, fdr_scan, find_excited_state, find_saddle,
                          fit_escape_results, instance_seed, load_checkpoint, make_checkpoint,
                          save_checkpoint, v_grid_cells, excited_levels)
from .gradients import VQELandscape
from .observables import exact_diagonalize, heisenberg_preset
from .quantum import AnsatzLayout

log = logging.getLogger("vqe_saddle")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

SHARED_V = tuple(0.1 / math.sqrt(m) for m in (1, 2, 4, 8, 16, 25))
ESCAPE_PRESETS = {
    "saddle": -7.0,
    "excited": -5.0,
    "xyz-saddle": -9.7,
}
MODELS = {"heisenberg": (1.0, 1.0, 1.0), "xyz": (1.421, 1.288, 1.0)}


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


@dataclass
class RunConfig:
    """Validated settings for one command."""

    model: str = "heisenberg"
    n_sites: int = 4
    couplings: tuple = (1.0, 1.0, 1.0)
    periodic: bool = True
    n_layers: int = 4
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    checkpoint: str | None = None
    threshold: float | None = None
    params: np.ndarray | None = None
    init_seed: int = 0
    init_index: int = 0
    instances: int = 1
    etas: tuple = (0.1, 0.05, 0.01)
    v_values: tuple = SHARED_V
    kinds: tuple = ("sgd",)
    sde_etas: tuple | None = None
    sde_dt: float | None = None
    max_time: float = 500.0
    master_seed: int = 0
    threads: int = 1
    ratio: float = 0.0005
    window: int = 10_000
    burn_in: int | None = None
    fdr_points: tuple = ("ground", "saddle", "excited")
    fdr_etas: tuple = (0.1, 0.05, 0.01)
    target: float = -4.0
    tolerance: float = 0.01
    grad_tol: float = 1e-3
    n_starts: int = 192
    stop_time: float | None = None

    def layout(self) -> AnsatzLayout:
        return AnsatzLayout(self.n_sites, self.n_layers)

    def hamiltonian(self):
        return heisenberg_preset(self.n_sites, *self.couplings, periodic=self.periodic)


class _Reader:
    """Typed access to an INI document that collects every problem."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.errors = []

    def get(self, section, key, convert, default):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return convert(raw)
        except (TypeError, ValueError) as exc:
            self.errors.append(f"[{section}] {key} = {raw!r}: {exc}")
            return default

    def check(self, ok, where, message):
        if not ok:
            self.errors.append(f"{where}: {message}")


def _floats(raw):
    return tuple(float(x) for x in raw.replace(",", " ").split())


def _words(raw):
    return tuple(x.strip() for x in raw.replace(",", " ").split() if x.strip())


def _bool(raw):
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _optional(convert):
    return lambda raw: None if raw.lower() in ("", "none") else convert(raw)


KNOWN = {
    "model": {"preset", "n_sites", "jx", "jy", "jz", "periodic"},
    "ansatz": {"n_layers"},
    "optimizer": {"kind", "learning_rate", "shots_per_group", "sde_time_step", "max_steps",
                  "record_stride"},
    "experiment": {"checkpoint", "threshold", "params", "init_seed", "init_index", "instances",
                   "etas", "v_values", "kinds", "sde_etas", "sde_dt", "max_time", "master_seed",
                   "threads", "ratio", "window", "burn_in", "fdr_points", "fdr_etas", "target",
                   "tolerance", "grad_tol", "n_starts", "stop_time"},
}


def load_config(path=None, preset=None, seed=None, threads=None) -> RunConfig:
    """Read, override and validate; raises ConfigurationError listing every bad field."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not parser.read(path):
            raise ConfigurationError(f"cannot read config file {path}")
    r = _Reader(parser)
    for section in parser.sections():
        if section not in KNOWN:
            r.errors.append(f"[{section}]: unknown section")
            continue
        for key in parser.options(section):
            if key not in KNOWN[section]:
                r.errors.append(f"[{section}] {key}: unknown key")

    cfg = RunConfig()
    cfg.checkpoint = r.get("experiment", "checkpoint", str, None)
    if preset is not None:
        cfg.checkpoint = preset
    if cfg.checkpoint in ESCAPE_PRESETS:
        cfg.threshold = ESCAPE_PRESETS[cfg.checkpoint]
    if cfg.checkpoint == "xyz-saddle":
        cfg.model, cfg.couplings = "xyz", MODELS["xyz"]

    cfg.model = r.get("model", "preset", str, cfg.model)
    r.check(cfg.model in MODELS, "[model] preset", f"must be one of {sorted(MODELS)}")
    base = MODELS.get(cfg.model, MODELS["heisenberg"])
    cfg.couplings = tuple(r.get("model", k, float, d) for k, d in zip(("jx", "jy", "jz"), base))
    cfg.n_sites = r.get("model", "n_sites", int, cfg.n_sites)
    r.check(2 <= cfg.n_sites <= 10, "[model] n_sites", "must be between 2 and 10")
    cfg.periodic = r.get("model", "periodic", _bool, cfg.periodic)
    cfg.n_layers = r.get("ansatz", "n_layers", int, cfg.n_layers)
    r.check(cfg.n_layers >= 1, "[ansatz] n_layers", "must be >= 1")

    opt = dict(
        kind=r.get("optimizer", "kind", str, "sgd"),
        learning_rate=r.get("optimizer", "learning_rate", float, 0.05),
        shots_per_group=r.get("optimizer", "shots_per_group", _optional(int), 100),
        sde_time_step=r.get("optimizer", "sde_time_step", _optional(float), None),
        max_steps=r.get("optimizer", "max_steps", int, 1000),
        record_stride=r.get("optimizer", "record_stride", int, 1),
    )
    cfg.threshold = r.get("experiment", "threshold", float, cfg.threshold)
    params = r.get("experiment", "params", _floats, None)
    cfg.params = None if params is None else np.array(params)
    cfg.init_seed = r.get("experiment", "init_seed", int, cfg.init_seed)
    cfg.init_index = r.get("experiment", "init_index", int, cfg.init_index)
    cfg.instances = r.get("experiment", "instances", int, cfg.instances)
    r.check(cfg.instances >= 1, "[experiment] instances", "must be >= 1")
    cfg.etas = r.get("experiment", "etas", _floats, cfg.etas)
    cfg.v_values = r.get("experiment", "v_values", _floats, cfg.v_values)
    cfg.kinds = r.get("experiment", "kinds", _words, cfg.kinds)
    r.check(set(cfg.kinds) <= {"sgd", "sde"}, "[experiment] kinds", "only sgd and sde sweep")
    cfg.sde_etas = r.get("experiment", "sde_etas", _floats, cfg.sde_etas)
    cfg.sde_dt = r.get("experiment", "sde_dt", _optional(float), cfg.sde_dt)
    cfg.max_time = r.get("experiment", "max_time", float, cfg.max_time)
    r.check(cfg.max_time > 0, "[experiment] max_time", "must be positive")
    cfg.master_seed = r.get("experiment", "master_seed", int, cfg.master_seed)
    cfg.threads = r.get("experiment", "threads", int, cfg.threads)
    cfg.ratio = r.get("experiment", "ratio", float, cfg.ratio)
    r.check(cfg.ratio > 0, "[experiment] ratio", "must be positive")
    cfg.window = r.get("experiment", "window", int, cfg.window)
    r.check(cfg.window >= 1, "[experiment] window", "must be >= 1")
    cfg.burn_in = r.get("experiment", "burn_in", _optional(int), cfg.burn_in)
    cfg.fdr_points = r.get("experiment", "fdr_points", _words, cfg.fdr_points)
    cfg.fdr_etas = r.get("experiment", "fdr_etas", _floats, cfg.fdr_etas)
    cfg.target = r.get("experiment", "target", float, cfg.target)
    cfg.tolerance = r.get("experiment", "tolerance", float, cfg.tolerance)
    cfg.grad_tol = r.get("experiment", "grad_tol", float, cfg.grad_tol)
    cfg.n_starts = r.get("experiment", "n_starts", int, cfg.n_starts)
    cfg.stop_time = r.get("experiment", "stop_time", _optional(float), cfg.stop_time)
    for name, values in (("etas", cfg.etas), ("v_values", cfg.v_values), ("fdr_etas", cfg.fdr_etas)):
        r.check(all(x > 0 for x in values), f"[experiment] {name}", "values must be positive")

    if seed is not None:
        cfg.master_seed = seed
        opt["seed"] = seed
    env = os.environ.get("VQE_SADDLE_THREADS")
    if env is not None:
        try:
            cfg.threads = int(env)
        except ValueError:
            r.errors.append(f"VQE_SADDLE_THREADS={env!r}: not an integer")
    if threads is not None:
        cfg.threads = threads
    r.check(cfg.threads >= 1, "threads", "must be >= 1")

    try:
        cfg.optimizer = OptimizerConfig(**opt)
    except ConfigurationError as exc:
        r.errors.extend(f"[optimizer] {e}" for e in str(exc).split("; "))
    if r.errors:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(r.errors))
    return cfg


def resolve_checkpoint(cfg: RunConfig, name=None):
    """``(checkpoint, layout, hamiltonian)`` for a bundled name or a file path."""
    name = cfg.checkpoint if name is None else name
    if name is None:
        raise ConfigurationError("[experiment] checkpoint: required for this command")
    if name in CHECKPOINTS:
        return bundled_checkpoint(name)
    if not os.path.exists(name):
        raise ConfigurationError(f"[experiment] checkpoint: no bundled preset or file named {name!r}")
    return load_checkpoint(name)


# ---------------------------------------------------------------------------
# output

@contextmanager
def _sink(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def write_csv(path, header, rows):
    with _sink(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])


def _suffixed(path, tag):
    if path is None or path == "-":
        return path
    root, ext = os.path.splitext(path)
    return f"{root}_{tag}{ext or '.csv'}"


# ---------------------------------------------------------------------------
# commands

def cmd_energy(cfg: RunConfig, out=None) -> int:
    hamiltonian = cfg.hamiltonian()
    spectrum = exact_diagonalize(hamiltonian)
    print(f"# {hamiltonian.describe()}")
    for value in spectrum:
        print(fmt(value))
    rows = [("eigenvalue", i, value) for i, value in enumerate(spectrum)]
    params = cfg.params
    if params is None and cfg.checkpoint is not None:
        params = resolve_checkpoint(cfg)[0].params
    if params is not None:
        land = VQELandscape(cfg.layout(), hamiltonian)
        if len(params) != land.n_params:
            raise ConfigurationError(f"[experiment] params: expected {land.n_params} values, got {len(params)}")
        loss = float(land.loss(np.asarray(params, float)))
        print(f"# ansatz energy L(theta) = {fmt(loss)}")
        rows.append(("ansatz_energy", 0, loss))
    if out is not None:
        write_csv(out, ["quantity", "index", "value"], rows)
    return EXIT_OK


def _initial_params(cfg: RunConfig, n_params):
    if cfg.params is not None:
        if len(cfg.params) != n_params:
            raise ConfigurationError(f"[experiment] params: expected {n_params} values, got {len(cfg.params)}")
        return np.asarray(cfg.params, float)
    if cfg.checkpoint is not None:
        return resolve_checkpoint(cfg)[0].params
    rng = np.random.default_rng(cfg.init_seed)
    return rng.uniform(-np.pi / 2, np.pi / 2, (cfg.init_index + 1, n_params))[cfg.init_index]


def cmd_optimize(cfg: RunConfig, out=None) -> int:
    land = VQELandscape(cfg.layout(), cfg.hamiltonian())
    start = _initial_params(cfg, land.n_params)
    rows = []
    for i in range(cfg.instances):
        seed = instance_seed(cfg.master_seed, 0, i, cfg.optimizer.kind)
        config = OptimizerConfig(**{**cfg.optimizer.to_dict(), "seed": seed})
        traj = run_trajectory(land, start, config)
        rows.extend((i, s, t, loss) for s, t, loss in traj.records)
        log.info("instance %d final loss %.6f", i, traj.losses[-1])
    write_csv(out, ["instance", "step", "t", "loss"], rows)
    return EXIT_OK


def escape_cells(cfg: RunConfig):
    cells = []
    if "sgd" in cfg.kinds:
        cells += v_grid_cells(cfg.etas, cfg.v_values, "sgd")
    if "sde" in cfg.kinds:
        cells += v_grid_cells(cfg.sde_etas or cfg.etas, cfg.v_values, "sde", cfg.sde_dt)
    return cells


def cmd_escape(cfg: RunConfig, out=None) -> int:
    cp, layout, hamiltonian = resolve_checkpoint(cfg)
    if cfg.threshold is None:
        raise ConfigurationError("[experiment] threshold: required for a custom checkpoint")
    land = VQELandscape(layout, hamiltonian)
    results = escape_sweep(land, cp, cfg.threshold, escape_cells(cfg), cfg.instances,
                           cfg.master_seed, cfg.max_time, threads=cfg.threads)
    rows = []
    for r in results:
        cost = r.mean / r.v**2 if np.isfinite(r.mean) else math.nan
        rows.append((r.eta, r.n_shots, r.v, r.instances, r.censored, r.mean, r.stderr, cost, r.kind))
    write_csv(out, ["eta", "n_shots", "v", "instances", "censored", "mean_t_esc", "stderr",
                    "measurement_cost", "kind"], rows)
    status = EXIT_OK
    for kind in dict.fromkeys(r.kind for r in results):
        subset = [r for r in results if r.kind == kind]
        report = collapse_check(subset)
        try:
            fit = fit_escape_results(subset)
        except FitError as exc:
            print(f"# {kind}: fit unavailable ({exc})", file=sys.stderr)
            status = EXIT_PARTIAL
            continue
        print(f"# {kind}: exponent = {fit.exponent:.4f} +/- {fit.exponent_se:.4f}, "
              f"r2 = {fit.r2:.4f}, points = {fit.n_points}, "
              f"collapse max z = {report.max_z:.3f}", file=sys.stderr)
    return status


def ou_selftest(eta=0.1, curvature=1.0, noise=1.0, n_shots=1, steps=1_000_000, seed=0):
    """Stationary identity on a 1-D quadratic: returns (lhs, rhs, expected)."""
    land = QuadraticLandscape([curvature], [noise])
    rows = fdr_scan(land, [0.0], [eta], ratio=eta / n_shots, window=steps, seed=seed)
    expected = eta * noise / n_shots / (2 - eta * curvature)
    return rows[0].lhs, rows[0].rhs, expected


def cmd_fdr(cfg: RunConfig, out=None, ou=False) -> int:
    if ou:
        lhs, rhs, expected = ou_selftest()
        print(f"# OU self-test: lhs = {lhs:.6g}, rhs = {rhs:.6g}, closed form = {expected:.6g}")
        write_csv(_suffixed(out, "ou"), ["eta", "lhs", "rhs", "trace_ratio"],
                  [(0.1, lhs, rhs, math.nan)])
        return EXIT_OK if abs(lhs - rhs) <= 0.01 * abs(rhs) else EXIT_PARTIAL
    status = EXIT_OK
    for point in cfg.fdr_points:
        cp, layout, hamiltonian = resolve_checkpoint(cfg, point)
        land = VQELandscape(layout, hamiltonian)
        rows = fdr_scan(land, cp.params, cfg.fdr_etas, ratio=cfg.ratio, window=cfg.window,
                        burn_in=cfg.burn_in, seed=cfg.master_seed)
        write_csv(_suffixed(out, point), ["eta", "lhs", "rhs", "trace_ratio", "n_shots", "valid"],
                  [(r.eta, r.lhs, r.rhs, r.trace_ratio, r.n_shots, r.valid) for r in rows])
        if not all(r.valid for r in rows):
            status = EXIT_PARTIAL
    return status


def _print_checkpoint(cp):
    print(f"kind = {cp.kind}")
    print(f"loss = {fmt(cp.loss)}")
    print(f"grad_norm = {fmt(cp.grad_norm)}")
    print("hessian_eigenvalues =")
    for value in cp.hessian_eigenvalues:
        print(f"  {fmt(value)}")


def cmd_hessian(cfg: RunConfig, out=None) -> int:
    cp, layout, hamiltonian = resolve_checkpoint(cfg)
    land = VQELandscape(layout, hamiltonian)
    fresh = make_checkpoint(land, cp.params, cp.grad_tol, excited_levels(land))
    _print_checkpoint(fresh)
    if out is not None:
        write_csv(out, ["index", "eigenvalue"], enumerate(fresh.hessian_eigenvalues))
    return EXIT_OK


def cmd_find_saddle(cfg: RunConfig, out=None) -> int:
    layout, hamiltonian = cfg.layout(), cfg.hamiltonian()
    land = VQELandscape(layout, hamiltonian)
    start = _initial_params(cfg, land.n_params)
    cp = find_saddle(land, start, eta=cfg.optimizer.learning_rate, stop_time=cfg.stop_time,
                     grad_tol=cfg.grad_tol)
    _print_checkpoint(cp)
    if out is not None:
        save_checkpoint(out, cp, layout, hamiltonian, note="find-saddle")
    return EXIT_OK


def cmd_find_excited(cfg: RunConfig, out=None) -> int:
    layout, hamiltonian = cfg.layout(), cfg.hamiltonian()
    land = VQELandscape(layout, hamiltonian)
    cp = find_excited_state(land, cfg.target, cfg.tolerance, grad_tol=cfg.grad_tol,
                            eta=cfg.optimizer.learning_rate, n_starts=cfg.n_starts,
                            seed=cfg.master_seed)
    _print_checkpoint(cp)
    if out is not None:
        save_checkpoint(out, cp, layout, hamiltonian, note="find-excited")
    return EXIT_OK


COMMANDS = {
    "energy": (cmd_energy, "exact spectrum and ansatz energy"),
    "optimize": (cmd_optimize, "GD/SGD/SDE loss trajectories as CSV"),
    "escape": (cmd_escape, "escape-time sweep, power-law fit and collapse check"),
    "fdr": (cmd_fdr, "fluctuation-dissipation scan at ground, saddle and excited points"),
    "hessian": (cmd_hessian, "Hessian eigenvalues at a checkpoint"),
    "find-saddle": (cmd_find_saddle, "locate a saddle by GD from a seeded start"),
    "find-excited": (cmd_find_excited, "scan random starts for a marginal excited state"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqe-saddle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--out", help="output path (CSV, or checkpoint for find-*)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--threads", type=int, help="worker processes for sweeps")
        p.add_argument("--preset", choices=sorted(CHECKPOINTS),
                       help="bundled checkpoint (and escape threshold)")
        if name == "fdr":
            p.add_argument("--ou-selftest", action="store_true",
                           help="check the stationary identity on a 1-D quadratic instead")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.preset, args.seed, args.threads)
        func = COMMANDS[args.command][0]
        if args.command == "fdr":
            return func(cfg, args.out, ou=args.ou_selftest)
        return func(cfg, args.out)
    except ConfigurationError as exc:
        print(f"vqe-saddle: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LocatorError, NumericalError, ResourceError, FitError) as exc:
        print(f"vqe-saddle: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
