"""Rebuild the frozen checkpoint files shipped in ``vqe_saddle/data``.

Each checkpoint is located from a recorded seed so the search is
reproducible; run from the repository root:

    python3 scripts/regenerate_checkpoints.py [--out DIR]
"""
import argparse
import pathlib
import time

import numpy as np

from vqe_saddle.experiments import find_excited_state, find_saddle, save_checkpoint
from vqe_saddle.gradients import VQELandscape
from vqe_saddle.observables import heisenberg_preset
from vqe_saddle.quantum import AnsatzLayout

XYZ = (1.421, 1.288, 1.0)


def seeded_start(seed, index, n_params=16, count=300):
    """Row ``index`` of a block of uniform draws in [-pi/2, pi/2)."""
    return np.random.default_rng(seed).uniform(-np.pi / 2, np.pi / 2, (count, n_params))[index]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = pathlib.Path(__file__).resolve().parents[1] / "src" / "vqe_saddle" / "data"
    parser.add_argument("--out", type=pathlib.Path, default=default)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    layout = AnsatzLayout(4, 4)
    heis = VQELandscape(layout, heisenberg_preset(4))
    xyz = VQELandscape(layout, heisenberg_preset(4, *XYZ))

    jobs = {
        "heisenberg_saddle": lambda: find_saddle(heis, seeded_start(1, 104)),
        "heisenberg_ground": lambda: find_saddle(heis, seeded_start(0, 0), grad_tol=1e-8, scout_tol=1e-3),
        "heisenberg_excited": lambda: find_excited_state(heis, -4.0, 0.01, n_starts=192, seed=1),
        "xyz_saddle": lambda: find_saddle(xyz, seeded_start(3, 247)),
    }
    for name, job in jobs.items():
        start = time.time()
        cp = job()
        land = xyz if name.startswith("xyz") else heis
        save_checkpoint(args.out / f"{name}.ckpt", cp, layout, land.hamiltonian, note=name)
        print(f"{name}: kind={cp.kind} loss={cp.loss:.6f} |grad|={cp.grad_norm:.2e} "
              f"lowest eigenvalues={np.round(cp.hessian_eigenvalues[:3], 4)} ({time.time() - start:.0f}s)")


if __name__ == "__main__":
    main()
