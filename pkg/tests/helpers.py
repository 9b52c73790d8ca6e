"""Shared generators and oracles for the test suite."""
import numpy as np

from topoflock.kernels import KernelSpec
from topoflock.kinetic import PhaseGrid, alignment_field, cfl_bound, combined_cfl_bound, step_upwind

KERNELS = [KernelSpec.linear(), KernelSpec.quadratic(), KernelSpec.indicator(3, 10)]


def random_phase_instance(rng, k):
    """Sparse random non-negative density on a random grid, plus a kernel."""
    nx, nv = rng.integers(8, 30), rng.integers(8, 30)
    g = PhaseGrid(-rng.uniform(1, 5), rng.uniform(1, 5), int(nx),
                  -rng.uniform(1, 5), rng.uniform(1, 5), int(nv))
    f = rng.uniform(0, 1, (nx, nv)) * (rng.uniform(size=(nx, nv)) < 0.7)
    f *= rng.uniform(0.1, 10) / (f.sum() * g.dx * g.dv)
    return g, f, KERNELS[k % len(KERNELS)]


def run_positivity(g, f, kernel, safety, n_steps=50, bound=cfl_bound):
    """Step ``n_steps`` times at ``safety * bound``; return the smallest value seen."""
    h = f.copy()
    lowest = h.min()
    for _ in range(n_steps):
        xi = alignment_field(np.maximum(h, 0.0), g, kernel)
        b = bound(g, xi)
        dt = safety * (b if np.isfinite(b) else g.dx)
        h = step_upwind(h, g, kernel, dt, xi=xi, enforce_cfl=False)
        lowest = min(lowest, h.min())
        if lowest < 0:
            break
    return lowest


def combined_only(g, xi):
    return combined_cfl_bound(g, xi)


def observed_orders(errors):
    errors = np.asarray(errors, dtype=float)
    return np.log2(errors[:-1] / errors[1:])
