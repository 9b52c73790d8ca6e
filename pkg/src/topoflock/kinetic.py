"""First-order upwind finite-volume solver for the 1D topological Vlasov equation.

    f_t + (v f)_x + (xi f)_v = 0,
    xi(x, v) = -int K(M[nu0](x, |x - y|)) (v - w) f(y, w) dy dw

on a uniform x-v grid with zero-inflow boundaries. The time step obeys the
positivity-preserving bounds

    dt < dv dx / (2 max_{i,k} |dv v_k + dx xi_{i,k+1/2}|),
    dt < dx / (2 max |v_k|),   dt < dv / (2 max |xi|).
"""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_density
from .exceptions import CFLError, ConfigError, DomainError
from .kernels import KernelSpec, eval_kernel
from .topology import normalized_ball_mass


@dataclass(frozen=True)
class PhaseGrid:
    x_min: float
    x_max: float
    n_x: int
    v_min: float
    v_max: float
    n_v: int

    def __post_init__(self):
        if self.n_x < 1 or self.n_v < 1:
            raise ConfigError("grid needs at least one cell per direction")
        if not (self.x_max > self.x_min and self.v_max > self.v_min):
            raise ConfigError("grid bounds must be increasing")

    @classmethod
    def from_spacing(cls, x_min, x_max, dx, v_min, v_max, dv):
        n_x = int(round((x_max - x_min) / dx))
        n_v = int(round((v_max - v_min) / dv))
        return cls(float(x_min), float(x_max), n_x, float(v_min), float(v_max), n_v)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dv(self):
        return (self.v_max - self.v_min) / self.n_v

    @property
    def x(self):
        return self.x_min + (np.arange(self.n_x) + 0.5) * self.dx

    @property
    def v(self):
        return self.v_min + (np.arange(self.n_v) + 0.5) * self.dv

    @property
    def v_faces(self):
        """The n_v + 1 velocity interfaces v_{k+1/2}, k = -1 .. n_v - 1."""
        return self.v_min + np.arange(self.n_v + 1) * self.dv

    @property
    def shape(self):
        return (self.n_x, self.n_v)

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max, "n_x": self.n_x,
                "v_min": self.v_min, "v_max": self.v_max, "n_v": self.n_v}


@dataclass(frozen=True)
class MomentPair:
    nu0: np.ndarray
    nu1: np.ndarray


def _check_f(f, grid, nonneg=True):
    if nonneg:
        f = check_density(f, ndim=2, name="f")
    else:
        f = np.asarray(f, dtype=np.float64)
        if not np.all(np.isfinite(f)):
            raise DomainError("f contains non-finite values")
    if f.shape != grid.shape:
        raise DomainError(f"f has shape {f.shape}, grid is {grid.shape}")
    return f


def moments(f, grid):
    """Mass and momentum densities by the midpoint rule in v."""
    f = _check_f(f, grid, nonneg=False)
    return MomentPair(f.sum(axis=1) * grid.dv, f @ grid.v * grid.dv)


def total_mass(f, grid):
    return float(np.sum(f) * grid.dx * grid.dv)


def interaction_weights(nu0, dx, kernel):
    """``C[i, j] = K(M[nu0](x_i, |x_i - x_j|) / total mass)``; None for zero mass."""
    Mhat = normalized_ball_mass(nu0, dx)
    if Mhat is None:
        return None
    return eval_kernel(kernel, Mhat)


def alignment_field(f, grid, kernel):
    """Velocity-direction transport speed xi at (x_i, v_{k+1/2}), shape (n_x, n_v + 1).

    The sign is chosen so that the v-flux is ``G = xi f``.
    """
    m = moments(f, grid)
    C = interaction_weights(m.nu0, grid.dx, kernel)
    if C is None:
        return np.zeros((grid.n_x, grid.n_v + 1))
    a = grid.dx * (C @ m.nu0)
    b = grid.dx * (C @ m.nu1)
    return b[:, None] - grid.v_faces[None, :] * a[:, None]


def combined_cfl_bound(grid, xi):
    """``dv dx / (2 max |dv v_k + dx xi_{i,k+1/2}|)``, ``inf`` if the max is 0.

    On its own this does not guarantee positivity: where v_k and xi have
    opposite signs the two terms cancel although both fluxes leave the cell.
    """
    xi = np.asarray(xi, dtype=np.float64)
    if not np.all(np.isfinite(xi)):
        raise DomainError("xi must be finite")
    denom = 2.0 * np.abs(grid.dv * grid.v[None, :] + grid.dx * xi[:, 1:]).max()
    return np.inf if denom == 0.0 else grid.dv * grid.dx / denom


def cfl_bound(grid, xi):
    """Strict positivity bound on dt (``inf`` when every speed vanishes).

    Minimum of the combined bound and the two one-directional bounds
    ``dx / (2 max|v|)`` and ``dv / (2 max|xi|)`` from which it is assembled.
    """
    bound = combined_cfl_bound(grid, xi)
    vmax = np.abs(grid.v).max()
    ximax = np.abs(xi).max()
    if vmax > 0:
        bound = min(bound, grid.dx / (2.0 * vmax))
    if ximax > 0:
        bound = min(bound, grid.dv / (2.0 * ximax))
    return bound


def cfl_dt(grid, xi, safety=0.9, dt_max=None):
    """``safety`` times the positivity bound, or ``safety * dt_max`` if it is unbounded.

    ``dt_max`` defaults to the cell width dx.
    """
    if not 0 < safety:
        raise DomainError("safety must be positive")
    bound = cfl_bound(grid, xi)
    if np.isinf(bound):
        return safety * (grid.dx if dt_max is None else dt_max)
    return safety * bound


def step_upwind(f, grid, kernel, dt, xi=None, enforce_cfl=True):
    """One explicit upwind step in x (wind v_k) and v (wind xi).

    Raises :class:`CFLError` if ``dt`` does not satisfy the positivity bound,
    unless ``enforce_cfl`` is False.
    """
    f = _check_f(f, grid, nonneg=False)
    if xi is None:
        xi = alignment_field(f, grid, kernel)
    if enforce_cfl:
        bound = cfl_bound(grid, xi)
        if not dt < bound:
            raise CFLError(dt, bound, "kinetic")
    v = grid.v
    # v is sorted, so donor cells are to the left for columns k >= k0
    k0 = int(np.searchsorted(v, 0.0, side="right"))
    F = np.zeros((grid.n_x + 1, grid.n_v))
    np.multiply(f[:, k0:], v[k0:], out=F[1:, k0:])
    np.multiply(f[:, :k0], v[:k0], out=F[:-1, :k0])
    fv = np.pad(f, ((0, 0), (1, 1)))
    G = xi * np.where(xi > 0, fv[:, :-1], fv[:, 1:])
    out = f - (dt / grid.dx) * np.diff(F, axis=0)
    out -= (dt / grid.dv) * np.diff(G, axis=1)
    return out


@dataclass
class KineticSnapshot:
    time: float
    f: np.ndarray
    moments: MomentPair
    mass: float
    n_steps: int


def _snapshot_schedule(t_end, snapshot_times):
    times = sorted({0.0, float(t_end), *(float(t) for t in (snapshot_times or ()) if 0 <= t <= t_end)})
    return times


def simulate_kinetic(f0, grid, kernel, t_end, snapshot_times=None, safety=0.9, dt_max=None):
    """Integrate to ``t_end`` with a CFL-adaptive step, landing exactly on snapshot times.

    Returns a list of :class:`KineticSnapshot`, always including t = 0 and t_end.
    """
    if t_end < 0:
        raise ConfigError("t_end must be non-negative")
    f = _check_f(f0, grid).copy()
    schedule = _snapshot_schedule(t_end, snapshot_times)
    out = [KineticSnapshot(0.0, f.copy(), moments(f, grid), total_mass(f, grid), 0)]
    t, n_steps = 0.0, 0
    for target in schedule[1:]:
        while t < target:
            xi = alignment_field(f, grid, kernel)
            dt = cfl_dt(grid, xi, safety, dt_max)
            if t + dt >= target:
                dt, t_next = target - t, target
            else:
                t_next = t + dt
            f = step_upwind(f, grid, kernel, dt, xi=xi, enforce_cfl=safety < 1)
            t = t_next
            n_steps += 1
        out.append(KineticSnapshot(t, f.copy(), moments(f, grid),
                                   total_mass(f, grid), n_steps))
    return out


class KineticVlasov(BaseEstimator):
    """Estimator front end to :func:`simulate_kinetic`; ``fit(f0)`` fills ``snapshots_``."""

    def __init__(self, grid=None, kernel="linear", t_end=3.0, snapshot_times=None,
                 safety=0.9, dt_max=None):
        self.grid = grid
        self.kernel = kernel
        self.t_end = t_end
        self.snapshot_times = snapshot_times
        self.safety = safety
        self.dt_max = dt_max

    def fit(self, f0, y=None):
        if self.grid is None:
            raise ConfigError("KineticVlasov needs a PhaseGrid")
        kernel = self.kernel if isinstance(self.kernel, KernelSpec) else KernelSpec.from_name(self.kernel)
        self.snapshots_ = simulate_kinetic(f0, self.grid, kernel, self.t_end,
                                           self.snapshot_times, self.safety, self.dt_max)
        self.n_steps_ = self.snapshots_[-1].n_steps
        return self

    def transform(self, f0=None):
        """Moments ``(nu0, nu1)`` at each snapshot, stacked as (n_snapshots, 2, n_x)."""
        return np.stack([np.stack([s.moments.nu0, s.moments.nu1]) for s in self.snapshots_])
