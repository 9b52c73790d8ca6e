"""Pressureless Euler alignment system in 1D and 2D.

Unknowns are w = (rho, u) in 1D and w = (rho, u1, u2) in 2D, evolved in the
quasi-conservative form

    w_t + A(w)_x + B(w)_y = S(w)

    A = (rho u1, u1^2/2, u1 u2 + int_{x0}^{x} N1)     N1 = -u2 d_x u1
    B = (rho u2, u1 u2 + int_{y0}^{y} N2, u2^2/2)     N2 = -u1 d_y u2

with the second-order Kurganov-Tadmor central flux on minmod-limited linear
reconstructions. The non-conservative products enter through the global-flux
integrals, accumulated from the lower-left corner of the domain. S is the
topological alignment integral, discretized with nested midpoint quadrature.
"""
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_density, check_spacing
from .exceptions import CFLError, ConfigError, DomainError
from .kernels import KernelSpec, eval_kernel
from .topology import normalized_ball_mass


@dataclass(frozen=True)
class MacroState:
    """Cell averages of density and velocity on a uniform grid.

    ``u`` has the shape of ``rho`` in 1D and ``(2,) + rho.shape`` in 2D.
    ``origin`` is the lower-left domain corner, ``spacing`` the cell sizes.
    """

    rho: np.ndarray
    u: np.ndarray
    spacing: tuple
    origin: tuple = None

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        u = np.asarray(self.u, dtype=np.float64)
        if rho.ndim not in (1, 2):
            raise DomainError("rho must be 1-D or 2-D")
        want = rho.shape if rho.ndim == 1 else (2,) + rho.shape
        if u.shape != want:
            raise DomainError(f"u has shape {u.shape}, expected {want}")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u))):
            raise DomainError("state contains non-finite values")
        h = tuple(float(x) for x in check_spacing(self.spacing, rho.ndim))
        origin = (0.0,) * rho.ndim if self.origin is None else tuple(float(o) for o in np.atleast_1d(self.origin))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self):
        return self.rho.ndim

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def fields(self):
        """Stacked (rho, u...) array of shape (1 + dim,) + grid shape."""
        return np.concatenate([self.rho[None], self.u.reshape((-1,) + self.rho.shape)])

    @classmethod
    def from_fields(cls, w, spacing, origin):
        if w.shape[0] == 2:
            return cls(w[0], w[1], spacing, origin)
        return cls(w[0], w[1:], spacing, origin)

    @property
    def momentum(self):
        return self.rho * self.u

    def centers(self, axis=0):
        n = self.rho.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing[axis]

    def total_mass(self):
        return float(self.rho.sum() * self.cell_volume)

    def total_momentum(self):
        axes = tuple(range(-self.dim, 0))
        return np.atleast_1d(self.momentum.sum(axis=axes) * self.cell_volume)


@dataclass(frozen=True)
class MacroConfig:
    """Solver parameters.

    ``rho_floor`` is relative to the largest initial density; below it the
    velocity is set to 0. ``source_density_factor`` multiplies the alignment
    source by the local density (off by default: the velocity equation has no
    such factor). ``integrator`` is ``"euler"`` or ``"heun"``.
    """

    kernel: KernelSpec = field(default_factory=KernelSpec.linear)
    theta: float = 1.0
    cfl: float = 0.45
    rho_floor: float = 1e-8
    source_density_factor: bool = False
    integrator: str = "euler"

    def __post_init__(self):
        if not 1.0 <= self.theta <= 2.0:
            raise ConfigError("theta must lie in [1, 2]")
        if not 0.0 < self.cfl < 1.0:
            raise ConfigError("cfl must lie in (0, 1)")
        if not self.rho_floor >= 0:
            raise ConfigError("rho_floor must be non-negative")
        if self.integrator not in ("euler", "heun"):
            raise ConfigError("integrator must be 'euler' or 'heun'")


# ---------------------------------------------------------------------------
# reconstruction


def minmod3(a, b, c):
    """Smallest-magnitude argument when all three share a sign, else 0."""
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (a, b, c)))
    mag = np.minimum(np.minimum(np.abs(a), np.abs(b)), np.abs(c))
    pos = (a > 0) & (b > 0) & (c > 0)
    neg = (a < 0) & (b < 0) & (c < 0)
    out = np.where(pos, mag, np.where(neg, -mag, 0.0))
    return float(out) if out.ndim == 0 else out


def limited_slope(w, h, theta, axis):
    """Minmod slope of cell averages along ``axis`` (zero-gradient ghost cells)."""
    pad = [(0, 0)] * w.ndim
    pad[axis] = (1, 1)
    g = np.pad(w, pad, mode="edge")
    n = w.shape[axis]
    lo = np.take(g, np.arange(0, n), axis=axis)
    mid = np.take(g, np.arange(1, n + 1), axis=axis)
    hi = np.take(g, np.arange(2, n + 2), axis=axis)
    return minmod3(theta * (hi - mid) / h, (hi - lo) / (2 * h), theta * (mid - lo) / h)


@dataclass
class Reconstruction:
    """Slopes and face values per field; ``faces[axis] = (minus side, plus side)``.

    In 2D, axis 0 gives (W, E) and axis 1 gives (S, N).
    """

    slopes: list
    faces: list

    @property
    def west(self):
        return self.faces[0][0]

    @property
    def east(self):
        return self.faces[0][1]

    @property
    def south(self):
        return self.faces[1][0]

    @property
    def north(self):
        return self.faces[1][1]


def reconstruct(w, spacing, theta=1.0):
    """Piecewise-linear reconstruction of the stacked fields ``w`` (field axis first)."""
    w = np.asarray(w, dtype=np.float64)
    slopes, faces = [], []
    for axis, h in enumerate(spacing):
        s = limited_slope(w, h, theta, axis + 1)
        slopes.append(s)
        faces.append((w - 0.5 * h * s, w + 0.5 * h * s))
    return Reconstruction(slopes, faces)


def _interface_states(rec, w, axis):
    """Left/right states at all n + 1 faces along ``axis`` (ghost cells are constant)."""
    minus, plus = rec.faces[axis]
    ax = axis + 1
    first = np.take(w, [0], axis=ax)
    last = np.take(w, [-1], axis=ax)
    left = np.concatenate([first, plus], axis=ax)
    right = np.concatenate([minus, last], axis=ax)
    return left, right


# ---------------------------------------------------------------------------
# fluxes


def local_speeds(u_left, u_right):
    """One-sided speed bounds ``(a_minus, a_plus)`` at faces, always bracketing 0."""
    u_left = np.asarray(u_left, dtype=np.float64)
    u_right = np.asarray(u_right, dtype=np.float64)
    a_plus = np.maximum(np.maximum(u_left, u_right), 0.0)
    a_minus = np.minimum(np.minimum(u_left, u_right), 0.0)
    return a_minus, a_plus


def kt_flux(w_left, w_right, a_minus, a_plus, flux_left, flux_right):
    """Kurganov-Tadmor central-upwind numerical flux; 0 where both speeds vanish."""
    a_minus = np.asarray(a_minus, dtype=np.float64)
    a_plus = np.asarray(a_plus, dtype=np.float64)
    if np.any(a_plus < a_minus):
        raise RuntimeError("local speeds out of order (a_plus < a_minus)")
    span = a_plus - a_minus
    safe = np.where(span > 0, span, 1.0)
    out = ((a_plus * flux_left - a_minus * flux_right) / safe
           + (a_plus * a_minus / safe) * (np.asarray(w_right) - np.asarray(w_left)))
    return np.where(span > 0, out, 0.0)


def physical_flux(w, axis):
    """Local part of A (axis 0) or B (axis 1); global-flux offsets are added separately."""
    if w.shape[0] == 2:
        rho, u = w
        return np.stack([rho * u, 0.5 * u * u])
    rho, u1, u2 = w
    if axis == 0:
        return np.stack([rho * u1, 0.5 * u1 * u1, u1 * u2])
    return np.stack([rho * u2, u1 * u2, 0.5 * u2 * u2])


def global_flux_offsets(u1, u2, spacing):
    """Face values of ``int_{x0}^x N1`` (x-faces) and ``int_{y0}^y N2`` (y-faces).

    Shapes (nx + 1, ny) and (nx, ny + 1); the integrals start at 0 on the
    left and bottom domain edges.
    """
    dx, dy = spacing
    n1 = -u2 * np.gradient(u1, dx, axis=0)
    n2 = -u1 * np.gradient(u2, dy, axis=1)
    a3 = np.concatenate([np.zeros((1, u1.shape[1])), dx * np.cumsum(n1, axis=0)], axis=0)
    b2 = np.concatenate([np.zeros((u1.shape[0], 1)), dy * np.cumsum(n2, axis=1)], axis=1)
    return a3, b2


def _numerical_fluxes(w, spacing, theta):
    """Numerical fluxes at the faces of each axis, plus the largest speed per axis."""
    rec = reconstruct(w, spacing, theta)
    dim = len(spacing)
    offsets = global_flux_offsets(w[1], w[2], spacing) if dim == 2 else None
    fluxes, speeds = [], []
    for axis in range(dim):
        left, right = _interface_states(rec, w, axis)
        a_minus, a_plus = local_speeds(left[1 + axis], right[1 + axis])
        F = kt_flux(left, right, a_minus, a_plus,
                    physical_flux(left, axis), physical_flux(right, axis))
        if offsets is not None:
            # shared by both states at a face, so it passes through undamped
            F[2 if axis == 0 else 1] += offsets[axis]
        fluxes.append(F)
        speeds.append(float(max(a_plus.max(initial=0.0), -a_minus.min(initial=0.0))))
    return fluxes, speeds


# ---------------------------------------------------------------------------
# source


def source_term(state, kernel, density_factor=False):
    """Alignment source for each velocity component, shape of ``state.u``.

    ``S_c = sum_p w_p K(M(c -> p)) (u_p - u_c) rho_p`` with midpoint weights and
    the ball mass normalized by the total mass. The density equation has no
    source.
    """
    rho = state.rho
    Mhat = normalized_ball_mass(rho, state.spacing)
    if Mhat is None:
        return np.zeros_like(state.u)
    C = eval_kernel(kernel, Mhat)
    vol = state.cell_volume
    r = rho.ravel()
    Cr = C @ r
    U = state.u.reshape(-1, r.size)
    S = vol * (U * r[None, :] @ C.T - U * Cr[None, :])
    if density_factor:
        S = S * r[None, :]
    return S.reshape(state.u.shape)


# ---------------------------------------------------------------------------
# time stepping


def max_stable_dt(state, config):
    """``cfl * min_axis(h / max speed)`` for the current state (inf at rest)."""
    _, speeds = _numerical_fluxes(state.fields, state.spacing, config.theta)
    limits = [h / s for h, s in zip(state.spacing, speeds) if s > 0]
    return config.cfl * min(limits) if limits else np.inf


def _rhs(w, spacing, origin, config):
    fluxes, speeds = _numerical_fluxes(w, spacing, config.theta)
    out = np.zeros_like(w)
    for axis, (F, h) in enumerate(zip(fluxes, spacing)):
        n = w.shape[axis + 1]
        hi = np.take(F, np.arange(1, n + 1), axis=axis + 1)
        lo = np.take(F, np.arange(0, n), axis=axis + 1)
        out -= (hi - lo) / h
    state = MacroState.from_fields(w, spacing, origin)
    out[1:] += source_term(state, config.kernel, config.source_density_factor).reshape(out[1:].shape)
    return out, speeds


def _finish(w, floor):
    """Clip negative density and apply the vacuum convention; returns clipped mass density."""
    clipped = np.where(w[0] < 0, -w[0], 0.0)
    w[0] = np.maximum(w[0], 0.0)
    w[1:, w[0] < floor] = 0.0
    return clipped


@dataclass
class StepResult:
    state: MacroState
    clipped_mass: float


def step_macro(state, config, dt, floor=None):
    """One explicit step (Euler, or Heun if configured) of size ``dt``.

    ``floor`` is the absolute vacuum threshold; by default ``config.rho_floor``
    times the current maximum density.
    """
    if floor is None:
        floor = config.rho_floor * float(state.rho.max(initial=0.0))
    w = state.fields
    k1, speeds = _rhs(w, state.spacing, state.origin, config)
    limits = [h / s for h, s in zip(state.spacing, speeds) if s > 0]
    bound = config.cfl * min(limits) if limits else np.inf
    if dt > bound * (1 + 1e-12):
        raise CFLError(dt, bound, "macro")
    w1 = w + dt * k1
    clipped = _finish(w1, floor)
    if config.integrator == "heun":
        k2, _ = _rhs(w1, state.spacing, state.origin, config)
        w1 = 0.5 * (w + w1 + dt * k2)
        clipped = _finish(w1, floor)
    return StepResult(MacroState.from_fields(w1, state.spacing, state.origin),
                      float(clipped.sum() * state.cell_volume))


def diagnostics(state):
    """Mass, momentum, integral of u and mass-weighted mean velocity."""
    mass = state.total_mass()
    mom = state.total_momentum()
    axes = tuple(range(-state.dim, 0))
    u_int = np.atleast_1d(state.u.sum(axis=axes) * state.cell_volume)
    mean_u = mom / mass if mass > 0 else np.zeros_like(mom)
    return {"mass": mass, "momentum": mom.tolist(), "u_integral": u_int.tolist(),
            "mean_velocity": mean_u.tolist()}


@dataclass
class MacroRun:
    snapshots: list        # (time, MacroState, diagnostics dict)
    times: np.ndarray      # every step
    history: dict          # per-step diagnostic series
    n_steps: int
    clipped_mass: float


def simulate_macro(state0, config, t_end, snapshot_times=None, dt=None):
    """Integrate to ``t_end``; fixed ``dt`` if given (checked against CFL), else adaptive.

    Steps are shortened to land exactly on every snapshot time.
    """
    if t_end < 0:
        raise ConfigError("t_end must be non-negative")
    if dt is not None and not dt > 0:
        raise ConfigError("dt must be positive")
    floor = config.rho_floor * float(state0.rho.max(initial=0.0))
    schedule = sorted({0.0, float(t_end), *(float(t) for t in (snapshot_times or ()) if 0 <= t <= t_end)})
    state = state0
    d0 = diagnostics(state)
    snaps = [(0.0, state, {**d0, "clipped_mass": 0.0})]
    times, hist = [0.0], {k: [v] for k, v in d0.items()}
    t, n_steps, clipped = 0.0, 0, 0.0
    for target in schedule[1:]:
        while t < target:
            step = dt if dt is not None else max_stable_dt(state, config)
            if not np.isfinite(step):
                step = target - t
            if t + step >= target * (1 - 1e-14):
                step, t_next = target - t, target
            else:
                t_next = t + step
            res = step_macro(state, config, step, floor)
            state, t = res.state, t_next
            clipped += res.clipped_mass
            n_steps += 1
            d = diagnostics(state)
            times.append(t)
            for k, v in d.items():
                hist[k].append(v)
        snaps.append((t, state, {**diagnostics(state), "clipped_mass": clipped}))
    history = {k: np.array(v) for k, v in hist.items()}
    return MacroRun(snaps, np.array(times), history, n_steps, clipped)


def settling_time(times, values, rel_tol=0.01):
    """First time after which ``values`` stays within ``rel_tol`` of its final value."""
    values = np.asarray(values, dtype=np.float64)
    final = values[-1]
    outside = np.abs(values - final) > rel_tol * abs(final)
    if not outside.any():
        return float(times[0])
    last = np.flatnonzero(outside)[-1]
    return float(times[min(last + 1, len(times) - 1)])


class MacroEuler(BaseEstimator):
    """Estimator front end to :func:`simulate_macro`.

    ``fit(rho0, u0)`` integrates from the given cell averages; results land in
    ``run_`` and ``final_state_``.
    """

    def __init__(self, spacing=1.0, origin=None, kernel="linear", theta=1.0, cfl=0.45,
                 rho_floor=1e-8, t_end=1.0, dt=None, snapshot_times=None,
                 integrator="euler", source_density_factor=False):
        self.spacing = spacing
        self.origin = origin
        self.kernel = kernel
        self.theta = theta
        self.cfl = cfl
        self.rho_floor = rho_floor
        self.t_end = t_end
        self.dt = dt
        self.snapshot_times = snapshot_times
        self.integrator = integrator
        self.source_density_factor = source_density_factor

    def fit(self, rho0, u0):
        rho0 = check_density(rho0, name="rho0")
        kernel = self.kernel if isinstance(self.kernel, KernelSpec) else KernelSpec.from_name(self.kernel)
        config = MacroConfig(kernel, self.theta, self.cfl, self.rho_floor,
                             self.source_density_factor, self.integrator)
        state = MacroState(rho0, u0, self.spacing, self.origin)
        self.run_ = simulate_macro(state, config, self.t_end, self.snapshot_times, self.dt)
        self.final_state_ = self.run_.snapshots[-1][1]
        return self

    def transform(self, rho0=None):
        """Final ``(rho, u...)`` fields stacked along the first axis."""
        return self.final_state_.fields

