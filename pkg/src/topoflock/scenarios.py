"""Initial data for the eight experiments and the lifts between scales."""
import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .exceptions import ConfigError, DomainError
from .kinetic import PhaseGrid, moments
from .macro import MacroState
from .micro import AgentState

_SQRT2 = np.sqrt(2.0)


@dataclass
class ScenarioConfig:
    """Every knob of an experiment, flat so it can be overridden by ``key=value``.

    Grid fields prefixed ``kin_`` describe the kinetic phase grid, ``macro_``
    the 1D macroscopic grid and ``macro2d_`` the 2D one. ``unit_mass``
    rescales lifted densities to total mass 1, matching the 1/N normalization
    of the particle system.
    """

    test_id: int = 0
    seed: int = 7
    # micro, 1D two groups
    n1: int = 20
    n2: int = 80
    m_bar: int = 22
    kernel: str = "linear"
    kernels: list = field(default_factory=lambda: ["linear", "quadratic"])
    tie_policy: str = "lowest"
    micro_dt: float = 0.02
    micro_t_end: float = 500.0
    record_stride: int = 50
    flock_tol: float = 0.01
    cluster_tol: float = 1e-3
    # critical datum
    eps: float = 0.04
    # lifting
    sigma_x: float = 0.1
    sigma_v: float = 0.1
    sigma_y: float = 0.05
    x0: float = -2.0
    v0: float = 1.5
    quadrature: str = "midpoint"
    unit_mass: bool = True
    dump_f: bool = False
    # kinetic
    kin_x_min: float = -15.0
    kin_x_max: float = 20.0
    kin_dx: float = 0.2
    kin_v_min: float = -5.0
    kin_v_max: float = 5.0
    kin_dv: float = 0.025
    kin_t_end: float = 3.0
    kin_safety: float = 0.9
    snapshot_times: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 3.0])
    # macro 1D
    macro_x_min: float = -15.0
    macro_x_max: float = 20.0
    macro_dx: float = 0.2
    macro_dt: float = None
    macro_t_end: float = 3.0
    theta: float = 1.0
    cfl: float = 0.25
    rho_floor: float = 1e-8
    integrator: str = "euler"
    # 2D
    small_center: list = field(default_factory=lambda: [-0.08, -0.08])
    ball_radius: float = 0.1
    n_group: int = 45
    n_small: int = 10
    micro2d_dt: float = 0.01
    micro2d_t_end: float = 1.0
    macro2d_min: float = -1.0
    macro2d_max: float = 1.0
    macro2d_h: float = 0.04
    macro2d_t_end: float = 1.0
    macro2d_snapshot_times: list = field(default_factory=lambda: [0.0, 0.1, 0.5, 1.0])

    def __post_init__(self):
        for name in ("sigma_x", "sigma_v", "sigma_y"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("n1", "n2", "n_group", "n_small"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not -1.0 < self.eps < 1.0:
            raise ConfigError("eps must lie in (-1, 1)")
        if self.quadrature not in ("midpoint", "cell_average"):
            raise ConfigError("quadrature must be 'midpoint' or 'cell_average'")

    @property
    def n(self):
        return self.n1 + self.n2

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, overrides):
        """Copy with ``{key: value}`` applied; string values are parsed as JSON when possible."""
        data = self.to_dict()
        for key, value in overrides.items():
            if key not in data:
                raise ConfigError(f"unknown config key {key!r}")
            data[key] = _coerce(value, data[key])
        return type(self).from_dict(data)


def _coerce(value, current):
    if not isinstance(value, str):
        return value
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    if isinstance(current, float) and isinstance(parsed, int) and not isinstance(parsed, bool):
        parsed = float(parsed)
    return parsed


_TEST_DEFAULTS = {
    1: {"kernel": "indicator", "m_bar": 22},
    2: {"macro_x_min": -20.0, "macro_x_max": 80.0, "macro_dx": 0.4, "macro_dt": 0.02,
        "macro_t_end": 40.0, "quadrature": "cell_average", "kin_v_min": -5.0, "kin_v_max": 5.0, "kin_dv": 0.025},
    3: {"kernel": "linear"},
    4: {"sigma_x": 2.0, "sigma_v": float(np.sqrt(0.001)), "kin_dx": 0.05, "kin_dv": 0.005,
        "macro_dx": 0.05},
    5: {"sigma_x": 0.1, "sigma_v": 0.1, "quadrature": "cell_average", "kin_dx": 0.2, "kin_dv": 0.025, "macro_dx": 0.2},
    6: {"kernel": "two_point", "eps": 0.04, "micro_t_end": 30.0, "record_stride": 5},
    7: {"kernel": "linear", "small_center": [-0.08, -0.08], "record_stride": 10},
    8: {"kernel": "linear", "small_center": [0.08, 0.08], "record_stride": 10},
}


def default_config(test_id):
    """The resolved default configuration of Test ``test_id`` (1..8)."""
    if test_id not in _TEST_DEFAULTS:
        raise ConfigError(f"unknown test id {test_id!r}; expected 1..8")
    return ScenarioConfig(test_id=test_id, **_TEST_DEFAULTS[test_id])


# ---------------------------------------------------------------------------
# particle data


def two_groups_1d(n1=20, n2=80, seed=7, n=None):
    """Two groups on the line: n1 agents in [-3, -1] with velocities in [-2, 0],
    n2 agents in [1, 3] with velocities in [0, 2], all uniform."""
    if n is not None and n1 + n2 != n:
        raise ConfigError(f"n1 + n2 = {n1 + n2} does not match n = {n}")
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.uniform(-3.0, -1.0, n1), rng.uniform(1.0, 3.0, n2)])
    v = np.concatenate([rng.uniform(-2.0, 0.0, n1), rng.uniform(0.0, 2.0, n2)])
    return AgentState(x, v)


def critical_datum_1d(eps):
    """Three agents at (-1, eps, 1) with velocities (-1, 0, 1)."""
    if not -1.0 < eps < 1.0:
        raise ConfigError("eps must lie in (-1, 1)")
    return AgentState([-1.0, float(eps), 1.0], [-1.0, 0.0, 1.0])


def uniform_in_ball(rng, center, radius, n):
    """``n`` points uniform in a disk, by rejection from the bounding square."""
    center = np.asarray(center, dtype=np.float64)
    out = np.empty((0, 2))
    while out.shape[0] < n:
        cand = rng.uniform(-radius, radius, size=(2 * (n - out.shape[0]) + 4, 2))
        keep = cand[(cand ** 2).sum(axis=1) <= radius ** 2]
        out = np.vstack([out, keep])
    return center + out[:n]


def two_balls_2d(small_center=(-0.08, -0.08), seed=7, n_group=45, n_small=10, radius=0.1):
    """Two groups of ``n_group`` agents around (-0.3, -0.3) and (0.3, 0.3) moving apart,
    plus ``n_small`` agents at rest in a ball around ``small_center``.

    Agents are ordered: lower-left group, upper-right group, small group.
    """
    rng = np.random.default_rng(seed)
    lower = uniform_in_ball(rng, (-0.3, -0.3), radius, n_group)
    upper = uniform_in_ball(rng, (0.3, 0.3), radius, n_group)
    v_lower = rng.uniform(-1.0, -0.2, size=(n_group, 2))
    v_upper = rng.uniform(0.2, 1.0, size=(n_group, 2))
    small = uniform_in_ball(rng, small_center, radius, n_small)
    X = np.vstack([lower, upper, small])
    V = np.vstack([v_lower, v_upper, np.zeros((n_small, 2))])
    return AgentState(X, V)


# ---------------------------------------------------------------------------
# densities


def gaussian_cell_values(edges, centers, sigma, quadrature="midpoint"):
    """Normal densities N(mu_i, sigma) sampled on cells, shape (len(centers), n_cells).

    ``midpoint`` evaluates at cell centres; ``cell_average`` integrates exactly
    over each cell and divides by its width.
    """
    edges = np.asarray(edges, dtype=np.float64)
    mu = np.asarray(centers, dtype=np.float64)[:, None]
    if quadrature == "midpoint":
        mid = 0.5 * (edges[1:] + edges[:-1])[None, :]
        return np.exp(-0.5 * ((mid - mu) / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)
    if quadrature == "cell_average":
        cdf = 0.5 * erf((edges[None, :] - mu) / (_SQRT2 * sigma))
        return np.diff(cdf, axis=1) / np.diff(edges)[None, :]
    raise ConfigError(f"unknown quadrature {quadrature!r}")


def _edges(lo, n, h):
    return lo + np.arange(n + 1) * h


def gaussian_sum_phase_density(X0, V0, sigma_x, sigma_v, grid, quadrature="midpoint"):
    """Sum over agents of product Gaussians centred at (X0_i, V0_i); mass close to N."""
    X0 = np.ravel(np.asarray(X0, dtype=np.float64))
    V0 = np.ravel(np.asarray(V0, dtype=np.float64))
    if X0.shape != V0.shape:
        raise DomainError("X0 and V0 must have the same length")
    gx = gaussian_cell_values(_edges(grid.x_min, grid.n_x, grid.dx), X0, sigma_x, quadrature)
    gv = gaussian_cell_values(_edges(grid.v_min, grid.n_v, grid.dv), V0, sigma_v, quadrature)
    return gx.T @ gv


def monokinetic_gaussian(x0, v0, sigma_x, sigma_v, grid, quadrature="midpoint"):
    """Single product Gaussian; small ``sigma_v`` approximates f = rho(x) delta(v - v0)."""
    return gaussian_sum_phase_density([x0], [v0], sigma_x, sigma_v, grid, quadrature)


def lift_moments_to_macro(f0, grid, rho_floor=1e-8):
    """Macroscopic data from kinetic moments: rho = nu0, u = nu1 / nu0 off vacuum.

    ``rho_floor`` is relative to the maximum of nu0.
    """
    m = moments(f0, grid)
    rho = m.nu0
    floor = rho_floor * float(rho.max(initial=0.0))
    occupied = rho >= floor if floor > 0 else rho > 0
    u = np.zeros_like(rho)
    u[occupied] = m.nu1[occupied] / rho[occupied]
    return MacroState(rho, u, (grid.dx,), (grid.x_min,))


def gaussian_sum_density_2d(positions, sigma, lo, hi, h, velocities=None, quadrature="midpoint",
                            rho_floor=1e-8):
    """2D Gaussian-sum density on the square [lo, hi]^2 with cell size ``h``.

    With ``velocities`` the result is a :class:`MacroState` whose velocity is
    the momentum-weighted average ``sum V_i G_i / sum G_i`` (0 on vacuum);
    otherwise only the density array is returned.
    """
    X = np.asarray(positions, dtype=np.float64)
    n = int(round((hi - lo) / h))
    edges = _edges(lo, n, (hi - lo) / n)
    gx = gaussian_cell_values(edges, X[:, 0], sigma, quadrature)
    gy = gaussian_cell_values(edges, X[:, 1], sigma, quadrature)
    rho = gx.T @ gy
    if velocities is None:
        return rho
    V = np.asarray(velocities, dtype=np.float64)
    q = np.stack([gx.T @ (V[:, k:k + 1] * gy) for k in range(2)])
    floor = rho_floor * rho.max()
    u = np.where(rho >= floor, q / np.where(rho > 0, rho, 1.0), 0.0)
    hh = (hi - lo) / n
    return MacroState(rho, u, (hh, hh), (lo, lo))


def phase_grid_from_config(cfg):
    return PhaseGrid.from_spacing(cfg.kin_x_min, cfg.kin_x_max, cfg.kin_dx,
                                  cfg.kin_v_min, cfg.kin_v_max, cfg.kin_dv)
