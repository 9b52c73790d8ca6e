"""Microscopic topological Cucker-Smale dynamics.

    dX_i/dt = V_i
    dV_i/dt = (1/N) sum_j p_ij (V_j - V_i),   p_ij = K(M_ij)

integrated with a semi-implicit Euler step: weights are frozen at the current
positions, the velocity update is an exact linear solve, and positions move
with the new velocities.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from sklearn.base import BaseEstimator

from ._validation import check_points
from .exceptions import ConfigError, DomainError, NumericError
from .kernels import KernelSpec
from .topology import interaction_matrix, normalize_tie_policy


@dataclass(frozen=True)
class AgentState:
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        X = check_points(self.positions, "positions")
        V = check_points(self.velocities, "velocities")
        if X.shape != V.shape:
            raise DomainError(f"positions {X.shape} and velocities {V.shape} differ in shape")
        object.__setattr__(self, "positions", X)
        object.__setattr__(self, "velocities", V)

    @property
    def n_agents(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]


@dataclass
class MicroTrajectory:
    times: np.ndarray
    positions: np.ndarray  # (n_snapshots, N, d)
    velocities: np.ndarray
    diameters: np.ndarray = field(default=None)
    mean_velocities: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.diameters is None:
            self.diameters = np.array([_diameter(v) for v in self.velocities])
        if self.mean_velocities is None:
            self.mean_velocities = self.velocities.mean(axis=1)

    def state(self, k=-1):
        return AgentState(self.positions[k], self.velocities[k])

    @property
    def final(self):
        return self.state(-1)


def _diameter(V):
    return float(np.max(V.max(axis=0) - V.min(axis=0)))


def alignment_operator(weights, dt):
    """Matrix ``I + (dt/N) (diag(row sums) - P)`` of the implicit velocity update."""
    n = weights.shape[0]
    A = -(dt / n) * weights
    A[np.diag_indices(n)] += 1.0 + (dt / n) * weights.sum(axis=1)
    return A


def step_semi_implicit(state, dt, kernel, tie_policy="lowest"):
    """Advance ``state`` by one semi-implicit Euler step of size ``dt``."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    P = interaction_matrix(state.positions, kernel, tie_policy)
    A = alignment_operator(P, dt)
    try:
        V_new = np.linalg.solve(A, state.velocities)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"implicit velocity solve failed: {exc}") from exc
    if not np.all(np.isfinite(V_new)):
        raise NumericError("implicit velocity solve returned non-finite values")
    return AgentState(state.positions + dt * V_new, V_new)


@dataclass(frozen=True)
class MicroConfig:
    dt: float = 0.02
    t_end: float = 500.0
    kernel: KernelSpec = field(default_factory=KernelSpec.linear)
    tie_policy: str = "lowest"
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_end < 0:
            raise ConfigError("t_end must be non-negative")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        object.__setattr__(self, "tie_policy", normalize_tie_policy(self.tie_policy))


def simulate_micro(initial, config):
    """Integrate from ``initial`` to ``config.t_end``.

    The number of steps is ``round(t_end / dt)``; the final state is always
    recorded, whatever the stride.
    """
    n_steps = int(round(config.t_end / config.dt))
    times, Xs, Vs = [0.0], [initial.positions], [initial.velocities]
    state = initial
    for step in range(1, n_steps + 1):
        state = step_semi_implicit(state, config.dt, config.kernel, config.tie_policy)
        if step % config.record_stride == 0 or step == n_steps:
            times.append(step * config.dt)
            Xs.append(state.positions)
            Vs.append(state.velocities)
    return MicroTrajectory(np.array(times), np.array(Xs), np.array(Vs))


# ---------------------------------------------------------------------------
# diagnostics


def _velocities(state):
    V = state.velocities if isinstance(state, AgentState) else np.asarray(state, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.size == 0:
        raise DomainError("empty state")
    return V


def velocity_diameter(state):
    """Largest per-component spread ``max_i V_i - min_i V_i``."""
    return _diameter(_velocities(state))


def mean_velocity(state):
    return _velocities(state).mean(axis=0)


def cluster_count(velocities, tol):
    """Number of single-linkage groups of velocities joined at distance <= tol."""
    V = _velocities(velocities)
    if not tol > 0:
        raise DomainError("tol must be positive")
    if V.shape[0] == 1:
        return 1
    labels = fcluster(linkage(V, method="single"), t=tol, criterion="distance")
    return int(labels.max())


def flocking_time(trajectory, tol):
    """First recorded time at which the velocity diameter is below ``tol``, else None."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    hit = np.flatnonzero(trajectory.diameters < tol)
    return float(trajectory.times[hit[0]]) if hit.size else None


def trajectory_rows(trajectory):
    """Yield CSV rows ``(t, agent, x..., v...)``, one per agent per snapshot."""
    for t, X, V in zip(trajectory.times, trajectory.positions, trajectory.velocities):
        for i in range(X.shape[0]):
            yield (t, i, *X[i], *V[i])


def trajectory_header(dim):
    if dim == 1:
        return ["t", "agent", "x", "v"]
    return ["t", "agent", "x", "y", "vx", "vy"]


class MicroFlock(BaseEstimator):
    """Estimator front end to :func:`simulate_micro`.

    ``fit(positions, velocities)`` integrates the system; results land in
    ``trajectory_``, ``flocking_time_`` and ``n_clusters_``.

    >>> import numpy as np
    >>> est = MicroFlock(kernel="one", dt=0.1, t_end=1.0).fit([0.0, 1.0], [0.0, 2.0])
    >>> est.n_clusters_
    2
    """

    def __init__(self, kernel="linear", dt=0.02, t_end=500.0, tie_policy="lowest",
                 record_stride=1, flock_tol=0.01, cluster_tol=1e-3):
        self.kernel = kernel
        self.dt = dt
        self.t_end = t_end
        self.tie_policy = tie_policy
        self.record_stride = record_stride
        self.flock_tol = flock_tol
        self.cluster_tol = cluster_tol

    def _kernel(self, n):
        if isinstance(self.kernel, KernelSpec):
            return self.kernel
        return KernelSpec.from_name(self.kernel, n=n)

    def fit(self, positions, velocities):
        initial = AgentState(positions, velocities)
        config = MicroConfig(self.dt, self.t_end, self._kernel(initial.n_agents),
                             self.tie_policy, self.record_stride)
        self.trajectory_ = simulate_micro(initial, config)
        self.flocking_time_ = flocking_time(self.trajectory_, self.flock_tol)
        self.n_clusters_ = cluster_count(self.trajectory_.velocities[-1], self.cluster_tol)
        self.n_features_in_ = initial.dim
        return self
