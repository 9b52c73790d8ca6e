"""Topological ranks of agents and mass-in-ball queries on gridded densities.

The rank of agent j seen from agent i is the fraction of agents lying in the
closed ball centred at X_i with radius |X_i - X_j|. Ties at the exact radius
are counted in; distances are compared as exact squared floats.

For densities on uniform grids the same quantity is the mass of the cells
whose centres lie in the closed ball. Distances between cell centres are
taken from integer index offsets, so cells at equal lattice distance always
tie exactly.
"""
from dataclasses import dataclass

import numpy as np

from ._validation import check_density, check_points, check_spacing
from .exceptions import ConfigError, DomainError
from .kernels import eval_kernel

TIE_POLICIES = ("lowest", "highest", "closed")

_TIE_ALIASES = {
    "lowest": "lowest", "lowestindex": "lowest", "lowest_index": "lowest",
    "highest": "highest", "highestindex": "highest", "highest_index": "highest",
    "closed": "closed", "none": "closed",
}


def normalize_tie_policy(policy):
    key = str(policy).lower().replace("-", "_")
    try:
        return _TIE_ALIASES[key]
    except KeyError:
        raise ConfigError(f"unknown tie policy {policy!r}; use one of {TIE_POLICIES}") from None


def squared_distances(positions):
    """Pairwise squared Euclidean distances, symmetric bit for bit."""
    X = check_points(positions)
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _run_bounds(sorted_rows):
    """Start and end index of each run of equal values along axis 1."""
    n_rows, n = sorted_rows.shape
    idx = np.broadcast_to(np.arange(n), (n_rows, n))
    same_next = np.zeros((n_rows, n), dtype=bool)
    same_next[:, :-1] = sorted_rows[:, 1:] == sorted_rows[:, :-1]
    same_prev = np.zeros((n_rows, n), dtype=bool)
    same_prev[:, 1:] = same_next[:, :-1]
    end = np.where(same_next, n, idx)
    end = np.minimum.accumulate(end[:, ::-1], axis=1)[:, ::-1]
    start = np.where(same_prev, -1, idx)
    start = np.maximum.accumulate(start, axis=1)
    return start, end


def topological_rank_matrix(positions):
    """Normalized topological ranks ``M[i, j]`` for N agents in 1 or 2 dimensions.

    ``M[i, j] = #{h : |X_h - X_i| <= |X_i - X_j|} / N``.
    """
    D2 = squared_distances(positions)
    n = D2.shape[0]
    order = np.argsort(D2, axis=1, kind="stable")
    S = np.take_along_axis(D2, order, axis=1)
    _, end = _run_bounds(S)
    R = np.empty_like(D2)
    np.put_along_axis(R, order, (end + 1) / n, axis=1)
    return R


def interaction_matrix(positions, kernel, tie_policy="lowest"):
    """Communication weights ``p[i, j] = K(M[i, j])``.

    When several agents sit at exactly the same positive distance from agent i
    and the kernel assigns different weights to the ranks they would occupy if
    ordered, ``tie_policy`` decides the order: ``"lowest"`` ranks the lower
    index as nearer, ``"highest"`` the higher one. Within such a group the
    farthest-ranked agent keeps the closed-ball rank and each nearer one is
    one step (1/N) below the next. ``"closed"`` never breaks ties.
    Coincident agents (distance 0, including i itself) always keep the
    closed-ball rank.
    """
    policy = normalize_tie_policy(tie_policy)
    D2 = squared_distances(positions)
    n = D2.shape[0]
    if policy == "closed":
        order = np.argsort(D2, axis=1, kind="stable")
    else:
        index_key = np.broadcast_to(np.arange(n) if policy == "lowest" else -np.arange(n), (n, n))
        order = np.lexsort((index_key, D2), axis=-1)
    S = np.take_along_axis(D2, order, axis=1)
    start, end = _run_bounds(S)
    w_closed = eval_kernel(kernel, (end + 1) / n)
    if policy == "closed":
        w_sorted = w_closed
    else:
        w_ordered = eval_kernel(kernel, (np.arange(n) + 1.0) / n)
        ambiguous = (S > 0) & (end > start) & (w_ordered[start] != w_closed)
        w_sorted = np.where(ambiguous, w_ordered[None, :], w_closed)
    P = np.empty_like(D2)
    np.put_along_axis(P, order, w_sorted, axis=1)
    return P


# ---------------------------------------------------------------------------
# mass in ball over gridded densities


def _offset_keys(offsets, spacing):
    """Exact ordering key of squared distances for integer index offsets.

    With equal spacings the key is the integer ``sum(off**2)``; otherwise the
    float ``sum((off*h)**2)``, computed identically everywhere it is used.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    if np.all(spacing == spacing[0]):
        return (offsets ** 2).sum(axis=-1).astype(np.float64) * spacing[0] ** 2
    return ((offsets * spacing) ** 2).sum(axis=-1)


@dataclass(frozen=True)
class MassTable:
    """Cumulative mass around one grid cell, indexed by ball radius.

    ``radii`` are the distinct centre-to-centre distances in ascending order
    (the first is always 0, the centre cell itself) and ``cumulative[k]`` is
    the mass of every cell within ``radii[k]``.
    """

    center: tuple
    radii: np.ndarray
    cumulative: np.ndarray
    total: float


def build_mass_table(density, spacing, center):
    """Build the :class:`MassTable` of ``density`` around the cell ``center``.

    ``density`` holds cell-centred values on a uniform 1-D or 2-D grid;
    each cell contributes ``value * cell volume`` (midpoint rule).
    """
    rho = check_density(density)
    if rho.ndim not in (1, 2):
        raise DomainError("density must be 1-D or 2-D")
    h = check_spacing(spacing, rho.ndim)
    c = tuple(int(i) for i in np.atleast_1d(center))
    if len(c) != rho.ndim or any(not 0 <= ci < ni for ci, ni in zip(c, rho.shape)):
        raise DomainError(f"center {center!r} is not a cell of a grid of shape {rho.shape}")
    grids = np.meshgrid(*[np.arange(n) - ci for n, ci in zip(rho.shape, c)], indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)
    keys = _offset_keys(offsets, h)
    mass = rho.ravel() * np.prod(h)
    order = np.argsort(keys, kind="stable")
    k_sorted = keys[order]
    cum = np.cumsum(mass[order])
    last = np.r_[k_sorted[1:] != k_sorted[:-1], True]
    return MassTable(center=c, radii=np.sqrt(k_sorted[last]), cumulative=cum[last],
                     total=float(mass.sum()))


def mass_in_ball(table, radius):
    """Mass of the cells within the closed ball of ``radius`` (binary search)."""
    r = np.asarray(radius, dtype=np.float64)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise DomainError("radius must be finite and non-negative")
    idx = np.searchsorted(table.radii, r, side="right") - 1
    out = table.cumulative[np.maximum(idx, 0)]
    return float(out) if out.ndim == 0 else out


def ball_mass_matrix(density, spacing, chunk=256):
    """``M[c, p]``: mass in the closed ball around cell c reaching cell p.

    Cells are flattened in C order. This is the all-pairs version of
    :func:`mass_in_ball` used by the kinetic and macroscopic solvers; it
    selects exactly the same cells as :func:`build_mass_table`.
    """
    rho = check_density(density)
    h = check_spacing(spacing, rho.ndim)
    mass = rho * np.prod(h)
    if rho.ndim == 1:
        return _ball_mass_1d(mass)
    if rho.ndim == 2:
        return _ball_mass_2d(mass, h, chunk)
    raise DomainError("density must be 1-D or 2-D")


def _ball_mass_1d(mass):
    n = mass.size
    prefix = np.concatenate([[0.0], np.cumsum(mass)])
    i = np.arange(n)[:, None]
    k = np.abs(np.arange(n)[None, :] - i)
    hi = np.minimum(i + k, n - 1) + 1
    lo = np.maximum(i - k, 0)
    return prefix[hi] - prefix[lo]


def _ball_mass_2d(mass, h, chunk):
    nx, ny = mass.shape
    di, dj = np.meshgrid(np.arange(-(nx - 1), nx), np.arange(-(ny - 1), ny), indexing="ij")
    keys = _offset_keys(np.stack([di, dj], axis=-1), h).ravel()
    order = np.argsort(keys, kind="stable")
    k_sorted = keys[order]
    is_last = np.r_[k_sorted[1:] != k_sorted[:-1], True]
    group_end = np.flatnonzero(is_last)
    group_sorted = np.cumsum(np.r_[0, is_last[:-1]])
    group_of_offset = np.empty(keys.size, dtype=np.int64)
    group_of_offset[order] = group_sorted
    group_of_offset = group_of_offset.reshape(2 * nx - 1, 2 * ny - 1)

    # zero-padded mass so every (center + offset) gather stays in bounds
    py = 3 * ny - 2
    padded = np.zeros((3 * nx - 2, py))
    padded[nx - 1:2 * nx - 1, ny - 1:2 * ny - 1] = mass
    padded = padded.ravel()
    off_flat = (di.ravel() * py + dj.ravel())[order]

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    ncell = nx * ny
    out = np.empty((ncell, ncell))
    for s in range(0, ncell, chunk):
        sl = slice(s, min(s + chunk, ncell))
        base = (ci[sl] + nx - 1) * py + (cj[sl] + ny - 1)
        cum = np.cumsum(padded[base[:, None] + off_flat[None, :]], axis=1)
        per_group = cum[:, group_end]
        gid = group_of_offset[ci[None, :] - ci[sl, None] + nx - 1,
                              cj[None, :] - cj[sl, None] + ny - 1]
        out[sl] = np.take_along_axis(per_group, gid, axis=1)
    return out


def normalized_ball_mass(density, spacing):
    """:func:`ball_mass_matrix` divided by total mass and clipped to [0, 1].

    Returns ``None`` for a density of zero mass.
    """
    M = ball_mass_matrix(density, spacing)
    total = float(np.asarray(density).sum() * np.prod(check_spacing(spacing, np.ndim(density))))
    if total <= 0.0:
        return None
    return np.clip(M / total, 0.0, 1.0)
