"""Input checks shared by the solvers, built on sklearn's ``check_array``."""
import numpy as np
from sklearn.utils import check_array

from .exceptions import DomainError


def check_points(positions, name="positions"):
    """Return ``positions`` as a finite float (N, d) array with d in {1, 2}.

    A 1-D input is read as N points on the line.
    """
    arr = np.asarray(positions, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    try:
        arr = check_array(arr, dtype=np.float64, ensure_2d=True, input_name=name)
    except ValueError as exc:
        raise DomainError(str(exc)) from exc
    if arr.shape[1] not in (1, 2):
        raise DomainError(f"{name} must have 1 or 2 columns, got {arr.shape[1]}")
    return arr


def check_density(values, ndim=None, name="density"):
    arr = np.asarray(values, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DomainError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise DomainError(f"{name} has negative entries (min {arr.min():.3g})")
    return arr


def check_spacing(spacing, ndim):
    sp = np.atleast_1d(np.asarray(spacing, dtype=np.float64))
    if sp.size == 1 and ndim > 1:
        sp = np.repeat(sp, ndim)
    if sp.shape != (ndim,) or np.any(sp <= 0) or not np.all(np.isfinite(sp)):
        raise DomainError(f"grid spacing must be {ndim} positive numbers, got {spacing!r}")
    return sp
