"""Plain-text and binary output of simulation results."""
import glob
import json
import os
import re

import numpy as np

from .micro import trajectory_header

FLOAT_FMT = "%.17g"


def write_csv(path, header, columns):
    """Write equal-length columns with full double precision."""
    data = np.column_stack([np.asarray(c, dtype=np.float64).ravel() for c in columns])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=FLOAT_FMT)
    return path


def read_csv(path):
    """Read a file written by :func:`write_csv` into ``{column: array}``."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}


def write_trajectory(path, trajectory):
    n_snap, n, d = trajectory.positions.shape
    t = np.repeat(trajectory.times, n)
    agent = np.tile(np.arange(n), n_snap)
    X = trajectory.positions.reshape(-1, d)
    V = trajectory.velocities.reshape(-1, d)
    cols = [t, agent, *X.T, *V.T]
    return write_csv(path, trajectory_header(d), cols)


def write_kinetic_moments(path, grid, moments):
    return write_csv(path, ["x", "nu0", "nu1"], [grid.x, moments.nu0, moments.nu1])


def write_macro_state(path, state):
    if state.dim == 1:
        x = state.centers(0)
        return write_csv(path, ["x", "rho", "u", "Q"], [x, state.rho, state.u, state.momentum])
    X, Y = np.meshgrid(state.centers(0), state.centers(1), indexing="ij")
    return write_csv(path, ["x", "y", "rho", "u1", "u2"], [X, Y, state.rho, state.u[0], state.u[1]])


def write_series(path, times, **series):
    """Time series CSV; vector-valued series are split into ``name_0``, ``name_1`` ..."""
    header, cols = ["t"], [times]
    for name, values in series.items():
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            header.append(name)
            cols.append(values)
        else:
            for k in range(values.shape[1]):
                header.append(f"{name}_{k}")
                cols.append(values[:, k])
    return write_csv(path, header, cols)


def dump_phase_density(path, f, grid, time):
    """Raw little-endian float64 array preceded by one JSON header line."""
    header = {"dtype": "<f8", "shape": list(f.shape), "time": float(time), "grid": grid.to_dict()}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())
    return path


def load_phase_density(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype=header["dtype"]).reshape(header["shape"])
    return header, data.copy()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def time_tag(t):
    return f"t{float(t):g}"


_TIME_RE = re.compile(r"_t([-+0-9.eE]+)\.csv$")


def snapshot_files(directory, prefix):
    """``{time: path}`` for files named ``<prefix>_t<time>.csv`` in ``directory``."""
    out = {}
    for path in glob.glob(os.path.join(directory, f"{prefix}_t*.csv")):
        m = _TIME_RE.search(path)
        if m:
            out[float(m.group(1))] = path
    return dict(sorted(out.items()))
