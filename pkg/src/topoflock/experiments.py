"""Per-test pipelines, moment comparison and the run harness behind the CLI."""
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import io
from .exceptions import CFLError, ConfigError, GridMismatchError, NumericError, error_payload
from .kernels import KernelSpec
from .kinetic import PhaseGrid, simulate_kinetic
from .macro import MacroConfig, settling_time, simulate_macro
from .micro import MicroConfig, cluster_count, flocking_time, simulate_micro
from .scenarios import (ScenarioConfig, critical_datum_1d, default_config, gaussian_sum_density_2d,
                        gaussian_sum_phase_density, lift_moments_to_macro, monokinetic_gaussian,
                        phase_grid_from_config, two_balls_2d, two_groups_1d)

OUT_ENV = "TOPOFLOCK_OUT"


def config_hash(config):
    """Git blob hash of the canonical JSON of a config."""
    data = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def kernel_for(cfg, name=None, n=None):
    name = cfg.kernel if name is None else name
    return KernelSpec.from_name(name, m_bar=cfg.m_bar, n=cfg.n if n is None else n)


# ---------------------------------------------------------------------------
# micro pipelines


def micro_summary(traj, cfg):
    ft = flocking_time(traj, cfg.flock_tol)
    return {
        "flocking_time": ft,
        "n_clusters": cluster_count(traj.velocities[-1], cfg.cluster_tol),
        "final_diameter": float(traj.diameters[-1]),
        "terminal_velocities": traj.velocities[-1].tolist(),
    }


def run_two_groups_micro(cfg, kernel_name=None):
    """Tests 1-3: the two-group datum integrated to ``micro_t_end``."""
    state = two_groups_1d(cfg.n1, cfg.n2, cfg.seed)
    mc = MicroConfig(cfg.micro_dt, cfg.micro_t_end, kernel_for(cfg, kernel_name, state.n_agents),
                     cfg.tie_policy, cfg.record_stride)
    return simulate_micro(state, mc)


def run_critical_micro(cfg, eps=None, tie_policy=None):
    """Test 6: three agents with the middle one offset by ``eps``."""
    state = critical_datum_1d(cfg.eps if eps is None else eps)
    mc = MicroConfig(cfg.micro_dt, cfg.micro_t_end, kernel_for(cfg, n=3),
                     cfg.tie_policy if tie_policy is None else tie_policy, cfg.record_stride)
    return simulate_micro(state, mc)


def run_two_balls_micro(cfg):
    state = two_balls_2d(cfg.small_center, cfg.seed, cfg.n_group, cfg.n_small, cfg.ball_radius)
    mc = MicroConfig(cfg.micro2d_dt, cfg.micro2d_t_end, kernel_for(cfg, n=state.n_agents),
                     cfg.tie_policy, cfg.record_stride)
    return simulate_micro(state, mc)


def small_group_micro_velocity(traj, cfg):
    """Mean terminal velocity of the ``n_small`` resting agents (listed last)."""
    return traj.velocities[-1][-cfg.n_small:].mean(axis=0)


# ---------------------------------------------------------------------------
# kinetic and macro pipelines


def _unit(values, cfg, n):
    return values / n if cfg.unit_mass else values


def two_groups_phase_density(cfg, grid):
    state = two_groups_1d(cfg.n1, cfg.n2, cfg.seed)
    f0 = gaussian_sum_phase_density(state.positions, state.velocities, cfg.sigma_x, cfg.sigma_v,
                                    grid, cfg.quadrature)
    return _unit(f0, cfg, state.n_agents)


def initial_phase_density(cfg, grid):
    """Test 4 uses one monokinetic Gaussian, everything else the two-group sum."""
    if cfg.test_id == 4:
        return monokinetic_gaussian(cfg.x0, cfg.v0, cfg.sigma_x, cfg.sigma_v, grid, cfg.quadrature)
    return two_groups_phase_density(cfg, grid)


def macro_config(cfg, kernel_name=None, n=None):
    return MacroConfig(kernel_for(cfg, kernel_name, n), cfg.theta, cfg.cfl, cfg.rho_floor,
                       integrator=cfg.integrator)


def run_kinetic_macro(cfg):
    """Tests 4-5: kinetic and lifted macroscopic runs on a shared spatial grid."""
    grid = phase_grid_from_config(cfg)
    f0 = initial_phase_density(cfg, grid)
    kernel = kernel_for(cfg)
    snaps = simulate_kinetic(f0, grid, kernel, cfg.kin_t_end, cfg.snapshot_times, cfg.kin_safety)
    state0 = lift_moments_to_macro(f0, grid, cfg.rho_floor)
    run = simulate_macro(state0, macro_config(cfg), cfg.kin_t_end, cfg.snapshot_times,
                         dt=cfg.macro_dt)
    return grid, snaps, run


def run_two_groups_macro(cfg, kernel_name=None):
    """Test 2: macroscopic run lifted from the two-group datum."""
    grid = PhaseGrid.from_spacing(cfg.macro_x_min, cfg.macro_x_max, cfg.macro_dx,
                                  cfg.kin_v_min, cfg.kin_v_max, cfg.kin_dv)
    f0 = two_groups_phase_density(cfg, grid)
    state0 = lift_moments_to_macro(f0, grid, cfg.rho_floor)
    times = np.linspace(0.0, cfg.macro_t_end, 5).tolist()
    return simulate_macro(state0, macro_config(cfg, kernel_name), cfg.macro_t_end, times,
                          dt=cfg.macro_dt)


def two_balls_macro_state(cfg):
    state = two_balls_2d(cfg.small_center, cfg.seed, cfg.n_group, cfg.n_small, cfg.ball_radius)
    macro = gaussian_sum_density_2d(state.positions, cfg.sigma_y, cfg.macro2d_min, cfg.macro2d_max,
                                    cfg.macro2d_h, velocities=state.velocities,
                                    quadrature=cfg.quadrature, rho_floor=cfg.rho_floor)
    if cfg.unit_mass:
        macro = type(macro)(macro.rho / state.n_agents, macro.u, macro.spacing, macro.origin)
    return macro


def run_two_balls_macro(cfg):
    return simulate_macro(two_balls_macro_state(cfg), macro_config(cfg), cfg.macro2d_t_end,
                          cfg.macro2d_snapshot_times, dt=cfg.macro_dt)


def small_group_region(state, cfg):
    """Cells within ``ball_radius + 2 sigma_y`` of the small group's centre."""
    X, Y = np.meshgrid(state.centers(0), state.centers(1), indexing="ij")
    c = cfg.small_center
    r = cfg.ball_radius + 2.0 * cfg.sigma_y
    return (X - c[0]) ** 2 + (Y - c[1]) ** 2 <= r * r


def small_group_macro_velocity(state, cfg):
    """Mass-weighted mean velocity over the small group's initial support region."""
    w = state.rho * small_group_region(state, cfg)
    total = w.sum()
    if total == 0:
        return np.zeros(2)
    return (state.u * w).sum(axis=(1, 2)) / total


# ---------------------------------------------------------------------------
# moment comparison


@dataclass
class MomentRecord:
    time: float
    x: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray


def kinetic_records(snapshots, grid):
    return [MomentRecord(s.time, grid.x, s.moments.nu0, s.moments.nu1) for s in snapshots]


def macro_records(run):
    return [MomentRecord(t, s.centers(0), s.rho, s.momentum) for t, s, _ in run.snapshots]


def _norms(diff, ref, dx):
    l1 = float(np.abs(diff).sum() * dx)
    ref_l1 = float(np.abs(ref).sum() * dx)
    if ref_l1 > 0:
        rel = l1 / ref_l1
    else:
        rel = np.inf if l1 > 0 else 0.0
    return l1, float(np.abs(diff).max(initial=0.0)), rel


def compare_moments(kinetic, macro, time_tol=1e-9, grid_rtol=1e-9):
    """Per-time L1, Linf and relative L1 norms of nu0 - rho and nu1 - Q.

    Both inputs are sequences of :class:`MomentRecord`. Relative norms divide
    by the L1 norm of the kinetic moment (``inf`` if that vanishes and the
    difference does not, 0 if both vanish).
    """
    if len(kinetic) != len(macro):
        raise GridMismatchError("snapshot counts differ", kinetic=len(kinetic), macro=len(macro))
    out = []
    for a, b in zip(kinetic, macro):
        if abs(a.time - b.time) > time_tol:
            raise GridMismatchError("snapshot times differ", kinetic=a.time, macro=b.time)
        if a.x.shape != b.x.shape or not np.allclose(a.x, b.x, rtol=grid_rtol, atol=0):
            raise GridMismatchError("spatial grids differ", kinetic_cells=int(a.x.size),
                                    macro_cells=int(b.x.size))
        dx = float(a.x[1] - a.x[0]) if a.x.size > 1 else 1.0
        l1r, linfr, rel_r = _norms(a.mass - b.mass, a.mass, dx)
        l1q, linfq, rel_q = _norms(a.momentum - b.momentum, a.momentum, dx)
        out.append({"time": float(a.time), "l1_rho": l1r, "linf_rho": linfr, "rel_l1_rho": rel_r,
                    "l1_q": l1q, "linf_q": linfq, "rel_l1_q": rel_q})
    return out


def records_from_dir(directory, prefix):
    """Moment records from ``<prefix>_t*.csv`` files written by a run."""
    files = io.snapshot_files(directory, prefix)
    if not files:
        raise GridMismatchError(f"no {prefix}_t*.csv files in {directory}", directory=str(directory))
    recs = []
    for t, path in files.items():
        cols = io.read_csv(path)
        if "nu0" in cols:
            recs.append(MomentRecord(t, cols["x"], cols["nu0"], cols["nu1"]))
        else:
            recs.append(MomentRecord(t, cols["x"], cols["rho"], cols["Q"]))
    return recs


# ---------------------------------------------------------------------------
# run harness


@dataclass
class RunManifest:
    test_id: int
    out_dir: str
    config: dict
    config_hash: str
    config_path: str = None
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    error: dict = None

    @property
    def ok(self):
        return self.error is None

    def to_dict(self):
        return {"test_id": self.test_id, "out_dir": self.out_dir, "config_path": self.config_path,
                "config_hash": self.config_hash, "config": self.config, "timings": self.timings,
                "files": self.files, "error": self.error}


class _Run:
    def __init__(self, manifest):
        self.m = manifest

    def path(self, name):
        self.m.files.append(name)
        return os.path.join(self.m.out_dir, name)

    def timed(self, phase, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.m.timings[phase] = self.m.timings.get(phase, 0.0) + time.perf_counter() - t0


def resolve_config(test_id=None, overrides=None, config_path=None):
    if config_path is not None:
        cfg = ScenarioConfig.from_file(config_path)
        if test_id is not None and cfg.test_id != test_id:
            cfg = cfg.with_overrides({"test_id": test_id})
    else:
        cfg = default_config(test_id)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    if cfg.test_id not in range(1, 9):
        raise ConfigError(f"unknown test id {cfg.test_id!r}; expected 1..8")
    return cfg


def run_test(test_id=None, overrides=None, out_dir=None, config_path=None):
    """Run Test ``test_id`` (or the config at ``config_path``) and write its outputs.

    The output directory receives ``config.json``, every snapshot CSV,
    ``metrics.json`` and ``manifest.json``. Stability failures are recorded
    in ``manifest.error`` rather than raised.
    """
    cfg = resolve_config(test_id, overrides, config_path)
    digest = config_hash(cfg)
    if out_dir is None:
        out_dir = os.path.join(os.environ.get(OUT_ENV, "runs"), f"test{cfg.test_id}-{digest[:12]}")
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(cfg.test_id, str(out_dir), cfg.to_dict(), digest,
                           None if config_path is None else str(config_path))
    run = _Run(manifest)
    io.write_json(run.path("config.json"), cfg.to_dict())
    try:
        _PIPELINES[cfg.test_id](cfg, run)
    except (CFLError, NumericError) as exc:
        manifest.error = error_payload(exc)
    io.write_json(run.path("metrics.json"), manifest.metrics)
    manifest.files.append("manifest.json")
    io.write_json(os.path.join(out_dir, "manifest.json"), manifest.to_dict())
    return manifest


def _micro_outputs(run, traj, cfg, name="micro"):
    io.write_trajectory(run.path(f"{name}_trajectory.csv"), traj)
    io.write_series(run.path(f"{name}_series.csv"), traj.times, diameter=traj.diameters,
                    mean_velocity=traj.mean_velocities)
    return micro_summary(traj, cfg)


def _macro_outputs(run, mrun, name="macro"):
    for t, state, _ in mrun.snapshots:
        io.write_macro_state(run.path(f"{name}_{io.time_tag(t)}.csv"), state)
    io.write_series(run.path(f"{name}_series.csv"), mrun.times, mass=mrun.history["mass"],
                    u_integral=mrun.history["u_integral"],
                    mean_velocity=mrun.history["mean_velocity"])
    return {
        "n_steps": mrun.n_steps,
        "clipped_mass": mrun.clipped_mass,
        "snapshots": [{"time": t, **d} for t, _, d in mrun.snapshots],
    }


def _pipeline_micro(cfg, run):
    if cfg.test_id == 6:
        traj = run.timed("micro", run_critical_micro, cfg)
    else:
        traj = run.timed("micro", run_two_groups_micro, cfg)
    run.m.metrics["micro"] = _micro_outputs(run, traj, cfg)


def _pipeline_test2(cfg, run):
    for name in cfg.kernels:
        traj = run.timed("micro", run_two_groups_micro, cfg, name)
        run.m.metrics[f"micro_{name}"] = _micro_outputs(run, traj, cfg, f"micro_{name}")
        mrun = run.timed("macro", run_two_groups_macro, cfg, name)
        m = _macro_outputs(run, mrun, f"macro_{name}")
        mean_u = mrun.history["mean_velocity"][:, 0]
        m["ubar_times"] = mrun.times
        m["ubar"] = mrun.history["u_integral"][:, 0]
        m["mean_velocity"] = mean_u
        m["mean_velocity_settling_time"] = settling_time(mrun.times, mean_u)
        m["ubar_settling_time"] = settling_time(mrun.times, m["ubar"])
        run.m.metrics[f"macro_{name}"] = m


def _pipeline_kinetic(cfg, run):
    grid, snaps, mrun = run.timed("kinetic+macro", run_kinetic_macro, cfg)
    for s in snaps:
        io.write_kinetic_moments(run.path(f"kinetic_{io.time_tag(s.time)}.csv"), grid, s.moments)
        if cfg.dump_f:
            io.dump_phase_density(run.path(f"f_{io.time_tag(s.time)}.bin"), s.f, grid, s.time)
    macro = _macro_outputs(run, mrun)
    run.m.metrics.update(
        grid=grid.to_dict(),
        kinetic={"n_steps": snaps[-1].n_steps,
                 "mass": [{"time": s.time, "mass": s.mass} for s in snaps]},
        macro=macro,
        discrepancy=compare_moments(kinetic_records(snaps, grid), macro_records(mrun)),
    )


def _pipeline_2d(cfg, run):
    traj = run.timed("micro", run_two_balls_micro, cfg)
    micro = _micro_outputs(run, traj, cfg)
    micro["small_group_velocity"] = small_group_micro_velocity(traj, cfg)
    mrun = run.timed("macro", run_two_balls_macro, cfg)
    macro = _macro_outputs(run, mrun)
    macro["small_group_velocity"] = small_group_macro_velocity(mrun.snapshots[-1][1], cfg)
    run.m.metrics.update(micro=micro, macro=macro)


_PIPELINES = {1: _pipeline_micro, 2: _pipeline_test2, 3: _pipeline_micro, 4: _pipeline_kinetic,
              5: _pipeline_kinetic, 6: _pipeline_micro, 7: _pipeline_2d, 8: _pipeline_2d}
