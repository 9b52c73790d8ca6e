import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import erf

from helpers import observed_orders
from topoflock.exceptions import CFLError, ConfigError, DomainError
from topoflock.kernels import KernelSpec, eval_kernel
from topoflock.macro import (MacroConfig, MacroEuler, MacroState, _rhs, diagnostics,
                             global_flux_offsets, kt_flux, local_speeds, minmod3, physical_flux,
                             reconstruct, settling_time, simulate_macro, source_term, step_macro)

ZERO = KernelSpec.constant(0.0)


def test_minmod3_examples():
    assert minmod3(1, 2, 3) == 1
    assert minmod3(-1, 2, 3) == 0
    assert minmod3(-2, -4, -3) == -2
    assert minmod3(0, 1, 1) == 0
    np.testing.assert_array_equal(minmod3([1, -1], [2, -3], [0.5, -0.2]), [0.5, -0.2])


def test_reconstruct_constant_and_linear():
    w = np.full((2, 6), 3.0)
    rec = reconstruct(w, (0.5,))
    np.testing.assert_array_equal(rec.slopes[0], 0.0)
    np.testing.assert_array_equal(rec.west, 3.0)
    np.testing.assert_array_equal(rec.east, 3.0)
    h = 0.1
    lin = np.stack([np.arange(8) * h, np.arange(8) * h])
    rec = reconstruct(lin, (h,))
    # interior cells see the exact slope; the edge ghosts are constant copies
    np.testing.assert_allclose(rec.slopes[0][:, 1:-1], 1.0)
    np.testing.assert_allclose((rec.east - rec.west)[:, 1:-1], h)


@given(arrays(np.float64, st.tuples(st.just(3), st.integers(3, 8), st.integers(3, 8)),
              elements=st.floats(-5, 5)), st.floats(1.0, 2.0))
def test_limiter_keeps_face_values_in_local_range(w, theta):
    rec = reconstruct(w, (0.3, 0.2), theta)
    for axis, (minus, plus) in enumerate(rec.faces):
        ax = axis + 1
        n = w.shape[ax]
        a = np.take(w, range(n - 1), axis=ax)
        b = np.take(w, range(1, n), axis=ax)
        lo, hi = np.minimum(a, b) - 1e-12, np.maximum(a, b) + 1e-12
        left = np.take(plus, range(n - 1), axis=ax)
        right = np.take(minus, range(1, n), axis=ax)
        assert np.all((left >= lo) & (left <= hi))
        assert np.all((right >= lo) & (right <= hi))


def test_local_speeds():
    assert local_speeds(2.0, 2.0) == (0.0, 2.0)
    assert local_speeds(1.0, -1.0) == (-1.0, 1.0)
    assert local_speeds(0.0, 0.0) == (0.0, 0.0)


def test_kt_flux_cases():
    wl = np.array([1.0, 0.5])
    wr = np.array([2.0, -0.3])
    Fl, Fr = physical_flux(wl[:, None], 0)[:, 0], physical_flux(wr[:, None], 0)[:, 0]
    # identical states
    np.testing.assert_allclose(kt_flux(wl, wl, 0.0, 1.0, Fl, Fl), Fl)
    # upwind limit
    np.testing.assert_allclose(kt_flux(wl, wr, 0.0, 0.7, Fl, Fr), Fl)
    # symmetric speeds reduce to a Rusanov flux
    a = 0.9
    np.testing.assert_allclose(kt_flux(wl, wr, -a, a, Fl, Fr), 0.5 * (Fl + Fr) - 0.5 * a * (wr - wl), rtol=1e-14)
    # both speeds zero
    np.testing.assert_array_equal(kt_flux(wl, wr, 0.0, 0.0, Fl, Fr), 0.0)
    with pytest.raises(RuntimeError):
        kt_flux(wl, wr, 1.0, -1.0, Fl, Fr)


def test_global_flux_offsets():
    n, h = 10, 0.2
    a3, b2 = global_flux_offsets(np.full((n, n), 0.7), np.full((n, n), -0.4), (h, h))
    assert a3.shape == (n + 1, n) and b2.shape == (n, n + 1)
    np.testing.assert_array_equal(a3, 0.0)
    np.testing.assert_array_equal(b2, 0.0)
    x = (np.arange(n) + 0.5) * h
    u1 = np.repeat(x[:, None], n, axis=1)
    a3, _ = global_flux_offsets(u1, np.zeros((n, n)), (h, h))
    np.testing.assert_array_equal(a3, 0.0)
    a3, _ = global_flux_offsets(u1, np.ones((n, n)), (h, h))
    faces = np.arange(n + 1) * h
    np.testing.assert_allclose(a3, -np.repeat(faces[:, None], n, axis=1), atol=1e-12)


def brute_source(rho, u, h, kernel):
    """Nested-loop source with ball masses from an independent cell scan."""
    cells = list(np.ndindex(rho.shape))
    vol = float(np.prod(h))
    total = rho.sum() * vol
    U = u.reshape((-1,) + rho.shape)
    out = np.zeros_like(U)

    def key(a, b):
        return sum((p - q) ** 2 for p, q in zip(a, b))

    for c in cells:
        for p in cells:
            r = key(c, p)
            ball = sum(rho[q] * vol for q in cells if key(c, q) <= r)
            w = eval_kernel(kernel, min(ball / total, 1.0))
            for comp in range(U.shape[0]):
                out[(comp,) + c] += vol * w * (U[(comp,) + p] - U[(comp,) + c]) * rho[p]
    return out.reshape(u.shape)


@pytest.mark.parametrize("kernel", [KernelSpec.linear(), KernelSpec.quadratic()], ids=["linear", "quadratic"])
def test_source_matches_nested_loops_2d(kernel):
    rng = np.random.default_rng(9)
    rho = rng.uniform(0, 1, (4, 5))
    u = rng.normal(size=(2, 4, 5))
    s = MacroState(rho, u, (0.25, 0.25))
    np.testing.assert_allclose(source_term(s, kernel), brute_source(rho, u, (0.25, 0.25), kernel),
                               rtol=1e-12, atol=1e-14)


def test_source_matches_nested_loops_1d():
    rng = np.random.default_rng(10)
    rho, u = rng.uniform(0, 1, 9), rng.normal(size=9)
    s = MacroState(rho, u, 0.3)
    np.testing.assert_allclose(source_term(s, KernelSpec.linear()), brute_source(rho, u, (0.3,), KernelSpec.linear()),
                               rtol=1e-12, atol=1e-14)


def test_source_degenerate_cases():
    rng = np.random.default_rng(1)
    rho = rng.uniform(0, 1, (5, 5))
    s = MacroState(rho, np.ones((2, 5, 5)) * 0.3, (0.1, 0.1))
    np.testing.assert_allclose(source_term(s, KernelSpec.linear()), 0.0, atol=1e-15)
    s = MacroState(rho, rng.normal(size=(2, 5, 5)), (0.1, 0.1))
    np.testing.assert_array_equal(source_term(s, ZERO), 0.0)
    s = MacroState(np.zeros(4), np.ones(4), 0.1)
    np.testing.assert_array_equal(source_term(s, KernelSpec.linear()), 0.0)


def test_source_two_symmetric_blobs():
    rho = np.full(11, 0.1)
    rho[2] = rho[8] = 1.0
    u = np.zeros(11)
    u[2], u[8] = 1.0, -1.0
    S = source_term(MacroState(rho, u, 0.1), KernelSpec.linear())
    assert S[2] < 0 < S[8]
    assert abs(S[2] + S[8]) <= 1e-12 * abs(S[2])


def test_density_factor_switch():
    rng = np.random.default_rng(3)
    s = MacroState(rng.uniform(0.1, 1, 6), rng.normal(size=6), 0.2)
    np.testing.assert_allclose(source_term(s, KernelSpec.linear(), density_factor=True),
                               s.rho * source_term(s, KernelSpec.linear()), rtol=1e-14)


def test_state_validation():
    with pytest.raises(DomainError):
        MacroState(np.ones((3, 3)), np.ones((3, 3)), 0.1)
    with pytest.raises(DomainError):
        MacroState(np.ones(3), np.ones(3), -0.1)
    with pytest.raises(ConfigError):
        MacroConfig(KernelSpec.linear(), cfl=1.5)


def test_constant_state_is_steady_without_alignment():
    s = MacroState(np.full((8, 8), 2.0), np.stack([np.full((8, 8), 0.5), np.full((8, 8), -0.3)]), (0.1, 0.1))
    out = step_macro(s, MacroConfig(ZERO), 0.01).state
    np.testing.assert_allclose(out.rho, s.rho, rtol=1e-14)
    np.testing.assert_allclose(out.u, s.u, rtol=1e-14)


def test_1d_advection_centre_of_mass():
    h, c, dt = 0.02, 0.8, 0.01
    x = -2 + (np.arange(200) + 0.5) * h
    s = MacroState(np.exp(-x ** 2 / 0.1), np.full(200, c), h, (-2.0,))
    out = step_macro(s, MacroConfig(ZERO), dt).state
    com0 = (s.rho * x).sum() / s.rho.sum()
    com1 = (out.rho * x).sum() / out.rho.sum()
    assert com1 - com0 == pytest.approx(c * dt, abs=h ** 2)


def test_one_step_update_is_dt_times_rhs_2d():
    rng = np.random.default_rng(2)
    X, Y = np.meshgrid(np.linspace(-1, 1, 20), np.linspace(-1, 1, 20), indexing="ij")
    rho = np.exp(-(X ** 2 + Y ** 2) / 0.1) + 0.5
    u = rng.uniform(-0.5, 0.5, (2, 20, 20))
    s = MacroState(rho, u, (0.1, 0.1), (-1.0, -1.0))
    cfg = MacroConfig(KernelSpec.linear())
    dt = 0.01
    rhs, _ = _rhs(s.fields, s.spacing, s.origin, cfg)
    out = step_macro(s, cfg, dt).state
    np.testing.assert_allclose(out.fields, s.fields + dt * rhs, rtol=1e-13, atol=1e-15)
    S = source_term(s, cfg.kernel)
    # the source part of the velocity change is bounded by dt max|S|
    assert np.abs(dt * S).max() <= dt * np.abs(S).max() + 1e-15


def test_cfl_violation_refused():
    s = MacroState(np.ones(10), np.ones(10), 0.1)
    with pytest.raises(CFLError):
        step_macro(s, MacroConfig(ZERO), 1.0)
    with pytest.raises(CFLError):
        simulate_macro(s, MacroConfig(ZERO), 1.0, dt=0.5)


@pytest.mark.parametrize("dim", [1, 2])
def test_mass_conservation_per_step(dim):
    n = 40
    x = -1 + (np.arange(n) + 0.5) * (2 / n)
    if dim == 1:
        rho = np.exp(-x ** 2 / 0.02)
        u = 0.3 * np.sin(3 * x)
        s = MacroState(rho, u, 2 / n, (-1.0,))
    else:
        X, Y = np.meshgrid(x, x, indexing="ij")
        rho = np.exp(-(X ** 2 + Y ** 2) / 0.015)
        u = np.stack([0.3 * np.sin(3 * Y), -0.2 * np.cos(2 * X)])
        s = MacroState(rho, u, (2 / n, 2 / n), (-1.0, -1.0))
    cfg = MacroConfig(KernelSpec.linear(), rho_floor=0.0)
    m0 = s.total_mass()
    for _ in range(10):
        res = step_macro(s, cfg, 0.5 * cfg.cfl * 2 / n)
        s = res.state
        assert res.clipped_mass == 0.0
        assert abs(s.total_mass() - m0) <= 1e-12 * m0


def test_vacuum_convention():
    rho = np.zeros(20)
    rho[8:12] = 1.0
    s = MacroState(rho, np.where(rho > 0, 0.5, 0.0), 0.1)
    run = simulate_macro(s, MacroConfig(ZERO, rho_floor=1e-3), 0.2)
    final = run.snapshots[-1][1]
    assert np.all(final.u[final.rho < 1e-3] == 0.0)
    assert np.all(final.rho >= 0.0)


def test_zero_horizon_and_snapshots():
    s = MacroState(np.ones(10), np.zeros(10), 0.1)
    run = simulate_macro(s, MacroConfig(ZERO), 0.0)
    assert len(run.snapshots) == 1 and run.n_steps == 0
    s = MacroState(np.exp(-np.linspace(-2, 2, 40) ** 2), np.full(40, 0.5), 0.1)
    run = simulate_macro(s, MacroConfig(ZERO), 1.0, snapshot_times=[0.25, 0.5])
    assert [t for t, _, _ in run.snapshots] == [0.0, 0.25, 0.5, 1.0]
    assert run.times[-1] == 1.0


def test_diagnostics_1d():
    s = MacroState(np.array([1.0, 3.0]), np.array([2.0, -1.0]), 0.5)
    d = diagnostics(s)
    assert d["mass"] == 2.0
    assert d["momentum"] == [-0.5]
    assert d["u_integral"] == [0.5]
    assert d["mean_velocity"] == [-0.25]


def test_settling_time():
    t = np.arange(6.0)
    assert settling_time(t, [0, 5, 9, 10, 10.05, 10]) == 3.0
    assert settling_time(t, np.ones(6)) == 0.0


def advection_error(n, integrator):
    """L1 density error of smooth advection at unit speed against exact cell averages."""
    lo, hi, s, T = -4.0, 6.0, 0.5, 2.0
    h = (hi - lo) / n
    edges = lo + np.arange(n + 1) * h

    def avg(shift):
        return np.diff(0.5 * erf((edges - shift) / (np.sqrt(2) * s))) / h

    state = MacroState(avg(0.0), np.ones(n), h, (lo,))
    run = simulate_macro(state, MacroConfig(ZERO, integrator=integrator), T)
    return np.abs(run.snapshots[-1][1].rho - avg(T)).sum() * h


def test_second_order_in_space_and_time():
    orders = observed_orders([advection_error(n, "heun") for n in (200, 400, 800)])
    assert np.all(orders >= 1.7), orders


def test_explicit_euler_is_first_order_in_time():
    orders = observed_orders([advection_error(n, "euler") for n in (200, 400)])
    assert 0.8 < orders[0] < 1.3


def test_estimator():
    x = np.linspace(-2, 2, 40)
    est = MacroEuler(spacing=0.1, origin=(-2.0,), kernel="linear", t_end=0.5)
    est.fit(np.exp(-x ** 2), 0.3 * np.tanh(x))
    assert est.transform().shape == (2, 40)
    assert est.run_.snapshots[-1][0] == 0.5
    assert est.get_params()["cfl"] == 0.45
