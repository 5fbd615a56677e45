"""Step-size control, constraints, the Verlet loop, and run drivers."""

import numpy as np
import pytest

from shellsph.backend import numpy_backend as nb
from shellsph.cloud import ShellParticleCloud
from shellsph.errors import DivergedError
from shellsph.integrator import (ConstraintSet, DynamicSchedule, ProbeSeries,
                                 Solver, StaticSchedule, apply_constraints,
                                 bending_dt, compute_dt, step_control)
from shellsph.material import LinearElasticMaterial
from shellsph.rotation import normal_rate_from_angles
from shellsph.state import initial_state

from conftest import make_line_cloud, make_plate_cloud

SOFT = LinearElasticMaterial(young=2.0e6, poisson=0.4, density=1000.0)


def line_solver(n=21, dp=0.005, thickness=0.01, material=SOFT, **kw):
    cloud = make_line_cloud(n=n, dp=dp, thickness=thickness)
    return Solver(cloud, material, backend="numpy", **kw)


# ------------------------------------------------------------ step control

def test_bending_dt_reference_value():
    # E=2 MPa, rho=1000, nu=0.4, h=0.00575 m, d=0.01 m
    dt3 = bending_dt(2.0e6, 0.4, 1000.0, 0.00575, 0.01)
    assert dt3 == pytest.approx(7.12e-5, rel=0.01)


def test_dt_quiescent_state_uses_static_candidates():
    solver = line_solver()
    model, state = solver.model, solver.state
    ctrl = step_control(model, state, cfl=0.6)
    c = model.sound_speed
    assert ctrl.dt_acoustic == pytest.approx(model.h / c)
    assert ctrl.dt_rotation == pytest.approx(1.0 / c)
    lam = 3.0 * c * (min(model.h, model.thickness) / model.thickness ** 2
                     + model.h / model.spacing ** 2)
    assert ctrl.dt_damping == pytest.approx(2.0 / lam)
    assert ctrl.dt == pytest.approx(
        0.6 * min(model.h / c, 1.0 / c, ctrl.dt_bending, ctrl.dt_damping))
    assert ctrl.dt == pytest.approx(nb.compute_dt(model, state, 0.6))


def test_dt_damping_candidate_absent_without_damping():
    solver = line_solver(include_damping=False)
    ctrl = step_control(solver.model, solver.state, cfl=0.6)
    assert ctrl.dt_damping == np.inf
    assert ctrl.dt == pytest.approx(
        0.6 * min(ctrl.dt_acoustic, ctrl.dt_rotation, ctrl.dt_bending))
    assert ctrl.dt == pytest.approx(
        nb.compute_dt(solver.model, solver.state, 0.6))


def test_dt_non_increasing_with_acceleration():
    solver = line_solver()
    state = solver.state
    dts = []
    for amag in (0.0, 1.0, 1e6, 1e10):
        state.acc = np.zeros_like(state.acc)
        state.acc[0, 0] = amag
        dts.append(compute_dt(solver.model, state))
    assert all(b <= a for a, b in zip(dts, dts[1:]))
    assert dts[-1] < dts[0]


def test_dt_rejects_non_finite_state():
    solver = line_solver()
    solver.state.vel[0, 0] = np.nan
    with pytest.raises(DivergedError):
        compute_dt(solver.model, solver.state)


# ------------------------------------------------------------- constraints

def test_constraint_masks_zero_held_components():
    cs = ConstraintSet(5, 3)
    cs.clamp([0]).hold_translation([2], components=[2]).hold_rotation([3])
    cloud = make_plate_cloud(nx=3, ny=2, dp=0.1, thickness=0.01)
    # standalone mask application on a fake state
    solver = Solver(cloud, SOFT, backend="numpy")
    state = solver.state
    state.vel = np.ones((cloud.n, 3))
    state.angdot = np.ones((cloud.n, 2))
    cs6 = ConstraintSet(cloud.n, 3)
    cs6.clamp([0]).hold_translation([2], components=[2]).hold_rotation([3])
    apply_constraints(state, cs6)
    assert np.all(state.vel[0] == 0.0) and np.all(state.angdot[0] == 0.0)
    assert state.vel[2, 2] == 0.0 and state.vel[2, 0] == 1.0
    assert np.all(state.angdot[3] == 0.0)
    assert np.all(state.vel[1] == 1.0)  # unconstrained particle unchanged


def test_clamped_particles_hold_position_through_steps():
    cloud = make_line_cloud(n=15, dp=0.005, thickness=0.01)
    cons = ConstraintSet(cloud.n, 2).clamp(np.arange(3))
    solver = Solver(cloud, SOFT, constraints=cons, backend="numpy")
    vel = np.zeros((cloud.n, 2))
    vel[:, 1] = 0.5
    solver.set_velocity(vel)
    assert np.all(solver.state.vel[:3] == 0.0)
    for _ in range(20):
        solver.step()
    assert np.allclose(solver.state.pos[:3], solver.model.pos0[:3])
    assert np.allclose(solver.state.ang[:3], 0.0)


# ----------------------------------------------------------------- the step

def test_quiescent_state_is_a_fixed_point():
    solver = line_solver()
    before_pos = solver.state.pos.copy()
    before_fm = solver.state.fm.copy()
    for _ in range(5):
        solver.step()
    assert np.array_equal(solver.state.pos, before_pos)
    assert np.array_equal(solver.state.fm, before_fm)
    assert np.all(solver.state.vel == 0.0)
    assert np.all(solver.state.vm == 0.0)


def test_rigid_translation_advances_without_stress():
    solver = line_solver()
    v = np.tile([0.3, -0.2], (solver.model.n, 1))
    solver.set_velocity(v)
    t0 = solver.state.t
    for _ in range(50):
        solver.step()
    elapsed = solver.state.t - t0
    assert np.allclose(solver.state.pos,
                       solver.model.pos0 + elapsed * v, atol=1e-12)
    assert np.allclose(solver.state.fm, np.eye(2), atol=1e-12)
    assert np.abs(solver.state.vm).max() < 1e-8
    assert np.abs(solver.state.acc).max() < 1e-8


def test_two_particle_oscillator_energy_peaks_stable():
    """Symplectic stepping: kinetic-energy peaks drift < 1% over 1e4 steps."""
    dp, d = 0.005, 0.01
    pos = np.array([[0.0, 0.0], [dp, 0.0]])
    normals = np.tile([0.0, 1.0], (2, 1))
    cloud = ShellParticleCloud(pos, normals, np.full(2, dp), d, dp)
    solver = Solver(cloud, SOFT, backend="numpy", include_damping=False)
    stretched = pos.copy()
    stretched[1, 0] *= 1.001
    solver.state.pos = stretched
    ke = np.empty(10_000)
    for i in range(len(ke)):
        solver.step()
        ke[i] = solver.state.kinetic_energy(solver.model)
    head = ke[: len(ke) // 10].max()
    tail = ke[-len(ke) // 10:].max()
    assert head > 0.0
    assert abs(tail - head) / head < 0.01


def test_step_trace_matches_reference_ordering():
    """Hand-stepped reference of the drift/kick sequence on a tiny cloud."""
    cloud = make_line_cloud(n=3, dp=0.004, thickness=0.008)
    solver = Solver(cloud, SOFT, backend="numpy")
    model = solver.model
    vel = np.array([[0.0, 0.1], [0.05, -0.2], [-0.1, 0.15]])
    solver.set_velocity(vel)

    ref = initial_state(model)
    ref.vel = vel.copy()
    ref.fmdot, ref.fndot = nb.rates_phase(model, ref.vel, ref.nlocdot)

    dt = 1.0e-6
    for _ in range(3):
        half = 0.5 * dt
        ref.fm += half * ref.fmdot
        ref.fn += half * ref.fndot
        ref.pos += half * ref.vel
        ref.ang += half * ref.angdot
        ref.nloc += half * ref.nlocdot
        out = nb.stress_phase(model, ref.fm, ref.fn, ref.fmdot, ref.fndot,
                              ref.nloc)
        an, am, shear_glob, fm_g, fn_g, jm, vm, nglob, err = out
        assert err == 0
        acc, nddot = nb.force_phase(model, an, am, shear_glob, fm_g, fn_g,
                                    ref.pos, nglob, 1.0)
        nddot_loc = np.einsum("nab,nb->na", model.q0, nddot)
        angddot, _ = nb.angle_accels(model, ref.ang, ref.angdot, nddot_loc)
        ref.vel += dt * acc
        ref.angdot += dt * angddot
        ref.nlocdot = normal_rate_from_angles(ref.ang, ref.angdot, 2)
        ref.fmdot, ref.fndot = nb.rates_phase(model, ref.vel, ref.nlocdot)
        ref.fm += half * ref.fmdot
        ref.fn += half * ref.fndot
        ref.pos += half * ref.vel
        ref.ang += half * ref.angdot
        ref.nloc += half * ref.nlocdot

        solver.step(dt=dt)

    st = solver.state
    for name in ("pos", "vel", "ang", "angdot", "nloc", "nlocdot", "fm", "fn",
                 "fmdot", "fndot"):
        assert np.allclose(getattr(st, name), getattr(ref, name),
                           rtol=1e-14, atol=1e-15), name


# ------------------------------------------------------------- run drivers

def test_dynamic_run_zero_duration_records_initial_row():
    solver = line_solver()
    series = solver.run_dynamic(DynamicSchedule(t_end=0.0),
                                probes={"x0": lambda m, s: s.pos[0, 0]})
    assert len(series) == 1
    assert series.times[0] == 0.0
    assert series.column("x0")[0] == solver.model.pos0[0, 0]


def test_dynamic_run_reaches_stop_time_and_monotone_clock():
    solver = line_solver()
    solver.set_velocity(np.tile([0.05, 0.0], (solver.model.n, 1)))
    t_end = 2.0e-3
    series = solver.run_dynamic(DynamicSchedule(t_end=t_end, record_every=5))
    assert series.times[-1] == pytest.approx(t_end, abs=1e-12)
    assert np.all(np.diff(series.times) > 0.0)


def test_static_run_converges_and_flags_levels():
    """A stretched strip with kinetic damping must settle to quiet."""
    cloud = make_line_cloud(n=15, dp=0.005, thickness=0.01)
    cons = ConstraintSet(cloud.n, 2)
    cons.hold_translation([0])          # anchor one end
    load0 = np.zeros((cloud.n, 2))
    load0[-1, 0] = 40.0                 # axial pull per unit reference area
    solver = Solver(cloud, SOFT, constraints=cons, load0=load0,
                    backend="numpy")
    schedule = StaticSchedule(load_levels=(0.5, 1.0),
                              max_steps_per_level=30_000,
                              convergence_tol=1e-8, convergence_window=500,
                              chunk=500)
    series = solver.run_static(schedule)
    assert series.meta["all_converged"]
    assert len(series) == 2
    assert list(series.column("load_factor")) == [0.5, 1.0]
    assert np.all(series.column("converged") == 1.0)
    # pulled strip stretches along +x by F L / (E' A) with the plane-stress
    # axial modulus E' = E/(1-nu^2)
    tip = solver.state.pos[-1, 0] - solver.model.pos0[-1, 0]
    force = 40.0 * cloud.volumes[-1]
    length = solver.model.pos0[-1, 0] - solver.model.pos0[0, 0]
    e_axial = SOFT.young / (1.0 - SOFT.poisson ** 2)
    expected = force * length / (e_axial * cloud.thickness)
    assert tip == pytest.approx(expected, rel=0.15)
    ke = solver.state.kinetic_energy(solver.model)
    assert ke <= 1e-8 * series.meta["levels"][-1]["ke_peak"] + 1e-300


def test_free_strip_under_end_pull_stretches_not_compresses():
    """Sign check: tension applied outward must lengthen the strip."""
    cloud = make_line_cloud(n=15, dp=0.005, thickness=0.01)
    load0 = np.zeros((cloud.n, 2))
    load0[0, 0] = -25.0
    load0[-1, 0] = 25.0
    solver = Solver(cloud, SOFT, load0=load0, backend="numpy")
    for _ in range(400):
        solver.step()
    length = solver.state.pos[-1, 0] - solver.state.pos[0, 0]
    length0 = solver.model.pos0[-1, 0] - solver.model.pos0[0, 0]
    assert length > length0 * (1.0 + 1e-6)


# ------------------------------------------------------ damping stability

def test_damped_free_plate_dissipates():
    """Viscous stresses must dissipate, not pump, at the solver's own dt."""
    cloud = make_plate_cloud(nx=8, ny=8, dp=0.0254, thickness=0.0127)
    mat = LinearElasticMaterial(young=68.94e9, poisson=0.3, density=2547.0)
    solver = Solver(cloud, mat)
    x, y = cloud.positions[:, 0], cloud.positions[:, 1]
    vel = np.zeros((solver.model.n, 3))
    vel[:, 2] = 0.5 * np.sin(np.pi * x / x.max()) * np.sin(np.pi * y / y.max())
    vel[:, 2] -= vel[:, 2].mean()
    solver.set_velocity(vel)
    ke0 = solver.state.kinetic_energy(solver.model)
    ke_max = 0.0
    for _ in range(60):
        for _ in range(50):
            solver.step()
        ke_max = max(ke_max, solver.state.kinetic_energy(solver.model))
    assert np.isfinite(ke_max)
    assert ke_max <= 1.05 * ke0
    assert solver.state.kinetic_energy(solver.model) < 0.9 * ke0


def test_damped_thin_strip_runs():
    """Thickness far below the smoothing length must stay stable."""
    solver, a, xs = clamped_strip_solver(res=20, d=0.001)
    vf, c = 0.0025, solver.material.sound_speed
    vel = np.zeros((solver.model.n, 2))
    vel[:, 1] = vf * c * first_mode_shape(xs, a) / first_mode_shape(a, a)
    solver.set_velocity(vel)
    ke0 = solver.state.kinetic_energy(solver.model)
    series = solver.run_dynamic(
        DynamicSchedule(t_end=0.05, record_every=50),
        probes={"ke": lambda m, s: s.kinetic_energy(m)})
    ke = series.column("ke")
    assert np.all(np.isfinite(ke))
    assert ke.max() <= 1.1 * ke0


# ------------------------------------------------------- physics benchmark

def clamped_strip_solver(res, d=0.01, nu=0.4, backend=None):
    a = 0.2
    dp = a / res
    nc = int(np.ceil(2 * 1.15))
    xs = (np.arange(-nc, res) + 0.5) * dp
    n = len(xs)
    pos = np.column_stack([xs, np.zeros(n)])
    normals = np.tile([0.0, 1.0], (n, 1))
    cloud = ShellParticleCloud(pos, normals, np.full(n, dp), d, dp)
    mat = LinearElasticMaterial(young=2.0e6, poisson=nu, density=1000.0)
    cons = ConstraintSet(n, 2).clamp(np.arange(nc))
    return Solver(cloud, mat, constraints=cons, backend=backend), a, xs


def first_mode_shape(x, a):
    k = 1.875 / a
    return ((np.sin(k * a) + np.sinh(k * a))
            * (np.cos(k * x) - np.cosh(k * x))
            - (np.cos(k * a) + np.cosh(k * a))
            * (np.sin(k * x) - np.sinh(k * x)))


def test_oscillating_strip_smoke_period():
    """Coarse cantilever flap: period lands near the fine-grid value."""
    solver, a, xs = clamped_strip_solver(res=40)
    vf, c = 0.025, solver.material.sound_speed
    vel = np.zeros((solver.model.n, 2))
    vel[:, 1] = vf * c * first_mode_shape(xs, a) / first_mode_shape(a, a)
    solver.set_velocity(vel)
    tip = solver.model.n - 1
    series = solver.run_dynamic(
        DynamicSchedule(t_end=0.9, record_every=10),
        probes={"z": lambda m, s: s.pos[tip, 1]})
    z, t = series.column("z"), series.times
    assert np.all(np.isfinite(z))
    assert z.max() > 0.08 and z.min() < -0.08
    peaks = [i for i in range(1, len(z) - 1)
             if z[i] > z[i - 1] and z[i] >= z[i + 1] and z[i] > 0.4 * z.max()]
    assert len(peaks) >= 2
    period = t[peaks[-1]] - t[peaks[0]]
    assert period == pytest.approx(0.54447, rel=0.05)
    # drift of the director norm stays second order in the step size
    assert series.meta["max_normal_drift"] < 1e-3
