"""Right-hand-side assembly: gradients, pair sums, hourglass control."""

import numpy as np
import pytest

from shellsph import dynamics
from shellsph.backend import numpy_backend as nb
from shellsph.cloud import build_neighborhood
from shellsph.corrections import build_corrections
from shellsph.kernel import kernel_radial_derivative, kernel_value
from shellsph.material import LinearElasticMaterial, gauss_rule
from shellsph.state import initial_state, pack_model

from conftest import make_line_cloud, make_plate_cloud

MAT = LinearElasticMaterial(young=2.0e11, poisson=0.3, density=7800.0)


def packed(cloud, load0=None):
    table = build_neighborhood(cloud)
    corr = build_corrections(cloud, table)
    gauss = gauss_rule(3, cloud.thickness)
    model = pack_model(cloud, table, corr, MAT, gauss, load0=load0)
    return model


def interior_mask(cloud, margin_spacings=5.05):
    """Particles whose full support (and their neighbours' support) is interior."""
    m = margin_spacings * cloud.spacing
    pos = cloud.positions
    keep = np.ones(cloud.n, bool)
    for ax in range(cloud.dim):
        lo, hi = pos[:, ax].min(), pos[:, ax].max()
        if hi - lo < 2.0 * m:
            continue  # flat direction, no boundary to stay away from
        keep &= (pos[:, ax] >= lo + m) & (pos[:, ax] <= hi - m)
    assert keep.any(), "test lattice too small for the interior margin"
    return keep


def to_global(model, mats_local):
    return np.einsum("nba,nbc,ncd->nad", model.q0, mats_local, model.q0)


@pytest.fixture(scope="module")
def plate():
    cloud = make_plate_cloud(nx=16, ny=16, dp=0.05, thickness=0.02)
    return cloud, packed(cloud)


@pytest.fixture(scope="module")
def strip():
    cloud = make_line_cloud(n=41, dp=0.005, thickness=0.01)
    return cloud, packed(cloud)


# ---------------------------------------------------------------- gradients

def test_initial_gradients_are_identity_and_zero(plate):
    cloud, model = plate
    state = initial_state(model)
    fm, fn = dynamics.assemble_deformation_gradients(model, state.pos,
                                                     state.nloc)
    assert np.allclose(fm, np.eye(3), atol=1e-11)
    assert np.allclose(fn, 0.0, atol=1e-11)


def test_gradients_ignore_rigid_translation(plate):
    cloud, model = plate
    state = initial_state(model)
    pos2 = state.pos + np.array([0.7, -0.3, 1.1])
    fm, fn = dynamics.assemble_deformation_gradients(model, pos2, state.nloc)
    assert np.allclose(fm, np.eye(3), atol=1e-11)
    assert np.allclose(fn, 0.0, atol=1e-11)


def test_affine_map_reproduced_exactly(plate):
    cloud, model = plate
    amap = np.array([[1.02, 0.013, 0.0],
                     [-0.007, 0.985, 0.0],
                     [0.0, 0.0, 1.0]])
    pos = cloud.positions @ amap.T
    state = initial_state(model)
    fm, fn = dynamics.assemble_deformation_gradients(model, pos, state.nloc)
    # flat plate: local frame == global frame, so the in-plane block is amap's
    assert np.allclose(fm[:, :2, :2], amap[:2, :2], atol=1e-10)
    assert np.allclose(fm[:, :, 2], state.nloc, atol=1e-12)
    assert np.allclose(fn, 0.0, atol=1e-10)


def test_rate_assembly_zero_and_translation(plate):
    cloud, model = plate
    zero_rate = np.zeros((model.n, 3))
    fmdot, fndot = dynamics.assemble_rates(model, np.zeros((model.n, 3)),
                                           zero_rate)
    assert np.all(fmdot == 0.0) and np.all(fndot == 0.0)
    rigid = np.tile([0.4, -1.2, 0.9], (model.n, 1))
    fmdot, fndot = dynamics.assemble_rates(model, rigid, zero_rate)
    assert np.allclose(fmdot, 0.0, atol=1e-12)
    assert np.allclose(fndot, 0.0, atol=1e-12)


def test_affine_velocity_field_reproduced(plate):
    cloud, model = plate
    cmap = np.array([[0.3, -0.11, 0.0],
                     [0.05, 0.2, 0.0],
                     [0.0, 0.0, 0.0]])
    vel = cloud.positions @ cmap.T
    fmdot, fndot = dynamics.assemble_rates(model, vel, np.zeros((model.n, 3)))
    assert np.allclose(fmdot[:, :2, :2], cmap[:2, :2], atol=1e-10)
    assert np.allclose(fmdot[:, :, 2], 0.0, atol=1e-12)
    assert np.allclose(fndot, 0.0, atol=1e-10)


# ------------------------------------------------------------- momentum sum

def test_momentum_rhs_zero_coefficients(plate):
    cloud, model = plate
    acc = dynamics.momentum_rhs(model, np.zeros((model.n, 3, 3)))
    assert np.all(acc == 0.0)


def test_momentum_rhs_uniform_coefficients_interior_zero(plate):
    cloud, model = plate
    rng = np.random.default_rng(7)
    an = np.tile(rng.standard_normal((3, 3)), (model.n, 1, 1))
    acc = dynamics.momentum_rhs(model, an)
    inner = interior_mask(cloud)
    assert np.abs(acc[inner]).max() < 1e-10
    # boundary rows feel the one-sided support, so the field is not all zero
    assert np.abs(acc[~inner]).max() > 1e-4


def test_momentum_rhs_conserves_total_momentum(plate):
    cloud, model = plate
    rng = np.random.default_rng(11)
    an = rng.standard_normal((model.n, 3, 3))
    acc = dynamics.momentum_rhs(model, an)
    total = (model.mass[:, None] * acc).sum(axis=0)
    scale = np.abs(model.mass[:, None] * acc).sum()
    assert np.abs(total).max() < 1e-10 * scale


def test_momentum_rhs_reproduces_affine_divergence(plate):
    cloud, model = plate
    rng = np.random.default_rng(3)
    a0 = rng.standard_normal((3, 3))
    cmat = rng.standard_normal((3, 3, 2))  # in-plane derivative coefficients
    x = cloud.positions
    field = a0 + np.einsum("abk,nk->nab", cmat, x[:, :2])
    an = np.einsum("nab,nbc->nac", field, model.btr)
    acc = dynamics.momentum_rhs(model, an)
    expected = (cmat[:, 0, 0] + cmat[:, 1, 1]) / (model.thickness * model.rho0)
    inner = interior_mask(cloud)
    assert np.allclose(acc[inner], expected, rtol=0.0, atol=1e-10)


# -------------------------------------------------------------- angular sum

def test_angular_rhs_zero_inputs(plate):
    cloud, model = plate
    nddot = dynamics.angular_rhs(model, np.zeros((model.n, 3, 3)),
                                 np.zeros((model.n, 3)))
    assert np.all(nddot == 0.0)


def test_angular_rhs_reproduces_affine_divergence(plate):
    cloud, model = plate
    rng = np.random.default_rng(5)
    cmat = rng.standard_normal((3, 3, 2))
    field = np.einsum("abk,nk->nab", cmat, cloud.positions[:, :2])
    am = np.einsum("nab,nbc->nac", field, model.btn)
    nddot = dynamics.angular_rhs(model, am, np.zeros((model.n, 3)))
    scale = 12.0 / (model.thickness ** 3 * model.rho0)
    expected = scale * (cmat[:, 0, 0] + cmat[:, 1, 1])
    inner = interior_mask(cloud)
    assert np.allclose(nddot[inner], expected, rtol=1e-10,
                       atol=1e-10 * scale)


def test_transverse_shear_produces_restoring_couple(strip):
    """A pseudo-normal leaning ahead of the surface must be pushed back.

    With the mid-surface at rest and the normal leaned by g in +x, the only
    stress is transverse shear; the resulting angular acceleration is
    -12*kappa*mu*g/(d^2 rho0) along x.
    """
    cloud, model = strip
    g = 1e-7
    n = model.n
    fm = np.tile(np.array([[1.0, g], [0.0, 1.0]]), (n, 1, 1))
    fn = np.zeros((n, 2, 2))
    nloc = np.tile([g, 1.0], (n, 1))
    zeros = np.zeros((n, 2, 2))
    an, am, shear_glob, fm_g, fn_g, jm, vm, nglob, err = dynamics.stress_coefficients(
        model, fm, fn, zeros, zeros, nloc)
    assert err == 0
    assert np.allclose(am, 0.0, atol=1e-20)  # uniform stress through thickness

    d = model.thickness
    expected_x = -12.0 * model.kappa * model.mu * g / (d ** 2 * model.rho0)
    nddot = dynamics.angular_rhs(model, am, shear_glob)
    assert np.all(nddot[:, 0] < 0.0)
    assert np.allclose(nddot[:, 0], expected_x, rtol=2e-6)
    assert np.allclose(nddot[:, 1], 0.0, atol=np.abs(expected_x) * 1e-6)


# ----------------------------------------------------------- hourglass terms

def test_hourglass_position_zero_for_affine(plate):
    cloud, model = plate
    amap = np.array([[1.05, 0.02, 0.0],
                     [0.01, 0.97, 0.0],
                     [0.0, 0.0, 1.0]])
    pos = cloud.positions @ amap.T
    fm_glob = np.tile(amap, (model.n, 1, 1))
    acc = dynamics.hourglass_position(model, pos, fm_glob)
    assert np.allclose(acc, 0.0, atol=1e-12)


def test_hourglass_position_conserves_momentum(plate):
    cloud, model = plate
    rng = np.random.default_rng(13)
    state = initial_state(model)
    pos = cloud.positions + 0.05 * cloud.spacing * rng.standard_normal(
        cloud.positions.shape)
    fm_local, _ = dynamics.assemble_deformation_gradients(model, pos,
                                                          state.nloc)
    acc = dynamics.hourglass_position(model, pos, to_global(model, fm_local))
    assert np.abs(acc).max() > 0.0
    total = (model.mass[:, None] * acc).sum(axis=0)
    scale = np.abs(model.mass[:, None] * acc).sum()
    assert np.abs(total).max() < 1e-10 * scale


def test_hourglass_position_two_particle_limiter():
    """Hand-evaluated pair: quadratic growth below the clamp, linear above."""
    from shellsph.cloud import ShellParticleCloud

    dp, d = 0.01, 0.004
    pos0 = np.array([[0.0, 0.0], [dp, 0.0]])
    normals = np.tile([0.0, 1.0], (2, 1))
    cloud = ShellParticleCloud(pos0, normals, np.full(2, dp), d, dp)
    model = packed(cloud)
    h = model.h
    w_self = kernel_value(0.0, h, 2)
    beta = kernel_value(dp / h, h, 2) / w_self
    dwdr = kernel_radial_derivative(dp / h, h, 2)

    for delta in (0.1 * dp, 5.0 * dp):
        pos = pos0.copy()
        pos[1, 0] += delta
        fm_glob = np.tile(np.eye(2), (2, 1, 1))
        acc = dynamics.hourglass_position(model, pos, fm_glob)
        gamma = min(2.0 * delta / (dp + delta), 1.0)
        coef = model.alpha_hg * model.mu * beta * gamma * 2 * dwdr * dp
        expected1 = coef * delta / (d * model.rho0)
        assert acc[1, 0] == pytest.approx(expected1, rel=1e-12)
        assert acc[1, 0] < 0.0  # stretched pair is pulled back together
        assert acc[0, 0] == pytest.approx(-expected1, rel=1e-12)
    assert gamma == 1.0  # the last case exercised the clamp


def test_hourglass_normal_zero_cases(plate):
    cloud, model = plate
    n = model.n
    # undeformed: both the mismatch and the normal differences vanish (0/0)
    acc = dynamics.hourglass_normal(model, cloud.normals.copy(),
                                    np.zeros((n, 3, 3)))
    assert np.all(acc == 0.0)
    # normals consistent with a uniform normal gradient
    cmat = np.array([[0.3, -0.1, 0.0], [0.2, 0.15, 0.0], [0.05, -0.25, 0.0]])
    nglob = cloud.normals + cloud.positions @ cmat.T
    fn_glob = np.tile(cmat, (n, 1, 1))
    acc = dynamics.hourglass_normal(model, nglob, fn_glob)
    assert np.allclose(acc, 0.0, atol=1e-12)


def test_hourglass_normal_halves_when_thickness_doubles():
    d = 0.02
    cloud1 = make_plate_cloud(nx=10, ny=10, dp=0.05, thickness=d)
    cloud2 = make_plate_cloud(nx=10, ny=10, dp=0.05, thickness=2 * d)
    m1, m2 = packed(cloud1), packed(cloud2)
    rng = np.random.default_rng(29)
    nglob = cloud1.normals + 0.02 * rng.standard_normal((cloud1.n, 3))
    nglob /= np.linalg.norm(nglob, axis=1, keepdims=True)
    fn_glob = np.zeros((cloud1.n, 3, 3))
    a1 = dynamics.hourglass_normal(m1, nglob, fn_glob)
    a2 = dynamics.hourglass_normal(m2, nglob, fn_glob)
    assert np.abs(a1).max() > 0.0
    assert np.allclose(a2, 0.5 * a1, rtol=1e-12)


# ------------------------------------------------------ assembled invariants

def _full_acceleration(model, state, lam=0.0):
    out = nb.stress_phase(model, state.fm, state.fn, state.fmdot, state.fndot,
                          state.nloc)
    an, am, shear_glob, fm_g, fn_g, jm, vm, nglob, err = out
    assert err == 0
    return nb.force_phase(model, an, am, shear_glob, fm_g, fn_g,
                          state.pos, nglob, lam)


def _smoothly_deformed(cloud, model):
    state = initial_state(model)
    x = cloud.positions
    span = x[:, 0].max() - x[:, 0].min()
    w = np.pi / span
    state.pos = x + np.column_stack([
        0.002 * np.sin(w * x[:, 0]),
        0.003 * np.cos(w * x[:, 1]),
        0.004 * np.sin(w * (x[:, 0] + x[:, 1])),
    ])
    ang = 0.05 * np.column_stack([np.sin(w * x[:, 0]), np.cos(w * x[:, 1])])
    state.ang = ang
    from shellsph.rotation import normal_from_angles
    state.nloc = normal_from_angles(ang, 3)
    state.fm, state.fn = dynamics.assemble_deformation_gradients(
        model, state.pos, state.nloc)
    return state


def test_rhs_translation_invariant(plate):
    cloud, model = plate
    state = _smoothly_deformed(cloud, model)
    acc1, nddot1 = _full_acceleration(model, state)
    state.pos = state.pos + np.array([0.5, -0.25, 1.0])
    acc2, nddot2 = _full_acceleration(model, state)
    assert np.abs(acc2 - acc1).max() <= 1e-12 * max(1.0, np.abs(acc1).max())
    assert np.abs(nddot2 - nddot1).max() <= 1e-12 * max(
        1.0, np.abs(nddot1).max())


def test_affine_state_quiet_interior(plate):
    """Uniform stress: the interior feels no force, hourglass stays silent."""
    cloud, model = plate
    amap = np.array([[1.01, 0.004, 0.0],
                     [-0.003, 0.992, 0.0],
                     [0.0, 0.0, 1.0]])
    state = initial_state(model)
    state.pos = cloud.positions @ amap.T
    state.fm, state.fn = dynamics.assemble_deformation_gradients(
        model, state.pos, state.nloc)
    acc, nddot = _full_acceleration(model, state)
    hg = dynamics.hourglass_position(model, state.pos,
                                     to_global(model, state.fm))
    inner = interior_mask(cloud)
    assert np.abs(acc[inner]).max() <= 1e-9 * np.abs(acc).max()
    assert np.abs(nddot[inner]).max() <= 1e-9 * max(np.abs(nddot).max(), 1.0)
    assert np.abs(hg).max() <= 1e-9


def test_fused_force_phase_matches_named_parts(plate):
    cloud, model_plain = plate
    rng = np.random.default_rng(41)
    load0 = rng.standard_normal((cloud.n, 3))
    model = packed(cloud, load0=load0)
    state = _smoothly_deformed(cloud, model)
    lam = 0.7

    out = nb.stress_phase(model, state.fm, state.fn, state.fmdot, state.fndot,
                          state.nloc)
    an, am, shear_glob, fm_g, fn_g, jm, vm, nglob, err = out
    assert err == 0
    acc, nddot = nb.force_phase(model, an, am, shear_glob, fm_g, fn_g,
                                state.pos, nglob, lam)

    acc_parts = (dynamics.momentum_rhs(model, an)
                 + dynamics.hourglass_position(model, state.pos, fm_g)
                 + lam * load0 / (model.thickness * model.rho0))
    nddot_parts = (dynamics.angular_rhs(model, am, shear_glob)
                   + dynamics.hourglass_normal(model, nglob, fn_g))

    assert np.allclose(acc, acc_parts, rtol=1e-13,
                       atol=1e-13 * np.abs(acc).max())
    assert np.allclose(nddot, nddot_parts, rtol=1e-13,
                       atol=1e-13 * np.abs(nddot).max())
