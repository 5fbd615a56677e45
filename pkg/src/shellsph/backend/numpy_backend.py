"""Vectorised pure-numpy backend.

Every phase works on the packed model/state arrays.  This is the fallback
path selected with SHELLSPH_BACKEND=numpy and the behavioural reference the
compiled backend is tested against.
"""

import numpy as np

from ..cloud import segment_sum
from ..corrections import transformation_matrix
from ..rotation import (angle_accel_2d, angle_accel_3d,
                        normal_rate_from_angles)
from ..state import (STATUS_BUDGET, STATUS_CONVERGED, STATUS_DIVERGED,
                     STATUS_INVERTED, STATUS_POLE, STATUS_TSTOP, AdvanceResult)

NAME = "numpy"

ERR_NONE = 0
ERR_INVERTED = 1
ERR_POLE = 2


def global_normals(model, nloc):
    """Pseudo-normals rotated from the initial-local frame back to global."""
    return np.einsum("nba,nb->na", model.q0, nloc)


def stress_phase(model, fm, fn, fmdot, fndot, nloc):
    """Constitutive evaluation and everything the pair sums need.

    Returns (an, am, shear_glob, fm_glob, fn_glob, jm, vm, nglob, err).
    an/am are the per-particle coefficient matrices J N F^-T B of the
    momentum and angular pair sums, in global coordinates.
    """
    dim = model.dim
    n = model.n
    eye = np.eye(dim)

    nglob = global_normals(model, nloc)
    if dim == 3 and np.any(nglob[:, 2] <= -1.0 + 1e-8):
        zeros = np.zeros((n, dim, dim))
        return (zeros, zeros, np.zeros((n, dim)), zeros, zeros,
                np.ones(n), np.zeros(n), nglob, ERR_POLE)
    q = transformation_matrix(nglob, dim)
    r = np.einsum("nab,ncb->nac", q, model.q0)          # Q (Q0)^T

    jm = np.linalg.det(fm)
    if np.any(jm <= 0.0):
        zeros = np.zeros((n, dim, dim))
        return (zeros, zeros, np.zeros((n, dim)), zeros, zeros,
                jm, np.zeros(n), nglob, ERR_INVERTED)
    rho = model.rho0 / jm
    rc = np.sqrt(model.bulk * rho)
    s_len = min(model.h, model.thickness)
    gamma = np.empty((n, dim))
    gamma[:, : dim - 1] = (0.5 * rc * model.h)[:, None]
    gamma[:, dim - 1] = 0.5 * rc * s_len

    force = np.zeros((n, dim, dim))
    moment = np.zeros((n, dim, dim))
    vm = np.zeros(n)
    mid = int(np.argmin(np.abs(model.gauss_z)))
    nu = model.poisson

    for ig in range(len(model.gauss_z)):
        z, wz = model.gauss_z[ig], model.gauss_w[ig]
        fl = fm + z * fn
        det = np.linalg.det(fl)
        if np.any(det <= 0.0):
            zeros = np.zeros((n, dim, dim))
            return (zeros, zeros, np.zeros((n, dim)), zeros, zeros,
                    jm, vm, nglob, ERR_INVERTED)
        finv = np.linalg.inv(fl)
        green = 0.5 * (np.einsum("nba,nbc->nac", fl, fl) - eye)
        eps = np.einsum("nba,nbc,ncd->nad", finv, green, finv)
        eps = np.einsum("nab,nbc,ndc->nad", r, eps, r)
        trace_in = np.einsum("nkk->n", eps[:, : dim - 1, : dim - 1])
        eps[:, dim - 1, dim - 1] = -nu * trace_in / (1.0 - nu)
        tr = np.einsum("nkk->n", eps)
        sig = 2.0 * model.mu * eps
        sig[:, np.arange(dim), np.arange(dim)] += (model.lam * tr)[:, None]
        sig[:, : dim - 1, dim - 1] *= model.kappa
        sig[:, dim - 1, : dim - 1] *= model.kappa
        if model.include_damping:
            fldot = fmdot + z * fndot
            edot = 0.5 * (np.einsum("nba,nbc->nac", fldot, fl)
                          + np.einsum("nba,nbc->nac", fl, fldot))
            core = np.einsum("nab,nbc,nc,ndc->nad", fl, edot, gamma, fl)
            sig += np.einsum("nab,nbc,ndc->nad", r, core, r) / jm[:, None, None]
        force += wz * sig
        moment += (z * wz) * sig
        if ig == mid:
            vm = _von_mises_batch(sig, nu)

    shear_l = np.zeros((n, dim))
    shear_l[:, : dim - 1] = -force[:, : dim - 1, dim - 1]
    force[:, :, dim - 1] = 0.0
    moment[:, :, dim - 1] = 0.0

    n_glob = np.einsum("nba,nbc,ncd->nad", q, force, q)
    m_glob = np.einsum("nba,nbc,ncd->nad", q, moment, q)
    shear_glob = jm[:, None] * np.einsum("nba,nb->na", q, shear_l)

    fminv = np.linalg.inv(fm)
    fminv_t_glob = np.einsum("nba,ncb,ncd->nad", model.q0, fminv, model.q0)
    an = jm[:, None, None] * np.einsum("nab,nbc,ncd->nad",
                                       n_glob, fminv_t_glob, model.btr)
    am = jm[:, None, None] * np.einsum("nab,nbc,ncd->nad",
                                       m_glob, fminv_t_glob, model.btn)
    fm_glob = np.einsum("nba,nbc,ncd->nad", model.q0, fm, model.q0)
    fn_glob = np.einsum("nba,nbc,ncd->nad", model.q0, fn, model.q0)
    return an, am, shear_glob, fm_glob, fn_glob, jm, vm, nglob, ERR_NONE


def _von_mises_batch(sig, nu):
    n, dim = sig.shape[0], sig.shape[1]
    if dim == 2:
        full = np.zeros((n, 3, 3))
        full[:, 0, 0] = sig[:, 0, 0]
        full[:, 2, 2] = sig[:, 1, 1]
        full[:, 0, 2] = full[:, 2, 0] = 0.5 * (sig[:, 0, 1] + sig[:, 1, 0])
        full[:, 1, 1] = nu * (sig[:, 0, 0] + sig[:, 1, 1])
        sig = full
    tr = np.einsum("nkk->n", sig) / 3.0
    dev = sig - tr[:, None, None] * np.eye(3)
    return np.sqrt(1.5 * np.einsum("nab,nab->n", dev, dev))


def force_phase(model, an, am, shear_glob, fm_glob, fn_glob, pos, nglob, lam):
    """Pair sums, hourglass control, and external loads.

    Returns (acc, nddot_glob).
    """
    dim = model.dim
    i, j = model.rows, model.indices
    wgrad = model.gradw0 * model.vj[:, None]
    d = model.thickness
    inv_md = 1.0 / (d * model.rho0)
    inv_mi = 12.0 / (d ** 3 * model.rho0 * model.inertia_scale)

    pair_n = np.einsum("pab,pb->pa", an[i] + an[j], wgrad)
    pair_m = np.einsum("pab,pb->pa", am[i] + am[j], wgrad)
    acc = -inv_md * segment_sum(pair_n, model.indptr)
    nddot = -inv_mi * segment_sum(pair_m, model.indptr)
    nddot += inv_mi * shear_glob

    # position hourglass control
    beta = model.w0 / model.w_self
    coef0 = model.alpha_hg * model.mu * beta * dim * model.dwdr0 * model.vj
    rmid = pos[i] - pos[j]
    rhat = rmid - 0.5 * np.einsum("pab,pb->pa", fm_glob[i] + fm_glob[j],
                                  model.r0ij)
    rmid_norm = np.linalg.norm(rmid, axis=1)
    gamma_r = np.minimum(2.0 * np.linalg.norm(rhat, axis=1)
                         / np.maximum(rmid_norm, 1e-300), 1.0)
    acc += inv_md * segment_sum((coef0 * gamma_r)[:, None] * rhat, model.indptr)

    # normal hourglass control
    nmid = nglob[i] - nglob[j] - model.n0ij
    nhat = nmid - 0.5 * np.einsum("pab,pb->pa", fn_glob[i] + fn_glob[j],
                                  model.r0ij)
    denom = np.linalg.norm(nmid, axis=1)
    gamma_n = np.where(denom > 1e-300,
                       np.minimum(2.0 * np.linalg.norm(nhat, axis=1)
                                  / np.maximum(denom, 1e-300), 1.0),
                       0.0)
    coef_n = coef0 * d * d * gamma_n
    nddot += inv_mi * segment_sum(coef_n[:, None] * nhat, model.indptr)

    acc += (lam * inv_md) * model.load0
    return acc, nddot


def rates_phase(model, vel, nlocdot):
    """Assemble mid-surface and normal deformation-gradient rates (local)."""
    dim = model.dim
    i, j = model.rows, model.indices
    wgrad = model.gradw0 * model.vj[:, None]

    ndot_glob = np.einsum("nba,nb->na", model.q0, nlocdot)
    dv = vel[i] - vel[j]
    su = segment_sum(dv[:, :, None] * wgrad[:, None, :], model.indptr)
    sn = segment_sum((ndot_glob[i] - ndot_glob[j])[:, :, None]
                     * wgrad[:, None, :], model.indptr)

    fmdot = np.einsum("nab,nbc,ncd,ned->nae", model.q0, su, model.btr, model.q0)
    fmdot[:, :, dim - 1] = nlocdot
    fndot = np.einsum("nab,nbc,ncd,ned->nae", model.q0, sn, model.btn, model.q0)
    fndot[:, :, dim - 1] = 0.0
    return fmdot, fndot


def assemble_gradients(model, pos, nloc):
    """Mid-surface and normal deformation gradients from current fields.

    Not used inside the step loop (F integrates in time); provided for
    initialisation checks and tests.
    """
    dim = model.dim
    i, j = model.rows, model.indices
    wgrad = model.gradw0 * model.vj[:, None]
    nglob = global_normals(model, nloc)

    su = segment_sum((pos[i] - pos[j])[:, :, None] * wgrad[:, None, :],
                     model.indptr)
    dn = nglob - model.normal0
    sn = segment_sum((dn[i] - dn[j])[:, :, None] * wgrad[:, None, :],
                     model.indptr)

    fm = np.einsum("nab,nbc,ncd,ned->nae", model.q0, su, model.btr, model.q0)
    fm[:, :, dim - 1] = nloc
    fn = np.einsum("nab,nbc,ncd,ned->nae", model.q0, sn, model.btn, model.q0)
    fn[:, :, dim - 1] = 0.0
    return fm, fn


def angle_accels(model, ang, angdot, nddot_loc):
    """Convert local pseudo-normal accelerations to angle accelerations."""
    if model.dim == 2:
        angddot = angle_accel_2d(ang[:, 0], angdot[:, 0], nddot_loc)[:, None]
        degen = 0
    else:
        thdd, phdd, dmask = angle_accel_3d(ang[:, 0], ang[:, 1],
                                           angdot[:, 0], angdot[:, 1],
                                           nddot_loc)
        angddot = np.stack([thdd, phdd], axis=1)
        degen = int(np.count_nonzero(dmask))
    return angddot, degen


def compute_dt(model, state, cfl):
    """Stable step from the acoustic, rotational, and bending limits."""
    c = model.sound_speed
    h, d = model.h, model.thickness
    vmax = np.sqrt(np.max(np.einsum("ij,ij->i", state.vel, state.vel)))
    amax = np.sqrt(np.max(np.einsum("ij,ij->i", state.acc, state.acc)))
    wmax = np.sqrt(np.max(np.einsum("ij,ij->i", state.angdot, state.angdot)))
    almax = np.sqrt(np.max(np.einsum("ij,ij->i", state.angddot, state.angddot)))

    dt1 = h / (c + vmax)
    if amax > 0.0:
        dt1 = min(dt1, np.sqrt(h / amax))
    dt2 = 1.0 / (c + wmax)
    if almax > 0.0:
        dt2 = min(dt2, np.sqrt(1.0 / almax))
    nu = model.poisson
    dt3 = h * np.sqrt(model.rho0 * (1.0 - nu ** 2) / model.young) \
        / np.sqrt(2.0 + (np.pi ** 2 / 12.0) * (1.0 - nu)
                  * (1.0 + 1.5 * (h / d) ** 2 / model.inertia_scale))
    dt = min(dt1, dt2, dt3)
    if model.include_damping:
        # Viscous stresses are velocity-proportional, so explicit stepping
        # needs rate*dt bounded.  Two decay channels dominate: the transverse
        # shear resultant acting on the rotational inertia (rate 3*c*s/d^2)
        # and the in-plane viscosity at the shortest resolved wavelength
        # (rate ~ 3*c*h/dp^2).  Keep rate*dt <= 2 before the CFL factor.
        s_len = min(h, d)
        lam = 3.0 * c * (s_len / d ** 2 / model.inertia_scale
                         + h / model.spacing ** 2)
        dt = min(dt, 2.0 / lam)
    return cfl * dt


def _apply_pins(model, state):
    state.pos += (model.pos0 - state.pos) * (1.0 - model.vel_mask)
    state.ang *= model.ang_mask


def single_step(model, state, dt, lam, renormalize=False):
    """One position-based Verlet step.  Returns an error code."""
    dim = model.dim
    half = 0.5 * dt

    # first half drift
    state.fm += half * state.fmdot
    state.fn += half * state.fndot
    state.pos += half * state.vel
    state.ang += half * state.angdot
    state.nloc += half * state.nlocdot
    _apply_pins(model, state)

    out = stress_phase(model, state.fm, state.fn, state.fmdot, state.fndot,
                       state.nloc)
    an, am, shear_glob, fm_glob, fn_glob, jm, vm, nglob, err = out
    if err != ERR_NONE:
        return err
    state.vm = vm

    acc, nddot_glob = force_phase(model, an, am, shear_glob, fm_glob, fn_glob,
                                  state.pos, nglob, lam)
    nddot_loc = np.einsum("nab,nb->na", model.q0, nddot_glob)
    state.acc = acc
    state.nddot_loc = nddot_loc

    angddot, degen = angle_accels(model, state.ang, state.angdot, nddot_loc)
    state.angddot = angddot
    if state.steps > 0:
        state.degenerate_after_first += degen

    # kick
    state.vel += dt * acc
    state.angdot += dt * angddot
    state.vel *= model.vel_mask
    state.angdot *= model.ang_mask

    state.nlocdot = normal_rate_from_angles(state.ang, state.angdot, dim)
    state.fmdot, state.fndot = rates_phase(model, state.vel, state.nlocdot)

    # second half drift
    state.fm += half * state.fmdot
    state.fn += half * state.fndot
    state.pos += half * state.vel
    state.ang += half * state.angdot
    state.nloc += half * state.nlocdot
    _apply_pins(model, state)
    if renormalize:
        state.nloc /= np.linalg.norm(state.nloc, axis=1, keepdims=True)
    state.rho = model.rho0 / np.linalg.det(state.fm)

    state.t += dt
    state.steps += 1
    state.load_factor = lam
    return ERR_NONE


def advance(model, state, opts):
    """Run up to opts.max_steps steps with load schedule and relaxation control.

    The relaxation bookkeeping lives in state.relax so it carries across
    successive calls within the same load level.
    """
    relax = state.relax
    for _ in range(opts.max_steps):
        level_step = int(relax[4])
        if opts.ramp_steps > 0 and level_step < opts.ramp_steps:
            frac = (level_step + 1) / opts.ramp_steps
            lam = opts.lam_begin + (opts.lam_end - opts.lam_begin) * frac
        else:
            lam = opts.lam_end

        dt = compute_dt(model, state, opts.cfl)
        if state.t + dt > opts.t_stop:
            dt = opts.t_stop - state.t
            if dt <= 0.0:
                return AdvanceResult(STATUS_TSTOP, state.steps, state.t, lam)
        err = single_step(model, state, dt, lam, opts.renormalize)
        if err == ERR_INVERTED:
            return AdvanceResult(STATUS_INVERTED, state.steps, state.t, lam)
        if err == ERR_POLE:
            return AdvanceResult(STATUS_POLE, state.steps, state.t, lam)
        relax[4] += 1.0

        ke = state.kinetic_energy(model)
        if not np.isfinite(ke):
            return AdvanceResult(STATUS_DIVERGED, state.steps, state.t, lam)

        if opts.kinetic_damping and ke < relax[0] and relax[0] > relax[1]:
            state.vel[:] = 0.0
            state.angdot[:] = 0.0
            state.nlocdot[:] = 0.0
            state.fmdot[:] = 0.0
            state.fndot[:] = 0.0
            ke = 0.0
        relax[1] = relax[0]
        relax[0] = ke
        if ke > relax[2]:
            relax[2] = ke

        if opts.convergence_tol > 0.0 and int(relax[4]) >= opts.ramp_steps:
            if ke <= opts.convergence_tol * relax[2]:
                relax[3] += 1.0
            else:
                relax[3] = 0.0
            if relax[3] >= opts.convergence_window:
                return AdvanceResult(STATUS_CONVERGED, state.steps, state.t, lam)

        if state.t >= opts.t_stop:
            return AdvanceResult(STATUS_TSTOP, state.steps, state.t, lam)

    return AdvanceResult(STATUS_BUDGET, state.steps, state.t, state.load_factor)
