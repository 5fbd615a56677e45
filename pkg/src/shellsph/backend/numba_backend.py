"""Compiled backend: explicit-loop kernels jitted with numba.

Same math and step semantics as the numpy backend, which remains the
behavioural reference.  Selected by default when numba imports cleanly, or
explicitly with SHELLSPH_BACKEND=numba.  The hot path is a fused run loop
that keeps the whole step, the step-size rule, and the relaxation
bookkeeping inside compiled code; per-pair and per-particle work is written
as plain loops over the CSR pair table.
"""

import numpy as np
from numba import njit

from ..state import (STATUS_BUDGET, STATUS_CONVERGED, STATUS_DIVERGED,
                     STATUS_INVERTED, STATUS_POLE, STATUS_TSTOP, AdvanceResult)

NAME = "numba"

ERR_NONE = 0
ERR_INVERTED = 1
ERR_POLE = 2


# --------------------------------------------------------------- small math

@njit(cache=True, inline="always")
def _det(a):
    if a.shape[0] == 2:
        return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))


@njit(cache=True, inline="always")
def _inv(a, det, out):
    inv = 1.0 / det
    if a.shape[0] == 2:
        out[0, 0] = a[1, 1] * inv
        out[0, 1] = -a[0, 1] * inv
        out[1, 0] = -a[1, 0] * inv
        out[1, 1] = a[0, 0] * inv
    else:
        out[0, 0] = (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]) * inv
        out[0, 1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) * inv
        out[0, 2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) * inv
        out[1, 0] = (a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]) * inv
        out[1, 1] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) * inv
        out[1, 2] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) * inv
        out[2, 0] = (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]) * inv
        out[2, 1] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) * inv
        out[2, 2] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) * inv


@njit(cache=True, inline="always")
def _mm(a, b, out):
    """out = a @ b"""
    d = a.shape[0]
    for r in range(d):
        for c in range(d):
            s = 0.0
            for k in range(d):
                s += a[r, k] * b[k, c]
            out[r, c] = s


@njit(cache=True, inline="always")
def _mtm(a, b, out):
    """out = a.T @ b"""
    d = a.shape[0]
    for r in range(d):
        for c in range(d):
            s = 0.0
            for k in range(d):
                s += a[k, r] * b[k, c]
            out[r, c] = s


@njit(cache=True, inline="always")
def _mmt(a, b, out):
    """out = a @ b.T"""
    d = a.shape[0]
    for r in range(d):
        for c in range(d):
            s = 0.0
            for k in range(d):
                s += a[r, k] * b[c, k]
            out[r, c] = s


@njit(cache=True, inline="always")
def _rotation_to_frame(nvec, q):
    """Rotation whose last row is `nvec` (global -> local-of-normal)."""
    if nvec.shape[0] == 2:
        q[0, 0] = nvec[1]
        q[0, 1] = -nvec[0]
        q[1, 0] = nvec[0]
        q[1, 1] = nvec[1]
    else:
        n1, n2, n3 = nvec[0], nvec[1], nvec[2]
        denom = 1.0 + n3
        q[0, 0] = n3 + n2 * n2 / denom
        q[0, 1] = -n1 * n2 / denom
        q[0, 2] = -n1
        q[1, 0] = -n1 * n2 / denom
        q[1, 1] = n3 + n1 * n1 / denom
        q[1, 2] = -n2
        q[2, 0] = n1
        q[2, 1] = n2
        q[2, 2] = n3


@njit(cache=True, inline="always")
def _von_mises(sig, nu):
    """Von Mises stress of a local stress matrix (plane-stress embed in 2D)."""
    dim = sig.shape[0]
    if dim == 2:
        s00 = sig[0, 0]
        s22 = sig[1, 1]
        s02 = 0.5 * (sig[0, 1] + sig[1, 0])
        s11 = nu * (s00 + s22)
        tr = (s00 + s11 + s22) / 3.0
        d0 = s00 - tr
        d1 = s11 - tr
        d2 = s22 - tr
        return np.sqrt(1.5 * (d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * s02 * s02))
    tr = (sig[0, 0] + sig[1, 1] + sig[2, 2]) / 3.0
    s = 0.0
    for a in range(3):
        for b in range(3):
            dev = sig[a, b] - (tr if a == b else 0.0)
            s += dev * dev
    return np.sqrt(1.5 * s)


# ------------------------------------------------------------- single step

@njit(cache=True)
def _step_kernel(
        # model scalars
        dim, thickness, h, rho0, lame_l, mu_s, bulk, kappa, alpha_hg,
        w_self, poisson, inertia_scale, include_damping, mid_ig,
        # model arrays
        gauss_z, gauss_w, q0, btr, btn, pos0,
        rows, indices, r0ij, n0ij, w0, dwdr0, gradw0, vj,
        load0, vel_mask, ang_mask,
        # state arrays (mutated)
        pos, vel, ang, angdot, nloc, nlocdot,
        fm, fn, fmdot, fndot, rho, acc, nddot_loc, angddot, vm,
        # scratch arrays
        nglob, an, am, fm_glob, fn_glob, shear_glob, jm, nddot_glob, su, sn,
        # step parameters
        dt, lam, renormalize):
    n = pos.shape[0]
    nnz = rows.shape[0]
    ng = gauss_z.shape[0]
    half = 0.5 * dt

    # ---- first half drift + pins
    for ip in range(n):
        for a in range(dim):
            for b in range(dim):
                fm[ip, a, b] += half * fmdot[ip, a, b]
                fn[ip, a, b] += half * fndot[ip, a, b]
            pos[ip, a] += half * vel[ip, a]
            nloc[ip, a] += half * nlocdot[ip, a]
            pos[ip, a] += (pos0[ip, a] - pos[ip, a]) * (1.0 - vel_mask[ip, a])
        for a in range(dim - 1):
            ang[ip, a] += half * angdot[ip, a]
            ang[ip, a] *= ang_mask[ip, a]

    # ---- stress phase
    for ip in range(n):
        for a in range(dim):
            s = 0.0
            for b in range(dim):
                s += q0[ip, b, a] * nloc[ip, b]
            nglob[ip, a] = s
    if dim == 3:
        for ip in range(n):
            if nglob[ip, 2] <= -1.0 + 1e-8:
                return ERR_POLE, 0

    s_len = min(h, thickness)
    q = np.empty((dim, dim))
    r = np.empty((dim, dim))
    fl = np.empty((dim, dim))
    finv = np.empty((dim, dim))
    green = np.empty((dim, dim))
    eps = np.empty((dim, dim))
    sig = np.empty((dim, dim))
    force = np.empty((dim, dim))
    moment = np.empty((dim, dim))
    fldot = np.empty((dim, dim))
    edot = np.empty((dim, dim))
    core = np.empty((dim, dim))
    t1 = np.empty((dim, dim))
    t2 = np.empty((dim, dim))
    fminv = np.empty((dim, dim))
    fmig = np.empty((dim, dim))
    gamma = np.empty(dim)
    shear_l = np.empty(dim)

    for ip in range(n):
        det_m = _det(fm[ip])
        jm[ip] = det_m
        if det_m <= 0.0:
            return ERR_INVERTED, 0
        _rotation_to_frame(nglob[ip], q)
        _mmt(q, q0[ip], r)                       # r = q @ q0.T

        rc = np.sqrt(bulk * (rho0 / det_m))
        for a in range(dim - 1):
            gamma[a] = 0.5 * rc * h
        gamma[dim - 1] = 0.5 * rc * s_len

        for a in range(dim):
            for b in range(dim):
                force[a, b] = 0.0
                moment[a, b] = 0.0

        for ig in range(ng):
            z = gauss_z[ig]
            wz = gauss_w[ig]
            for a in range(dim):
                for b in range(dim):
                    fl[a, b] = fm[ip, a, b] + z * fn[ip, a, b]
            det_l = _det(fl)
            if det_l <= 0.0:
                return ERR_INVERTED, 0
            _inv(fl, det_l, finv)
            _mtm(fl, fl, green)                  # F^T F
            for a in range(dim):
                for b in range(dim):
                    green[a, b] = 0.5 * (green[a, b] - (1.0 if a == b else 0.0))
            _mtm(finv, green, t1)
            _mm(t1, finv, eps)                   # F^-T G F^-1
            _mm(r, eps, t1)
            _mmt(t1, r, eps)                     # rotate to current frame
            trace_in = 0.0
            for a in range(dim - 1):
                trace_in += eps[a, a]
            eps[dim - 1, dim - 1] = -poisson * trace_in / (1.0 - poisson)
            tr = trace_in + eps[dim - 1, dim - 1]
            for a in range(dim):
                for b in range(dim):
                    sig[a, b] = 2.0 * mu_s * eps[a, b]
                sig[a, a] += lame_l * tr
            for a in range(dim - 1):
                sig[a, dim - 1] *= kappa
                sig[dim - 1, a] *= kappa
            if include_damping:
                for a in range(dim):
                    for b in range(dim):
                        fldot[a, b] = fmdot[ip, a, b] + z * fndot[ip, a, b]
                _mtm(fldot, fl, t1)
                for a in range(dim):
                    for b in range(dim):
                        edot[a, b] = 0.5 * (t1[a, b] + t1[b, a])
                _mm(fl, edot, t1)                # t1 = F Edot
                for a in range(dim):             # core = t1 diag(gamma) F^T
                    for b in range(dim):
                        s = 0.0
                        for c in range(dim):
                            s += t1[a, c] * gamma[c] * fl[b, c]
                        core[a, b] = s
                _mm(r, core, t1)
                _mmt(t1, r, core)
                for a in range(dim):
                    for b in range(dim):
                        sig[a, b] += core[a, b] / det_m
            for a in range(dim):
                for b in range(dim):
                    force[a, b] += wz * sig[a, b]
                    moment[a, b] += (z * wz) * sig[a, b]
            if ig == mid_ig:
                vm[ip] = _von_mises(sig, poisson)

        for a in range(dim - 1):
            shear_l[a] = -force[a, dim - 1]
        shear_l[dim - 1] = 0.0
        for a in range(dim):
            force[a, dim - 1] = 0.0
            moment[a, dim - 1] = 0.0

        for a in range(dim):
            s = 0.0
            for b in range(dim):
                s += q[b, a] * shear_l[b]
            shear_glob[ip, a] = det_m * s

        _inv(fm[ip], det_m, fminv)
        # fmig = q0.T @ fminv.T @ q0
        for a in range(dim):
            for b in range(dim):
                s = 0.0
                for c in range(dim):
                    s += fminv[c, a] * q0[ip, c, b]
                t1[a, b] = s                     # t1 = fminv.T @ q0
        _mtm(q0[ip], t1, fmig)                   # fmig = q0.T fminv.T q0

        _mtm(q, force, t1)
        _mm(t1, q, t2)                           # n_glob
        _mm(t2, fmig, t1)
        for a in range(dim):
            for b in range(dim):
                s = 0.0
                for c in range(dim):
                    s += t1[a, c] * btr[ip, c, b]
                an[ip, a, b] = det_m * s

        _mtm(q, moment, t1)
        _mm(t1, q, t2)                           # m_glob
        _mm(t2, fmig, t1)
        for a in range(dim):
            for b in range(dim):
                s = 0.0
                for c in range(dim):
                    s += t1[a, c] * btn[ip, c, b]
                am[ip, a, b] = det_m * s

        _mtm(q0[ip], fm[ip], t1)
        _mm(t1, q0[ip], t2)
        for a in range(dim):
            for b in range(dim):
                fm_glob[ip, a, b] = t2[a, b]
        _mtm(q0[ip], fn[ip], t1)
        _mm(t1, q0[ip], t2)
        for a in range(dim):
            for b in range(dim):
                fn_glob[ip, a, b] = t2[a, b]

    # ---- force phase
    d = thickness
    inv_md = 1.0 / (d * rho0)
    inv_mi = 12.0 / (d ** 3 * rho0 * inertia_scale)
    for ip in range(n):
        for a in range(dim):
            acc[ip, a] = 0.0
            nddot_glob[ip, a] = 0.0

    rhat = np.empty(dim)
    nhat = np.empty(dim)
    nmid = np.empty(dim)
    wg = np.empty(dim)
    for p in range(nnz):
        i = rows[p]
        j = indices[p]
        for a in range(dim):
            wg[a] = gradw0[p, a] * vj[p]
        for a in range(dim):
            pn = 0.0
            pm = 0.0
            for b in range(dim):
                pn += (an[i, a, b] + an[j, a, b]) * wg[b]
                pm += (am[i, a, b] + am[j, a, b]) * wg[b]
            acc[i, a] -= inv_md * pn
            nddot_glob[i, a] -= inv_mi * pm

        coef0 = alpha_hg * mu_s * (w0[p] / w_self) * dim * dwdr0[p] * vj[p]
        rnorm2 = 0.0
        hnorm2 = 0.0
        for a in range(dim):
            rm = pos[i, a] - pos[j, a]
            s = 0.0
            for b in range(dim):
                s += (fm_glob[i, a, b] + fm_glob[j, a, b]) * r0ij[p, b]
            rhat[a] = rm - 0.5 * s
            rnorm2 += rm * rm
            hnorm2 += rhat[a] * rhat[a]
        rmid_norm = np.sqrt(rnorm2)
        gamma_r = 2.0 * np.sqrt(hnorm2) / max(rmid_norm, 1e-300)
        if gamma_r > 1.0:
            gamma_r = 1.0
        cr = inv_md * coef0 * gamma_r
        for a in range(dim):
            acc[i, a] += cr * rhat[a]

        dnorm2 = 0.0
        hn2 = 0.0
        for a in range(dim):
            nmid[a] = nglob[i, a] - nglob[j, a] - n0ij[p, a]
            dnorm2 += nmid[a] * nmid[a]
        for a in range(dim):
            s = 0.0
            for b in range(dim):
                s += (fn_glob[i, a, b] + fn_glob[j, a, b]) * r0ij[p, b]
            nhat[a] = nmid[a] - 0.5 * s
            hn2 += nhat[a] * nhat[a]
        denom = np.sqrt(dnorm2)
        if denom > 1e-300:
            gamma_n = 2.0 * np.sqrt(hn2) / denom
            if gamma_n > 1.0:
                gamma_n = 1.0
        else:
            gamma_n = 0.0
        cn = inv_mi * coef0 * d * d * gamma_n
        for a in range(dim):
            nddot_glob[i, a] += cn * nhat[a]

    for ip in range(n):
        for a in range(dim):
            nddot_glob[ip, a] += inv_mi * shear_glob[ip, a]
            acc[ip, a] += (lam * inv_md) * load0[ip, a]

    # ---- local normal accelerations and angle accelerations
    degen = 0
    for ip in range(n):
        for a in range(dim):
            s = 0.0
            for b in range(dim):
                s += q0[ip, a, b] * nddot_glob[ip, b]
            nddot_loc[ip, a] = s
        if dim == 2:
            sp = np.sin(ang[ip, 0])
            cp = np.cos(ang[ip, 0])
            pd = angdot[ip, 0]
            angddot[ip, 0] = cp * (nddot_loc[ip, 0] + sp * pd * pd) \
                - sp * (nddot_loc[ip, 1] + cp * pd * pd)
        else:
            st = np.sin(ang[ip, 0])
            ct = np.cos(ang[ip, 0])
            sp = np.sin(ang[ip, 1])
            cp = np.cos(ang[ip, 1])
            td = angdot[ip, 0]
            pd = angdot[ip, 1]
            n1 = nddot_loc[ip, 0]
            n2 = nddot_loc[ip, 1]
            n3 = nddot_loc[ip, 2]
            td2 = td * td
            pd2 = pd * pd
            angddot[ip, 0] = -(n3 * cp + n1 * sp + (pd2 + td2) * ct) * st \
                + (st * td2 - n2) * ct
            b_ = n1 * cp - n3 * sp + 2.0 * pd * td * st
            b1 = n1 * ct + pd2 * ct * ct * sp + td2 * sp - n2 * sp * st \
                + 2.0 * pd * td * cp * ct * st
            b2 = -(n3 * ct + pd2 * cp * ct * ct + td2 * cp - n2 * cp * st
                   - 2.0 * pd * td * ct * sp * st)
            dn = b1 * b1 + b2 * b2
            if dn < 1e-30:
                angddot[ip, 1] = 0.0
                degen += 1
            else:
                angddot[ip, 1] = (b1 * b_ * b_ * cp + b2 * b_ * b_ * sp) / dn

    # ---- kick
    for ip in range(n):
        for a in range(dim):
            vel[ip, a] = (vel[ip, a] + dt * acc[ip, a]) * vel_mask[ip, a]
        for a in range(dim - 1):
            angdot[ip, a] = (angdot[ip, a] + dt * angddot[ip, a]) \
                * ang_mask[ip, a]

    # ---- pseudo-normal rates from angles
    for ip in range(n):
        if dim == 2:
            sp = np.sin(ang[ip, 0])
            cp = np.cos(ang[ip, 0])
            pd = angdot[ip, 0]
            nlocdot[ip, 0] = cp * pd
            nlocdot[ip, 1] = -sp * pd
        else:
            st = np.sin(ang[ip, 0])
            ct = np.cos(ang[ip, 0])
            sp = np.sin(ang[ip, 1])
            cp = np.cos(ang[ip, 1])
            td = angdot[ip, 0]
            pd = angdot[ip, 1]
            nlocdot[ip, 0] = -st * sp * td + ct * cp * pd
            nlocdot[ip, 1] = -ct * td
            nlocdot[ip, 2] = -st * cp * td - ct * sp * pd

    # ---- deformation-gradient rates
    for ip in range(n):
        for a in range(dim):
            s = 0.0
            for b in range(dim):
                s += q0[ip, b, a] * nlocdot[ip, b]
            nglob[ip, a] = s                     # reuse as ndot_glob
        for a in range(dim):
            for b in range(dim):
                su[ip, a, b] = 0.0
                sn[ip, a, b] = 0.0
    for p in range(nnz):
        i = rows[p]
        j = indices[p]
        for b in range(dim):
            wgb = gradw0[p, b] * vj[p]
            for a in range(dim):
                su[i, a, b] += (vel[i, a] - vel[j, a]) * wgb
                sn[i, a, b] += (nglob[i, a] - nglob[j, a]) * wgb
    for ip in range(n):
        _mm(su[ip], btr[ip], t1)
        _mm(q0[ip], t1, t2)
        _mmt(t2, q0[ip], t1)                     # q0 su btr q0.T
        for a in range(dim):
            for b in range(dim):
                fmdot[ip, a, b] = t1[a, b]
            fmdot[ip, a, dim - 1] = nlocdot[ip, a]
        _mm(sn[ip], btn[ip], t1)
        _mm(q0[ip], t1, t2)
        _mmt(t2, q0[ip], t1)
        for a in range(dim):
            for b in range(dim):
                fndot[ip, a, b] = t1[a, b]
            fndot[ip, a, dim - 1] = 0.0

    # ---- second half drift + pins
    for ip in range(n):
        for a in range(dim):
            for b in range(dim):
                fm[ip, a, b] += half * fmdot[ip, a, b]
                fn[ip, a, b] += half * fndot[ip, a, b]
            pos[ip, a] += half * vel[ip, a]
            nloc[ip, a] += half * nlocdot[ip, a]
            pos[ip, a] += (pos0[ip, a] - pos[ip, a]) * (1.0 - vel_mask[ip, a])
        for a in range(dim - 1):
            ang[ip, a] += half * angdot[ip, a]
            ang[ip, a] *= ang_mask[ip, a]
        if renormalize:
            s = 0.0
            for a in range(dim):
                s += nloc[ip, a] * nloc[ip, a]
            nrm = np.sqrt(s)
            for a in range(dim):
                nloc[ip, a] /= nrm
        rho[ip] = rho0 / _det(fm[ip])

    return ERR_NONE, degen


# ---------------------------------------------------------------- step size

@njit(cache=True)
def _dt_kernel(vel, acc, angdot, angddot, c, h, d, spacing,
               rho0, young, poisson, inertia_scale, include_damping):
    n = vel.shape[0]
    dim = vel.shape[1]
    v2 = 0.0
    a2 = 0.0
    for ip in range(n):
        sv = 0.0
        sa = 0.0
        for a in range(dim):
            sv += vel[ip, a] * vel[ip, a]
            sa += acc[ip, a] * acc[ip, a]
        if sv > v2:
            v2 = sv
        if sa > a2:
            a2 = sa
    w2 = 0.0
    al2 = 0.0
    for ip in range(n):
        sw = 0.0
        sl = 0.0
        for a in range(dim - 1):
            sw += angdot[ip, a] * angdot[ip, a]
            sl += angddot[ip, a] * angddot[ip, a]
        if sw > w2:
            w2 = sw
        if sl > al2:
            al2 = sl
    vmax = np.sqrt(v2)
    amax = np.sqrt(a2)
    wmax = np.sqrt(w2)
    almax = np.sqrt(al2)

    dt1 = h / (c + vmax)
    if amax > 0.0:
        dt1 = min(dt1, np.sqrt(h / amax))
    dt2 = 1.0 / (c + wmax)
    if almax > 0.0:
        dt2 = min(dt2, np.sqrt(1.0 / almax))
    dt3 = h * np.sqrt(rho0 * (1.0 - poisson ** 2) / young) \
        / np.sqrt(2.0 + (np.pi ** 2 / 12.0) * (1.0 - poisson)
                  * (1.0 + 1.5 * (h / d) ** 2 / inertia_scale))
    dt = min(dt1, min(dt2, dt3))
    if include_damping:
        lam_visc = 3.0 * c * (min(h, d) / d ** 2 / inertia_scale
                              + h / spacing ** 2)
        dt = min(dt, 2.0 / lam_visc)
    return dt


@njit(cache=True)
def _ke_kernel(mass, inertia, vel, nlocdot):
    n = vel.shape[0]
    dim = vel.shape[1]
    trans = 0.0
    rot = 0.0
    for ip in range(n):
        sv = 0.0
        sn_ = 0.0
        for a in range(dim):
            sv += vel[ip, a] * vel[ip, a]
            sn_ += nlocdot[ip, a] * nlocdot[ip, a]
        trans += mass[ip] * sv
        rot += inertia[ip] * sn_
    return 0.5 * trans + 0.5 * rot


# ---------------------------------------------------------------- run loop

@njit(cache=True)
def _advance_kernel(
        # model scalars
        dim, thickness, h, spacing, rho0, young, lame_l, mu_s, bulk, kappa,
        alpha_hg, w_self, poisson, inertia_scale, include_damping, mid_ig,
        sound_c,
        # model arrays
        gauss_z, gauss_w, q0, btr, btn, pos0,
        rows, indices, r0ij, n0ij, w0, dwdr0, gradw0, vj,
        load0, mass, inertia, vel_mask, ang_mask,
        # state arrays
        pos, vel, ang, angdot, nloc, nlocdot,
        fm, fn, fmdot, fndot, rho, acc, nddot_loc, angddot, vm,
        # scratch
        nglob, an, am, fm_glob, fn_glob, shear_glob, jm, nddot_glob, su, sn,
        # bookkeeping: relax carries across calls, meta = [t, steps,
        # load_factor, degenerate_after_first]
        relax, meta,
        # options
        max_steps, t_stop, lam_begin, lam_end, ramp_steps,
        kinetic_damping, convergence_tol, convergence_window,
        cfl, renormalize):
    lam_out = meta[2]
    for _ in range(max_steps):
        level_step = int(relax[4])
        if ramp_steps > 0 and level_step < ramp_steps:
            frac = (level_step + 1.0) / ramp_steps
            lam = lam_begin + (lam_end - lam_begin) * frac
        else:
            lam = lam_end

        dt = cfl * _dt_kernel(vel, acc, angdot, angddot, sound_c, h,
                              thickness, spacing, rho0, young, poisson,
                              inertia_scale, include_damping)
        if meta[0] + dt > t_stop:
            dt = t_stop - meta[0]
            if dt <= 0.0:
                return STATUS_TSTOP, lam
        err, degen = _step_kernel(
            dim, thickness, h, rho0, lame_l, mu_s, bulk, kappa, alpha_hg,
            w_self, poisson, inertia_scale, include_damping, mid_ig,
            gauss_z, gauss_w, q0, btr, btn, pos0,
            rows, indices, r0ij, n0ij, w0, dwdr0, gradw0, vj,
            load0, vel_mask, ang_mask,
            pos, vel, ang, angdot, nloc, nlocdot,
            fm, fn, fmdot, fndot, rho, acc, nddot_loc, angddot, vm,
            nglob, an, am, fm_glob, fn_glob, shear_glob, jm, nddot_glob,
            su, sn, dt, lam, renormalize)
        if err == ERR_INVERTED:
            return STATUS_INVERTED, lam
        if err == ERR_POLE:
            return STATUS_POLE, lam
        if meta[1] > 0.0:
            meta[3] += degen
        meta[0] += dt
        meta[1] += 1.0
        meta[2] = lam
        lam_out = lam
        relax[4] += 1.0

        ke = _ke_kernel(mass, inertia, vel, nlocdot)
        if not np.isfinite(ke):
            return STATUS_DIVERGED, lam

        if kinetic_damping and ke < relax[0] and relax[0] > relax[1]:
            vel[:, :] = 0.0
            angdot[:, :] = 0.0
            nlocdot[:, :] = 0.0
            fmdot[:, :, :] = 0.0
            fndot[:, :, :] = 0.0
            ke = 0.0
        relax[1] = relax[0]
        relax[0] = ke
        if ke > relax[2]:
            relax[2] = ke

        if convergence_tol > 0.0 and int(relax[4]) >= ramp_steps:
            if ke <= convergence_tol * relax[2]:
                relax[3] += 1.0
            else:
                relax[3] = 0.0
            if relax[3] >= convergence_window:
                return STATUS_CONVERGED, lam

        if meta[0] >= t_stop:
            return STATUS_TSTOP, lam

    return STATUS_BUDGET, lam_out


# ------------------------------------------------------------- public API

def _scratch(model):
    n, dim = model.n, model.dim
    return (np.empty((n, dim)), np.empty((n, dim, dim)),
            np.empty((n, dim, dim)), np.empty((n, dim, dim)),
            np.empty((n, dim, dim)), np.empty((n, dim)), np.empty(n),
            np.empty((n, dim)), np.empty((n, dim, dim)),
            np.empty((n, dim, dim)))


def _mid_ig(model):
    return int(np.argmin(np.abs(model.gauss_z)))


def compute_dt(model, state, cfl):
    """Stable step from the acoustic/rotational/bending/viscous limits."""
    dt = _dt_kernel(state.vel, state.acc, state.angdot, state.angddot,
                    model.sound_speed, model.h, model.thickness,
                    model.spacing, model.rho0, model.young, model.poisson,
                    model.inertia_scale, model.include_damping)
    return cfl * dt


def single_step(model, state, dt, lam, renormalize=False):
    """One position-based Verlet step.  Returns an error code."""
    scr = _scratch(model)
    err, degen = _step_kernel(
        model.dim, model.thickness, model.h, model.rho0, model.lam,
        model.mu, model.bulk, model.kappa, model.alpha_hg, model.w_self,
        model.poisson, model.inertia_scale, model.include_damping,
        _mid_ig(model),
        model.gauss_z, model.gauss_w, model.q0, model.btr, model.btn,
        model.pos0, model.rows, model.indices, model.r0ij, model.n0ij,
        model.w0, model.dwdr0, model.gradw0, model.vj,
        model.load0, model.vel_mask, model.ang_mask,
        state.pos, state.vel, state.ang, state.angdot, state.nloc,
        state.nlocdot, state.fm, state.fn, state.fmdot, state.fndot,
        state.rho, state.acc, state.nddot_loc, state.angddot, state.vm,
        *scr, float(dt), float(lam), bool(renormalize))
    if err != ERR_NONE:
        return err
    if state.steps > 0:
        state.degenerate_after_first += degen
    state.t += dt
    state.steps += 1
    state.load_factor = lam
    return ERR_NONE


def advance(model, state, opts):
    """Fused compiled run loop with the same semantics as the numpy backend."""
    scr = _scratch(model)
    meta = np.array([state.t, float(state.steps), state.load_factor,
                     float(state.degenerate_after_first)])
    status, lam = _advance_kernel(
        model.dim, model.thickness, model.h, model.spacing, model.rho0,
        model.young, model.lam, model.mu, model.bulk, model.kappa,
        model.alpha_hg, model.w_self, model.poisson, model.inertia_scale,
        model.include_damping, _mid_ig(model), model.sound_speed,
        model.gauss_z, model.gauss_w, model.q0, model.btr, model.btn,
        model.pos0, model.rows, model.indices, model.r0ij, model.n0ij,
        model.w0, model.dwdr0, model.gradw0, model.vj,
        model.load0, model.mass, model.inertia, model.vel_mask,
        model.ang_mask,
        state.pos, state.vel, state.ang, state.angdot, state.nloc,
        state.nlocdot, state.fm, state.fn, state.fmdot, state.fndot,
        state.rho, state.acc, state.nddot_loc, state.angddot, state.vm,
        *scr, state.relax, meta,
        int(opts.max_steps), float(opts.t_stop), float(opts.lam_begin),
        float(opts.lam_end), int(opts.ramp_steps), bool(opts.kinetic_damping),
        float(opts.convergence_tol), int(opts.convergence_window),
        float(opts.cfl), bool(opts.renormalize))
    state.t = float(meta[0])
    state.steps = int(meta[1])
    state.load_factor = float(meta[2])
    state.degenerate_after_first = int(meta[3])
    return AdvanceResult(status, state.steps, state.t, lam)
