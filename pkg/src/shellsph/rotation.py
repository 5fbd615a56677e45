"""Conversions between rotation angles and the pseudo-normal vector.

The pseudo-normal in the initial local frame is parametrised by one angle in
2D and two in 3D.  Converting a pseudo-normal acceleration back to angle
accelerations uses a weighted combination of the equivalent single-branch
relations, which removes the trigonometric singularities each individual
branch has at large rotation.  Angles are never wrapped.
"""

import numpy as np

DEGENERATE_TOL = 1e-30


def normal_from_angles(angles, dim):
    """Pseudo-normal from rotation angles.

    2D: angles = φ (any shape);            n = (sin φ, cos φ)
    3D: angles = (..., 2) holding (θ, φ);  n = (cos θ sin φ, −sin θ, cos θ cos φ)
    """
    if dim == 2:
        phi = np.asarray(angles, dtype=np.float64)
        if phi.ndim and phi.shape[-1] == 1:
            phi = phi[..., 0]
        return np.stack([np.sin(phi), np.cos(phi)], axis=-1)
    ang = np.asarray(angles, dtype=np.float64)
    theta, phi = ang[..., 0], ang[..., 1]
    return np.stack([np.cos(theta) * np.sin(phi),
                     -np.sin(theta),
                     np.cos(theta) * np.cos(phi)], axis=-1)


def normal_rate_from_angles(angles, rates, dim):
    """Analytic time derivative of normal_from_angles."""
    if dim == 2:
        phi = np.asarray(angles, dtype=np.float64)
        phidot = np.asarray(rates, dtype=np.float64)
        if phi.ndim and phi.shape[-1] == 1:
            phi, phidot = phi[..., 0], phidot[..., 0]
        return np.stack([np.cos(phi) * phidot, -np.sin(phi) * phidot], axis=-1)
    ang = np.asarray(angles, dtype=np.float64)
    rat = np.asarray(rates, dtype=np.float64)
    theta, phi = ang[..., 0], ang[..., 1]
    thetadot, phidot = rat[..., 0], rat[..., 1]
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    return np.stack([-st * sp * thetadot + ct * cp * phidot,
                     -ct * thetadot,
                     -st * cp * thetadot - ct * sp * phidot], axis=-1)


def angle_accel_2d(phi, phidot, nddot):
    """Angle acceleration from a pseudo-normal acceleration, 2D.

    Weighted combination of the two branch relations; polynomial in trig,
    so finite for every φ.
    """
    phi = np.asarray(phi, dtype=np.float64)
    phidot = np.asarray(phidot, dtype=np.float64)
    nddot = np.asarray(nddot, dtype=np.float64)
    sp, cp = np.sin(phi), np.cos(phi)
    return cp * (nddot[..., 0] + sp * phidot ** 2) \
        - sp * (nddot[..., 1] + cp * phidot ** 2)


def angle_accel_3d(theta, phi, thetadot, phidot, nddot):
    """Angle accelerations from a pseudo-normal acceleration, 3D.

    Returns (θ̈, φ̈, degenerate) where degenerate marks entries whose branch
    numerators all vanish (φ̈ set to zero there).
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    thetadot = np.asarray(thetadot, dtype=np.float64)
    phidot = np.asarray(phidot, dtype=np.float64)
    nddot = np.asarray(nddot, dtype=np.float64)
    n1, n2, n3 = nddot[..., 0], nddot[..., 1], nddot[..., 2]
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    td2, pd2 = thetadot ** 2, phidot ** 2

    thddot = -(n3 * cp + n1 * sp + (pd2 + td2) * ct) * st + (st * td2 - n2) * ct

    b = n1 * cp - n3 * sp + 2.0 * phidot * thetadot * st
    b1 = n1 * ct + pd2 * ct ** 2 * sp + td2 * sp - n2 * sp * st \
        + 2.0 * phidot * thetadot * cp * ct * st
    b2 = -(n3 * ct + pd2 * cp * ct ** 2 + td2 * cp - n2 * cp * st
           - 2.0 * phidot * thetadot * ct * sp * st)

    denom = b1 ** 2 + b2 ** 2
    degenerate = denom < DEGENERATE_TOL
    safe = np.where(degenerate, 1.0, denom)
    phddot = np.where(degenerate, 0.0, (b1 * b ** 2 * cp + b2 * b ** 2 * sp) / safe)
    return thddot, phddot, degenerate
