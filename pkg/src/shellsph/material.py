"""Linear elastic constitutive model evaluated through the shell thickness.

All operations here are single-particle reference implementations working on
(dim, dim) tensors; the vectorised/compiled per-step versions live in the
backend modules and are held to these by equivalence tests.

Frames: *initial local* quantities come from the initial normal's rotation
q0, *current local* ones from the current pseudo-normal's rotation q.  The
thickness direction is the last local axis, so plane-stress and transverse
shear always act on index dim-1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvertedConfigurationError


@dataclass(frozen=True)
class LinearElasticMaterial:
    young: float
    poisson: float
    density: float
    shear_correction: float = 5.0 / 6.0

    @property
    def shear_modulus(self):
        return 0.5 * self.young / (1.0 + self.poisson)

    @property
    def lame_lambda(self):
        nu = self.poisson
        return self.young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def bulk_modulus(self):
        return self.young / (3.0 * (1.0 - 2.0 * self.poisson))

    @property
    def sound_speed(self):
        """Reference sound speed sqrt(K / rho0)."""
        return np.sqrt(self.bulk_modulus / self.density)


@dataclass(frozen=True)
class GaussRule:
    """Through-thickness Gauss-Legendre rule on [-d/2, d/2]."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def npoints(self):
        return len(self.points)

    @property
    def mid_index(self):
        """Index of the point nearest the mid-surface (exactly 0 for odd N)."""
        return int(np.argmin(np.abs(self.points)))


def gauss_rule(npoints, thickness):
    x, w = np.polynomial.legendre.leggauss(npoints)
    half = 0.5 * thickness
    return GaussRule(points=x * half, weights=w * half)


def green_strain(f):
    return 0.5 * (f.T @ f - np.eye(len(f)))


def almansi_strain(f):
    finv = np.linalg.inv(f)
    return finv.T @ green_strain(f) @ finv


def to_current_local(eps, q, q0):
    """Rotate an initial-local tensor into the current local frame."""
    r = q @ q0.T
    return r @ eps @ r.T


def plane_stress_correct(eps_local, poisson):
    """Replace the thickness-direction strain by the zero-normal-stress value."""
    out = eps_local.copy()
    dim = len(out)
    trace_in_plane = np.trace(out[: dim - 1, : dim - 1])
    out[dim - 1, dim - 1] = -poisson * trace_in_plane / (1.0 - poisson)
    return out


def cauchy_stress(eps_local, material):
    lam, mu = material.lame_lambda, material.shear_modulus
    return lam * np.trace(eps_local) * np.eye(len(eps_local)) + 2.0 * mu * eps_local


def shear_correct(sigma_local, kappa):
    out = sigma_local.copy()
    dim = len(out)
    for k in range(dim - 1):
        out[k, dim - 1] *= kappa
        out[dim - 1, k] *= kappa
    return out


def von_mises(sigma, poisson):
    """Von Mises stress; 2D states are embedded with the transverse closure
    sigma_yy = nu (sigma_xx + sigma_zz)."""
    if len(sigma) == 2:
        full = np.zeros((3, 3))
        full[0, 0] = sigma[0, 0]
        full[2, 2] = sigma[1, 1]
        full[0, 2] = full[2, 0] = 0.5 * (sigma[0, 1] + sigma[1, 0])
        full[1, 1] = poisson * (sigma[0, 0] + sigma[1, 1])
        sigma = full
    dev = sigma - np.trace(sigma) / 3.0 * np.eye(3)
    return np.sqrt(1.5 * np.einsum("ij,ij->", dev, dev))


def damping_stress(fl, fldot, jm, q, q0, material, h, thickness):
    """Kelvin-Voigt numerical damping stress in the current local frame."""
    dim = len(fl)
    edot = 0.5 * (fldot.T @ fl + fl.T @ fldot)
    rho = material.density / jm
    rc = np.sqrt(material.bulk_modulus * rho)
    s = min(h, thickness)
    gamma = np.full(dim, 0.5 * rc * h)
    gamma[dim - 1] = 0.5 * rc * s
    core = fl @ edot @ np.diag(gamma) @ fl.T
    r = q @ q0.T
    return (r @ core @ r.T) / jm


@dataclass
class Resultants:
    """Through-thickness stress resultants in the current local frame."""

    force: np.ndarray       # (dim, dim), thickness column zeroed
    moment: np.ndarray      # (dim, dim), thickness column zeroed
    shear: np.ndarray       # (dim,) transverse shear vector
    jacobian: float         # det F_m (initial local frame)
    vm_mid: float           # von Mises stress at the mid-surface Gauss point


def resultants(fm, fn, fmdot, fndot, q, q0, material, rule, h,
               thickness, include_damping=True):
    """Integrate the corrected stress through the thickness of one particle."""
    dim = len(fm)
    jm = np.linalg.det(fm)
    force = np.zeros((dim, dim))
    moment = np.zeros((dim, dim))
    vm_mid = 0.0
    for idx in range(rule.npoints):
        z, wz = rule.points[idx], rule.weights[idx]
        fl = fm + z * fn
        if np.linalg.det(fl) <= 0.0:
            raise InvertedConfigurationError(
                f"non-positive det F at through-thickness offset {z:g}")
        eps = to_current_local(almansi_strain(fl), q, q0)
        eps = plane_stress_correct(eps, material.poisson)
        sig = cauchy_stress(eps, material)
        sig = shear_correct(sig, material.shear_correction)
        if include_damping:
            fldot = fmdot + z * fndot
            sig = sig + damping_stress(fl, fldot, jm, q, q0, material, h, thickness)
        force += sig * wz
        moment += sig * (z * wz)
        if idx == rule.mid_index:
            vm_mid = von_mises(sig, material.poisson)
    shear = np.zeros(dim)
    shear[: dim - 1] = -force[: dim - 1, dim - 1]
    force = force.copy()
    force[:, dim - 1] = 0.0
    moment = moment.copy()
    moment[:, dim - 1] = 0.0
    return Resultants(force=force, moment=moment, shear=shear,
                      jacobian=jm, vm_mid=vm_mid)
