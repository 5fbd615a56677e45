"""Discrete right-hand sides of the shell momentum balances.

These are the named building blocks of one acceleration evaluation:
gradient/rate assembly, the two pair-sum divergence terms, and the two
hourglass corrections.  The step loop uses the fused backend phases; a test
holds the fused path to the sum of these parts.

Sign convention: the stored pair gradient makes the corrected moment
condition positive-definite, and with that orientation the divergence pair
sums enter the accelerations with a leading minus (matching the weak form;
see the position hourglass term, whose restoring direction fixes the sign).
"""

import numpy as np

from .cloud import segment_sum
from .backend import numpy_backend as _np_backend

assemble_deformation_gradients = _np_backend.assemble_gradients
assemble_rates = _np_backend.rates_phase
stress_coefficients = _np_backend.stress_phase


def momentum_rhs(model, an):
    """Mid-surface acceleration from the stress divergence pair sum.

    an is the per-particle global coefficient matrix J_m N F_m^-T btr
    (from stress_coefficients).  External loads and hourglass terms are
    separate.
    """
    i, j = model.rows, model.indices
    wgrad = model.gradw0 * model.vj[:, None]
    pair = np.einsum("pab,pb->pa", an[i] + an[j], wgrad)
    return -segment_sum(pair, model.indptr) / (model.thickness * model.rho0)


def angular_rhs(model, am, shear_glob):
    """Global pseudo-normal acceleration from moments and transverse shear."""
    i, j = model.rows, model.indices
    wgrad = model.gradw0 * model.vj[:, None]
    pair = np.einsum("pab,pb->pa", am[i] + am[j], wgrad)
    scale = 12.0 / (model.thickness ** 3 * model.rho0)
    return scale * (shear_glob - segment_sum(pair, model.indptr))


def hourglass_position(model, pos, fm_glob):
    """Pairwise correction acceleration suppressing zero-energy position modes."""
    i, j = model.rows, model.indices
    rmid = pos[i] - pos[j]
    rmid_norm = np.linalg.norm(rmid, axis=1)
    rhat = rmid - 0.5 * np.einsum("pab,pb->pa", fm_glob[i] + fm_glob[j],
                                  model.r0ij)
    gamma = np.minimum(2.0 * np.linalg.norm(rhat, axis=1)
                       / np.maximum(rmid_norm, 1e-300), 1.0)
    beta = model.w0 / model.w_self
    coef = (model.alpha_hg * model.mu * beta * gamma * model.dim
            * model.dwdr0 * model.vj)
    return segment_sum(coef[:, None] * rhat, model.indptr) \
        / (model.thickness * model.rho0)


def hourglass_normal(model, nglob, fn_glob):
    """Pairwise correction for zero-energy pseudo-normal modes."""
    i, j = model.rows, model.indices
    nmid = nglob[i] - nglob[j] - model.n0ij
    nhat = nmid - 0.5 * np.einsum("pab,pb->pa", fn_glob[i] + fn_glob[j],
                                  model.r0ij)
    denom = np.linalg.norm(nmid, axis=1)
    gamma = np.where(denom > 1e-300,
                     np.minimum(2.0 * np.linalg.norm(nhat, axis=1)
                                / np.maximum(denom, 1e-300), 1.0),
                     0.0)
    beta = model.w0 / model.w_self
    d = model.thickness
    coef = (model.alpha_hg * model.mu * d * d * beta * gamma * model.dim
            * model.dwdr0 * model.vj)
    scale = 12.0 / (d ** 3 * model.rho0)
    return scale * segment_sum(coef[:, None] * nhat, model.indptr)
