"""Initial-configuration correction matrices and local frames.

Every particle carries a rotation q0 into its initial local frame (third
axis = initial normal), a position correction matrix btr restoring
first-order consistency of mid-surface gradients, and a normal correction
matrix btn doing the same for pseudo-normal gradients on curved geometry.
"""

from dataclasses import dataclass

import numpy as np

from .cloud import corrected_strong_gradient, segment_sum
from .errors import DegenerateNormalError, IllConditionedSupportError

COND_LIMIT = 1e8
NORMAL_POLE_TOL = 1e-8


def reducing_matrix(dim):
    """Projection onto the in-plane components of the local frame."""
    g = np.zeros((dim, dim - 1))
    for k in range(dim - 1):
        g[k, k] = 1.0
    return g


def transformation_matrix(normal, dim=None):
    """Rotation mapping global vectors into the frame of `normal`.

    The last row is the normal itself, so Q @ normal = e_last.  Accepts a
    single normal (dim,) or a batch (n, dim).  The 3D map is singular for
    normals close to -e_z; those must be avoided by orienting the geometry.
    """
    nrm = np.asarray(normal, dtype=np.float64)
    single = nrm.ndim == 1
    if single:
        nrm = nrm[None, :]
    if dim is None:
        dim = nrm.shape[1]

    if dim == 2:
        n1, n3 = nrm[:, 0], nrm[:, 1]
        q = np.empty((len(nrm), 2, 2))
        q[:, 0, 0] = n3
        q[:, 0, 1] = -n1
        q[:, 1, 0] = n1
        q[:, 1, 1] = n3
    else:
        n1, n2, n3 = nrm[:, 0], nrm[:, 1], nrm[:, 2]
        if np.any(n3 <= -1.0 + NORMAL_POLE_TOL):
            bad = np.nonzero(n3 <= -1.0 + NORMAL_POLE_TOL)[0]
            raise DegenerateNormalError(
                f"normals at indices {bad[:5].tolist()} point too close to -e_z; "
                "re-orient the geometry")
        denom = 1.0 + n3
        q = np.empty((len(nrm), 3, 3))
        q[:, 0, 0] = n3 + n2 * n2 / denom
        q[:, 0, 1] = -n1 * n2 / denom
        q[:, 0, 2] = -n1
        q[:, 1, 0] = -n1 * n2 / denom
        q[:, 1, 1] = n3 + n1 * n1 / denom
        q[:, 1, 2] = -n2
        q[:, 2, 0] = n1
        q[:, 2, 1] = n2
        q[:, 2, 2] = n3
    return q[0] if single else q


@dataclass
class CorrectionSet:
    q0: np.ndarray          # (n, dim, dim) initial local frames
    btr: np.ndarray         # (n, dim, dim) position correction matrices
    btn: np.ndarray         # (n, dim, dim) normal correction matrices
    curvatures: np.ndarray  # (n, dim-1) initial principal curvatures 1/R


def _reduced_local(mats, q0, dim):
    local = np.einsum("nab,nbc,ndc->nad", q0, mats, q0)
    return local[:, : dim - 1, : dim - 1]


def _embed_local(reduced, q0, dim):
    full = np.zeros((len(reduced), dim, dim))
    full[:, : dim - 1, : dim - 1] = reduced
    return np.einsum("nba,nbc,ncd->nad", q0, full, q0)


def position_correction_matrices(cloud, table, q0=None):
    """Solve the reduced moment condition for every particle."""
    dim = cloud.dim
    if q0 is None:
        q0 = transformation_matrix(cloud.normals, dim)
    outer = table.r0ij[:, :, None] * (table.gradw * table.vj[:, None])[:, None, :]
    moments = segment_sum(outer, table.indptr)
    ared = _reduced_local(moments, q0, dim)

    svals = np.linalg.svd(ared, compute_uv=False)
    ill = (svals[:, -1] < 1e-12) | (svals[:, 0] > COND_LIMIT * svals[:, -1])
    if np.any(ill):
        bad = np.nonzero(ill)[0]
        raise IllConditionedSupportError(
            f"moment matrix condition number exceeds {COND_LIMIT:.0e} at "
            f"particles {bad[:10].tolist()} (deficient neighbourhoods?)")
    bred = np.linalg.inv(ared)
    return _embed_local(bred, q0, dim)


def curvature_radii(cloud, table, btr, q0=None):
    """Signed initial principal curvatures from the corrected normal gradient.

    Positive where the surface curves away from the normal (outward normals
    on a convex body give +1/R).
    """
    dim = cloud.dim
    if q0 is None:
        q0 = transformation_matrix(cloud.normals, dim)
    rows = table.rows()
    dn = cloud.normals[rows] - cloud.normals[table.indices]
    grad = corrected_strong_gradient(dn, table, btr)
    local = np.einsum("nab,nbc,ndc->nad", q0, grad, q0)
    return np.stack([local[:, k, k] for k in range(dim - 1)], axis=1)


def normal_correction_matrices(cloud, table, curvatures, btr, q0=None):
    """Correction matrices for pseudo-normal gradients.

    The defining system uses the normal-difference moment matrix, which is
    singular along any straight (zero-curvature) surface direction.  Flat
    particles fall back to btr outright; partially flat ones are solved by
    SVD pseudo-inverse with the null-space directions filled from btr, which
    reproduces the analytic matrix on cylinders.
    """
    dim = cloud.dim
    if q0 is None:
        q0 = transformation_matrix(cloud.normals, dim)
    rows = table.rows()
    dn = cloud.normals[rows] - cloud.normals[table.indices]
    outer = dn[:, :, None] * (table.gradw * table.vj[:, None])[:, None, :]
    moments = segment_sum(outer, table.indptr)

    frob = np.sqrt(np.einsum("nab,nab->n", moments, moments))
    flat = frob < 1e-6 / table.h

    ared = _reduced_local(moments, q0, dim)
    bred_r = _reduced_local(btr, q0, dim)
    kmat = np.zeros_like(ared)
    for k in range(dim - 1):
        kmat[:, k, k] = curvatures[:, k]

    u, s, vt = np.linalg.svd(ared)
    tol = np.maximum(1e-6 / table.h, s[:, :1] * 1e-12)
    keep = s > tol
    sinv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    # least-squares part: V diag(sinv) U^T K
    bred = np.einsum("nmi,nm,nkm,nkl->nil", vt, sinv, u, kmat)
    # null-space fill from the position correction: V diag(1-keep) V^T btr_red
    nullmask = (~keep).astype(np.float64)
    bred += np.einsum("nmi,nm,nmj,njl->nil", vt, nullmask, vt, bred_r)

    btn = _embed_local(bred, q0, dim)
    btn[flat] = btr[flat]
    return btn


def build_corrections(cloud, table):
    q0 = transformation_matrix(cloud.normals, cloud.dim)
    btr = position_correction_matrices(cloud, table, q0)
    curv = curvature_radii(cloud, table, btr, q0)
    btn = normal_correction_matrices(cloud, table, curv, btr, q0)
    return CorrectionSet(q0=q0, btr=btr, btn=btn, curvatures=curv)
