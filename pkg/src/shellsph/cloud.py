"""Particle cloud container and total Lagrangian neighbourhood table.

The neighbourhood (pair list, kernel values, kernel gradients) is built once
from the initial configuration and never rebuilt.  Pair kernel gradients are
stored as

    gradw_ij = -(dW/dr) * (r_i - r_j) / |r_i - r_j|

which is the orientation that makes the corrected moment condition
(sum_j r_ij x gradw_ij V_j) @ btr = I come out with +I.
"""

from dataclasses import dataclass, field

import numpy as np

from .kernel import SMOOTHING_RATIO, kernel_radial_derivative, kernel_value, support_radius


@dataclass
class ShellParticleCloud:
    """One particle layer on the shell mid-surface (initial configuration).

    positions : (n, dim) mid-surface points
    normals   : (n, dim) unit normals
    volumes   : (n,) reduced volumes (length per particle in 2D, area in 3D)
    thickness : shell thickness d
    spacing   : representative particle spacing dp
    h         : smoothing length (default 1.15 dp)
    """

    positions: np.ndarray
    normals: np.ndarray
    volumes: np.ndarray
    thickness: float
    spacing: float
    h: float = 0.0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)
        self.volumes = np.ascontiguousarray(self.volumes, dtype=np.float64)
        if self.h == 0.0:
            self.h = SMOOTHING_RATIO * self.spacing
        if self.positions.ndim != 2 or self.positions.shape[1] not in (2, 3):
            raise ValueError("positions must be (n, 2) or (n, 3)")
        if self.normals.shape != self.positions.shape:
            raise ValueError("normals must match positions in shape")
        if self.volumes.shape != (len(self.positions),):
            raise ValueError("volumes must be (n,)")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("normals must be unit vectors")
        if np.any(self.volumes <= 0.0):
            raise ValueError("volumes must be positive")
        if self.thickness <= 0.0 or self.spacing <= 0.0:
            raise ValueError("thickness and spacing must be positive")

    @property
    def n(self):
        return len(self.positions)

    @property
    def dim(self):
        return self.positions.shape[1]


@dataclass
class NeighborhoodTable:
    """CSR pair table over the initial configuration.

    Both directed copies of every pair are stored, so the neighbour sum of
    particle i is fully described by indices[indptr[i]:indptr[i+1]].
    """

    indptr: np.ndarray     # (n+1,) int64
    indices: np.ndarray    # (nnz,) int64, neighbour ids j
    r0ij: np.ndarray       # (nnz, dim) r0_i - r0_j
    rnorm: np.ndarray      # (nnz,) |r0_ij|
    w: np.ndarray          # (nnz,) kernel values
    dwdr: np.ndarray       # (nnz,) radial derivative dW/dr (<= 0)
    gradw: np.ndarray      # (nnz, dim) stored gradient, see module docstring
    vj: np.ndarray         # (nnz,) neighbour reduced volume V0_j
    w_self: float          # kernel value at zero separation
    h: float

    @property
    def n(self):
        return len(self.indptr) - 1

    @property
    def npairs(self):
        return len(self.indices)

    def neighbor_counts(self):
        return np.diff(self.indptr)

    def rows(self):
        """Pair owner index i for every CSR entry."""
        return np.repeat(np.arange(self.n), self.neighbor_counts())


def _cell_index(positions, cell):
    return np.floor(positions / cell).astype(np.int64)


def build_neighborhood(cloud):
    """Find all pairs within the 2h support and tabulate kernel data.

    Uses a uniform background grid with cell size 2h, so the search stays
    O(n) for the node lattices the case builders produce.
    """
    pos = cloud.positions
    n, dim = pos.shape
    h = cloud.h
    radius = support_radius(h)

    cells = _cell_index(pos, radius)
    buckets = {}
    for i in range(n):
        buckets.setdefault(tuple(cells[i]), []).append(i)
    for key in buckets:
        buckets[key] = np.asarray(buckets[key], dtype=np.int64)

    if dim == 2:
        offsets = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    else:
        offsets = [(dx, dy, dz)
                   for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]

    counts = np.zeros(n, dtype=np.int64)
    found = []
    for i in range(n):
        ci = cells[i]
        cand = [buckets[key] for off in offsets
                if (key := tuple(ci + np.asarray(off))) in buckets]
        cand = np.concatenate(cand)
        d = pos[cand] - pos[i]
        r2 = np.einsum("ij,ij->i", d, d)
        keep = (r2 < radius * radius) & (cand != i)
        js = cand[keep]
        order = np.argsort(js)
        found.append(js[order])
        counts[i] = len(js)

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.concatenate(found) if found else np.zeros(0, dtype=np.int64)

    rows = np.repeat(np.arange(n), counts)
    r0ij = pos[rows] - pos[indices]
    rnorm = np.linalg.norm(r0ij, axis=1)
    q = rnorm / h
    w = kernel_value(q, h, dim)
    dwdr = kernel_radial_derivative(q, h, dim)
    gradw = (-dwdr / rnorm)[:, None] * r0ij
    vj = cloud.volumes[indices]

    return NeighborhoodTable(
        indptr=indptr, indices=indices, r0ij=r0ij, rnorm=rnorm,
        w=w, dwdr=dwdr, gradw=gradw, vj=vj,
        w_self=float(kernel_value(0.0, h, dim)), h=h,
    )


def segment_sum(values, indptr):
    """Sum CSR pair values into per-particle rows.  values is (nnz, ...)."""
    n = len(indptr) - 1
    out = np.zeros((n,) + values.shape[1:], dtype=np.float64)
    nonempty = indptr[:-1] != indptr[1:]
    acc = np.add.reduceat(values, indptr[:-1][nonempty], axis=0)
    out[nonempty] = acc
    return out


def corrected_strong_gradient(field_pair_differences, table, btilde):
    """First-order consistent strong-form gradient.

    field_pair_differences : (nnz,) or (nnz, m) pair differences f_i - f_j
    btilde                 : (n, dim, dim) correction matrices
    returns (n, dim) for scalar input, (n, m, dim) for vector input.
    """
    f = np.asarray(field_pair_differences, dtype=np.float64)
    scalar = f.ndim == 1
    if scalar:
        f = f[:, None]
    outer = f[:, :, None] * (table.gradw * table.vj[:, None])[:, None, :]
    moments = segment_sum(outer, table.indptr)
    grad = np.einsum("nmd,nde->nme", moments, btilde)
    return grad[:, 0, :] if scalar else grad
