"""Packed solver model and mutable state shared by both backends.

The model is immutable after packing: geometry, pair table, correction
matrices, material constants, external load density, and constraint masks.
The state holds everything a time step mutates.  Both are plain float64
arrays so the compiled backend can consume them directly.
"""

from dataclasses import dataclass, field

import numpy as np

from .corrections import build_corrections
from .kernel import kernel_value

STATUS_BUDGET = 0       # step budget exhausted, still healthy
STATUS_CONVERGED = 1    # static convergence criterion met
STATUS_TSTOP = 2        # reached requested end time
STATUS_DIVERGED = 3     # non-finite state
STATUS_INVERTED = 4     # det F <= 0 at a Gauss point
STATUS_POLE = 5         # pseudo-normal hit the rotation-map singularity

STATUS_NAMES = {
    STATUS_BUDGET: "budget",
    STATUS_CONVERGED: "converged",
    STATUS_TSTOP: "t_stop",
    STATUS_DIVERGED: "diverged",
    STATUS_INVERTED: "inverted",
    STATUS_POLE: "pole",
}

HOURGLASS_ALPHA = 0.002
DEFAULT_CFL = 0.6


@dataclass
class PackedModel:
    dim: int
    n: int
    thickness: float
    h: float
    spacing: float
    rho0: float
    young: float
    poisson: float
    lam: float            # Lame lambda
    mu: float             # shear modulus
    bulk: float
    kappa: float          # transverse shear correction factor
    alpha_hg: float
    gauss_z: np.ndarray   # (ng,)
    gauss_w: np.ndarray   # (ng,)
    pos0: np.ndarray      # (n, dim)
    vol0: np.ndarray      # (n,)
    normal0: np.ndarray   # (n, dim)
    q0: np.ndarray        # (n, dim, dim)
    btr: np.ndarray
    btn: np.ndarray
    indptr: np.ndarray    # (n+1,)
    indices: np.ndarray   # (nnz,)
    rows: np.ndarray      # (nnz,) pair owner ids
    r0ij: np.ndarray      # (nnz, dim)
    n0ij: np.ndarray      # (nnz, dim) initial normal differences
    w0: np.ndarray        # (nnz,)
    dwdr0: np.ndarray     # (nnz,)
    gradw0: np.ndarray    # (nnz, dim)
    vj: np.ndarray        # (nnz,)
    w_self: float
    load0: np.ndarray     # (n, dim) external force per unit initial area
    mass: np.ndarray      # (n,) translational mass d rho0 V0
    inertia: np.ndarray   # (n,) rotational inertia (d^3/12) rho0 V0
    vel_mask: np.ndarray  # (n, dim) 1.0 free / 0.0 held
    ang_mask: np.ndarray  # (n, dim-1)
    include_damping: bool = True
    inertia_scale: float = 1.0  # rotary-inertia multiplier (statics only)

    @property
    def sound_speed(self):
        return np.sqrt(self.bulk / self.rho0)


@dataclass
class SolverState:
    t: float
    steps: int
    pos: np.ndarray        # (n, dim)
    vel: np.ndarray
    ang: np.ndarray        # (n, dim-1) rotation angles in the initial frame
    angdot: np.ndarray
    nloc: np.ndarray       # (n, dim) pseudo-normal, initial-local frame
    nlocdot: np.ndarray
    fm: np.ndarray         # (n, dim, dim) mid-surface F, initial-local frame
    fn: np.ndarray         # (n, dim, dim) normal-gradient F, initial-local frame
    fmdot: np.ndarray
    fndot: np.ndarray
    rho: np.ndarray        # (n,)
    acc: np.ndarray        # (n, dim) latest accelerations
    nddot_loc: np.ndarray  # (n, dim)
    angddot: np.ndarray    # (n, dim-1)
    vm: np.ndarray         # (n,) latest mid-surface von Mises stress
    load_factor: float
    degenerate_after_first: int
    relax: np.ndarray      # [ke_prev, ke_prev2, ke_peak, below_count, level_steps]

    def kinetic_energy(self, model):
        trans = 0.5 * np.sum(model.mass * np.einsum("ij,ij->i", self.vel, self.vel))
        rot = 0.5 * np.sum(model.inertia * np.einsum("ij,ij->i",
                                                     self.nlocdot, self.nlocdot))
        return trans + rot


@dataclass
class AdvanceOptions:
    max_steps: int
    t_stop: float = np.inf
    lam_begin: float = 1.0
    lam_end: float = 1.0
    ramp_steps: int = 0
    kinetic_damping: bool = False
    convergence_tol: float = 0.0      # 0 disables the static criterion
    convergence_window: int = 2000
    cfl: float = DEFAULT_CFL
    renormalize: bool = False         # rescale pseudo-normals every step


@dataclass
class AdvanceResult:
    status: int
    steps: int
    t: float
    load_factor: float

    @property
    def status_name(self):
        return STATUS_NAMES[self.status]


def pack_model(cloud, table, corr, material, gauss, load0=None, vel_mask=None,
               ang_mask=None, alpha_hg=HOURGLASS_ALPHA, include_damping=True,
               rot_inertia_scale=1.0):
    """Assemble the immutable solver model.

    ``rot_inertia_scale`` multiplies the rotational inertia uniformly.  The
    static equilibrium is independent of inertia, so quasi-static runs may
    scale it up to relax the transverse-shear stability limit on very thin
    shells (h >> d) without changing the converged answer; dynamic runs must
    keep the physical value 1.
    """
    n, dim = cloud.n, cloud.dim
    rows = table.rows()
    if load0 is None:
        load0 = np.zeros((n, dim))
    if vel_mask is None:
        vel_mask = np.ones((n, dim))
    if ang_mask is None:
        ang_mask = np.ones((n, dim - 1))
    d = cloud.thickness
    return PackedModel(
        dim=dim, n=n, thickness=d, h=cloud.h, spacing=cloud.spacing,
        rho0=material.density, young=material.young, poisson=material.poisson,
        lam=material.lame_lambda, mu=material.shear_modulus,
        bulk=material.bulk_modulus, kappa=material.shear_correction,
        alpha_hg=alpha_hg,
        gauss_z=np.ascontiguousarray(gauss.points),
        gauss_w=np.ascontiguousarray(gauss.weights),
        pos0=cloud.positions.copy(), vol0=cloud.volumes.copy(),
        normal0=cloud.normals.copy(),
        q0=np.ascontiguousarray(corr.q0), btr=np.ascontiguousarray(corr.btr),
        btn=np.ascontiguousarray(corr.btn),
        indptr=table.indptr, indices=table.indices, rows=rows,
        r0ij=table.r0ij, n0ij=cloud.normals[rows] - cloud.normals[table.indices],
        w0=table.w, dwdr0=table.dwdr, gradw0=table.gradw, vj=table.vj,
        w_self=table.w_self,
        load0=np.ascontiguousarray(load0, dtype=np.float64),
        mass=d * material.density * cloud.volumes,
        inertia=(d ** 3 / 12.0) * material.density * cloud.volumes
        * rot_inertia_scale,
        vel_mask=np.ascontiguousarray(vel_mask, dtype=np.float64),
        ang_mask=np.ascontiguousarray(ang_mask, dtype=np.float64),
        include_damping=include_damping,
        inertia_scale=float(rot_inertia_scale),
    )


def initial_state(model):
    n, dim = model.n, model.dim
    nloc = np.zeros((n, dim))
    nloc[:, dim - 1] = 1.0
    fm = np.tile(np.eye(dim), (n, 1, 1))
    return SolverState(
        t=0.0, steps=0,
        pos=model.pos0.copy(), vel=np.zeros((n, dim)),
        ang=np.zeros((n, dim - 1)), angdot=np.zeros((n, dim - 1)),
        nloc=nloc, nlocdot=np.zeros((n, dim)),
        fm=fm, fn=np.zeros((n, dim, dim)),
        fmdot=np.zeros((n, dim, dim)), fndot=np.zeros((n, dim, dim)),
        rho=np.full(n, model.rho0),
        acc=np.zeros((n, dim)), nddot_loc=np.zeros((n, dim)),
        angddot=np.zeros((n, dim - 1)), vm=np.zeros(n),
        load_factor=0.0, degenerate_after_first=0,
        relax=np.zeros(5),
    )
