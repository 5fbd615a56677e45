"""Time stepping: step-size control, constraints, and run drivers.

The Solver owns the packed model and mutable state and drives whichever
backend is selected.  Dynamic runs advance to a stop time while sampling
probes on a fixed step cadence; quasi-static runs walk a staircase of load
levels with kinetic damping until the kinetic energy stays below a small
fraction of its peak for a full window of steps.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import get_backend, numpy_backend
from .cloud import build_neighborhood
from .corrections import build_corrections
from .errors import (ConfigError, DegenerateNormalError, DivergedError,
                     InvertedConfigurationError)
from .material import gauss_rule
from .state import (DEFAULT_CFL, HOURGLASS_ALPHA, STATUS_BUDGET,
                    STATUS_CONVERGED, STATUS_DIVERGED, STATUS_INVERTED,
                    STATUS_POLE, STATUS_TSTOP, AdvanceOptions, initial_state,
                    pack_model)


@dataclass
class StepControl:
    """The stable-step candidates and the CFL-scaled result."""
    cfl: float
    dt_acoustic: float     # translational: support size vs speed/acceleration
    dt_rotation: float     # angular rates and accelerations
    dt_bending: float      # thickness/material closed form
    dt_damping: float = np.inf   # explicit limit of the viscous stresses

    @property
    def dt(self):
        return self.cfl * min(self.dt_acoustic, self.dt_rotation,
                              self.dt_bending, self.dt_damping)


def step_control(model, state, cfl=DEFAULT_CFL):
    """Candidate breakdown of the stable time step (diagnostic form)."""
    c = model.sound_speed
    h, d = model.h, model.thickness
    vmax = float(np.sqrt(np.max(np.einsum("ij,ij->i", state.vel, state.vel))))
    amax = float(np.sqrt(np.max(np.einsum("ij,ij->i", state.acc, state.acc))))
    wmax = float(np.sqrt(np.max(np.einsum("ij,ij->i", state.angdot,
                                          state.angdot))))
    almax = float(np.sqrt(np.max(np.einsum("ij,ij->i", state.angddot,
                                           state.angddot))))
    if not all(np.isfinite(x) for x in (vmax, amax, wmax, almax)):
        raise DivergedError("non-finite velocity or acceleration extrema")

    dt1 = h / (c + vmax)
    if amax > 0.0:
        dt1 = min(dt1, np.sqrt(h / amax))
    dt2 = 1.0 / (c + wmax)
    if almax > 0.0:
        dt2 = min(dt2, np.sqrt(1.0 / almax))
    dt3 = bending_dt(model.young, model.poisson, model.rho0, h, d,
                     model.inertia_scale)
    dt4 = (damping_dt(c, h, d, model.spacing, model.inertia_scale)
           if model.include_damping else np.inf)
    return StepControl(cfl, dt1, dt2, dt3, dt4)


def bending_dt(young, poisson, density, h, d, inertia_scale=1.0):
    """Closed-form step limit from thickness and material properties.

    The (h/d)^2 term is the transverse-shear stiffness acting on the rotary
    inertia; scaling that inertia by ``inertia_scale`` slows the associated
    frequency and relaxes this limit accordingly.
    """
    return h * np.sqrt(density * (1.0 - poisson ** 2) / young) / np.sqrt(
        2.0 + (np.pi ** 2 / 12.0) * (1.0 - poisson)
        * (1.0 + 1.5 * (h / d) ** 2 / inertia_scale))


def damping_dt(sound_speed, h, d, spacing, inertia_scale=1.0):
    """Explicit-step limit of the velocity-proportional viscous stresses.

    The transverse-shear viscous resultant relaxes the pseudo-normal rate
    at rate 3*c*s/d**2 (s = min(h, d)), and in-plane viscosity relaxes the
    shortest resolved wavelength at rate ~ 3*c*h/spacing**2.  An explicit
    update of a relaxation rate ``lam`` needs ``lam*dt <= 2``; the CFL
    factor applied on top provides the safety margin.  Scaled rotary inertia
    slows the shear channel proportionally.
    """
    lam = 3.0 * sound_speed * (min(h, d) / d ** 2 / inertia_scale
                               + h / spacing ** 2)
    return 2.0 / lam


def compute_dt(model, state, cfl=DEFAULT_CFL):
    return step_control(model, state, cfl).dt


class ConstraintSet:
    """Multiplicative masks holding velocity / angular-rate components.

    A zero entry forces the component to stay at its prescribed (initial)
    value: rates are zeroed after every kick, and positions/angles of held
    components are pinned back after every drift.
    """

    def __init__(self, n, dim):
        self.n, self.dim = n, dim
        self.vel_mask = np.ones((n, dim))
        self.ang_mask = np.ones((n, dim - 1))

    def clamp(self, ids):
        """Hold every degree of freedom of the given particles."""
        self.vel_mask[ids] = 0.0
        self.ang_mask[ids] = 0.0
        return self

    def hold_translation(self, ids, components=None):
        if components is None:
            self.vel_mask[ids] = 0.0
        else:
            for c in components:
                self.vel_mask[ids, c] = 0.0
        return self

    def hold_rotation(self, ids, components=None):
        if components is None:
            self.ang_mask[ids] = 0.0
        else:
            for c in components:
                self.ang_mask[ids, c] = 0.0
        return self


def apply_constraints(state, constraints):
    """Force masked velocity / angular-rate components to zero."""
    state.vel *= constraints.vel_mask
    state.angdot *= constraints.ang_mask
    return state


@dataclass
class DynamicSchedule:
    t_end: float
    record_every: int = 8          # steps between probe samples
    max_steps: int = 50_000_000
    load_factor: float = 1.0
    cfl: float = DEFAULT_CFL


@dataclass
class StaticSchedule:
    load_levels: tuple             # increasing load factors, e.g. (0.25, 0.5, 1.0)
    max_steps_per_level: int = 200_000
    ramp_fraction: float = 0.2
    convergence_tol: float = 1e-8
    convergence_window: int = 2000
    cfl: float = DEFAULT_CFL
    chunk: int = 2000


@dataclass
class ProbeSeries:
    """Sampled scalar channels over a run."""
    times: np.ndarray
    channels: dict
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def column(self, name):
        return self.channels[name]


class _Recorder:
    def __init__(self, probes):
        self.probes = probes
        self.times = []
        self.rows = {name: [] for name in probes}

    def sample(self, model, state, extra=None):
        self.times.append(state.t)
        for name, fn in self.probes.items():
            self.rows[name].append(float(fn(model, state)))
        if extra:
            for name, value in extra.items():
                self.rows.setdefault(name, []).append(float(value))

    def series(self, meta):
        channels = {k: np.asarray(v) for k, v in self.rows.items()}
        return ProbeSeries(np.asarray(self.times), channels, meta)


class Solver:
    """Owns model + state and runs the explicit loop on a backend."""

    def __init__(self, cloud, material, *, gauss_points=3, constraints=None,
                 load0=None, alpha_hourglass=HOURGLASS_ALPHA,
                 include_damping=True, backend=None, renormalize=False,
                 rot_inertia_scale=1.0):
        self.cloud = cloud
        self.material = material
        self.table = build_neighborhood(cloud)
        self.corrections = build_corrections(cloud, self.table)
        gauss = gauss_rule(gauss_points, cloud.thickness)
        if constraints is None:
            constraints = ConstraintSet(cloud.n, cloud.dim)
        self.constraints = constraints
        self.model = pack_model(cloud, self.table, self.corrections, material,
                                gauss, load0=load0,
                                vel_mask=constraints.vel_mask,
                                ang_mask=constraints.ang_mask,
                                alpha_hg=alpha_hourglass,
                                include_damping=include_damping,
                                rot_inertia_scale=rot_inertia_scale)
        self.backend = get_backend(backend)
        self.state = initial_state(self.model)
        self.renormalize = renormalize
        self.max_normal_drift = 0.0

    # ------------------------------------------------------------- set-up

    def set_velocity(self, vel):
        """Set the initial velocity field and make the rates consistent."""
        self.state.vel = np.asarray(vel, dtype=np.float64) \
            * self.model.vel_mask
        self._sync_rates()

    def _sync_rates(self):
        self.state.fmdot, self.state.fndot = numpy_backend.rates_phase(
            self.model, self.state.vel, self.state.nlocdot)

    # ------------------------------------------------------------ stepping

    def compute_dt(self, cfl=DEFAULT_CFL):
        return compute_dt(self.model, self.state, cfl)

    def step(self, dt=None, load_factor=1.0, cfl=DEFAULT_CFL):
        """Advance a single step (diagnostic path; runs use the drivers)."""
        if dt is None:
            dt = self.compute_dt(cfl)
        err = self.backend.single_step(self.model, self.state, dt,
                                       load_factor)
        self._raise_on_error(err_to_status(err), self.state.steps)
        if not np.all(np.isfinite(self.state.acc)):
            bad = int(np.argmax(~np.isfinite(self.state.acc).all(axis=1)))
            raise DivergedError(
                f"non-finite acceleration at step {self.state.steps}, "
                f"particle {bad}")
        self._monitor()
        return self.state

    def _monitor(self):
        drift = float(np.abs(np.linalg.norm(self.state.nloc, axis=1)
                             - 1.0).max())
        if drift > self.max_normal_drift:
            self.max_normal_drift = drift
        if self.renormalize:
            self.state.nloc /= np.linalg.norm(self.state.nloc, axis=1,
                                              keepdims=True)

    def _raise_on_error(self, status, steps):
        if status == STATUS_DIVERGED:
            raise DivergedError(f"kinetic energy diverged at step {steps}")
        if status == STATUS_INVERTED:
            raise InvertedConfigurationError(
                f"non-positive deformation jacobian at step {steps}")
        if status == STATUS_POLE:
            raise DegenerateNormalError(
                f"pseudo-normal reached the frame pole at step {steps}")

    # ---------------------------------------------------------------- runs

    def run(self, schedule, probes=None):
        if isinstance(schedule, DynamicSchedule):
            return self.run_dynamic(schedule, probes)
        if isinstance(schedule, StaticSchedule):
            return self.run_static(schedule, probes)
        raise ConfigError(f"unknown schedule type {type(schedule).__name__}")

    def run_dynamic(self, schedule, probes=None, on_sample=None):
        probes = probes or {}
        if self.state.steps == 0 and np.any(self.state.vel != 0.0):
            self._sync_rates()
        rec = _Recorder(probes)
        rec.sample(self.model, self.state)
        if on_sample is not None:
            on_sample(self.model, self.state)
        while (self.state.t < schedule.t_end
               and self.state.steps < schedule.max_steps):
            chunk = min(schedule.record_every,
                        schedule.max_steps - self.state.steps)
            opts = AdvanceOptions(
                max_steps=chunk, t_stop=schedule.t_end,
                lam_begin=schedule.load_factor, lam_end=schedule.load_factor,
                cfl=schedule.cfl, renormalize=self.renormalize)
            result = self.backend.advance(self.model, self.state, opts)
            self._raise_on_error(result.status, result.steps)
            self._monitor()
            rec.sample(self.model, self.state)
            if on_sample is not None:
                on_sample(self.model, self.state)
            if result.status == STATUS_TSTOP:
                break
        return rec.series({
            "mode": "dynamic", "steps": self.state.steps,
            "max_normal_drift": self.max_normal_drift,
        })

    def run_static(self, schedule, probes=None, on_level=None):
        probes = probes or {}
        rec = _Recorder(probes)
        levels_meta = []
        lam_prev = 0.0
        for lam in schedule.load_levels:
            self.state.relax[2:5] = 0.0        # peak, below-count, level step
            budget = schedule.max_steps_per_level
            ramp = int(schedule.ramp_fraction * budget)
            status = STATUS_BUDGET
            while budget > 0:
                opts = AdvanceOptions(
                    max_steps=min(schedule.chunk, budget),
                    lam_begin=lam_prev, lam_end=lam, ramp_steps=ramp,
                    kinetic_damping=True,
                    convergence_tol=schedule.convergence_tol,
                    convergence_window=schedule.convergence_window,
                    cfl=schedule.cfl, renormalize=self.renormalize)
                result = self.backend.advance(self.model, self.state, opts)
                self._raise_on_error(result.status, result.steps)
                self._monitor()
                budget -= opts.max_steps
                if result.status == STATUS_CONVERGED:
                    status = STATUS_CONVERGED
                    break
            converged = status == STATUS_CONVERGED
            levels_meta.append({
                "load_factor": lam,
                "steps": int(self.state.relax[4]),
                "converged": converged,
                "ke_final": float(self.state.kinetic_energy(self.model)),
                "ke_peak": float(self.state.relax[2]),
            })
            rec.sample(self.model, self.state,
                       extra={"load_factor": lam,
                              "converged": 1.0 if converged else 0.0})
            if on_level is not None:
                on_level(self.model, self.state, levels_meta[-1])
            lam_prev = lam
        return rec.series({
            "mode": "static", "levels": levels_meta,
            "steps": self.state.steps,
            "all_converged": all(m["converged"] for m in levels_meta),
            "max_normal_drift": self.max_normal_drift,
        })


def err_to_status(err):
    return {numpy_backend.ERR_NONE: STATUS_BUDGET,
            numpy_backend.ERR_INVERTED: STATUS_INVERTED,
            numpy_backend.ERR_POLE: STATUS_POLE}[err]
