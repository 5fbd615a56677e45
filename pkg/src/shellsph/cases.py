"""Benchmark case catalogue, configuration resolution, and run driver.

Each case builds a mid-surface particle lattice with analytic normals,
attaches constraints, a load program, and named probe channels resolved
by nearest-particle lookup, and selects a dynamic or quasi-static run
schedule.  ``run_case`` drives the solver and collects probe series and
particle snapshots for the output writers.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import reference_data as refdata
from .cloud import ShellParticleCloud
from .errors import ConfigError, InsufficientPeaksError, ProbeDistanceError
from .integrator import (ConstraintSet, DynamicSchedule, Solver,
                         StaticSchedule)
from .material import LinearElasticMaterial
from .state import DEFAULT_CFL, HOURGLASS_ALPHA

#: First clamped-free bending mode: k a = 1.875 solves cos(ka)cosh(ka) = -1.
FIRST_MODE_KA = 1.875

#: Rows of held particles behind a clamped edge: the kernel support reaches
#: 2 h = 2.3 dp past the clamp line, so three rows close every stencil.
CLAMP_ROWS = 3


# =========================================================================
# Configuration
# =========================================================================

@dataclass(frozen=True)
class CaseConfig:
    """A case id plus its fully resolved key-value parameters."""
    case: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)


@dataclass(frozen=True)
class CaseDef:
    name: str
    kind: str                 # "dynamic" or "static"
    builder: callable
    defaults: dict
    description: str


_COMMON_DEFAULTS = {
    "gauss_points": 3,
    "cfl": DEFAULT_CFL,
    "hourglass_alpha": HOURGLASS_ALPHA,
    "include_damping": True,
    "renormalize": False,
    "backend": "auto",
    "record_every_steps": 8,
    "snapshot_every_records": 200,
}

_DYNAMIC_DEFAULTS = {
    "t_end_s": 0.0,            # 0 -> case chooses from its own time scale
    "max_steps": 50_000_000,
}

_STATIC_DEFAULTS = {
    "load_levels": 4,
    "load_fraction_max": 1.0,
    "max_steps_per_level": 400_000,
    "ramp_fraction": 0.15,
    "convergence_tol": 1e-8,
    "convergence_window": 300,
    # Rotary-inertia multiplier for quasi-statics (equilibrium is inertia
    # independent).  <= 0 selects the automatic value 1.5*(h/d)^2 that lifts
    # the transverse-shear frequency of h >> d shells into the acoustic band.
    "rot_inertia_scale": 0.0,
    # Quasi-statics converge through kinetic damping; the viscous stresses
    # only throttle the stable step, so they default off here.
    "include_damping": False,
}


def _merge(*dicts):
    out = {}
    for d in dicts:
        out.update(d)
    return out


def parse_config_text(text):
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _coerce(key, value, template):
    """Coerce a string (or already-typed) value to the default's type."""
    if isinstance(template, bool):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(template, int):
        try:
            as_float = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        if as_float != int(as_float):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(as_float)
    if isinstance(template, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
    return str(value)


def resolve_config(case, file_values=None, flag_values=None):
    """Layer case defaults <- config file <- CLI flags into a CaseConfig."""
    if case not in CASES:
        known = ", ".join(CASES)
        raise ConfigError(f"unknown case {case!r}; known cases: {known}")
    defaults = dict(CASES[case].defaults)
    resolved = dict(defaults)
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            if key not in defaults:
                raise ConfigError(
                    f"unknown configuration key {key!r} for case {case}")
            resolved[key] = _coerce(key, value, defaults[key])
    _validate_config(case, resolved)
    return CaseConfig(case, resolved)


def _validate_config(case, values):
    for key, value in values.items():
        if key.endswith(("_m", "_pa", "_kg_m3", "_m_s2")) and value <= 0.0:
            raise ConfigError(f"{key} must be positive, got {value}")
    if values["resolution"] < 4:
        raise ConfigError("resolution must place at least 4 particles "
                          "across the shortest loaded span")
    if "poisson" in values and not -1.0 < values["poisson"] < 0.5:
        raise ConfigError(f"poisson must lie in (-1, 0.5), "
                          f"got {values['poisson']}")
    bc = values.get("bc")
    if bc is not None and bc not in ("ss0", "ss1", "ss3"):
        raise ConfigError(f"bc must be one of ss0, ss1, ss3, got {bc!r}")


# =========================================================================
# Built-case containers
# =========================================================================

@dataclass
class LoadProgram:
    """External load at full scale plus the program that applies it."""
    kind: str                        # initial-velocity | pressure-step |
    #                                  point-force-ramp | gravity
    load0: np.ndarray = None         # (n, dim) force per unit initial area
    initial_velocity: np.ndarray = None


@dataclass
class ProbeChannel:
    name: str
    particle: int
    fn: callable
    description: str = ""


@dataclass
class BuiltCase:
    cloud: ShellParticleCloud
    constraints: ConstraintSet
    loads: LoadProgram
    probes: dict
    schedule: object
    material: LinearElasticMaterial
    config: CaseConfig
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        # (cloud, constraints, loads, probes) tuple contract
        return iter((self.cloud, self.constraints, self.loads, self.probes))


def nearest_particle(cloud, point, label="probe"):
    """Index of the particle nearest ``point``; error beyond one spacing."""
    delta = cloud.positions - np.asarray(point, dtype=np.float64)
    dist2 = np.einsum("ij,ij->i", delta, delta)
    idx = int(np.argmin(dist2))
    dist = math.sqrt(dist2[idx])
    if dist > cloud.spacing:
        raise ProbeDistanceError(
            f"{label} point {tuple(np.asarray(point))} lies {dist:.4g} m "
            f"from the nearest particle (> spacing {cloud.spacing:.4g} m)")
    return idx


def _displacement_probe(idx, component, sign=1.0):
    def fn(model, state):
        return sign * (state.pos[idx, component] - model.pos0[idx, component])
    return fn


def _position_probe(idx, component):
    def fn(model, state):
        return state.pos[idx, component]
    return fn


def _static_levels(count, max_fraction):
    return tuple((i + 1) * max_fraction / count for i in range(count))


def _static_schedule(cfg):
    return StaticSchedule(
        load_levels=_static_levels(cfg["load_levels"],
                                   cfg["load_fraction_max"]),
        max_steps_per_level=cfg["max_steps_per_level"],
        ramp_fraction=cfg["ramp_fraction"],
        convergence_tol=cfg["convergence_tol"],
        convergence_window=cfg["convergence_window"],
        cfl=cfg["cfl"])


# =========================================================================
# Mode shape and period helpers
# =========================================================================

def first_mode_shape(x, width):
    """First clamped-free mode deflection shape (unnormalised)."""
    k = FIRST_MODE_KA / width
    ka = FIRST_MODE_KA
    return ((math.sin(ka) + math.sinh(ka))
            * (np.cos(k * x) - np.cosh(k * x))
            - (math.cos(ka) + math.cosh(ka))
            * (np.sin(k * x) - np.sinh(k * x)))


def theoretical_period(material, thickness, width):
    """Small-amplitude first-mode period of the clamped-free strip."""
    k = FIRST_MODE_KA / width
    omega2 = (material.young * thickness ** 2 * k ** 4
              / (12.0 * material.density * (1.0 - material.poisson ** 2)))
    return 2.0 * math.pi / math.sqrt(omega2)


PEAK_HEIGHT_GATE = 0.05  # siblings within 5% of a segment's max count as one


def peak_times(series, channel):
    """Times of one peak per oscillation cycle, refined by quadratic fit.

    The channel is segmented at crossings of its mean so that each excursion
    above the mean yields exactly one peak.  Within a segment the anchor is
    the earliest sample maximum whose height reaches the segment maximum up
    to a small gate; a signal whose cycles carry two nearly equal humps
    (large-rotation sweeps) therefore anchors on the same hump every cycle
    instead of alternating, keeping the intervals unbiased.
    """
    t = np.asarray(series.times, dtype=np.float64)
    y = np.asarray(series.column(channel), dtype=np.float64)
    if len(t) < 3:
        return np.empty(0)
    mean = float(np.mean(y))
    above = y > mean
    # Maximal runs of samples above the mean.
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    starts = [0] if above[0] else []
    starts += [int(e) + 1 for e in edges if above[e + 1]]
    ends = [int(e) + 1 for e in edges if above[e]]  # exclusive
    if above[-1]:
        ends.append(len(y))
    peaks = []
    for lo, hi in zip(starts, ends):
        local = [i for i in range(max(lo, 1), min(hi, len(y) - 1))
                 if y[i] > y[i - 1] and y[i] > y[i + 1]]
        if not local:
            continue
        top = max(y[i] for i in local)
        gate = top - PEAK_HEIGHT_GATE * (top - mean)
        anchor = next(i for i in local if y[i] >= gate)
        peaks.append(_parabola_vertex(t[anchor - 1:anchor + 2],
                                      y[anchor - 1:anchor + 2]))
    return np.asarray(peaks)


def _parabola_vertex(ts, ys):
    """Vertex abscissa of the parabola through three (t, y) samples."""
    t1, t2, t3 = ts
    y1, y2, y3 = ys
    a = y1 / ((t1 - t2) * (t1 - t3))
    b = y2 / ((t2 - t1) * (t2 - t3))
    c = y3 / ((t3 - t1) * (t3 - t2))
    denom = a + b + c
    if abs(denom) < 1e-300:
        return float(t2)
    vertex = (a * (t2 + t3) + b * (t1 + t3) + c * (t1 + t2)) / (2.0 * denom)
    lo, hi = min(t1, t3), max(t1, t3)
    return float(min(max(vertex, lo), hi))


def measure_period(series, channel):
    """Mean peak-to-peak interval after discarding the first half-cycle."""
    peaks = peak_times(series, channel)
    if len(peaks) < 3:
        raise InsufficientPeaksError(
            f"channel {channel!r} holds {len(peaks)} oscillation peaks; "
            f"need at least 3 to measure a period")
    kept = peaks[1:]
    return float(np.mean(np.diff(kept)))


# =========================================================================
# Lattice builders
# =========================================================================

def _plate_node_lattice(res, side, thickness):
    """(res+1)^2 nodes spanning [-side/2, side/2]^2; edge volumes halved."""
    dp = side / res
    coords = np.arange(res + 1) * dp - 0.5 * side
    xg, yg = np.meshgrid(coords, coords, indexing="ij")
    pos = np.column_stack([xg.ravel(), yg.ravel(),
                           np.zeros((res + 1) ** 2)])
    weight = np.ones(res + 1)
    weight[0] = weight[-1] = 0.5
    vol = (np.outer(weight, weight) * dp * dp).ravel()
    normals = np.zeros_like(pos)
    normals[:, 2] = 1.0
    return ShellParticleCloud(pos, normals, vol, thickness, dp)


def _plate_cell_lattice(ncells_x, ncells_y, dp, thickness):
    """Cell-centred lattice centred on the origin."""
    xs = (np.arange(ncells_x) + 0.5 - 0.5 * ncells_x) * dp
    ys = (np.arange(ncells_y) + 0.5 - 0.5 * ncells_y) * dp
    xg, yg = np.meshgrid(xs, ys, indexing="ij")
    pos = np.column_stack([xg.ravel(), yg.ravel(),
                           np.zeros(ncells_x * ncells_y)])
    vol = np.full(len(pos), dp * dp)
    normals = np.zeros_like(pos)
    normals[:, 2] = 1.0
    return ShellParticleCloud(pos, normals, vol, thickness, dp)


# =========================================================================
# Case builders
# =========================================================================

def _build_oscillating_strip(cfg):
    width = cfg["width_m"]
    thickness = cfg["thickness_m"]
    res = cfg["resolution"]
    dp = width / res
    xs = (np.arange(-CLAMP_ROWS, res) + 0.5) * dp
    n = len(xs)
    pos = np.column_stack([xs, np.zeros(n)])
    normals = np.tile((0.0, 1.0), (n, 1))
    cloud = ShellParticleCloud(pos, normals, np.full(n, dp), thickness, dp)

    constraints = ConstraintSet(n, 2)
    held = np.flatnonzero(xs < 0.0)
    constraints.clamp(held)

    material = LinearElasticMaterial(cfg["young_pa"], cfg["poisson"],
                                     cfg["density_kg_m3"])
    shape = first_mode_shape(np.maximum(xs, 0.0), width)
    vel = np.zeros((n, 2))
    vel[:, 1] = (cfg["velocity_factor"] * material.sound_speed
                 * shape / first_mode_shape(np.array([width]), width)[0])
    loads = LoadProgram("initial-velocity", initial_velocity=vel)

    tip = nearest_particle(cloud, (width - 0.5 * dp, 0.0), "strip endpoint")

    # Modal projection of the transverse displacement.  Unlike the raw tip
    # height -- which develops two local maxima per cycle once rotations
    # exceed a quarter turn -- the projected coordinate of the first bending
    # mode stays single-peaked at any amplitude, so peak-to-peak period
    # measurement remains well posed for the strongest initial kicks.
    modal_weights = (shape * cloud.volumes
                     / np.dot(shape, shape * cloud.volumes)
                     * first_mode_shape(np.array([width]), width)[0])

    def modal_probe(model, state):
        return float(np.dot(modal_weights, state.pos[:, 1] - model.pos0[:, 1]))

    probes = {
        "tip_z": ProbeChannel("tip_z", tip, _position_probe(tip, 1),
                              "vertical position of the free endpoint"),
        "tip_x": ProbeChannel("tip_x", tip, _position_probe(tip, 0),
                              "horizontal position of the free endpoint"),
        "modal_z": ProbeChannel(
            "modal_z", tip, modal_probe,
            "first-bending-mode projection of transverse displacement, "
            "scaled to endpoint amplitude"),
    }

    t_end = cfg["t_end_s"]
    if t_end <= 0.0:
        t_end = 2.9 * theoretical_period(material, thickness, width)
    schedule = DynamicSchedule(t_end=t_end,
                               record_every=cfg["record_every_steps"],
                               max_steps=cfg["max_steps"], cfl=cfg["cfl"])
    return BuiltCase(cloud, constraints, loads, probes, schedule, material,
                     cfg)


def _square_plate_pressure(cfg):
    """Full-scale transverse pressure q = Pbar E (d/a)^4."""
    side = cfg["side_m"]
    return (cfg["pbar_max"] * cfg["young_pa"]
            * (cfg["thickness_m"] / side) ** 4)


def _build_square_plate_common(cfg, pressure):
    """Lattice + constraints + pressure load for the three support types."""
    side = cfg["side_m"]
    thickness = cfg["thickness_m"]
    res = cfg["resolution"]
    bc = cfg["bc"]
    diagnostics = {}

    if bc == "ss0":
        # Free plate: the loaded a x b interior is surrounded by a ring of
        # width d carrying the balancing counter-pressure.
        dp = side / res
        ring_cells = cfg["thickness_m"] / dp
        if abs(ring_cells - round(ring_cells)) > 1e-9:
            raise ConfigError(
                "ss0 needs the ring width d to be a whole number of cells; "
                f"d/dp = {ring_cells:.4g}")
        ring_cells = int(round(ring_cells))
        ncells = res + 2 * ring_cells
        cloud = _plate_cell_lattice(ncells, ncells, dp, thickness)
        constraints = ConstraintSet(cloud.n, 3)
        half = 0.5 * side
        interior = ((np.abs(cloud.positions[:, 0]) < half)
                    & (np.abs(cloud.positions[:, 1]) < half))
        ring_area = 4.0 * side * thickness + 4.0 * thickness ** 2
        counter = pressure * side * side / ring_area
        load0 = np.zeros((cloud.n, 3))
        load0[interior, 2] = -pressure
        load0[~interior, 2] = counter
        diagnostics["ring_cells"] = ring_cells
        corner = (half + thickness, half + thickness, 0.0)
    else:
        cloud = _plate_node_lattice(res, side, thickness)
        constraints = ConstraintSet(cloud.n, 3)
        half = 0.5 * side
        on_x_edges = np.isclose(np.abs(cloud.positions[:, 1]), half)
        on_y_edges = np.isclose(np.abs(cloud.positions[:, 0]), half)
        if bc == "ss1":
            # edges parallel to x: u = w = 0, in-plane-x rotation held;
            # edges parallel to y: v = w = 0, the other rotation held.
            ex = np.flatnonzero(on_x_edges)
            ey = np.flatnonzero(on_y_edges)
            constraints.hold_translation(ex, (0, 2))
            constraints.hold_rotation(ex, (1,))
            constraints.hold_translation(ey, (1, 2))
            constraints.hold_rotation(ey, (0,))
        else:  # ss3: all translations pinned on every edge
            edge = np.flatnonzero(on_x_edges | on_y_edges)
            constraints.hold_translation(edge, (0, 1, 2))
        load0 = np.zeros((cloud.n, 3))
        load0[:, 2] = -pressure
        corner = (half, half, 0.0)
    return cloud, constraints, load0, corner, diagnostics


def _plate_probes(cfg, cloud, corner):
    centre = nearest_particle(cloud, (0.0, 0.0, 0.0), "plate centre")
    probes = {
        "w_center": ProbeChannel(
            "w_center", centre, _displacement_probe(centre, 2, -1.0),
            "downward deflection at the plate centre"),
    }
    if cfg["bc"] == "ss0":
        corner_idx = nearest_particle(cloud, corner, "plate corner")
        probes["w_corner"] = ProbeChannel(
            "w_corner", corner_idx, _displacement_probe(corner_idx, 2, -1.0),
            "downward deflection at the sheet corner")
        probes["cm_drift_z"] = ProbeChannel(
            "cm_drift_z", -1, _mass_center_drift_probe(),
            "mass-weighted mean transverse drift (balance diagnostic)")
    return probes


def _mass_center_drift_probe():
    def fn(model, state):
        total = float(np.sum(model.mass))
        z0 = float(np.sum(model.mass * model.pos0[:, 2])) / total
        z = float(np.sum(model.mass * state.pos[:, 2])) / total
        return z - z0
    return fn


def _build_square_plate(cfg):
    pressure = _square_plate_pressure(cfg)
    cloud, constraints, load0, corner, diag = _build_square_plate_common(
        cfg, pressure)
    material = LinearElasticMaterial(cfg["young_pa"], cfg["poisson"],
                                     cfg["density_kg_m3"])
    loads = LoadProgram("pressure-ramp", load0=load0)
    probes = _plate_probes(cfg, cloud, corner)
    schedule = _static_schedule(cfg)
    return BuiltCase(cloud, constraints, loads, probes, schedule, material,
                     cfg, diag)


def _build_square_plate_dynamic(cfg):
    pressure = cfg["pressure_pa"]
    cloud, constraints, load0, corner, diag = _build_square_plate_common(
        cfg, pressure)
    material = LinearElasticMaterial(cfg["young_pa"], cfg["poisson"],
                                     cfg["density_kg_m3"])
    loads = LoadProgram("pressure-step", load0=load0)
    probes = _plate_probes(cfg, cloud, corner)
    t_end = cfg["t_end_s"]
    if t_end <= 0.0:
        # ~7 linear first-mode cycles of the simply supported plate
        side, d = cfg["side_m"], cfg["thickness_m"]
        bending = (cfg["young_pa"] * d ** 3
                   / (12.0 * (1.0 - cfg["poisson"] ** 2)))
        omega = (2.0 * math.pi ** 2 / side ** 2) * math.sqrt(
            bending / (cfg["density_kg_m3"] * d))
        t_end = 7.5 * 2.0 * math.pi / omega
    schedule = DynamicSchedule(t_end=t_end,
                               record_every=cfg["record_every_steps"],
                               max_steps=cfg["max_steps"], cfl=cfg["cfl"])
    return BuiltCase(cloud, constraints, loads, probes, schedule, material,
                     cfg, diag)


def _build_cantilever_plate(cfg):
    length = cfg["length_m"]
    width = cfg["width_m"]
    thickness = cfg["thickness_m"]
    res = cfg["resolution"]          # particles across the width
    dp = width / res
    ny = length / dp
    if abs(ny - round(ny)) > 1e-9:
        raise ConfigError(f"length/width ratio must tile the lattice; "
                          f"a/dp = {ny:.4g}")
    ny = int(round(ny))
    xs = (np.arange(res) + 0.5 - 0.5 * res) * dp
    ys = (np.arange(-CLAMP_ROWS, ny) + 0.5) * dp
    xg, yg = np.meshgrid(xs, ys, indexing="ij")
    n = res * (ny + CLAMP_ROWS)
    pos = np.column_stack([xg.ravel(), yg.ravel(), np.zeros(n)])
    normals = np.zeros((n, 3))
    normals[:, 2] = 1.0
    cloud = ShellParticleCloud(pos, normals, np.full(n, dp * dp),
                               thickness, dp)

    constraints = ConstraintSet(n, 3)
    constraints.clamp(np.flatnonzero(pos[:, 1] < 0.0))

    material = LinearElasticMaterial(cfg["young_pa"], cfg["poisson"],
                                     cfg["density_kg_m3"])
    inertia = width * thickness ** 3 / 12.0
    end_force = (cfg["fbar_max"] * cfg["young_pa"] * inertia
                 / length ** 2)
    load0 = np.zeros((n, 3))
    end_row = np.flatnonzero(np.isclose(pos[:, 1], (ny - 0.5) * dp))
    # Spread the total end force over the end row, per unit initial area.
    load0[end_row, 2] = end_force / (dp * width)
    loads = LoadProgram("point-force-ramp", load0=load0)

    tip = nearest_particle(cloud, (0.0, length - 0.5 * dp, 0.0), "tip")
    probes = {
        "w_tip": ProbeChannel("w_tip", tip, _displacement_probe(tip, 2),
                              "transverse tip deflection"),
        "u_tip": ProbeChannel("u_tip", tip, _displacement_probe(tip, 1),
                              "axial tip displacement (negative shortens)"),
    }
    schedule = _static_schedule(cfg)
    return BuiltCase(cloud, constraints, loads, probes, schedule, material,
                     cfg)


def _build_scordelis_lo(cfg):
    radius = cfg["radius_m"]
    length = cfg["length_m"]
    thickness = cfg["thickness_m"]
    half_angle = math.radians(cfg["half_angle_deg"])
    res = cfg["resolution"]          # arc cells across the roof
    arc = 2.0 * radius * half_angle
    dp = arc / res
    n_rows = max(1, round(length / dp))
    dpy = length / n_rows

    psi = (np.arange(res) + 0.5 - 0.5 * res) * (2.0 * half_angle / res)
    ys = np.arange(n_rows + 1) * dpy
    pg, yg = np.meshgrid(psi, ys, indexing="ij")
    pos = np.column_stack([radius * np.sin(pg.ravel()), yg.ravel(),
                           radius * np.cos(pg.ravel())])
    normals = np.column_stack([np.sin(pg.ravel()),
                               np.zeros(pg.size),
                               np.cos(pg.ravel())])
    weight = np.ones(n_rows + 1)
    weight[0] = weight[-1] = 0.5
    vol = (dp * dpy) * np.tile(weight, res)
    cloud = ShellParticleCloud(pos, normals, vol, thickness, dp)

    constraints = ConstraintSet(cloud.n, 3)
    diaphragm = np.flatnonzero(np.isclose(pos[:, 1], 0.0)
                               | np.isclose(pos[:, 1], length))
    constraints.hold_translation(diaphragm, (0, 2))

    material = LinearElasticMaterial(cfg["young_pa"], cfg["poisson"],
                                     cfg["density_kg_m3"])
    load0 = np.zeros((cloud.n, 3))
    load0[:, 2] = -cfg["density_kg_m3"] * thickness * cfg["gravity_m_s2"]
    loads = LoadProgram("gravity", load0=load0)

    edge_mid = nearest_particle(
        cloud, (radius * math.sin(half_angle), 0.5 * length,
                radius * math.cos(half_angle)), "side-edge midpoint")
    probes = {
        "w_edge": ProbeChannel(
            "w_edge", edge_mid, _displacement_probe(edge_mid, 2, -1.0),
            "downward deflection at the side-edge midpoint"),
    }
    schedule = _static_schedule(cfg)
    return BuiltCase(cloud, constraints, loads, probes, schedule, material,
                     cfg)


def _build_pinched_hemisphere(cfg):
    radius = cfg["radius_m"]
    thickness = cfg["thickness_m"]
    res = cfg["resolution"]          # equator cells: 2 pi r / dp
    dp = 2.0 * math.pi * radius / res
    cut = math.radians(cfg["cutout_deg"])
    span = 0.5 * math.pi - cut
    n_bands = max(4, round(radius * span / dp))
    dtheta = span / n_bands

    positions, vols = [], []
    for i in range(n_bands):
        lo = cut + i * dtheta
        hi = lo + dtheta
        theta = 0.5 * (lo + hi)
        ring_r = radius * math.sin(theta)
        m = max(4, 4 * round(math.pi * ring_r / (2.0 * dp)))
        phi = (np.arange(m) + 0.5) * (2.0 * math.pi / m)
        positions.append(np.column_stack([
            ring_r * np.cos(phi), ring_r * np.sin(phi),
            np.full(m, radius * math.cos(theta))]))
        band_area = 2.0 * math.pi * radius ** 2 * (math.cos(lo)
                                                   - math.cos(hi))
        vols.append(np.full(m, band_area / m))
    pos = np.vstack(positions)
    vol = np.concatenate(vols)
    normals = pos / radius
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    cloud = ShellParticleCloud(pos, normals, vol, thickness, dp)
    constraints = ConstraintSet(cloud.n, 3)

    material = LinearElasticMaterial(cfg["young_pa"], cfg["poisson"],
                                     cfg["density_kg_m3"])
    force = cfg["force_n"]
    load0 = np.zeros((cloud.n, 3))
    # Alternating radial equator forces: outward along +-x, inward at +-y.
    pts = {
        "A": ((radius, 0.0, 0.0), np.array([1.0, 0.0, 0.0])),
        "A_pair": ((-radius, 0.0, 0.0), np.array([-1.0, 0.0, 0.0])),
        "B": ((0.0, radius, 0.0), np.array([0.0, -1.0, 0.0])),
        "B_pair": ((0.0, -radius, 0.0), np.array([0.0, 1.0, 0.0])),
    }
    probes = {}
    for name, (point, direction) in pts.items():
        idx = nearest_particle(cloud, point, f"equator point {name}")
        load0[idx] = force * direction / vol[idx]
        comp = int(np.argmax(np.abs(direction)))
        sign = float(np.sign(direction[comp]))
        probes[f"w_{name}"] = ProbeChannel(
            f"w_{name}", idx, _displacement_probe(idx, comp, sign),
            f"radial deflection along the load at point {name}")
    loads = LoadProgram("point-force-ramp", load0=load0)
    schedule = _static_schedule(cfg)
    return BuiltCase(cloud, constraints, loads, probes, schedule, material,
                     cfg)


def _cylinder_lattice(radius, length, thickness, res):
    """Full-circle cylinder, axis along global z.

    The axis orientation keeps every radial normal on the equator of the
    local-frame map (far from its -e_z singular direction), and the
    circumferential lattice is node-centred so diametrically opposite
    azimuths land exactly on particles.  Axially cell-centred, spanning
    [-length/2, length/2] with free ends.
    """
    dp = 2.0 * math.pi * radius / res
    n_rows = max(1, round(length / dp))
    dpz = length / n_rows
    phi = np.arange(res) * (2.0 * math.pi / res)
    zs = (np.arange(n_rows) + 0.5) * dpz - 0.5 * length
    pg, zg = np.meshgrid(phi, zs, indexing="ij")
    pos = np.column_stack([radius * np.cos(pg.ravel()),
                           radius * np.sin(pg.ravel()), zg.ravel()])
    normals = np.column_stack([np.cos(pg.ravel()), np.sin(pg.ravel()),
                               np.zeros(pg.size)])
    vol = np.full(pos.shape[0], dp * dpz)
    return ShellParticleCloud(pos, normals, vol, thickness, dp), dpz


def _build_pulled_cylinder(cfg):
    radius = cfg["radius_m"]
    length = cfg["length_m"]
    res = cfg["resolution"]          # circumference cells: 2 pi r / dp
    cloud, dpz = _cylinder_lattice(radius, length, cfg["thickness_m"], res)
    constraints = ConstraintSet(cloud.n, 3)

    material = LinearElasticMaterial(cfg["young_pa"], cfg["poisson"],
                                     cfg["density_kg_m3"])
    force = cfg["force_n"]
    load0 = np.zeros((cloud.n, 3))
    pull = nearest_particle(cloud, (radius, 0.0, 0.0), "pull point")
    pull2 = nearest_particle(cloud, (-radius, 0.0, 0.0), "pull point")
    load0[pull, 0] = force / cloud.volumes[pull]
    load0[pull2, 0] = -force / cloud.volumes[pull2]
    loads = LoadProgram("point-force-ramp", load0=load0)

    half = 0.5 * length
    end_b = nearest_particle(cloud, (radius, 0.0, half), "end at pull azimuth")
    end_b2 = nearest_particle(cloud, (radius, 0.0, -half),
                              "end at pull azimuth")
    end_c = nearest_particle(cloud, (0.0, radius, half), "end side")
    end_c2 = nearest_particle(cloud, (0.0, radius, -half), "end side")
    probes = {
        "w_A": ProbeChannel("w_A", pull, _displacement_probe(pull, 0),
                            "radial displacement at the pulled point"),
        "w_A_pair": ProbeChannel("w_A_pair", pull2,
                                 _displacement_probe(pull2, 0, -1.0),
                                 "radial displacement at the opposite point"),
        "w_B": ProbeChannel("w_B", end_b, _displacement_probe(end_b, 0),
                            "radial displacement, free end, pull azimuth"),
        "w_B_pair": ProbeChannel("w_B_pair", end_b2,
                                 _displacement_probe(end_b2, 0),
                                 "radial displacement, other end, "
                                 "pull azimuth"),
        "w_C": ProbeChannel("w_C", end_c, _displacement_probe(end_c, 1),
                            "radial displacement, free end, 90 deg from "
                            "the pull"),
        "w_C_pair": ProbeChannel("w_C_pair", end_c2,
                                 _displacement_probe(end_c2, 1),
                                 "radial displacement, other end, 90 deg "
                                 "from the pull"),
    }
    schedule = _static_schedule(cfg)
    return BuiltCase(cloud, constraints, loads, probes, schedule, material,
                     cfg)


def _build_pinched_semicylinder(cfg):
    radius = cfg["radius_m"]
    length = cfg["length_m"]
    thickness = cfg["thickness_m"]
    res = cfg["resolution"]          # half-circumference cells: pi r / dp
    dp = math.pi * radius / res
    n_rows = max(1, round(length / dp))
    dpy = length / n_rows

    psi = np.arange(res + 1) * (math.pi / res)       # nodes incl. both edges
    ys = (np.arange(-CLAMP_ROWS, n_rows) + 0.5) * dpy
    pg, yg = np.meshgrid(psi, ys, indexing="ij")
    pos = np.column_stack([radius * np.cos(pg.ravel()), yg.ravel(),
                           radius * np.sin(pg.ravel())])
    normals = np.column_stack([np.cos(pg.ravel()), np.zeros(pg.size),
                               np.sin(pg.ravel())])
    weight = np.ones(res + 1)
    weight[0] = weight[-1] = 0.5
    vol = (dp * dpy) * np.repeat(weight, n_rows + CLAMP_ROWS)
    cloud = ShellParticleCloud(pos, normals, vol, thickness, dp)

    constraints = ConstraintSet(cloud.n, 3)
    constraints.clamp(np.flatnonzero(pos[:, 1] < 0.0))
    # Straight edges: vertical translation and the rotation that tilts the
    # normal within the vertical plane through the axis are held.
    edges = np.flatnonzero(np.isclose(np.abs(pos[:, 0]), radius)
                           & (pos[:, 1] > 0.0))
    constraints.hold_translation(edges, (2,))
    constraints.hold_rotation(edges, (1,))

    material = LinearElasticMaterial(cfg["young_pa"], cfg["poisson"],
                                     cfg["density_kg_m3"])
    force = cfg["force_n"]
    load0 = np.zeros((cloud.n, 3))
    pinch = nearest_particle(cloud, (0.0, length, radius), "pinch point")
    load0[pinch, 2] = -force / cloud.volumes[pinch]
    loads = LoadProgram("point-force-ramp", load0=load0)

    quarter = radius * math.sqrt(0.5)
    side = nearest_particle(cloud, (quarter, length, quarter),
                            "free-end quarter point")
    side2 = nearest_particle(cloud, (-quarter, length, quarter),
                             "free-end quarter point")
    probes = {
        "w_A": ProbeChannel("w_A", pinch,
                            _displacement_probe(pinch, 2, -1.0),
                            "downward deflection under the pinch force"),
        "w_S": ProbeChannel("w_S", side, _displacement_probe(side, 2, -1.0),
                            "downward deflection at a free-end quarter "
                            "point"),
        "w_S_pair": ProbeChannel("w_S_pair", side2,
                                 _displacement_probe(side2, 2, -1.0),
                                 "mirror partner of w_S"),
    }
    schedule = _static_schedule(cfg)
    return BuiltCase(cloud, constraints, loads, probes, schedule, material,
                     cfg)


# =========================================================================
# Catalogue
# =========================================================================

CASES = {
    "oscillating_plate_2d": CaseDef(
        "oscillating_plate_2d", "dynamic", _build_oscillating_strip,
        _merge(_COMMON_DEFAULTS, _DYNAMIC_DEFAULTS, {
            "resolution": 40,
            "width_m": 0.2,
            "thickness_m": 0.01,
            "young_pa": 2.0e6,
            "poisson": 0.4,
            "density_kg_m3": 1000.0,
            "velocity_factor": 0.025,
        }),
        "Clamped-free plate strip released with a first-mode transverse "
        "velocity profile; the endpoint oscillation period is measured."),
    "square_plate": CaseDef(
        "square_plate", "static", _build_square_plate,
        _merge(_COMMON_DEFAULTS, _STATIC_DEFAULTS, {
            "resolution": 20,
            "side_m": 0.254,
            "thickness_m": 0.0254,
            "young_pa": 53.7791e9,
            "poisson": 0.3,
            "density_kg_m3": 1600.0,
            "bc": "ss3",
            "pbar_max": refdata.PLATE_PBAR_MAX,
        }),
        "Square plate under uniform transverse pressure with ss0 "
        "(free, balanced counter-pressure ring), ss1, or ss3 supports; "
        "quasi-static load-deflection staircase."),
    "square_plate_dynamic": CaseDef(
        "square_plate_dynamic", "dynamic", _build_square_plate_dynamic,
        _merge(_COMMON_DEFAULTS, _DYNAMIC_DEFAULTS, {
            "resolution": 40,
            "side_m": 0.254,
            "thickness_m": 0.0127,
            "young_pa": 68.94e9,
            "poisson": 0.3,
            "density_kg_m3": 1600.0,
            "bc": "ss3",
            "pressure_pa": refdata.PLATE_DYNAMIC_PRESSURE,
            "record_every_steps": 16,
        }),
        "Square plate under a step pressure; centre-deflection history "
        "oscillates about the static equilibrium."),
    "cantilever_plate": CaseDef(
        "cantilever_plate", "static", _build_cantilever_plate,
        _merge(_COMMON_DEFAULTS, _STATIC_DEFAULTS, {
            "resolution": 5,
            "length_m": 10.0,
            "width_m": 1.0,
            "thickness_m": 0.1,
            "young_pa": 1.2e6,
            "poisson": 0.0,
            "density_kg_m3": 1100.0,
            "fbar_max": refdata.CANTILEVER_FBAR_MAX,
        }),
        "Cantilevered plate under a distributed transverse end shear; tip "
        "deflections follow the inextensible-elastica solution."),
    "scordelis_lo": CaseDef(
        "scordelis_lo", "static", _build_scordelis_lo,
        _merge(_COMMON_DEFAULTS, _STATIC_DEFAULTS, {
            "resolution": 15,
            "radius_m": 25.0,
            "length_m": 50.0,
            "thickness_m": 0.25,
            "half_angle_deg": 40.0,
            "young_pa": 432.0e6,
            "poisson": 0.0,
            "density_kg_m3": 36.0,
            "gravity_m_s2": 10.0,
            "load_levels": 1,
        }),
        "Cylindrical roof on end diaphragms sagging under self-weight; "
        "the side-edge midpoint deflection is the classical target."),
    "pinched_hemisphere": CaseDef(
        "pinched_hemisphere", "static", _build_pinched_hemisphere,
        _merge(_COMMON_DEFAULTS, _STATIC_DEFAULTS, {
            "resolution": 80,
            "radius_m": 10.0,
            "thickness_m": 0.04,
            "cutout_deg": 18.0,
            "young_pa": 68.25e6,
            "poisson": 0.3,
            "density_kg_m3": 1100.0,
            "force_n": refdata.HEMISPHERE_MAX_FORCE,
            "load_levels": 3,
            "load_fraction_max": refdata.SHELL_GATE_LOAD_FRACTION,
        }),
        "Hemispherical shell with a polar cutout squeezed by four "
        "alternating equatorial point forces."),
    "pulled_cylinder": CaseDef(
        "pulled_cylinder", "static", _build_pulled_cylinder,
        _merge(_COMMON_DEFAULTS, _STATIC_DEFAULTS, {
            "resolution": 80,
            "radius_m": 5.0,
            "length_m": 10.35,
            "thickness_m": 0.094,
            "young_pa": 10.5e6,
            "poisson": 0.3125,
            "density_kg_m3": 1100.0,
            "force_n": refdata.PULLED_CYLINDER_MAX_FORCE,
            "load_levels": 3,
            "load_fraction_max": refdata.SHELL_GATE_LOAD_FRACTION,
        }),
        "Open-ended cylinder pulled apart by two opposite radial point "
        "forces at mid-length."),
    "pinched_semicylinder": CaseDef(
        "pinched_semicylinder", "static", _build_pinched_semicylinder,
        _merge(_COMMON_DEFAULTS, _STATIC_DEFAULTS, {
            "resolution": 20,
            "radius_m": 1.016,
            "length_m": 3.048,
            "thickness_m": 0.03,
            "young_pa": 20.685e6,
            "poisson": 0.3,
            "density_kg_m3": 1100.0,
            "force_n": refdata.SEMICYLINDER_MAX_FORCE,
            "load_levels": 3,
            "load_fraction_max": refdata.SHELL_GATE_LOAD_FRACTION,
        }),
        "Semi-cylindrical shell clamped at one end ring and pinched at "
        "the centre of the free end; guided straight edges."),
}


def list_cases():
    return list(CASES)


def build_case(config):
    """Build the lattice, constraints, loads, probes, and schedule."""
    if isinstance(config, str):
        config = resolve_config(config)
    if config.case not in CASES:
        known = ", ".join(CASES)
        raise ConfigError(f"unknown case {config.case!r}; "
                          f"known cases: {known}")
    return CASES[config.case].builder(config)


# =========================================================================
# Run driver
# =========================================================================

@dataclass
class Snapshot:
    time: float
    positions: np.ndarray
    normals: np.ndarray        # global pseudo-normals
    von_mises: np.ndarray
    label: str = ""


@dataclass
class CaseRun:
    config: CaseConfig
    built: BuiltCase
    series: object
    snapshots: list
    solver: Solver


def _take_snapshot(model, state, label=""):
    from .backend import numpy_backend
    nglob = numpy_backend.global_normals(model, state.nloc)
    return Snapshot(float(state.t), state.pos.copy(), nglob,
                    state.vm.copy(), label)


def run_case(config):
    """Build and run a case, collecting probes and sparse snapshots."""
    if isinstance(config, str):
        config = resolve_config(config)
    built = build_case(config)
    cfg = config
    backend = cfg["backend"]
    inertia_scale = 1.0
    if isinstance(built.schedule, StaticSchedule):
        inertia_scale = cfg.get("rot_inertia_scale", 0.0)
        if inertia_scale <= 0.0:
            ratio = built.cloud.h / built.cloud.thickness
            inertia_scale = max(1.0, 1.5 * ratio * ratio)
    solver = Solver(built.cloud, built.material,
                    gauss_points=cfg["gauss_points"],
                    constraints=built.constraints,
                    load0=built.loads.load0,
                    alpha_hourglass=cfg["hourglass_alpha"],
                    include_damping=cfg["include_damping"],
                    backend=None if backend == "auto" else backend,
                    renormalize=cfg["renormalize"],
                    rot_inertia_scale=inertia_scale)
    if built.loads.initial_velocity is not None:
        solver.set_velocity(built.loads.initial_velocity)

    probe_fns = {name: ch.fn for name, ch in built.probes.items()}
    snapshots = [_take_snapshot(solver.model, solver.state, "initial")]
    if isinstance(built.schedule, DynamicSchedule):
        every = max(1, cfg["snapshot_every_records"])
        counter = {"k": 0}

        def on_sample(model, state):
            counter["k"] += 1
            if counter["k"] % every == 0:
                snapshots.append(_take_snapshot(model, state))

        series = solver.run_dynamic(built.schedule, probe_fns,
                                    on_sample=on_sample)
    else:
        def on_level(model, state, level_meta):
            snapshots.append(_take_snapshot(
                model, state, f"load_factor={level_meta['load_factor']:g}"))

        series = solver.run_static(built.schedule, probe_fns,
                                   on_level=on_level)
    final = _take_snapshot(solver.model, solver.state, "final")
    if not snapshots or snapshots[-1].time != final.time:
        snapshots.append(final)
    series.meta["case"] = cfg.case
    series.meta["backend"] = solver.backend.NAME
    return CaseRun(cfg, built, series, snapshots, solver)
