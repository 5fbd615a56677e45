"""Per-case verification: runs a benchmark and grades its probes.

Each case gets a list of named checks combining three kinds of evidence:

* independent structural-theory oracles computed here from first principles
  (thin/thick-plate series, beam-mode period formula, end-loaded elastica),
* bundled reference values from :mod:`shellsph.reference_data`,
* structural invariants (convergence, monotone load-deflection response,
  symmetry between mirrored probe pairs, pseudo-normal health).

The CLI prints one PASS/FAIL line per check; the test suite asserts on the
same objects.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import reference_data as ref
from .cases import (InsufficientPeaksError, measure_period, peak_times,
                    run_case, theoretical_period)

# Discretization-inclusive gates for checks whose reference is exact but
# whose run uses the case's own (often coarse) default resolution.
PLATE_LINEAR_RTOL = 0.12          # vs. the shear-deformable series solution
SCORDELIS_COARSE_RTOL = 0.15      # below the published-resolution study
DYNAMIC_PERIOD_BAND = (0.40, 1.05)  # stiffening shortens the linear period
NORMAL_DRIFT_TOL = 1e-5


# =========================================================================
# Structural-theory oracles
# =========================================================================

def mindlin_plate_center_deflection(q, a, b, d, young, poisson,
                                    kappa=5.0 / 6.0, terms=199):
    """Center deflection of a simply supported rectangular plate.

    Double-sine series for a uniform transverse pressure ``q`` with the
    first-order shear-deformation compliance term; the thin-plate limit
    recovers the classical 0.00406*q*a^4/D square-plate value.
    """
    bending = young * d ** 3 / (12.0 * (1.0 - poisson ** 2))
    shear = kappa * young / (2.0 * (1.0 + poisson)) * d
    w = 0.0
    for m in range(1, terms + 1, 2):
        for n in range(1, terms + 1, 2):
            qmn = 16.0 * q / (math.pi ** 2 * m * n)
            lam = math.pi ** 2 * ((m / a) ** 2 + (n / b) ** 2)
            phase = math.sin(m * math.pi / 2.0) * math.sin(n * math.pi / 2.0)
            w += qmn * (1.0 + lam * bending / shear) / (bending * lam ** 2) \
                * phase
    return w


def plate_fundamental_period(a, b, d, young, poisson, density,
                             kappa=5.0 / 6.0):
    """First-mode period of a simply supported rectangular plate.

    Includes the shear-deformation compliance of the fundamental mode;
    rotary inertia is negligible at the benchmark thickness ratios.
    """
    bending = young * d ** 3 / (12.0 * (1.0 - poisson ** 2))
    shear = kappa * young / (2.0 * (1.0 + poisson)) * d
    lam = math.pi ** 2 * ((1.0 / a) ** 2 + (1.0 / b) ** 2)
    omega2 = bending * lam ** 2 / (density * d * (1.0 + lam * bending / shear))
    return 2.0 * math.pi / math.sqrt(omega2)


def elastica_end_shear(load_parameter):
    """Tip drop and shortening of an end-loaded inextensible cantilever.

    ``load_parameter`` is F*L^2/(EI).  Returns ``(w_over_L, u_over_L)``:
    the transverse tip deflection and the axial tip shortening, both
    normalised by the length.  Solved as the rotation boundary-value
    problem th'' = -alpha*cos(th), th(0) = 0, th'(L) = 0 by shooting.
    """
    alpha = float(load_parameter)
    if alpha == 0.0:
        return 0.0, 0.0

    def rhs(_s, y):
        return [y[1], -alpha * math.cos(y[0])]

    def end_slope(k0):
        sol = solve_ivp(rhs, (0.0, 1.0), [0.0, k0], rtol=1e-10, atol=1e-12)
        return sol.y[1, -1]

    k0 = brentq(end_slope, 1e-12, alpha, xtol=1e-13, rtol=1e-14)

    def rhs_full(_s, y):
        return [y[1], -alpha * math.cos(y[0]),
                math.cos(y[0]), math.sin(y[0])]

    sol = solve_ivp(rhs_full, (0.0, 1.0), [0.0, k0, 0.0, 0.0],
                    rtol=1e-10, atol=1e-12)
    x_end, w_end = sol.y[2, -1], sol.y[3, -1]
    return w_end, 1.0 - x_end


# =========================================================================
# Check plumbing
# =========================================================================

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerifyReport:
    case: str
    checks: list
    run: object

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def _check(checks, name, passed, detail):
    checks.append(CheckResult(name, bool(passed), detail))


def _rel(value, reference):
    return abs(value - reference) / abs(reference)


def _level_values(series, channel):
    """Final sample of each static load level, in level order."""
    lf = series.column("load_factor")
    values, fractions = [], []
    for frac in sorted(set(np.round(lf[lf > 0.0], 9))):
        idx = np.flatnonzero(np.isclose(lf, frac))[-1]
        fractions.append(float(frac))
        values.append(float(series.column(channel)[idx]))
    return np.asarray(fractions), np.asarray(values)


def _check_converged(checks, series):
    _check(checks, "static-convergence", bool(series.meta["all_converged"]),
           f"every load level reported convergence: "
           f"{series.meta['all_converged']}")


def _check_normal_drift(checks, series):
    drift = float(series.meta["max_normal_drift"])
    _check(checks, "pseudo-normal-norm", drift < NORMAL_DRIFT_TOL,
           f"max |n| drift {drift:.3e} (tol {NORMAL_DRIFT_TOL:.0e})")


def _check_monotone(checks, series, channel, sign=+1.0):
    fractions, values = _level_values(series, channel)
    diffs = sign * np.diff(np.concatenate([[0.0], values]))
    ok = bool(np.all(diffs > 0.0))
    _check(checks, f"monotone-{channel}", ok,
           f"{channel} per level: "
           + ", ".join(f"{v:.5g}" for v in values))


def _check_pair(checks, series, channel):
    pair = f"{channel}_pair"
    a = float(series.column(channel)[-1])
    b = float(series.column(pair)[-1])
    scale = max(abs(a), abs(b))
    rel = abs(a - b) / scale if scale > 0 else 0.0
    _check(checks, f"pair-symmetry-{channel}", rel <= ref.SHELL_PAIR_RTOL,
           f"{channel}={a:.6g} vs {pair}={b:.6g}: {rel * 100:.3f}% "
           f"(tol {ref.SHELL_PAIR_RTOL * 100:.0f}%)")


# =========================================================================
# Per-case verification
# =========================================================================

def _verify_strip(config, run, checks):
    material = run.built.material
    cfg = config
    t_theory = theoretical_period(material, cfg["thickness_m"],
                                  cfg["width_m"])
    try:
        period = measure_period(run.series, "modal_z")
    except InsufficientPeaksError as exc:
        _check(checks, "period-measured", False, str(exc))
        return
    _check(checks, "period-measured", True,
           f"T = {period:.5f} s from the first-bending-mode projection")
    rel_t = _rel(period, t_theory)
    _check(checks, "period-vs-beam-theory", rel_t <= ref.STRIP_THEORY_RTOL,
           f"T = {period:.5f} s vs first-mode formula {t_theory:.5f} s: "
           f"{rel_t * 100:.2f}% (tol {ref.STRIP_THEORY_RTOL * 100:.0f}%)")
    row = ref.strip_period_row(cfg["thickness_m"], cfg["velocity_factor"],
                               cfg["poisson"])
    if row is not None:
        shell_t, _ = row
        rel_s = _rel(period, shell_t)
        _check(checks, "period-vs-published-table",
               rel_s <= ref.STRIP_SHELL_RTOL,
               f"T = {period:.5f} s vs published {shell_t:.5f} s: "
               f"{rel_s * 100:.2f}% (tol {ref.STRIP_SHELL_RTOL * 100:.0f}%); "
               f"the published values carry a systematic +7% offset from "
               f"beam theory, see the build notes")
    _check_normal_drift(checks, run.series)


def _verify_square_plate(config, run, checks):
    cfg = config
    d = cfg["thickness_m"]
    _check_converged(checks, run.series)
    _check_monotone(checks, run.series, "w_center")
    if cfg["bc"] == "ss0":
        drift = abs(float(run.series.column("cm_drift_z")[-1]))
        _check(checks, "mass-center-drift", drift < 0.1 * d,
               f"|cm drift| = {drift:.4e} m (tol {0.1 * d:.4e} m)")
    w_final = float(run.series.column("w_center")[-1])
    if abs(w_final) <= 0.4 * d and cfg["bc"] in ("ss1", "ss3"):
        q = (cfg["pbar_max"] * cfg["load_fraction_max"] * cfg["young_pa"]
             * (d / cfg["side_m"]) ** 4)
        w_ref = mindlin_plate_center_deflection(
            q, cfg["side_m"], cfg["side_m"], d, cfg["young_pa"],
            cfg["poisson"])
        rel = _rel(w_final, w_ref)
        _check(checks, "linear-regime-vs-plate-series",
               rel <= PLATE_LINEAR_RTOL,
               f"w = {w_final:.5e} m vs series {w_ref:.5e} m: "
               f"{rel * 100:.2f}% (tol {PLATE_LINEAR_RTOL * 100:.0f}%)")
    else:
        # Membrane stiffening must keep the response below the linear
        # extrapolation of the first level.
        fractions, values = _level_values(run.series, "w_center")
        linear = values[0] / fractions[0]
        ok = values[-1] < linear * fractions[-1]
        _check(checks, "membrane-stiffening", ok,
               f"w(final) = {values[-1]:.5e} m < linear extrapolation "
               f"{linear * fractions[-1]:.5e} m")
    _check_normal_drift(checks, run.series)


def _verify_square_plate_dynamic(config, run, checks):
    cfg = config
    series = run.series
    w = series.column("w_center")
    _check(checks, "finite-response", bool(np.all(np.isfinite(w))),
           f"{len(w)} samples, all finite")
    mean = float(np.mean(w))
    _check(checks, "oscillates-about-positive-mean",
           mean > 0.0 and float(np.min(w)) < mean < float(np.max(w)),
           f"mean {mean:.4e} m, range [{np.min(w):.4e}, {np.max(w):.4e}]")
    peaks = peak_times(series, "w_center")
    if len(peaks) >= 6:
        intervals = np.diff(peaks[1:])
        spread = (np.max(intervals) - np.min(intervals)) / np.mean(intervals)
        _check(checks, "cycle-period-stability", spread < 0.05,
               f"{len(intervals)} cycle intervals, spread "
               f"{spread * 100:.2f}% (tol 5%)")
        t_lin = plate_fundamental_period(
            cfg["side_m"], cfg["side_m"], cfg["thickness_m"], cfg["young_pa"],
            cfg["poisson"], cfg["density_kg_m3"])
        ratio = float(np.mean(intervals)) / t_lin
        lo, hi = DYNAMIC_PERIOD_BAND
        _check(checks, "period-vs-linear-mode", lo <= ratio <= hi,
               f"T = {np.mean(intervals):.4e} s = {ratio:.3f} x linear mode "
               f"{t_lin:.4e} s (stiffening band [{lo}, {hi}])")
    else:
        _check(checks, "cycle-period-stability", False,
               f"only {len(peaks)} peaks recorded; need >= 6")
    _check_normal_drift(checks, series)


def _verify_cantilever(config, run, checks):
    cfg = config
    _check_converged(checks, run.series)
    _check_monotone(checks, run.series, "w_tip")
    length = cfg["length_m"]
    w_ref, u_ref = elastica_end_shear(cfg["fbar_max"]
                                      * cfg["load_fraction_max"])
    w = float(run.series.column("w_tip")[-1]) / length
    u = -float(run.series.column("u_tip")[-1]) / length
    tol = ref.CANTILEVER_ELASTICA_RTOL
    _check(checks, "tip-drop-vs-elastica", abs(w - w_ref) <= tol,
           f"w/L = {w:.5f} vs elastica {w_ref:.5f} "
           f"(|diff| {abs(w - w_ref):.4f}, tol {tol})")
    _check(checks, "tip-shortening-vs-elastica", abs(u - u_ref) <= tol,
           f"u/L = {u:.5f} vs elastica {u_ref:.5f} "
           f"(|diff| {abs(u - u_ref):.4f}, tol {tol})")
    _check_normal_drift(checks, run.series)


def _verify_scordelis(config, run, checks):
    cfg = config
    _check_converged(checks, run.series)
    w = float(run.series.column("w_edge")[-1])
    _check(checks, "edge-sags-downward", w > 0.0,
           f"side-edge midpoint deflection {w:.5f} m")
    published = ref.SCORDELIS_LO_SHELL_DEFLECTION
    if cfg["resolution"] >= 40:
        tol = ref.SCORDELIS_LO_SHELL_RTOL
        rel = _rel(w, published)
        _check(checks, "deflection-vs-published", rel <= tol,
               f"|w| = {w:.5f} m vs {published} m: {rel * 100:.2f}% "
               f"(tol {tol * 100:.1f}%)")
        rel_fem = _rel(w, ref.SCORDELIS_LO_FEM_DEFLECTION)
        _check(checks, "deflection-vs-fem-reference",
               rel_fem <= ref.SCORDELIS_LO_FEM_RTOL,
               f"|w| = {w:.5f} m vs {ref.SCORDELIS_LO_FEM_DEFLECTION} m: "
               f"{rel_fem * 100:.2f}% (tol "
               f"{ref.SCORDELIS_LO_FEM_RTOL * 100:.1f}%)")
    else:
        rel = _rel(w, published)
        _check(checks, "deflection-vs-published-coarse",
               rel <= SCORDELIS_COARSE_RTOL,
               f"|w| = {w:.5f} m vs {published} m at coarse resolution "
               f"{cfg['resolution']}: {rel * 100:.2f}% "
               f"(tol {SCORDELIS_COARSE_RTOL * 100:.0f}%)")
    _check_normal_drift(checks, run.series)


def _verify_hemisphere(config, run, checks):
    _check_converged(checks, run.series)
    _check_monotone(checks, run.series, "w_A")
    _check_monotone(checks, run.series, "w_B")
    _check_pair(checks, run.series, "w_A")
    _check_pair(checks, run.series, "w_B")
    _check_normal_drift(checks, run.series)


def _verify_pulled_cylinder(config, run, checks):
    _check_converged(checks, run.series)
    _check_monotone(checks, run.series, "w_A")
    for channel in ("w_A", "w_B", "w_C"):
        _check_pair(checks, run.series, channel)
    _check_normal_drift(checks, run.series)


def _verify_semicylinder(config, run, checks):
    _check_converged(checks, run.series)
    _check_monotone(checks, run.series, "w_A")
    _check_pair(checks, run.series, "w_S")
    _check_normal_drift(checks, run.series)


_VERIFIERS = {
    "oscillating_plate_2d": _verify_strip,
    "square_plate": _verify_square_plate,
    "square_plate_dynamic": _verify_square_plate_dynamic,
    "cantilever_plate": _verify_cantilever,
    "scordelis_lo": _verify_scordelis,
    "pinched_hemisphere": _verify_hemisphere,
    "pulled_cylinder": _verify_pulled_cylinder,
    "pinched_semicylinder": _verify_semicylinder,
}


def verify_case(config):
    """Run a case and grade it; returns a :class:`VerifyReport`."""
    run = run_case(config)
    checks = []
    _VERIFIERS[run.config.case](run.config, run, checks)
    return VerifyReport(run.config.case, checks, run)
