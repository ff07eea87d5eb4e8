"""Boundedness monitors for the a priori estimates along a flow, before and after the singular time.

The estimates being monitored only assert the existence of constants, so a
monitor passes when its run maximum stays within a configurable factor of its
run median.  Lower-bound monitors must in addition stay positive and must not
trend to zero at the singular time.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, PreconditionError
from .flow import Trajectory
from .geometry import Profile, cumulative_radial_length, sphere_diameter, trace_against

PASS = "Pass"
FAIL = "Fail"
SKIPPED = "Skipped"

DEFAULT_FACTOR = 3.0
DEFAULT_DELTA = 0.1
DEFAULT_ALPHA = 2.0


def _weight(p: Profile):
    return p.grid.weight()


def _density(p: Profile, n: int):
    return p.phi ** (n - 1) * p.dphi


def monitor_volume_ratio(p: Profile, initial: Profile, n: int) -> float:
    """sup of the volume-density ratio omega(t)^n / omega_0^n."""
    return float(np.max(_density(p, n) / _density(initial, n)))


def monitor_lower(p: Profile, pullback: Profile) -> float:
    """inf over nodes of the smaller eigenvalue ratio against the degenerate reference."""
    return float(np.min(np.minimum(p.phi / pullback.phi, p.dphi / pullback.dphi)))


def monitor_upper_weighted(p: Profile, pullback: Profile, n: int) -> float:
    """sup of |s|^2 tr_{pullback} omega."""
    return float(np.max(_weight(p) * trace_against(p, pullback, n)))


def monitor_upper_delta(p: Profile, initial: Profile, n: int, delta: float = DEFAULT_DELTA) -> float:
    """sup of |s|^{2(1-delta)} tr_{omega_0} omega."""
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1)")
    return float(np.max(_weight(p) ** (1 - delta) * trace_against(p, initial, n)))


def monitor_radial(p: Profile) -> float:
    """sup over rho <= 0 of |z^i d_i|^2 / |s|_h = phi' e^{-rho/2}."""
    m = p.grid.rho <= 0
    return float(np.max(p.dphi[m] * np.exp(-0.5 * p.grid.rho[m])))


def monitor_sphere(p: Profile) -> float:
    """Largest diameter of the P^{n-1} of directions over the unit ball."""
    return sphere_diameter(p, 0.0)


def monitor_radial_length(p: Profile) -> float:
    """sup over rho <= 0 of (radial length from E) / |x|^{1/2}, with |x|^{1/2} = e^{rho/4}."""
    m = p.grid.rho <= 0
    L = cumulative_radial_length(p)[m]
    if not np.all(np.isfinite(L)):
        return math.inf
    return float(np.max(L * np.exp(-0.25 * p.grid.rho[m])))


def monitor_first_derivative(p: Profile, alpha: float = DEFAULT_ALPHA) -> float:
    """sup of |s|^{2 alpha} (|d log phi / d rho| + |d log phi' / d rho|)."""
    if alpha < 0:
        raise PreconditionError("alpha must be non-negative")
    w = _weight(p) ** alpha
    return float(np.max(w * (np.abs(p.dphi / p.phi) + np.abs(p.d2phi / p.dphi))))


# -------------------------------------------------------------------- fitting

@dataclass(frozen=True)
class PowerFit:
    p: float
    C: float
    residual: float
    npts: int


def fit_power_law(x, y) -> PowerFit:
    """Least squares of log y = log C + p log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise InsufficientDataError("power-law fit needs at least two positive points")
    lx, ly = np.log(x), np.log(y)
    c = np.polyfit(lx, ly, 1)
    res = float(np.sqrt(np.mean((np.polyval(c, lx) - ly) ** 2)))
    return PowerFit(float(c[0]), float(math.exp(c[1])), res, len(x))


def e_diameter_series(traj: Trajectory):
    T = traj.params.T
    t = traj.times
    d = np.array([sphere_diameter(s.profile, -math.inf) for s in traj.snapshots])
    return T - t, d


def monitor_E_diameter(traj: Trajectory, min_points: int = 10, bound_exponent: float = 1.0 / 3.0) -> dict:
    """Fit diam(E) against (T - t)^p over the last decade of T - t before the stop.

    C is the smallest constant with diam(E) <= C (T - t)^{1/3} on the window; the
    bound stays uniform as t -> T exactly when p >= 1/3 (checked with 0.01 slack).
    """
    gap, d = e_diameter_series(traj)
    m = gap > 0
    gap, d = gap[m], d[m]
    if len(gap) == 0:
        raise InsufficientDataError("no snapshots before T")
    lo = gap.min()
    w = (gap >= lo * (1 - 1e-9)) & (gap <= 10 * lo * (1 + 1e-9))
    if w.sum() < min_points:
        raise InsufficientDataError(f"{int(w.sum())} snapshots in the last decade, need {min_points}")
    fit = fit_power_law(gap[w], d[w])
    C = float(np.max(d[w] / gap[w] ** bound_exponent))
    bound_ok = fit.p >= bound_exponent - 0.01
    return {
        "name": "E_diameter",
        "anchor": "d_omega(p, q) <= C (T - t)^(1/3) on E",
        "p": fit.p,
        "C_fit": fit.C,
        "residual": fit.residual,
        "window": [float(gap[w].min()), float(gap[w].max())],
        "npts": fit.npts,
        "C_bound": C,
        "bound_exponent": bound_exponent,
        "verdict": PASS if bound_ok and math.isfinite(C) else FAIL,
    }


# --------------------------------------------------------------------- report

@dataclass(frozen=True)
class References:
    initial: Profile
    pullback: Profile
    n: int


@dataclass
class MonitorSeries:
    name: str
    anchor: str
    side: str
    kind: str  # "upper" or "lower"
    times: list
    values: list
    factor: float
    reason: str | None = None
    singular_time: float | None = None

    @property
    def skipped(self) -> bool:
        return self.reason is not None

    def _trend_to_singular_time(self, v, k: int = 5) -> float:
        """Linear trend of the k values nearest the singular time, evaluated there."""
        t = np.array(self.times)
        idx = np.argsort(np.abs(t - self.singular_time))[:k]
        c = np.polyfit(t[idx], v[idx], 1)
        return float(np.polyval(c, self.singular_time))

    def summary(self) -> dict:
        if self.skipped:
            return {"name": self.name, "anchor": self.anchor, "side": self.side, "kind": self.kind,
                    "verdict": SKIPPED, "reason": self.reason, "times": [], "values": []}
        v = np.array(self.values)
        med = float(np.median(v))
        rmax, rmin = float(np.max(v)), float(np.min(v))
        out = {"name": self.name, "anchor": self.anchor, "side": self.side, "kind": self.kind,
               "times": list(self.times), "values": [float(x) for x in v],
               "run_max": rmax, "run_min": rmin, "median": med}
        ok = bool(np.all(np.isfinite(v))) and rmax <= self.factor * med
        if self.kind == "lower" and ok:
            # bounded away from zero: positive, and not trending to zero at the singular time
            ok = rmin > 0
            if self.singular_time is not None and len(v) >= 5:
                trend = self._trend_to_singular_time(v)
                out["trend_at_singular_time"] = trend
                ok = ok and trend >= rmin / self.factor
        out["verdict"] = PASS if ok else FAIL
        return out


# (name, anchor, kind, evaluator(profile, refs, opts))
MONITORS = (
    ("volume_ratio", "omega^n <= C Omega", "upper",
     lambda p, r, o: monitor_volume_ratio(p, r.initial, r.n)),
    ("lower", "omega >= c pi^* omega_Y", "lower",
     lambda p, r, o: monitor_lower(p, r.pullback)),
    ("upper_weighted", "|s|^2 tr_{pi^* omega_Y} omega <= C", "upper",
     lambda p, r, o: monitor_upper_weighted(p, r.pullback, r.n)),
    ("upper_delta", "omega <= C |s|^{-2(1-delta)} omega_0", "upper",
     lambda p, r, o: monitor_upper_delta(p, r.initial, r.n, o["delta"])),
    ("radial", "|V|^2_omega <= C |s|_h", "upper",
     lambda p, r, o: monitor_radial(p)),
    ("sphere_diameter", "diameter of the small spheres is bounded", "upper",
     lambda p, r, o: monitor_sphere(p)),
    ("radial_length", "radial length from E <= C |x|^(1/2)", "upper",
     lambda p, r, o: monitor_radial_length(p)),
    ("first_derivative", "S <= C |s|^{-2 alpha}, first-derivative surrogate", "upper",
     lambda p, r, o: monitor_first_derivative(p, o["alpha"])),
)

ABSORBED = (
    {"name": "potential_bound", "reason": "the potential gauge is differentiated away; covered by volume_ratio"},
    {"name": "potential_time_derivative", "reason": "d_t of the potential is log of the volume ratio; covered by volume_ratio"},
)


@dataclass
class EstimateReport:
    monitors: list
    fits: list
    absorbed: list
    delta_sweep: dict
    factor: float
    options: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        vs = [m["verdict"] for m in self.monitors] + [f["verdict"] for f in self.fits]
        if FAIL in vs:
            return FAIL
        return PASS if PASS in vs else SKIPPED

    def entry(self, name: str, side: str = "before") -> dict:
        for m in self.monitors + self.fits:
            if m["name"] == name and m.get("side", "before") == side:
                return m
        raise KeyError((name, side))

    def to_dict(self) -> dict:
        return {
            "schema": "estimates/v1",
            "threshold_factor": self.factor,
            "options": self.options,
            "verdict": self.verdict,
            "monitors": self.monitors,
            "fits": self.fits,
            "absorbed": list(self.absorbed),
            "delta_sweep": self.delta_sweep,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _series(name, anchor, kind, fn, traj, refs, side, opts, factor):
    if traj is None:
        return MonitorSeries(name, anchor, side, kind, [], [], factor, reason="no trajectory for this side")
    vals = [fn(s.profile, refs, opts) for s in traj.snapshots]
    return MonitorSeries(name, anchor, side, kind, [float(s.t) for s in traj.snapshots], vals, factor,
                         singular_time=traj.params.T)


def smallest_passing_delta(traj: Trajectory, initial: Profile, n: int, factor: float, step: float = 0.05):
    """Smallest delta in {step k} for which the weighted upper bound passes the ratio test."""
    passing = []
    for k in range(1, int(round(1 / step))):
        d = round(k * step, 10)
        vals = np.array([monitor_upper_delta(s.profile, initial, n, d) for s in traj.snapshots])
        if np.all(np.isfinite(vals)) and vals.max() <= factor * np.median(vals):
            passing.append(d)
    return min(passing) if passing else None


def run_report(traj: Trajectory, refs: References | None, continuation: Trajectory | None = None,
               factor: float = DEFAULT_FACTOR, delta: float = DEFAULT_DELTA, alpha: float = DEFAULT_ALPHA) -> EstimateReport:
    """Evaluate every monitor on every snapshot, on both sides of T when a continuation is given."""
    if refs is None or refs.initial is None or refs.pullback is None:
        raise ConfigurationError("run_report needs the initial and pull-back reference profiles")
    if traj is None or len(traj.snapshots) < 3:
        raise InsufficientDataError("need a trajectory with at least three snapshots")
    if factor <= 1:
        raise ConfigurationError("threshold factor must exceed 1")
    opts = {"delta": delta, "alpha": alpha}
    monitors = []
    for side, tr in (("before", traj), ("after", continuation)):
        for name, anchor, kind, fn in MONITORS:
            monitors.append(_series(name, anchor, kind, fn, tr, refs, side, opts, factor).summary())
    fits = []
    try:
        fits.append(monitor_E_diameter(traj))
    except InsufficientDataError as exc:
        fits.append({"name": "E_diameter", "anchor": "d_omega(p, q) <= C (T - t)^(1/3) on E",
                     "verdict": SKIPPED, "reason": str(exc)})
    sweep = {"step": 0.05, "before": smallest_passing_delta(traj, refs.initial, refs.n, factor)}
    if continuation is not None:
        sweep["after"] = smallest_passing_delta(continuation, refs.initial, refs.n, factor)
    return EstimateReport(monitors, fits, list(ABSORBED), sweep, factor, opts)
