"""End-to-end run: lattice schedule, flow to T, limit, continuation, estimates and GH series.

Every clause of the surgical-contraction behaviour maps to one named check with
a verdict and the evidence files behind it.  A failing stage is recorded and
the stages depending on it are reported as skipped; the report is always written.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import estimates as est
from . import flow
from .errors import ConfigurationError, SurgeryLabError
from .geometry import reference_profiles, sphere_diameter, total_volume, write_snapshot
from .gh import DirectionSet, convergence_series, d_T_space, metric_audit
from .mmp import blowup_p2, blowup_pn_times, example_class, run_schedule, schedule_to_dict
from .validation import read_json, validate, write_json

PASS, FAIL, SKIPPED = "Pass", "Fail", "Skipped"

LIMIT_TOL = 1e-3
T_TOL = 1e-2
TY_TOL = 2e-2
UNIQUENESS_TOL = 1e-2

CONFIG_DEFAULTS = {
    "seed": 0,
    "directions": 24,
    "levels": 60,
    "threshold_factor": est.DEFAULT_FACTOR,
    "delta": est.DEFAULT_DELTA,
    "alpha": est.DEFAULT_ALPHA,
    "eps0": 0.1,
    "uniqueness_ladder": [5e-3, 5e-4],
}


@dataclass
class PipelineConfig:
    params: flow.FlowParams
    seed: int = 0
    directions: int = 24
    levels: int = 60
    threshold_factor: float = est.DEFAULT_FACTOR
    delta: float = est.DEFAULT_DELTA
    alpha: float = est.DEFAULT_ALPHA
    eps0: float = 0.1
    uniqueness_ladder: list = field(default_factory=lambda: [5e-3, 5e-4])

    @classmethod
    def from_dict(cls, doc: dict) -> PipelineConfig:
        validate(doc, "pipeline_config")
        merged = {**CONFIG_DEFAULTS, **{k: v for k, v in doc.items() if k not in ("params", "mode")}}
        params = flow.FlowParams.from_dict(doc["params"])
        params.require_contraction()
        return cls(params, **merged)

    def to_dict(self) -> dict:
        return {
            "mode": "pipeline",
            "params": self.params.to_dict(),
            "seed": self.seed,
            "directions": self.directions,
            "levels": self.levels,
            "threshold_factor": self.threshold_factor,
            "delta": self.delta,
            "alpha": self.alpha,
            "eps0": self.eps0,
            "uniqueness_ladder": list(self.uniqueness_ladder),
        }


def exact(x) -> Fraction:
    """The decimal a config value was written as, as an exact rational."""
    return Fraction(repr(float(x))) if isinstance(x, float) else Fraction(x)


def lattice_times(n: int, a0, b0):
    """Exact (T, T_Y, schedule dict or None) from the algebraic side."""
    a, b = exact(a0), exact(b0)
    if n == 2:
        sched = run_schedule(example_class(a, b), blowup_p2(1))
        if not sched.steps:
            raise ConfigurationError("the class collapses before the divisor is contracted")
        return sched.steps[0].absolute_time, sched.terminal_time, schedule_to_dict(sched)
    T, TY = blowup_pn_times(n, a, b)
    return T, TY, None


def class_collapse_time(n: int, a0, b0) -> Fraction:
    """T + kappa/(n+1) from the class evolution alone, in exact arithmetic."""
    a, b = exact(a0), exact(b0)
    T = a / (n - 1)
    kappa = ((n - 1) * b - (n + 1) * a) / (n - 1)
    return T + kappa / (n + 1)


def _check(ok, detail, evidence, **values):
    verdict = SKIPPED if ok is None else (PASS if ok else FAIL)
    out = {"verdict": verdict, "detail": detail, "evidence": list(evidence)}
    if values:
        out["values"] = values
    return out


def _skip(reason):
    return _check(None, reason, [])


def run_pipeline(config: PipelineConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = config.params
    stages, checks = {}, {}
    clauses = {k: _skip("stage not reached") for k in ("i", "ii", "iii", "iv", "v")}
    ctx = {}

    def stage(name, fn):
        if any(s["status"] != "ok" for s in stages.values()):
            stages[name] = {"status": "skipped", "error": "an earlier stage failed"}
            return False
        try:
            fn()
        except (SurgeryLabError, ValueError, ArithmeticError) as exc:
            stages[name] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
            return False
        stages[name] = {"status": "ok"}
        return True

    def do_mmp():
        p.require_contraction()
        T, TY, sched = lattice_times(p.n, p.a0, p.b0)
        ctx.update(T_lat=T, TY_lat=TY)
        if sched is not None:
            write_json(out / "schedule.json", sched, "schedule")
        ctx["lattice"] = {"T": str(T), "T_Y": str(TY), "schedule": "schedule.json" if sched else None}

    def do_flow():
        ctx["traj"] = flow.run_to_T(p, out / "run")
        T_flow = ctx["traj"].singular_time_estimate
        checks["singular_time"] = _check(
            abs(T_flow - float(ctx["T_lat"])) <= T_TOL,
            f"flow T vs exact lattice threshold, tolerance {T_TOL:g}", ["run/run.json", "schedule.json"],
            flow=T_flow, lattice=str(ctx["T_lat"]))

    def do_limit():
        traj = ctx["traj"]
        defect = flow.limit_cauchy_defect(traj)
        clauses["i"] = _check(defect <= LIMIT_TOL,
                              f"successive extrapolations to T agree on rho >= -5 within {LIMIT_TOL:g}",
                              ["run/run.json", "limit.csv"], cauchy_defect=defect)
        limit = flow.limit_profile(traj, LIMIT_TOL)
        write_snapshot(out / "limit", limit, p.T, p.n)
        ctx["limit"] = limit
        b_meas = limit.boundary_extrapolation()[1]
        checks["limit_class"] = _check(abs(b_meas - p.kappa) <= 2e-2, "measured b at T vs kappa, tolerance 2e-2",
                                       ["limit.csv"], measured=b_meas, kappa=p.kappa)

    def do_space():
        dirs = DirectionSet.sample(p.n, config.directions, config.seed)
        ctx["dirs"] = dirs
        g, d = d_T_space(ctx["limit"], dirs, config.levels)
        audit = metric_audit(d)
        ok = bool(np.all(np.isfinite(d)) and audit["symmetric"] and audit["zero_diagonal"]
                  and audit["triangle_violations"] == 0)
        clauses["ii"] = _check(ok, "graph model of (Y, d_T) is a finite metric", ["limit.csv"],
                               diameter=float(d.max()), **audit)

    def do_continuation():
        cr = flow.continue_on_Y(p, ctx["limit"])
        ctx["cont"] = cr
        runs = {}
        for e, tr in cr.runs.items():
            name = f"continuation/eps_{e:g}"
            flow.save_trajectory(tr, out / name)
            runs[f"{e:g}"] = name
        merged = runs[f"{min(cr.runs):g}"] if cr.ok else None
        summary = {
            "schema": "continuation/v1", "T": p.T, "T_prime": p.T_prime,
            "eps_list": sorted(cr.runs, reverse=True), "runs": runs,
            "cauchy": [{"eps_a": a, "eps_b": b, "sup": s} for a, b, s in cr.cauchy],
            "tol": cr.tol, "window": list(cr.window), "merged": merged, "ok": cr.ok,
        }
        write_json(out / "continuation.json", summary, "continuation")
        if not cr.ok:
            clauses["iv"] = _check(False, "eps ladder is not Cauchy", ["continuation.json"],
                                   cauchy=[c[2] for c in cr.cauchy])
            raise flow.NonConvergenceError("continuation ladder is not Cauchy")
        vals, decreasing = flow.smooth_connection(cr.merged, ctx["limit"])
        gap, unique = flow.uniqueness_proxy(p, ctx["limit"], cr.merged, tuple(config.uniqueness_ladder))
        TY_flow = flow.collapse_time_estimate(cr.merged)
        clauses["iv"] = _check(decreasing and unique,
                               "ladder Cauchy, smooth connection decreasing in delta, second ladder agrees at T+0.1",
                               ["continuation.json"], cauchy=[c[2] for c in cr.cauchy],
                               smooth_connection=vals, uniqueness_gap=gap)
        checks["collapse_time"] = _check(
            abs(TY_flow - float(ctx["TY_lat"])) <= TY_TOL
            and ctx["TY_lat"] == class_collapse_time(p.n, p.a0, p.b0),
            f"extrapolated volume-zero time vs exact lattice collapse time, tolerance {TY_TOL:g}",
            ["continuation.json", "schedule.json"], flow=TY_flow, lattice=str(ctx["TY_lat"]))

    def do_estimates():
        grid = ctx["traj"].snapshots[0].profile.grid
        refs = reference_profiles(grid, p.n, p.a0, p.b0, p.kappa, config.eps0)
        rep = est.run_report(ctx["traj"], est.References(refs.initial, refs.pullback, p.n), ctx["cont"].merged,
                             config.threshold_factor, config.delta, config.alpha)
        doc = rep.to_dict()
        write_json(out / "estimates.json", doc, "estimates")
        ctx["estimates"] = doc
        checks["estimates"] = _check(rep.verdict == PASS, "every monitor bounded on both sides of T",
                                     ["estimates.json"])

    def do_gh():
        rep = convergence_series(ctx["traj"], ctx["limit"], ctx["dirs"], ctx["cont"].merged, config.levels)
        doc = rep.to_dict()
        write_json(out / "gh.json", doc, "gh")
        ctx["gh"] = doc
        for key, side in (("iii", "before"), ("v", "after")):
            f = rep.final[side]
            clauses[key] = _check(rep.monotone[side] and f["ok"],
                                  f"eps(t) decreasing within {rep.jitter:.0%} and final eps <= "
                                  f"{rep.threshold:g} diam(d_T) at |t-T| = 0.01",
                                  ["gh.json"], final_eps=f["eps"], final_rel=f["rel"],
                                  monotone=rep.monotone[side])

    stage("mmp", do_mmp)
    stage("flow", do_flow)
    stage("limit", do_limit)
    stage("space", do_space)
    stage("continuation", do_continuation)
    stage("estimates", do_estimates)
    stage("gh", do_gh)

    for name, st in stages.items():
        if st["status"] != "ok":
            for k, c in clauses.items():
                if c["verdict"] == SKIPPED and c["detail"] == "stage not reached":
                    clauses[k] = _skip(f"stage {name} {st['status']}")
            break

    if "traj" in ctx:
        emit_plots_data(out)

    verdicts = [c["verdict"] for c in clauses.values()] + [c["verdict"] for c in checks.values()]
    overall = PASS if verdicts and all(v == PASS for v in verdicts) else FAIL
    report = {
        "schema": "pipeline/v1",
        "config": config.to_dict(),
        "stages": stages,
        "clauses": clauses,
        "checks": checks,
        "lattice": ctx.get("lattice"),
        "verdict": overall,
    }
    write_json(out / "pipeline.json", report, "pipeline")
    return report


# ------------------------------------------------------------------ CSV bundle

BASE_COLUMNS = ("t", "a", "b", "diam_E", "vol", "eps_gh")


def _fmt(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.17g}"


def emit_plots_data(run_root) -> tuple[Path, list]:
    """Write timeseries.csv (one row per snapshot, both sides of T); returns (path, missing artifacts)."""
    root = Path(run_root)
    if not (root / "run" / "run.json").exists():
        raise ConfigurationError(f"no completed run under {root}")
    missing = []
    sides = [("before", flow.load_trajectory(root / "run"))]
    cont_doc = None
    if (root / "continuation.json").exists():
        cont_doc = read_json(root / "continuation.json", "continuation")
    if cont_doc and cont_doc["merged"]:
        sides.append(("after", flow.load_trajectory(root / cont_doc["merged"])))
    else:
        missing.append("continuation (merged)")
    monitors = {}
    names = [m[0] for m in est.MONITORS]
    if (root / "estimates.json").exists():
        for m in read_json(root / "estimates.json", "estimates")["monitors"]:
            monitors[(m["name"], m["side"])] = dict(zip(m["times"], m["values"]))
    else:
        missing.append("estimates.json")
    gh = {}
    if (root / "gh.json").exists():
        gh = {(e["side"], e["t"]): e["eps"] for e in read_json(root / "gh.json", "gh")["entries"]}
    else:
        missing.append("gh.json")
    path = root / "timeseries.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(BASE_COLUMNS) + names)
        for side, tr in sides:
            n = tr.params.n
            for st in tr.snapshots:
                p = st.profile
                row = [st.t, p.a, p.b, sphere_diameter(p, -math.inf), total_volume(p, n), gh.get((side, st.t))]
                row += [monitors.get((nm, side), {}).get(st.t) for nm in names]
                w.writerow([_fmt(x) for x in row])
    return path, missing


def read_timeseries(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return {h: data[:, i] for i, h in enumerate(head)}
