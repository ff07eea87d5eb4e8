"""Command-line entry point: ``kahler-surgery {mmp,flow,continue,verify,gh,pipeline}``.

Exit status is 0 when the command's verdict is Pass (or the command is purely
informational), 1 when a verdict fails, and 2 for invalid input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import estimates as est
from . import flow
from .errors import SurgeryLabError
from .geometry import read_snapshot, reference_profiles, write_snapshot
from .gh import DirectionSet, convergence_series
from .mmp import lattice_from_dict, run_schedule, schedule_to_dict
from .pipeline import PipelineConfig, emit_plots_data, run_pipeline
from .validation import read_json, write_json

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _load_params(path) -> flow.FlowParams:
    return flow.FlowParams.from_dict(read_json(path, "flow_params"))


def _load_side(path):
    """A trajectory directory, or a continuation directory whose summary names the merged run."""
    path = Path(path)
    if (path / "continuation.json").exists():
        doc = read_json(path / "continuation.json", "continuation")
        if not doc["merged"]:
            raise SurgeryLabError("continuation has no merged trajectory (ladder not Cauchy)")
        root = path if (path / doc["merged"]).exists() else path.parent
        return flow.load_trajectory(root / doc["merged"])
    return flow.load_trajectory(path)


def cmd_mmp(args) -> int:
    lat, L = lattice_from_dict(read_json(args.input, "lattice_input"))
    doc = schedule_to_dict(run_schedule(L, lat))
    write_json(args.output, doc, "schedule")
    print(f"terminal={doc['terminal']} terminal_time={doc['terminal_time']} steps={len(doc['steps'])}")
    return EXIT_OK


def cmd_flow(args) -> int:
    params = _load_params(args.config)
    out = Path(args.out)
    traj = flow.run_to_T(params, out)
    print(f"terminal_reason={traj.terminal_reason} T_est={traj.singular_time_estimate:.6f} "
          f"T_exact={params.T:.6f} snapshots={len(traj.snapshots)}")
    try:
        limit = flow.limit_profile(traj)
    except SurgeryLabError as exc:
        print(f"limit: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_snapshot(out / "limit", limit, params.T, params.n)
    print(f"limit written to {out / 'limit.csv'} (Cauchy defect {flow.limit_cauchy_defect(traj):.3g})")
    return EXIT_OK


def cmd_continue(args) -> int:
    params = _load_params(args.config)
    limit, _ = read_snapshot(args.limit)
    cr = flow.continue_on_Y(params, limit)
    out = Path(args.out)
    runs = {}
    for e, tr in cr.runs.items():
        name = f"eps_{e:g}"
        flow.save_trajectory(tr, out / name)
        runs[f"{e:g}"] = name
    doc = {
        "schema": "continuation/v1", "T": params.T, "T_prime": params.T_prime,
        "eps_list": sorted(cr.runs, reverse=True), "runs": runs,
        "cauchy": [{"eps_a": a, "eps_b": b, "sup": s} for a, b, s in cr.cauchy],
        "tol": cr.tol, "window": list(cr.window),
        "merged": runs[f"{min(cr.runs):g}"] if cr.ok else None, "ok": cr.ok,
    }
    write_json(out / "continuation.json", doc, "continuation")
    for a, b, s in cr.cauchy:
        print(f"eps {a:g} vs {b:g}: sup difference {s:.3g} (tol {cr.tol:g})")
    return EXIT_OK if cr.ok else EXIT_FAIL


def cmd_verify(args) -> int:
    traj = flow.load_trajectory(args.run)
    cont = _load_side(args.continuation) if args.continuation else None
    p = traj.params
    refs = reference_profiles(traj.snapshots[0].profile.grid, p.n, p.a0, p.b0, p.kappa, args.eps0)
    rep = est.run_report(traj, est.References(refs.initial, refs.pullback, p.n), cont,
                         args.factor, args.delta, args.alpha)
    write_json(args.out, rep.to_dict(), "estimates")
    for m in rep.monitors + rep.fits:
        print(f"{m['name']:18s} {m.get('side', 'before'):6s} {m['verdict']}")
    return EXIT_OK if rep.verdict == est.PASS else EXIT_FAIL


def cmd_gh(args) -> int:
    traj = flow.load_trajectory(args.run)
    cont = _load_side(args.continuation) if args.continuation else None
    limit, _ = read_snapshot(args.limit)
    dirs = DirectionSet.sample(traj.params.n, args.dirs, args.seed)
    rep = convergence_series(traj, limit, dirs, cont, args.levels)
    write_json(args.out, rep.to_dict(), "gh")
    for side, f in rep.final.items():
        print(f"{side}: final eps/diam = {f['rel']:.4f}, monotone = {rep.monotone[side]}")
    return EXIT_OK if rep.verdict == "Pass" else EXIT_FAIL


def cmd_pipeline(args) -> int:
    with open(args.config) as fh:
        cfg = PipelineConfig.from_dict(json.load(fh))
    report = run_pipeline(cfg, args.out)
    for k, c in report["clauses"].items():
        print(f"clause ({k}): {c['verdict']} - {c['detail']}")
    for k, c in report["checks"].items():
        print(f"{k}: {c['verdict']} - {c['detail']}")
    if args.figures:
        from .plotting import render_figures

        for path in render_figures(args.out):
            print(f"figure: {path}")
    print(f"verdict: {report['verdict']}")
    return EXIT_OK if report["verdict"] == "Pass" else EXIT_FAIL


def cmd_plots(args) -> int:
    path, missing = emit_plots_data(args.run)
    print(f"wrote {path}")
    for m in missing:
        print(f"missing: {m}", file=sys.stderr)
    if args.figures:
        from .plotting import render_figures

        for p in render_figures(args.run):
            print(f"figure: {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kahler-surgery", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mmp", help="exact minimal-model schedule of a surface lattice")
    p.add_argument("--input", required=True, help="lattice JSON")
    p.add_argument("--output", "--out", dest="output", required=True, help="schedule JSON to write")
    p.set_defaults(func=cmd_mmp)

    p = sub.add_parser("flow", help="run the flow up to the singular time")
    p.add_argument("--config", required=True, help="FlowParams JSON")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("continue", help="continue from a limit profile through the eps ladder")
    p.add_argument("--config", required=True, help="FlowParams JSON")
    p.add_argument("--limit", required=True, help="limit profile (CSV with JSON sidecar)")
    p.add_argument("--out", required=True, help="continuation directory")
    p.set_defaults(func=cmd_continue)

    p = sub.add_parser("verify", help="estimate monitors on a run")
    p.add_argument("--run", required=True)
    p.add_argument("--continuation")
    p.add_argument("--out", required=True)
    p.add_argument("--factor", type=float, default=est.DEFAULT_FACTOR, help="boundedness ratio (default 3)")
    p.add_argument("--delta", type=float, default=est.DEFAULT_DELTA)
    p.add_argument("--alpha", type=float, default=est.DEFAULT_ALPHA)
    p.add_argument("--eps0", type=float, default=0.1, help="offset of the smooth reference on E")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gh", help="Gromov-Hausdorff bounds against the contracted space")
    p.add_argument("--run", required=True)
    p.add_argument("--continuation")
    p.add_argument("--limit", required=True)
    p.add_argument("--dirs", type=int, default=24, help="directions per level")
    p.add_argument("--levels", type=int, default=60, help="rho levels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gh)

    p = sub.add_parser("pipeline", help="full surgical-contraction pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSV")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("plots", help="(re)write timeseries.csv for a pipeline directory")
    p.add_argument("--run", required=True, help="pipeline output directory")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_plots)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SurgeryLabError, ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
