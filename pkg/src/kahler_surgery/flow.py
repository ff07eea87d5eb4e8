"""Reduced Kahler-Ricci flow on Bl_pt P^n and its continuation on P^n.

Under the Calabi ansatz the flow of the potential u(rho) is
d_t u = log(phi' phi^{n-1}) - n rho (+ const), so phi = u' evolves by

    d_t phi = phi''/phi' + (n-1) phi'/phi - n.

Boundary values come from the class: a(t) = a0 - (n-1)t, b(t) = b0 - (n+1)t
before T = a0/(n-1); afterwards a = 0 and b(t) = kappa - (n+1)(t - T).
Time stepping is explicit Heun (RK2) with a per-node diffusion limit.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateMetricError,
    DivergedError,
    NonConvergenceError,
    PreconditionError,
    ReduceEpsError,
)
from .geometry import Profile, RadialGrid, read_snapshot, write_snapshot
from .validation import read_json, write_json

BEFORE_T = "BeforeT"
AFTER_T = "AfterT"
REACHED_T = "ReachedT"
REACHED_TY = "ReachedTY"
DIVERGED = "Diverged"

MAX_RETRIES = 20


@dataclass(frozen=True)
class FlowParams:
    n: int = 2
    a0: float = 1.0
    b0: float = 4.0
    N: int = 400
    dt_safety: float = 0.4
    eps_stop: float | None = None
    snapshot_dt: float | None = None
    continuation_eps_list: tuple = (1e-2, 1e-3, 1e-4)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise PreconditionError("complex dimension n must be an integer >= 2")
        if not 0 < self.dt_safety < 1:
            raise PreconditionError("dt_safety must lie in (0, 1)")
        if not 0 < self.a0 < self.b0:
            raise PreconditionError(f"need 0 < a0 < b0, got a0={self.a0}, b0={self.b0}")
        eps = tuple(float(e) for e in self.continuation_eps_list)
        if not eps or any(e <= 0 for e in eps) or any(x <= y for x, y in zip(eps, eps[1:])):
            raise PreconditionError("continuation_eps_list must be positive and strictly decreasing")
        object.__setattr__(self, "continuation_eps_list", eps)
        if self.eps_stop is None:
            object.__setattr__(self, "eps_stop", 1e-2 * self.a0)
        if self.snapshot_dt is None:
            object.__setattr__(self, "snapshot_dt", self.T / 200)
        if not 0 < self.eps_stop < self.a0:
            raise PreconditionError("eps_stop must lie in (0, a0)")
        if self.snapshot_dt <= 0:
            raise PreconditionError("snapshot_dt must be positive")

    @property
    def T(self) -> float:
        return self.a0 / (self.n - 1)

    @property
    def kappa(self) -> float:
        return ((self.n - 1) * self.b0 - (self.n + 1) * self.a0) / (self.n - 1)

    @property
    def T_Y(self) -> float:
        return self.T + self.kappa / (self.n + 1)

    @property
    def T_prime(self) -> float:
        return self.T + self.kappa / (2 * (self.n + 1))

    @property
    def t_stop(self) -> float:
        return (self.a0 - self.eps_stop) / (self.n - 1)

    def require_contraction(self):
        """The exceptional divisor shrinks before the whole space collapses iff a0(n+1) < b0(n-1)."""
        if not self.a0 * (self.n + 1) < self.b0 * (self.n - 1):
            raise PreconditionError(
                f"a0(n+1) < b0(n-1) fails ({self.a0 * (self.n + 1)} >= {self.b0 * (self.n - 1)}): "
                "the flow collapses instead of contracting E"
            )

    def boundary(self, t: float, side: str) -> tuple[float, float]:
        if side == BEFORE_T:
            return self.a0 - (self.n - 1) * t, self.b0 - (self.n + 1) * t
        return 0.0, self.kappa - (self.n + 1) * (t - self.T)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["continuation_eps_list"] = list(self.continuation_eps_list)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FlowParams:
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise PreconditionError(f"unknown FlowParams fields: {sorted(extra)}")
        d = dict(d)
        if "continuation_eps_list" in d:
            d["continuation_eps_list"] = tuple(d["continuation_eps_list"])
        return cls(**d)


@dataclass(frozen=True)
class FlowState:
    t: float
    profile: Profile
    side: str = BEFORE_T


@dataclass
class Trajectory:
    params: FlowParams
    snapshots: list
    terminal_reason: str
    side: str = BEFORE_T
    singular_time_estimate: float | None = None
    steps: int = 0
    eps: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def phis(self) -> np.ndarray:
        return np.array([s.profile.phi for s in self.snapshots])

    def at(self, t: float) -> FlowState:
        """Snapshot whose time is closest to t."""
        k = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[k]


# --------------------------------------------------------------------- the rhs

def _rhs(grid: RadialGrid, phi, a, b, n):
    d1, d2 = grid.derivatives(phi, a, b)
    s, j = grid.s, grid.jac
    return (1.0 - 2.0 * s) + j * d2 / d1 + (n - 1) * j * d1 / phi - n, d1


def reduced_rhs(p: Profile, n: int) -> np.ndarray:
    """d_t phi at the nodes: phi''/phi' + (n-1) phi'/phi - n, rho-derivatives through ds/drho = s(1-s)."""
    if np.any(p.dphi_ds <= 0):
        raise DegenerateMetricError("phi' <= 0")
    if np.any(p.phi <= 0):
        raise DegenerateMetricError("phi vanishes at an interior node")
    return _rhs(p.grid, p.phi, p.a, p.b, n)[0]


# ------------------------------------------------------------ log-det oracle

_W1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
_W2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}


def oracle_logdet(u: Callable, rho, n: int, rel_step: float = 1e-3) -> np.ndarray:
    """log det of the complex Hessian of u(log|z|^2) at z = (x, 0, ..., 0), x = e^{rho/2}.

    Brute force: the real 2n x 2n Hessian by fourth-order differences, then the
    Hermitian matrix H_{jk} = (U_xjxk + U_yjyk)/4 + i (U_xjyk - U_yjxk)/4.
    Independent of the reduction, so it can certify reduced_rhs.
    """
    out = []
    for r in np.atleast_1d(np.asarray(rho, dtype=float)):
        x0 = math.exp(0.5 * r)
        h = rel_step * x0
        if not h > 0 or h < 1e-300 or not math.isfinite(h):
            raise DegenerateMetricError(f"finite-difference step underflows at rho={r}")
        base = np.zeros(2 * n)
        base[0] = x0

        def U(v):
            return u(math.log(float(np.dot(v, v))))

        def mixed(i, k):
            tot = 0.0
            if i == k:
                for a, w in _W2.items():
                    v = base.copy()
                    v[i] += a * h
                    tot += w * U(v)
                return tot / (h * h)
            for a, wa in _W1.items():
                for c, wc in _W1.items():
                    v = base.copy()
                    v[i] += a * h
                    v[k] += c * h
                    tot += wa * wc * U(v)
            return tot / (h * h)

        R = np.empty((2 * n, 2 * n))
        for i in range(2 * n):
            for k in range(i, 2 * n):
                R[i, k] = R[k, i] = mixed(i, k)
        X = np.arange(0, 2 * n, 2)
        Y = X + 1
        Hc = 0.25 * (R[np.ix_(X, X)] + R[np.ix_(Y, Y)]) + 0.25j * (R[np.ix_(X, Y)] - R[np.ix_(Y, X)])
        ev = np.linalg.eigvalsh(0.5 * (Hc + Hc.conj().T))
        if ev.min() <= 0:
            raise DegenerateMetricError(f"complex Hessian is not positive definite at rho={r}")
        out.append(float(np.sum(np.log(ev))))
    return np.array(out)


# ---------------------------------------------------------------- stepping

def stable_dt(grid: RadialGrid, phi, a, b, safety: float) -> float:
    """Largest explicit step for diffusion coefficient s(1-s)/phi_s, node by node."""
    d1, _ = grid.derivatives(phi, a, b)
    return float(safety * np.min(grid.h_min ** 2 * d1 / (2.0 * grid.jac)))


def _admissible(phi, a, b) -> bool:
    return bool(np.all(np.isfinite(phi)) and phi[0] > a and phi[-1] < b and np.all(np.diff(phi) > 0))


def _heun(grid, phi, t, dt, n, bnd):
    a, b = bnd(t)
    r1, _ = _rhs(grid, phi, a, b, n)
    p1 = phi + dt * r1
    a1, b1 = bnd(t + dt)
    if not _admissible(p1, a1, b1):
        return None
    r2, _ = _rhs(grid, p1, a1, b1, n)
    out = phi + 0.5 * dt * (r1 + r2)
    return out if _admissible(out, a1, b1) else None


def _advance(grid, phi, t, dt, n, bnd):
    """One accepted Heun step, halving dt on NaN or lost monotonicity.  Returns (phi, dt_used)."""
    with np.errstate(all="ignore"):
        for _ in range(MAX_RETRIES + 1):
            out = _heun(grid, phi, t, dt, n, bnd)
            if out is not None:
                return out, dt
            dt *= 0.5
    return None, dt


def step(state: FlowState, dt: float, params: FlowParams) -> FlowState:
    """One RK2 step with class-ODE boundary values; raises DivergedError after 20 halvings."""
    p = state.profile
    bnd = lambda t: params.boundary(t, state.side)  # noqa: E731
    phi, used = _advance(p.grid, p.phi, state.t, dt, params.n, bnd)
    if phi is None:
        raise DivergedError(f"step at t={state.t} failed after {MAX_RETRIES} halvings", state)
    t = state.t + used
    a, b = bnd(t)
    return FlowState(t, Profile(p.grid, phi, a, b), state.side)


def _integrate(params, phi, t0, t_end, side, snap_times, on_snapshot=None):
    grid = RadialGrid(params.N)
    bnd = lambda t: params.boundary(t, side)  # noqa: E731
    targets = sorted(set(float(x) for x in snap_times if t0 < x < t_end - 1e-12)) + [t_end]
    a, b = bnd(t0)
    snaps = [FlowState(t0, Profile(grid, phi, a, b), side)]
    t = t0
    steps = 0
    k = 0
    while k < len(targets):
        target = targets[k]
        a, b = bnd(t)
        dt = min(stable_dt(grid, phi, a, b, params.dt_safety), target - t)
        new, used = _advance(grid, phi, t, dt, params.n, bnd)
        if new is None:
            last = snaps[-1]
            if t > last.t:
                last = FlowState(t, Profile(grid, phi, a, b), side)
            return snaps, steps, last
        phi = new
        steps += 1
        t = target if used == dt and dt == target - t else t + used
        if t >= target:
            a, b = bnd(t)
            st = FlowState(t, Profile(grid, phi, a, b), side)
            snaps.append(st)
            if on_snapshot is not None:
                on_snapshot(st)
            k += 1
    return snaps, steps, None


def snapshot_schedule(t0: float, t_end: float, dt: float, extra: Sequence[float] = ()) -> list:
    k = np.arange(1, int(math.floor((t_end - t0) / dt + 1e-9)) + 1)
    return sorted(set([float(t0 + dt * i) for i in k] + [float(x) for x in extra]))


# ------------------------------------------------------------------ before T

def apex_extrapolation_series(traj: Trajectory):
    """Interior apex value 1.5 phi_0 - 0.5 phi_1 (linear extrapolation to s = 0) at each snapshot."""
    lo = np.array([s.profile.boundary_extrapolation()[0] for s in traj.snapshots])
    hi = np.array([s.profile.boundary_extrapolation()[1] for s in traj.snapshots])
    return traj.times, lo, hi


def estimate_singular_time(traj: Trajectory, window=(0.1, 0.8)) -> float:
    """Zero of the least-squares line through the extrapolated apex value phi(-inf).

    The line is fitted over window * (last time), so the estimate uses only the
    interior solution and is independent of the imposed boundary value a(t).
    """
    t, lo, _ = apex_extrapolation_series(traj)
    m = (t >= window[0] * t[-1]) & (t <= window[1] * t[-1])
    if m.sum() < 3:
        raise NonConvergenceError("too few snapshots to estimate the singular time")
    c = np.polyfit(t[m], lo[m], 1)
    return float(-c[1] / c[0])


def boundary_slopes(traj: Trajectory, window=(0.1, 0.8)):
    """Least-squares d/dt of the extrapolated boundary values over window * T."""
    T = traj.params.T
    t, lo, hi = apex_extrapolation_series(traj)
    m = (t >= window[0] * T) & (t <= window[1] * T)
    return float(np.polyfit(t[m], lo[m], 1)[0]), float(np.polyfit(t[m], hi[m], 1)[0])


def run_to_T(params: FlowParams, out_dir=None) -> Trajectory:
    """Integrate from the linear profile a0 + (b0 - a0)s until a(t) = eps_stop."""
    params.require_contraction()
    grid = RadialGrid(params.N)
    phi0 = params.a0 + (params.b0 - params.a0) * grid.s
    times = snapshot_schedule(0.0, params.t_stop, params.snapshot_dt)
    snaps, steps, failed = _integrate(params, phi0, 0.0, params.t_stop, BEFORE_T, times)
    traj = Trajectory(params, snaps, REACHED_T if failed is None else DIVERGED, BEFORE_T, steps=steps)
    if failed is not None:
        if out_dir is not None:
            save_trajectory(traj, out_dir)
        raise DivergedError(f"flow diverged near t={failed.t}", failed)
    traj.singular_time_estimate = estimate_singular_time(traj)
    traj.diagnostics["singular_time_analytic"] = params.T
    if out_dir is not None:
        save_trajectory(traj, out_dir)
    return traj


def _extrapolate_to(s1: FlowState, s2: FlowState, T: float):
    return s2.profile.phi + (T - s2.t) * (s2.profile.phi - s1.profile.phi) / (s2.t - s1.t)


def limit_cauchy_defect(traj: Trajectory, rho_min: float = -5.0) -> float:
    """sup over rho >= rho_min of the gap between the last two pairwise extrapolations to T."""
    if len(traj.snapshots) < 3:
        raise NonConvergenceError("need three snapshots")
    s1, s2, s3 = traj.snapshots[-3:]
    T = traj.params.T
    e1 = _extrapolate_to(s1, s2, T)
    e2 = _extrapolate_to(s2, s3, T)
    mask = s3.profile.grid.rho >= rho_min
    return float(np.max(np.abs(e1 - e2)[mask]))


def limit_profile(traj: Trajectory, tol: float = 1e-3, rho_min: float = -5.0) -> Profile:
    """phi_T from the last two snapshots extrapolated linearly to the singular time, with a = 0, b = kappa.

    Raises NonConvergenceError when successive extrapolations differ by more than
    tol on rho >= rho_min, or when the extrapolated profile is not a metric.
    """
    if traj.terminal_reason != REACHED_T:
        raise PreconditionError("trajectory did not reach eps_stop")
    defect = limit_cauchy_defect(traj, rho_min)
    if defect > tol:
        raise NonConvergenceError(f"limit not Cauchy: sup difference {defect:.3g} > {tol:g}")
    p = traj.params
    s2, s3 = traj.snapshots[-2:]
    phi = _extrapolate_to(s2, s3, p.T)
    try:
        return Profile(s3.profile.grid, phi, 0.0, p.kappa)
    except (ValueError, DegenerateMetricError) as exc:
        raise NonConvergenceError(f"extrapolated limit is not a metric: {exc}") from exc


# ------------------------------------------------------------------- after T

def regularize_initial(phi_T: Profile, eps: float) -> Profile:
    """phi_T + eps sigma with sigma = e^rho/(1+e^rho)^2 = s(1-s); keeps a = 0 and b."""
    if phi_T.a != 0:
        raise PreconditionError("regularization expects a limit profile with a = 0")
    if eps < 0:
        raise PreconditionError("eps must be non-negative")
    if eps == 0:
        return phi_T
    try:
        return Profile(phi_T.grid, phi_T.phi + eps * phi_T.grid.jac, 0.0, phi_T.b)
    except (ValueError, DegenerateMetricError) as exc:
        raise ReduceEpsError(f"eps={eps} breaks monotonicity; use a smaller eps") from exc


CONTINUATION_MARKS = (0.01, 0.025, 0.05, 0.1)


@dataclass
class ContinuationResult:
    runs: dict
    merged: Trajectory | None
    cauchy: list
    tol: float
    window: tuple

    @property
    def ok(self) -> bool:
        return self.merged is not None


def continue_one(params: FlowParams, phi_T: Profile, eps: float, t_end: float | None = None) -> Trajectory:
    T = params.T
    t_end = params.T_prime if t_end is None else t_end
    start = regularize_initial(phi_T, eps)
    times = snapshot_schedule(T, t_end, params.snapshot_dt, [T + d for d in CONTINUATION_MARKS])
    snaps, steps, failed = _integrate(params, start.phi, T, t_end, AFTER_T, times)
    reason = DIVERGED if failed is not None else REACHED_TY
    tr = Trajectory(params, snaps, reason, AFTER_T, steps=steps, eps=eps)
    tr.singular_time_estimate = T
    return tr


def continuation_cauchy(runs: dict, t_window, rho_min: float = -5.0) -> list:
    """Per consecutive eps pair, sup |phi_i - phi_{i+1}| over rho >= rho_min and t in the window."""
    eps = sorted(runs, reverse=True)
    out = []
    for e1, e2 in zip(eps, eps[1:]):
        A, B = runs[e1], runs[e2]
        tA, tB = A.times, B.times
        worst = 0.0
        for k, t in enumerate(tA):
            if not t_window[0] - 1e-12 <= t <= t_window[1] + 1e-12:
                continue
            j = int(np.argmin(np.abs(tB - t)))
            if abs(tB[j] - t) > 1e-9:
                continue
            mask = A.snapshots[k].profile.grid.rho >= rho_min
            worst = max(worst, float(np.max(np.abs(A.phis[k] - B.phis[j])[mask])))
        out.append((e1, e2, worst))
    return out


def continue_on_Y(params: FlowParams, phi_T: Profile, eps_list=None, t_end=None,
                  tol: float = 5e-3, window_start: float = 0.05) -> ContinuationResult:
    """Evolve each regularized start on P^n; merged output is the smallest-eps run when Cauchy."""
    eps_list = tuple(params.continuation_eps_list if eps_list is None else eps_list)
    t_end = params.T_prime if t_end is None else t_end
    runs = {e: continue_one(params, phi_T, e, t_end) for e in eps_list}
    window = (params.T + window_start, t_end)
    cauchy = continuation_cauchy(runs, window)
    good = all(r.terminal_reason == REACHED_TY for r in runs.values()) and all(c[2] <= tol for c in cauchy)
    merged = runs[min(eps_list)] if good else None
    return ContinuationResult(runs, merged, cauchy, tol, window)


def collapse_time_estimate(traj: Trajectory) -> float:
    """Zero of the line through the extrapolated upper boundary value; the volume is kappa_t^n / n there."""
    t, _, hi = apex_extrapolation_series(traj)
    c = np.polyfit(t, hi, 1)
    return float(-c[1] / c[0])


def smooth_connection(traj: Trajectory, phi_T: Profile, deltas=(0.1, 0.05, 0.025), rho_min: float = 0.0):
    """sup_{rho >= rho_min} |phi(T + delta) - phi_T| for each delta; second value says whether it decreases as delta shrinks."""
    T = traj.params.T
    mask = phi_T.grid.rho >= rho_min
    vals = []
    for d in deltas:
        st = traj.at(T + d)
        if abs(st.t - (T + d)) > 1e-9:
            raise PreconditionError(f"no snapshot at T + {d}")
        vals.append(float(np.max(np.abs(st.profile.phi - phi_T.phi)[mask])))
    order = np.argsort(deltas)[::-1]
    seq = [vals[i] for i in order]
    return vals, all(x > y for x, y in zip(seq, seq[1:]))


def uniqueness_proxy(params: FlowParams, phi_T: Profile, reference: Trajectory,
                     ladder=(5e-3, 5e-4), delta: float = 0.1, tol: float = 1e-2, rho_min: float = -5.0):
    """Continue with a second eps ladder and compare with the reference at T + delta on rho >= rho_min."""
    res = continue_on_Y(params, phi_T, ladder, t_end=params.T + delta, window_start=0.0)
    other = res.runs[min(ladder)]
    t = params.T + delta
    a, b = reference.at(t), other.at(t)
    mask = phi_T.grid.rho >= rho_min
    gap = float(np.max(np.abs(a.profile.phi - b.profile.phi)[mask]))
    return gap, gap <= tol


# -------------------------------------------------------------- persistence

def save_trajectory(traj: Trajectory, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, st in enumerate(traj.snapshots):
        stem = f"snap_{k:05d}"
        write_snapshot(out / stem, st.profile, st.t, traj.params.n)
        entries.append({"t": st.t, "file": stem + ".csv"})
    manifest = {
        "schema": "run/v1",
        "params": traj.params.to_dict(),
        "side": traj.side,
        "eps": traj.eps,
        "snapshots": entries,
        "singular_time_estimate": traj.singular_time_estimate,
        "terminal_reason": traj.terminal_reason,
        "steps": traj.steps,
    }
    write_json(out / "run.json", manifest, "run")
    return out


def load_trajectory(run_dir) -> Trajectory:
    run_dir = Path(run_dir)
    man = read_json(run_dir / "run.json", "run")
    params = FlowParams.from_dict(man["params"])
    snaps = []
    for e in man["snapshots"]:
        prof, meta = read_snapshot(run_dir / e["file"])
        snaps.append(FlowState(meta["t"], prof, man["side"]))
    return Trajectory(params, snaps, man["terminal_reason"], man["side"],
                      man["singular_time_estimate"], man.get("steps", 0), man.get("eps"))
