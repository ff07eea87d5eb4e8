"""Metric-graph models of (X, g(t)) and (Y, d_T) and correspondence bounds on their GH distance.

Nodes are (rho level, direction) pairs.  Nodes on one level form a complete
graph weighted by the sphere metric c1 sqrt(phi) d_FS; consecutive levels are
joined along each direction by the radial length between them.  Below the first
level sits either the exceptional divisor (m nodes with weights c1 sqrt(a) d_FS)
or, when a = 0, a single apex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .constants import SPHERE_CONST
from .errors import (
    ApexUnreachableError,
    CorrespondenceError,
    DisconnectedGraphError,
    PreconditionError,
)
from .flow import Trajectory
from .geometry import Profile, cumulative_radial_length

DEFAULT_DIRECTIONS = 24
DEFAULT_LEVELS = 60


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Unit vectors in C^n standing for points of P^{n-1}, with d_FS = 2 arccos |<u, v>| in [0, pi]."""
    vectors: np.ndarray
    dist: np.ndarray

    @property
    def m(self) -> int:
        return len(self.vectors)

    @classmethod
    def from_vectors(cls, vectors) -> DirectionSet:
        v = np.asarray(vectors, dtype=complex)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
        g = np.clip(np.abs(v @ v.conj().T), 0.0, 1.0)
        d = 2.0 * np.arccos(g)
        np.fill_diagonal(d, 0.0)
        d = 0.5 * (d + d.T)
        return cls(v, d)

    @classmethod
    def sample(cls, n: int, m: int = DEFAULT_DIRECTIONS, seed: int = 0) -> DirectionSet:
        """m directions in pairs at distance pi, so the sampled diameter is exact.

        For n = 2 the pairs are antipodes of a Fibonacci lattice on a hemisphere of
        P^1 = S^2; for n > 2 a seeded random vector and an orthogonal partner.
        """
        if n < 2:
            raise PreconditionError("need n >= 2")
        if m < 1:
            raise PreconditionError("need at least one direction")
        if m == 1:
            return cls.from_vectors(np.eye(n, dtype=complex)[:1])
        if m % 2:
            raise PreconditionError("direction count must be even")
        half = m // 2
        if n == 2:
            k = np.arange(half)
            z = 1.0 - (k + 0.5) / half  # upper hemisphere
            lon = math.pi * (3.0 - math.sqrt(5.0)) * k
            theta = np.arccos(z)
            u = np.stack([np.cos(theta / 2), np.exp(1j * lon) * np.sin(theta / 2)], axis=1)
            w = np.stack([-np.exp(-1j * lon) * np.sin(theta / 2), np.cos(theta / 2)], axis=1)
        else:
            rng = np.random.default_rng(seed)
            u = rng.normal(size=(half, n)) + 1j * rng.normal(size=(half, n))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            w = rng.normal(size=(half, n)) + 1j * rng.normal(size=(half, n))
            w -= np.sum(u.conj() * w, axis=1, keepdims=True) * u
        vecs = np.empty((m, n), dtype=complex)
        vecs[0::2] = u
        vecs[1::2] = w
        return cls.from_vectors(vecs)


@dataclass(frozen=True, eq=False)
class MetricGraph:
    adjacency: object  # scipy csr matrix
    levels: np.ndarray  # grid indices of the rho levels
    rho: np.ndarray
    m: int
    bottom: str  # "apex", "E" or "none"
    mesh: dict = field(default_factory=dict)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def bottom_nodes(self) -> np.ndarray:
        base = self.n_levels * self.m
        return np.arange(base, self.n_nodes)

    def node(self, level: int, direction: int) -> int:
        return level * self.m + direction


def level_indices(N: int, levels: int = DEFAULT_LEVELS) -> np.ndarray:
    if levels < 2 or levels > N:
        raise PreconditionError(f"need 2 <= levels <= N, got {levels}")
    return np.unique(np.round(np.linspace(0, N - 1, levels)).astype(int))


def build_graph(p: Profile, dirs: DirectionSet, with_apex: bool = True, levels: int = DEFAULT_LEVELS) -> MetricGraph:
    """Metric graph of the profile; the bottom layer is an apex when a = 0 and the divisor E otherwise."""
    idx = level_indices(p.grid.N, levels)
    K, m, D = len(idx), dirs.m, dirs.dist
    cum = cumulative_radial_length(p)[idx]
    if with_apex and not np.isfinite(cum[0]):
        raise ApexUnreachableError("radial length from the divisor diverges (no decaying tail at the first node)")
    iu, ju = np.triu_indices(m, 1)
    rows, cols, wts = [], [], []
    sq = np.sqrt(p.phi[idx])
    for i in range(K):
        rows.append(i * m + iu)
        cols.append(i * m + ju)
        wts.append(SPHERE_CONST * sq[i] * D[iu, ju])
    radial = np.diff(cum)
    for i in range(K - 1):
        rows.append(i * m + np.arange(m))
        cols.append((i + 1) * m + np.arange(m))
        wts.append(np.full(m, radial[i]))
    base = K * m
    bottom = "none"
    if with_apex:
        if p.a > 0:
            bottom = "E"
            rows.append(base + iu)
            cols.append(base + ju)
            wts.append(SPHERE_CONST * math.sqrt(p.a) * D[iu, ju])
            rows.append(base + np.arange(m))
            cols.append(np.arange(m))
            wts.append(np.full(m, cum[0]))
            total = base + m
        else:
            bottom = "apex"
            rows.append(np.full(m, base))
            cols.append(np.arange(m))
            wts.append(np.full(m, cum[0]))
            total = base + 1
    else:
        total = base
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(wts)
    keep = w > 0
    A = coo_matrix((w[keep], (r[keep], c[keep])), shape=(total, total)).tocsr()
    offdiag = D[iu, ju]
    mesh = {
        "levels": int(K),
        "directions": int(m),
        "rho_min": float(p.grid.rho[idx[0]]),
        "rho_max": float(p.grid.rho[idx[-1]]),
        "max_radial_edge": float(radial.max()) if len(radial) else 0.0,
        "max_angular_edge": float(SPHERE_CONST * sq.max() * offdiag.max()) if len(offdiag) else 0.0,
        "bottom_edge": float(cum[0]) if with_apex else None,
    }
    return MetricGraph(A, idx, p.grid.rho[idx], m, bottom, mesh)


def all_pairs(g: MetricGraph) -> np.ndarray:
    """Exact shortest-path distances by Dijkstra from every node."""
    d = shortest_path(g.adjacency, method="D", directed=False)
    if not np.all(np.isfinite(d)):
        raise DisconnectedGraphError("metric graph is disconnected")
    return d


def metric_audit(d: np.ndarray, tol: float = 1e-9, sample: int | None = 200, seed: int = 0) -> dict:
    """Symmetry, zero diagonal and triangle-inequality violations (on a node sample for large matrices)."""
    d = np.asarray(d)
    idx = np.arange(len(d))
    if sample is not None and len(d) > sample:
        idx = np.sort(np.random.default_rng(seed).choice(len(d), sample, replace=False))
    sub = d[np.ix_(idx, idx)]
    scale = max(1.0, float(np.max(sub)))
    violations = 0
    for k in range(len(sub)):
        violations += int(np.sum(sub > sub[:, k : k + 1] + sub[k : k + 1, :] + tol * scale))
    return {
        "symmetric": bool(np.allclose(d, d.T, atol=tol * scale, rtol=0)),
        "zero_diagonal": bool(np.all(np.diag(d) == 0)),
        "triangle_violations": violations,
        "nodes_checked": int(len(idx)),
    }


def d_T_space(limit: Profile, dirs: DirectionSet, levels: int = DEFAULT_LEVELS):
    """Graph model of the contracted space: apex y0 plus the limit metric away from it."""
    if limit.a != 0:
        raise PreconditionError("the limit profile must have a = 0")
    g = build_graph(limit, dirs, True, levels)
    d = all_pairs(g)
    return g, d


def gh_upper(dX: np.ndarray, dY: np.ndarray, F, G) -> float:
    """Smallest eps for which F: X -> Y and G: Y -> X are eps-approximations of each other.

    eps = max of sup|dX - dY(F, F)|, sup|dY - dX(G, G)|, sup dX(x, GFx) and sup dY(y, FGy).
    """
    F = np.asarray(F, dtype=int)
    G = np.asarray(G, dtype=int)
    nX, nY = len(dX), len(dY)
    if F.shape != (nX,) or G.shape != (nY,):
        raise CorrespondenceError("correspondence lengths do not match the spaces")
    if F.min() < 0 or F.max() >= nY or G.min() < 0 or G.max() >= nX:
        raise CorrespondenceError("correspondence index out of range")
    if len(np.unique(F)) != nY:
        raise CorrespondenceError("F is not onto Y")
    e1 = np.max(np.abs(dX - dY[np.ix_(F, F)]))
    e2 = np.max(np.abs(dY - dX[np.ix_(G, G)]))
    e3 = np.max(dX[np.arange(nX), G[F]])
    e4 = np.max(dY[np.arange(nY), F[G]])
    return float(max(e1, e2, e3, e4))


def blowdown_correspondence(gX: MetricGraph, gY: MetricGraph):
    """Identity on shared (level, direction) nodes, E onto the apex, and the apex back to the first E node."""
    if gX.n_levels != gY.n_levels or gX.m != gY.m or not np.array_equal(gX.levels, gY.levels):
        raise CorrespondenceError("graphs are not built on the same levels and directions")
    base = gX.n_levels * gX.m
    if gY.bottom != "apex":
        raise CorrespondenceError("target must have an apex")
    apex = base
    if gX.bottom == "E":
        F = np.concatenate([np.arange(base), np.full(gX.m, apex)])
        G = np.concatenate([np.arange(base), [base]])
    elif gX.bottom == "apex":
        F = np.arange(base + 1)
        G = np.arange(base + 1)
    else:
        raise CorrespondenceError("source graph needs a bottom layer")
    return F, G


# -------------------------------------------------------------------- series

@dataclass
class GHReport:
    entries: list
    diam_Y: float
    monotone: dict
    final: dict
    threshold: float
    jitter: float
    mesh: dict

    @property
    def verdict(self) -> str:
        sides = [s for s in ("before", "after") if s in self.final]
        if not sides:
            return "Skipped"
        ok = all(self.monotone[s] and self.final[s]["ok"] for s in sides)
        return "Pass" if ok else "Fail"

    def to_dict(self) -> dict:
        return {
            "schema": "gh/v1",
            "diam_Y": self.diam_Y,
            "threshold_rel": self.threshold,
            "jitter": self.jitter,
            "entries": self.entries,
            "monotone": self.monotone,
            "final": self.final,
            "mesh": self.mesh,
            "verdict": self.verdict,
        }


def geometric_selection(traj: Trajectory, T: float, count: int, nearest: float) -> list:
    """Snapshot indices whose |t - T| is closest to a geometric ladder from the farthest gap down to `nearest`."""
    gaps = np.abs(traj.times - T)
    valid = np.where(gaps >= nearest * (1 - 1e-9))[0]
    if len(valid) == 0:
        return []
    targets = np.geomspace(gaps[valid].max(), nearest, count)
    picks = []
    for g in targets:
        k = valid[int(np.argmin(np.abs(gaps[valid] - g)))]
        if k not in picks:
            picks.append(int(k))
    return sorted(picks, key=lambda k: -gaps[k])


def is_decreasing(values, jitter: float) -> bool:
    """Every value is at most (1 + jitter) times its predecessor, and the series ends below where it started."""
    v = list(values)
    if len(v) < 2:
        return False
    return all(b <= (1 + jitter) * a for a, b in zip(v, v[1:])) and v[-1] < v[0]


def convergence_series(traj: Trajectory, limit: Profile, dirs: DirectionSet, continuation: Trajectory | None = None,
                       levels: int = DEFAULT_LEVELS, per_side: int = 12, nearest: float = 0.01,
                       threshold: float = 0.05, jitter: float = 0.1) -> GHReport:
    """eps(t) against the discretized (Y, d_T) on geometrically spaced snapshots approaching T from each side."""
    T = traj.params.T
    gY, dY = d_T_space(limit, dirs, levels)
    diam = float(dY.max())
    entries, monotone, final = [], {}, {}
    for side, tr in (("before", traj), ("after", continuation)):
        if tr is None:
            continue
        series = []
        for k in geometric_selection(tr, T, per_side, nearest):
            st = tr.snapshots[k]
            gX = build_graph(st.profile, dirs, True, levels)
            dX = all_pairs(gX)
            F, G = blowdown_correspondence(gX, gY)
            eps = gh_upper(dX, dY, F, G)
            entries.append({"t": float(st.t), "side": side, "eps": eps, "rel": eps / diam,
                            "diam_X": float(dX.max())})
            series.append((abs(st.t - T), eps))
        monotone[side] = is_decreasing([e for _, e in series], jitter)
        gap, eps = series[-1]
        final[side] = {"gap": gap, "eps": eps, "rel": eps / diam,
                       "ok": bool(eps <= threshold * diam and abs(gap - nearest) <= 1e-6)}
    return GHReport(entries, diam, monotone, final, threshold, jitter, gY.mesh)
