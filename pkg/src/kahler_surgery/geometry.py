"""Radial profiles of U(n)-invariant Kahler metrics on the blow-up of P^n at a point.

A metric is carried by phi = u'(rho), rho = log|z|^2.  Its eigenvalues with
respect to the Euclidean metric are phi e^{-rho} (tangent to the spheres,
multiplicity n-1) and phi' e^{-rho} (radial), and the represented class is
b H - a E with a = phi(-inf), b = phi(+inf).

Profiles live on the compactified coordinate s = e^rho / (1 + e^rho), sampled at
cell centres s_j = (j + 1/2)/N.  All rho-derivatives go through ds/drho = s(1-s)
with the boundary values a (at s = 0) and b (at s = 1) closing the stencils.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .constants import RADIAL_LENGTH_CONST, SPHERE_CONST, volume_norm
from .errors import DegenerateMetricError, PreconditionError, ProfileError


class RadialGrid:
    def __init__(self, N: int):
        if int(N) < 4:
            raise ValueError("need at least 4 nodes")
        self.N = int(N)
        self.s = (np.arange(self.N) + 0.5) / self.N
        self.rho = np.log(self.s / (1.0 - self.s))
        self.jac = self.s * (1.0 - self.s)
        # theta = arccos(1 - 2s) turns d rho / sqrt-free integrals into  ds / sqrt(s(1-s)) = d theta
        self.theta = np.arccos(1.0 - 2.0 * self.s)

        x = np.concatenate(([0.0], self.s, [1.0]))
        hm = x[1:-1] - x[:-2]
        hp = x[2:] - x[1:-1]
        den = hm * hp * (hm + hp)
        self.d1 = (-hp * hp / den, (hp * hp - hm * hm) / den, hm * hm / den)
        self.d2 = (2.0 * hp / den, -2.0 * (hm + hp) / den, 2.0 * hm / den)
        self.h_min = np.minimum(hm, hp)

    def __eq__(self, other):
        return isinstance(other, RadialGrid) and other.N == self.N

    def __hash__(self):
        return hash(("RadialGrid", self.N))

    def __repr__(self):
        return f"RadialGrid(N={self.N})"

    def derivatives(self, phi, a, b):
        """Return (phi_s, phi_ss) at the nodes, closing the stencil with the boundary values."""
        fm = np.empty_like(phi)
        fp = np.empty_like(phi)
        fm[0] = a
        fm[1:] = phi[:-1]
        fp[-1] = b
        fp[:-1] = phi[1:]
        cm, c0, cp = self.d1
        d1 = cm * fm + c0 * phi + cp * fp
        cm, c0, cp = self.d2
        d2 = cm * fm + c0 * phi + cp * fp
        return d1, d2

    def weight(self):
        """|s|_h^2 = min(e^rho, 1) at the nodes (exact for rho <= 0)."""
        return np.minimum(np.exp(self.rho), 1.0)


def s_of_rho(rho):
    rho = np.asarray(rho, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * rho))


@dataclass(frozen=True, eq=False)
class Profile:
    grid: RadialGrid
    phi: np.ndarray
    a: float
    b: float

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.shape != (self.grid.N,):
            raise ProfileError(f"phi has shape {phi.shape}, grid has {self.grid.N} nodes")
        if not np.all(np.isfinite(phi)):
            raise ProfileError("phi contains non-finite values")
        a, b = float(self.a), float(self.b)
        if a < 0 or not a < b:
            raise ProfileError(f"need 0 <= a < b, got a={a}, b={b}")
        if phi[0] < a or phi[-1] > b:
            raise ProfileError("phi leaves [a, b]")
        if np.any(np.diff(phi) <= 0):
            raise DegenerateMetricError("phi is not strictly increasing")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if np.any(self.dphi_ds <= 0):
            raise DegenerateMetricError("centered-difference phi' is not positive at every node")

    @cached_property
    def _derivs(self):
        return self.grid.derivatives(self.phi, self.a, self.b)

    @property
    def dphi_ds(self):
        return self._derivs[0]

    @property
    def dphi(self):
        """phi' = d phi / d rho."""
        return self.grid.jac * self._derivs[0]

    @property
    def d2phi(self):
        """phi'' = d^2 phi / d rho^2."""
        s = self.grid.s
        j = self.grid.jac
        d1, d2 = self._derivs
        return j * ((1.0 - 2.0 * s) * d1 + j * d2)

    def scaled(self, lam: float) -> Profile:
        return Profile(self.grid, lam * self.phi, lam * self.a, lam * self.b)

    def phi_at(self, rho):
        """phi at arbitrary rho by linear interpolation in s, with (0, a) and (1, b) as end points."""
        xs = np.concatenate(([0.0], self.grid.s, [1.0]))
        ys = np.concatenate(([self.a], self.phi, [self.b]))
        return np.interp(s_of_rho(rho), xs, ys)

    def boundary_extrapolation(self):
        """Linear extrapolation of the two outermost interior nodes to s = 0 and s = 1.

        These are measurements of the interior solution, independent of the
        boundary values a and b that close the stencil.
        """
        s, p = self.grid.s, self.phi
        lo = p[0] - s[0] * (p[1] - p[0]) / (s[1] - s[0])
        hi = p[-1] + (1.0 - s[-1]) * (p[-1] - p[-2]) / (s[-1] - s[-2])
        return float(lo), float(hi)


def fubini_study(grid: RadialGrid, b: float) -> Profile:
    return Profile(grid, b * grid.s, 0.0, b)


def linear_profile(grid: RadialGrid, a: float, b: float) -> Profile:
    """a + (b - a) s: a smooth metric in the class b H - a E."""
    return Profile(grid, a + (b - a) * grid.s, a, b)


# ------------------------------------------------------------------ eigenvalues

def eigenvalues(p: Profile, j=None):
    """(fiber, radial) eigenvalues phi e^{-rho}, phi' e^{-rho}; arrays if j is None."""
    e = np.exp(-p.grid.rho)
    fiber = p.phi * e
    radial = p.dphi * e
    if j is None:
        return fiber, radial
    return float(fiber[j]), float(radial[j])


def trace_against(p: Profile, ref: Profile, n: int, j=None):
    """tr_ref(p) = (n-1) phi/phi_ref + phi'/phi'_ref."""
    if p.grid != ref.grid:
        raise ValueError("profiles live on different grids")
    if np.any(ref.phi <= 0) or np.any(ref.dphi <= 0):
        raise DegenerateMetricError("reference has a vanishing eigenvalue at an interior node")
    tr = (n - 1) * p.phi / ref.phi + p.dphi / ref.dphi
    return tr if j is None else float(tr[j])


def radial_vector_norm(p: Profile, rho):
    """|z^i d_i|^2_omega = phi'(rho), interpolated in s."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho > 0):
        raise PreconditionError("the radial field is only defined inside the unit ball (rho <= 0)")
    return np.interp(s_of_rho(rho), p.grid.s, p.dphi)


# ----------------------------------------------------------------------- volume

def total_volume(p: Profile, n: int) -> float:
    """c_n * integral phi^{n-1} phi' d rho by Gauss-Legendre on the piecewise-linear interpolant.

    For the interpolant the integrand is a polynomial of degree n - 1 on each
    cell, so the rule is exact and the result must equal c_n (b^n - a^n)/n.
    """
    xs = np.concatenate(([0.0], p.grid.s, [1.0]))
    ys = np.concatenate(([p.a], p.phi, [p.b]))
    nodes, weights = np.polynomial.legendre.leggauss(max(n, 1))
    h = np.diff(xs)
    slope = np.diff(ys) / h
    total = 0.0
    for x, w in zip(nodes, weights):
        lam = 0.5 * (x + 1.0)
        val = ys[:-1] + lam * (ys[1:] - ys[:-1])
        total += 0.5 * w * np.sum(h * val ** (n - 1) * slope)
    return volume_norm(n) * total


def class_volume(a: float, b: float, n: int) -> float:
    return volume_norm(n) * (b ** n - a ** n) / n


# ---------------------------------------------------------------------- lengths

class _Lengths(NamedTuple):
    cumulative: np.ndarray  # from the divisor (rho = -inf) to each node, without c0
    gamma: float            # power-law exponent of phi - a at the apex
    amp: float              # phi - a = amp * s^gamma near s = 0
    top_slope: float


def _lengths(p: Profile) -> _Lengths:
    g = p.grid
    root = np.sqrt(p.dphi_ds)
    x0 = p.phi[0] - p.a
    x1 = p.phi[1] - p.a
    gamma = math.log(x1 / x0) / math.log(g.s[1] / g.s[0]) if x0 > 0 and x1 > 0 else float("nan")
    if np.isfinite(gamma) and gamma > 0:
        tail = 2.0 * math.sqrt(x0 / gamma)
        amp = x0 / g.s[0] ** gamma
    else:
        tail = math.inf
        amp = float("nan")
    steps = 0.5 * (root[1:] + root[:-1]) * np.diff(g.theta)
    cum = tail + np.concatenate(([0.0], np.cumsum(steps)))
    return _Lengths(cum, gamma, amp, float(root[-1]))


def _length_from_divisor(p: Profile, lens: _Lengths, rho: float) -> float:
    g = p.grid
    if rho == -math.inf:
        return 0.0
    if rho == math.inf:
        return float(lens.cumulative[-1] + lens.top_slope * (math.pi - g.theta[-1]))
    s = float(s_of_rho(rho))
    th = math.acos(1.0 - 2.0 * s)
    if s < g.s[0]:
        if not math.isfinite(lens.cumulative[0]):
            return math.inf
        return 2.0 * math.sqrt(lens.amp * s ** lens.gamma / lens.gamma)
    if s > g.s[-1]:
        return float(lens.cumulative[-1] + lens.top_slope * (th - g.theta[-1]))
    return float(np.interp(th, g.theta, lens.cumulative))


def radial_length(p: Profile, rho1: float, rho2: float) -> float:
    """c0 * integral_{rho1}^{rho2} sqrt(phi') d rho; rho1 may be -inf.

    Computed as c0 * integral sqrt(phi_s) d theta with s = (1 - cos theta)/2.
    Below the first node phi - a is closed by the power law fitted to the two
    innermost nodes.  Returns inf (an estimate failure, not an exception) when
    that power law does not decay.
    """
    if not rho1 < rho2:
        raise ValueError("need rho1 < rho2")
    lens = _lengths(p)
    hi = _length_from_divisor(p, lens, rho2)
    lo = _length_from_divisor(p, lens, rho1)
    if not math.isfinite(hi):
        return math.inf
    return RADIAL_LENGTH_CONST * (hi - lo)


def cumulative_radial_length(p: Profile) -> np.ndarray:
    """Radial length from the divisor (or apex) to every node; inf if the tail diverges."""
    return RADIAL_LENGTH_CONST * _lengths(p).cumulative


def sphere_diameter(p: Profile, rho: float) -> float:
    """Diameter c1 * pi * sqrt(phi) of the P^{n-1} of directions at radius rho (rho = -inf is E)."""
    val = p.a if rho == -math.inf else float(p.phi_at(rho))
    return SPHERE_CONST * math.pi * math.sqrt(val)


# ------------------------------------------------------------------- references

class ReferenceProfiles(NamedTuple):
    initial: Profile
    pullback: Profile
    omegaX: Profile


def reference_profiles(grid: RadialGrid, n: int, a0: float, b0: float, kappa: float, eps0: float):
    """Initial metric, pull-back of kappa*omega_FS (degenerate on E) and a smooth omega_X surrogate.

    The surrogate eps0 + kappa*s adds eps0 to the tangential eigenvalue only,
    the same effect -eps0 R(h) has inside the coordinate ball.
    """
    if not 0 < a0 < b0:
        raise PreconditionError("need 0 < a0 < b0")
    if kappa <= 0 or eps0 <= 0:
        raise PreconditionError("kappa and eps0 must be positive")
    initial = linear_profile(grid, a0, b0)
    pullback = fubini_study(grid, kappa)
    omegaX = Profile(grid, eps0 + kappa * grid.s, eps0, eps0 + kappa)
    return ReferenceProfiles(initial, pullback, omegaX)


def comparison_constant(pullback: Profile, omegaX: Profile, n: int = 2):
    """Smallest C with pullback <= omegaX <= C pullback / |s|^2 eigenvalue-wise on the grid.

    Returns (C, lower_ok) where lower_ok reports the left inequality.
    """
    fa, ra = eigenvalues(pullback)
    fb, rb = eigenvalues(omegaX)
    lower_ok = bool(np.all(fb >= fa * (1 - 1e-12)) and np.all(rb >= ra * (1 - 1e-12)))
    w = pullback.grid.weight()
    C = float(np.max(w * np.maximum(fb / fa, rb / ra)))
    return C, lower_ok


# ------------------------------------------------------------------ snapshot I/O

SNAPSHOT_COLUMNS = ("s", "rho", "phi", "dphi")


def write_snapshot(stem, p: Profile, t: float, n: int) -> tuple[Path, Path]:
    """Write ``stem.csv`` (s, rho, phi, dphi at 17 digits) and the ``stem.json`` sidecar."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_COLUMNS)
        for row in zip(p.grid.s, p.grid.rho, p.phi, p.dphi):
            w.writerow([f"{x:.17g}" for x in row])
    with open(json_path, "w") as fh:
        json.dump({"t": float(t), "n": int(n), "a": p.a, "b": p.b, "N": p.grid.N}, fh, indent=1)
    return csv_path, json_path


def read_snapshot(stem):
    """Inverse of write_snapshot; returns (profile, sidecar dict)."""
    stem = Path(stem)
    if stem.suffix in (".csv", ".json"):
        stem = stem.with_suffix("")
    with open(stem.with_suffix(".json")) as fh:
        meta = json.load(fh)
    with open(stem.with_suffix(".csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != SNAPSHOT_COLUMNS:
        raise ProfileError(f"unexpected snapshot header {rows[0]}")
    phi = np.array([float(r[2]) for r in rows[1:]])
    grid = RadialGrid(meta["N"])
    return Profile(grid, phi, meta["a"], meta["b"]), meta
