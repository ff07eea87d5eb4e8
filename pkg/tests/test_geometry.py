import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahler_surgery.constants import RADIAL_LENGTH_CONST as C0
from kahler_surgery.constants import SPHERE_CONST as C1
from kahler_surgery.constants import volume_norm
from kahler_surgery.errors import DegenerateMetricError, PreconditionError, ProfileError
from kahler_surgery.geometry import (
    Profile,
    RadialGrid,
    class_volume,
    comparison_constant,
    cumulative_radial_length,
    eigenvalues,
    fubini_study,
    linear_profile,
    radial_length,
    radial_vector_norm,
    read_snapshot,
    reference_profiles,
    s_of_rho,
    sphere_diameter,
    total_volume,
    trace_against,
    write_snapshot,
)


@st.composite
def profiles(draw, N=st.sampled_from([200, 257, 400])):
    """Random smooth monotone profiles a + (b - a)(s + c s(1-s)(1 + d s)), |c| small enough for monotonicity."""
    grid = RadialGrid(draw(N))
    a = draw(st.floats(0.0, 3.0))
    width = draw(st.floats(0.1, 5.0))
    c = draw(st.floats(-0.3, 0.3))
    d = draw(st.floats(-0.5, 0.5))
    s = grid.s
    phi = a + width * (s + c * s * (1 - s) * (1 + d * s))
    return Profile(grid, phi, a, a + width)


# --------------------------------------------------------------------- grid

def test_grid_nodes_and_chain_rule():
    g = RadialGrid(8)
    assert np.allclose(g.s, (np.arange(8) + 0.5) / 8)
    assert np.all(np.diff(g.s) > 0)
    assert np.allclose(np.exp(g.rho) / (1 + np.exp(g.rho)), g.s)
    assert np.allclose(g.jac, g.s * (1 - g.s))


def test_weight_is_capped_exponential():
    g = RadialGrid(101)
    w = g.weight()
    assert np.all((w > 0) & (w <= 1))
    neg = g.rho <= 0
    assert np.array_equal(w[neg], np.exp(g.rho[neg]))


def test_stencils_exact_on_quadratics():
    g = RadialGrid(37)
    f = lambda s: 2 - 3 * s + 5 * s * s  # noqa: E731
    d1, d2 = g.derivatives(f(g.s), f(0.0), f(1.0))
    assert np.allclose(d1, -3 + 10 * g.s, atol=1e-10)
    assert np.allclose(d2, 10.0, atol=1e-8)


# ------------------------------------------------------------------ profile

def test_profile_rejects_non_monotone():
    g = RadialGrid(10)
    phi = np.linspace(0.1, 0.9, 10)
    phi[4] = phi[3]
    with pytest.raises(DegenerateMetricError):
        Profile(g, phi, 0.0, 1.0)


def test_profile_rejects_bad_class():
    g = RadialGrid(10)
    with pytest.raises(ProfileError):
        Profile(g, g.s, -0.1, 1.0)
    with pytest.raises(ProfileError):
        Profile(g, g.s, 0.0, 0.5)
    with pytest.raises(ProfileError):
        Profile(g, g.s[:5], 0.0, 1.0)


def test_profile_is_read_only():
    p = fubini_study(RadialGrid(10), 1.0)
    with pytest.raises(ValueError):
        p.phi[0] = 3.0


def test_boundary_extrapolation_of_linear_profile():
    p = linear_profile(RadialGrid(50), 1.0, 4.0)
    lo, hi = p.boundary_extrapolation()
    assert lo == pytest.approx(1.0, abs=1e-12) and hi == pytest.approx(4.0, abs=1e-12)


# -------------------------------------------------------------- eigenvalues

def test_fs_eigenvalue_at_origin_of_chart():
    g = RadialGrid(201)
    j = 100
    assert g.s[j] == 0.5
    fiber, radial = eigenvalues(fubini_study(g, 1.0), j)
    assert fiber == pytest.approx(0.5, abs=1e-14)
    assert radial == pytest.approx(0.25, abs=1e-12)


def test_fs_eigenvalues_tend_to_euclidean():
    g = RadialGrid(400)
    fiber, radial = eigenvalues(fubini_study(g, 1.0))
    assert np.allclose(fiber, 1 - g.s, atol=1e-13)
    assert np.allclose(radial, (1 - g.s) ** 2, atol=1e-10)
    assert fiber[0] == pytest.approx(1.0, abs=2e-3) and radial[0] == pytest.approx(1.0, abs=3e-3)


@settings(max_examples=30, deadline=None)
@given(profiles())
def test_eigenvalues_positive(p):
    fiber, radial = eigenvalues(p)
    if p.a == 0:
        fiber = fiber[1:]
    assert np.all(fiber > 0) and np.all(radial > 0)


# ------------------------------------------------------------------- volume

def test_volume_fs():
    p = fubini_study(RadialGrid(400), 1.0)
    assert total_volume(p, 2) == pytest.approx(volume_norm(2) * 0.5, rel=1e-12)


def test_volume_initial_class():
    p = linear_profile(RadialGrid(400), 1.0, 4.0)
    assert total_volume(p, 2) == pytest.approx(volume_norm(2) * 15 / 2, rel=1e-6)


def test_volume_degenerate_class_tends_to_zero():
    g = RadialGrid(200)
    vols = [total_volume(linear_profile(g, 1.0, 1.0 + w), 2) for w in (1e-1, 1e-3, 1e-6)]
    assert vols[0] > vols[1] > vols[2] and vols[2] < 1e-5


@settings(max_examples=40, deadline=None)
@given(profiles(), st.integers(2, 4))
def test_volume_identity(p, n):
    assert total_volume(p, n) == pytest.approx(class_volume(p.a, p.b, n), rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(profiles(), st.floats(0.1, 10.0), st.integers(2, 4))
def test_scaling_laws(p, lam, n):
    q = p.scaled(lam)
    assert total_volume(q, n) == pytest.approx(lam ** n * total_volume(p, n), rel=1e-9)
    assert sphere_diameter(q, 0.3) == pytest.approx(math.sqrt(lam) * sphere_diameter(p, 0.3), rel=1e-9)
    ref = linear_profile(p.grid, 0.5, 2.0)
    assert np.allclose(trace_against(q, ref.scaled(lam), n), trace_against(p, ref, n), rtol=1e-12)
    if p.phi[0] > p.a:
        L1, L2 = radial_length(p, -1.0, 2.0), radial_length(q, -1.0, 2.0)
        assert L2 == pytest.approx(math.sqrt(lam) * L1, rel=1e-9)


# ------------------------------------------------------------------ lengths

def test_fs_radial_length_closed_form():
    b = 2.5
    coarse, fine = fubini_study(RadialGrid(400), b), fubini_study(RadialGrid(1600), b)
    for rho in (-6.0, -1.3, 0.0, 2.2):
        exact = C0 * math.sqrt(b) * 2 * math.asin(math.sqrt(float(s_of_rho(rho))))
        e1 = abs(radial_length(coarse, -math.inf, rho) / exact - 1)
        e2 = abs(radial_length(fine, -math.inf, rho) / exact - 1)
        assert e1 < 5e-4 and e2 < e1 / 4


def test_fs_tail_is_proportional_to_radius():
    b = 1.0
    p = fubini_study(RadialGrid(400), b)
    for rho in (-8.0, -9.0):
        assert radial_length(p, -math.inf, rho) == pytest.approx(2 * C0 * math.sqrt(b) * math.exp(rho / 2), rel=1e-3)


def test_radial_length_is_additive():
    p = linear_profile(RadialGrid(300), 1.0, 4.0)
    a, b, c = -3.0, 0.4, 5.0
    assert radial_length(p, a, b) + radial_length(p, b, c) == pytest.approx(radial_length(p, a, c), rel=1e-12)


def test_radial_length_fourth_root_bound():
    p = fubini_study(RadialGrid(400), 1.0)
    g = p.grid
    L = cumulative_radial_length(p)
    m = g.rho <= 0
    ratio = L[m] / np.exp(g.rho[m] / 4)
    assert np.isfinite(ratio).all() and ratio.max() < 2.0


def test_radial_length_divergent_tail_is_flagged():
    g = RadialGrid(50)
    phi = 0.5 + 0.5 * g.s
    phi[0] = 0.5  # no decay to a at the first node
    p = Profile(g, phi, 0.5, 1.0)
    assert radial_length(p, -math.inf, 0.0) == math.inf


def test_radial_length_needs_ordered_ends():
    p = fubini_study(RadialGrid(20), 1.0)
    with pytest.raises(ValueError):
        radial_length(p, 1.0, 0.0)


def test_sphere_diameter():
    p = fubini_study(RadialGrid(400), 3.0)
    assert sphere_diameter(p, -math.inf) == 0.0
    assert sphere_diameter(p, 40.0) == pytest.approx(C1 * math.pi * math.sqrt(3.0), rel=1e-12)
    q = linear_profile(p.grid, 1.0, 4.0)
    assert sphere_diameter(q, -math.inf) == pytest.approx(C1 * math.pi)


def test_sphere_diameter_weighted_bound():
    p = linear_profile(RadialGrid(400), 1.0, 4.0)
    vals = [sphere_diameter(p, r) ** 2 / float(p.phi_at(r)) for r in np.linspace(-8, 8, 17)]
    assert max(vals) <= (C1 * math.pi) ** 2 * (1 + 1e-12)


# -------------------------------------------------------------------- trace

@settings(max_examples=30, deadline=None)
@given(profiles(), st.integers(2, 4))
def test_trace_identity_and_homogeneity(p, n):
    if p.a == 0:
        p = Profile(p.grid, p.phi + 0.01, 0.01, p.b + 0.01)
    assert np.allclose(trace_against(p, p, n), n, rtol=0, atol=1e-12)
    assert np.allclose(trace_against(p.scaled(2.0), p, n), 2 * n, rtol=1e-12)


def test_trace_rejects_degenerate_reference():
    g = RadialGrid(20)
    ref = Profile(g, np.concatenate(([0.0], g.s[1:])), 0.0, 1.0)
    with pytest.raises(DegenerateMetricError):
        trace_against(fubini_study(g, 1.0), ref, 2)


def test_trace_rejects_mismatched_grids():
    with pytest.raises(ValueError):
        trace_against(fubini_study(RadialGrid(20), 1.0), fubini_study(RadialGrid(21), 1.0), 2)


# ----------------------------------------------------------- radial vector

def test_radial_vector_norm_fs_tail():
    p = fubini_study(RadialGrid(400), 2.0)
    rho = np.linspace(-6, 0, 13)
    v = radial_vector_norm(p, rho)
    assert np.all(v <= 2.0 * np.exp(rho / 2))
    assert np.allclose(v, 2.0 * s_of_rho(rho) * (1 - s_of_rho(rho)), rtol=1e-3)


def test_radial_vector_norm_outside_ball():
    with pytest.raises(PreconditionError):
        radial_vector_norm(fubini_study(RadialGrid(20), 1.0), 0.5)


# --------------------------------------------------------------- references

def test_reference_profiles_and_comparison_chain():
    g = RadialGrid(400)
    refs = reference_profiles(g, 2, 1.0, 4.0, 1.0, 0.1)
    assert refs.pullback.a == 0
    assert refs.initial.b - refs.initial.a == pytest.approx(3.0)
    assert np.all(refs.omegaX.phi >= refs.pullback.phi)
    C, lower_ok = comparison_constant(refs.pullback, refs.omegaX)
    assert lower_ok and math.isfinite(C)
    fa, ra = eigenvalues(refs.pullback)
    fb, rb = eigenvalues(refs.omegaX)
    w = g.weight()
    assert np.all(fb <= C * fa / w * (1 + 1e-12)) and np.all(rb <= C * ra / w * (1 + 1e-12))


def test_reference_profiles_preconditions():
    g = RadialGrid(20)
    with pytest.raises(PreconditionError):
        reference_profiles(g, 2, 4.0, 1.0, 1.0, 0.1)
    with pytest.raises(PreconditionError):
        reference_profiles(g, 2, 1.0, 4.0, 1.0, 0.0)


# -------------------------------------------------------------- snapshot I/O

@settings(max_examples=10, deadline=None)
@given(profiles(N=st.just(64)), st.floats(0, 10))
def test_snapshot_roundtrip(tmp_path_factory, p, t):
    stem = tmp_path_factory.mktemp("snap") / "x"
    write_snapshot(stem, p, t, 3)
    q, meta = read_snapshot(stem)
    assert np.array_equal(q.phi, p.phi)
    assert (q.a, q.b, meta["t"], meta["n"], meta["N"]) == (p.a, p.b, t, 3, 64)
