import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmslab import cms, jets
from cmslab.cms import OrderError, cms_sample
from cmslab.geometry import SurfaceSpec, TensorField, ambient_frame, builtin_surface, sample_frame
from cmslab.jets import Jet, contract, stack
from cmslab.residuals import residual

from _support import MOVING, STATIC, random_nodes, surface


def setup(spec, n=40, seed=0, t=0.25, order=3):
    f = sample_frame(spec, *random_nodes(spec, n, seed, t), order=order)
    return f, cms_sample(f)


def rows_by_check(rows):
    return {r.check: r for r in rows}


def field(f, text_fn):
    u, v, t = (Jet.variable(n, a, f.order) for n, a in zip("uvt", (f.u, f.v, f.t)))
    return text_fn(u, v, t, f.R)


# -- samples -------------------------------------------------------------------------------

def test_expanding_sphere_sample():
    spec = builtin_surface("sphere", radius="1+0.5*t")
    f, s = setup(spec, t=0.0)
    np.testing.assert_allclose(s.normal_speed.value, 0.5, atol=1e-15)
    assert np.max(np.abs(s.speed.value)) < 1e-15
    # K_ab = -2 C B_ab with R = 1, R' = 0.5: K = diag(1, sin^2)
    K = s.metric_dot.value
    np.testing.assert_allclose(K[0, 0], 1.0, atol=1e-14)
    np.testing.assert_allclose(K[1, 1], np.sin(f.u) ** 2, atol=1e-14)
    np.testing.assert_allclose(K, -2 * s.normal_speed.value * f.curv.value, atol=1e-14)


def test_translating_sphere_sample():
    f, s = setup(builtin_surface("translating-sphere", speed="0.2"))
    th = f.u
    np.testing.assert_allclose(s.normal_speed.value, 0.2 * np.cos(th), atol=1e-15)
    np.testing.assert_allclose(s.speed.value[0], -0.2 * np.sin(th), atol=1e-15)
    assert np.max(np.abs(s.speed.value[1])) < 1e-15


@pytest.mark.parametrize("name", list(STATIC))
def test_static_surfaces_have_no_time_structure(name):
    f, s = setup(surface(name))
    for q in (s.velocity, s.normal_speed, s.speed, s.christoffel_dot, s.metric_dot, s.temporal_curvature):
        assert np.max(np.abs(q.value)) < 1e-12
    assert np.max(s.scalar_differential) < 1e-12


def test_order_errors():
    spec = surface("torus")
    f2 = sample_frame(spec, *random_nodes(spec, 4), order=2)
    s2 = cms_sample(f2)
    assert s2.temporal_curvature is None
    with pytest.raises(OrderError):
        cms.temporal_curvature_def(f2, s2)
    with pytest.raises(OrderError):
        cms.frame_derivative_table_check(f2, s2)
    with pytest.raises(OrderError):
        cms.second_order_scalar(Jet.variable("u", f2.u, 2), f2, s2)


# -- two-route identities on every family ---------------------------------------------------------

@pytest.mark.parametrize("name", list(MOVING))
def test_metric_dot_two_ways(name):
    f, s = setup(surface(name))
    for r in cms.metric_dot_two_ways(s, f):
        assert r.per_node().max() < 1e-10, r.check


@pytest.mark.parametrize("name", list(MOVING))
def test_definition_matches_reduction_componentwise(name):
    spec = surface(name)
    f, s = setup(spec, n=100, seed=11)
    d = cms.temporal_curvature_def(f, s).value - cms.temporal_curvature_reduced(f, s).value
    assert np.max(np.abs(d)) < 1e-8


@pytest.mark.parametrize("name", list(MOVING) + list(STATIC))
def test_trace_vanishes(name):
    f, s = setup(surface(name), n=100, seed=12)
    trace, scalar = cms.trace_and_scalar(f, s)
    assert np.max(np.abs(trace.value)) < 1e-9
    assert np.max(scalar) < 1e-9


@pytest.mark.parametrize("name", ["expanding-sphere", "expanding-cylinder"])
def test_uniform_expansion_has_no_temporal_curvature(name):
    f, s = setup(surface(name), n=100)
    assert np.max(np.abs(s.temporal_curvature.value)) < 1e-9
    # machine noise: a few ulps of O(1) terms that cancel
    assert np.max(np.abs(cms.temporal_curvature_reduced(f, s).value)) < 1e-13
    direct, closed = cms.dt_christoffel_two_ways(f, s)
    assert np.max(np.abs(direct.value)) < 1e-9 and np.max(np.abs(closed.value)) < 1e-9
    assert np.max(s.scalar_differential) < 1e-9


def test_translating_sphere_closed_form():
    spec = builtin_surface("translating-sphere", speed="0.2")
    th = np.array([0.4, 1.1, math.pi / 2, 2.2])
    f = sample_frame(spec, th, [0.3, 1.0, 2.0, 5.0], 0.25)
    s = cms_sample(f)
    for rdot in (s.temporal_curvature.value, cms.temporal_curvature_reduced(f, s).value):
        np.testing.assert_allclose(rdot[0, 1, 1], 0.2 * np.sin(th) ** 3, atol=1e-12)
    assert abs(s.temporal_curvature.value[0, 1, 1, 2] - 0.2) < 1e-8
    # nonzero tensor, zero trace
    assert np.max(np.abs(s.trace.value)) < 1e-12


@pytest.mark.parametrize("name", list(MOVING))
def test_dt_christoffel_two_ways(name):
    f, s = setup(surface(name))
    direct, closed = cms.dt_christoffel_two_ways(f, s)
    r = residual("x", "", "", direct - closed, sig="Sss", frame=f)
    assert r.per_node().max() < 1e-8


# -- invariant time derivative ----------------------------------------------------------------------

def test_time_derivative_of_t_is_one():
    f, s = setup(surface("wobbling-torus"))
    t = Jet.variable("t", f.t)
    np.testing.assert_allclose(cms.inv_time_derivative_scalar(t, s).value, 1.0, atol=0)
    tf = cms.inv_time_derivative(TensorField(t, ""), f, s).comps.value
    np.testing.assert_allclose(tf, 1.0, atol=0)


@pytest.mark.parametrize("name", list(MOVING) + ["torus"])
def test_frame_derivative_table(name):
    spec = surface(name)
    f, s = setup(spec)
    for r in cms.frame_derivative_table_check(f, s):
        tol = 1e-8 if r.tol_class == "third" else 1e-10
        assert r.per_node().max() < tol, r.check
    if name in STATIC:
        for r in cms.frame_derivative_table_check(f, s):
            assert r.per_node().max() < 1e-12, r.check


def test_expanding_sphere_normal_is_constant_in_time():
    f, s = setup(surface("expanding-sphere"))
    dN = cms.inv_time_derivative(TensorField(f.normal, "c"), f, s).comps.value
    assert np.max(np.abs(dN)) < 1e-14


def test_unknown_placement():
    f, s = setup(surface("pulsating-ellipsoid"), n=6)
    A = ambient_frame(f, "spherical")
    with pytest.raises(ValueError):
        cms.inv_time_derivative(TensorField(A.normal, "A"), f, s, A, placement="third")


# -- second order and commutators -------------------------------------------------------------------

def test_second_order_static_t_squared():
    f, s = setup(surface("torus"))
    psi = Jet.variable("t", f.t) ** 2
    formula, iterated = cms.second_order_scalar(psi, f, s)
    np.testing.assert_allclose(formula.value, 2.0, atol=1e-15)
    np.testing.assert_allclose(iterated.value, 2.0, atol=1e-15)


@pytest.mark.parametrize("name", list(MOVING))
def test_second_order_matches_iteration(name):
    f, s = setup(surface(name))
    rng = np.random.default_rng(4)
    for _ in range(5):
        a, b, c = rng.uniform(-2, 2, 3)
        psi = field(f, lambda u, v, t, R: jets.sin(a * R[0] + b * R[1] * t + c * R[2]))
        formula, iterated = cms.second_order_scalar(psi, f, s)
        assert np.max(np.abs(formula.value - iterated.value)) < 1e-8


def test_second_order_chart_coordinate_on_translating_sphere():
    f, s = setup(surface("translating-sphere"))
    formula, iterated = cms.second_order_scalar(Jet.variable("u", f.u), f, s)
    assert np.max(np.abs(formula.value - iterated.value)) < 1e-8


def test_semi_commutation_static_is_exact_zero():
    f, s = setup(surface("torus"))
    psi = field(f, lambda u, v, t, R: R[0] * R[1] + u)
    assert np.max(np.abs(cms.semi_commutation_scalar(psi, f, s).value)) < 1e-13


@pytest.mark.parametrize("name,fn", [
    ("translating-sphere", lambda u, v, t, R: jets.sin(u) * jets.cos(v)),
    ("expanding-cylinder", lambda u, v, t, R: u + t),
])
def test_semi_commutation(name, fn):
    f, s = setup(surface(name))
    r = residual("x", "", "", cms.semi_commutation_scalar(field(f, fn), f, s), sig="s", frame=f)
    assert r.per_node().max() < 1e-8


def tangent_fields(f):
    """A smooth ambient field projected to contravariant and covariant surface components."""
    x, y, z = f.R
    t = Jet.variable("t", f.t)
    W = stack([jets.sin(y + t), jets.cos(x * z), 1.0 / (2.0 + x)])
    return contract("ai,i->a", f.dual, W), contract("ai,i->a", f.basis, W)


@pytest.mark.parametrize("name", ["translating-sphere", "expanding-torus", "wobbling-torus", "torus"])
def test_commutator_vector_and_covector(name):
    spec = builtin_surface("torus", minor="0.3+0.1*t") if name == "expanding-torus" else surface(name)
    f, s = setup(spec)
    up, dn = tangent_fields(f)
    for w, cov, sig in ((up, False, "sS"), (dn, True, "ss")):
        r = residual("x", "", "", cms.commutator_vector_check(w, f, s, cov), sig=sig, frame=f)
        limit = 1e-12 if name in STATIC else 1e-7
        assert r.per_node().max() < limit


def test_commutator_needs_temporal_curvature_term():
    # flipping the sign of the curvature term must break the identity
    f, s = setup(surface("translating-sphere"))
    up, _ = tangent_fields(f)
    good = cms.commutator_vector_check(up, f, s)
    term = contract("bag,g->ab", s.temporal_curvature, up)
    assert np.max(np.abs(good.value)) < 1e-7
    assert np.max(np.abs((good - 2 * term).value)) > 1e-3


@pytest.mark.parametrize("name", ["expanding-sphere", "wobbling-torus"])
def test_frame_commutation_projections(name):
    f, s = setup(surface(name))
    rows = rows_by_check(cms.frame_commutation_projections(f, s))
    assert rows["cms.curvature_shuffle"].per_node().max() < 1e-10
    assert rows["cms.projection_normal"].per_node().max() < (1e-9 if name == "expanding-sphere" else 1e-8)
    assert rows["cms.projection_tangential"].per_node().max() < 1e-8


# -- ambient --------------------------------------------------------------------------------------------

def test_cartesian_ambient_temporal_curvature_is_zero():
    f, s = setup(surface("translating-sphere"))
    assert not np.any(cms.ambient_temporal_curvature(f, s, ambient_frame(f)).value)


@pytest.mark.parametrize("kind", ["cartesian", "cylindrical", "spherical"])
@pytest.mark.parametrize("name", ["translating-sphere", "wobbling-torus"])
def test_ambient_temporal_curvature_vanishes(kind, name):
    f, s = setup(surface(name))
    A = ambient_frame(f, kind)
    r = residual("x", "", "", cms.ambient_temporal_curvature(f, s, A), sig="sAa", frame=f, ambient=A)
    assert r.per_node().max() < 1e-7
    W = stack([Jet.variable("u", f.u), Jet.variable("t", f.t) * Jet.variable("v", f.v), 0.0 * Jet.variable("u", f.u) + 1])
    r = residual("x", "", "", cms.ambient_commutator_check(W, f, s, A), sig="sA", frame=f, ambient=A)
    assert r.per_node().max() < 1e-7


def test_static_surface_in_cylindrical_coordinates():
    f, s = setup(surface("torus"))
    assert np.max(np.abs(cms.ambient_temporal_curvature(f, s, ambient_frame(f, "cylindrical")).value)) < 1e-15


def test_placements_agree():
    f, s = setup(surface("pulsating-ellipsoid"))
    A = ambient_frame(f, "spherical")
    a = cms.inv_time_derivative(TensorField(A.normal, "A"), f, s, A, "first").comps.value
    b = cms.inv_time_derivative(TensorField(A.normal, "A"), f, s, A, "second").comps.value
    np.testing.assert_allclose(a, b, atol=1e-14)


# -- generated surfaces -----------------------------------------------------------------------------------

coef = st.floats(-0.1, 0.1, allow_nan=False)


@settings(max_examples=15, deadline=None)
@given(coef, coef, coef, st.floats(0.0, 1.0))
def test_random_tori_reduce_and_trace_vanishes(a, b, c, t):
    minor = f"0.3+({a})*sin(t+u)+({b})*t*cos(v)+({c})*cos(2*u-v)*t^2"
    spec = builtin_surface("torus", minor=minor)
    f, s = setup(spec, n=30, t=t, seed=3)
    d = s.temporal_curvature.value - cms.temporal_curvature_reduced(f, s).value
    assert np.max(np.abs(d)) < 1e-8
    assert np.max(np.abs(s.trace.value)) < 1e-9
    for r in cms.metric_dot_two_ways(s, f):
        assert r.per_node().max() < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 1.5), st.floats(0.5, 1.5), st.floats(0.5, 1.5), coef, coef)
def test_random_ellipsoids_projections(a, b, c, wa, wc):
    spec = builtin_surface("ellipsoid", a=f"{a}+({wa})*sin(t)", b=f"{b}", c=f"{c}+({wc})*t*t")
    f, s = setup(spec, n=30, seed=9)
    rows = cms.frame_commutation_projections(f, s) + cms.temporal_curvature_checks(f, s)
    for r in rows:
        if r.gating:
            tol = 1e-8 if r.tol_class == "third" else 1e-10
            assert r.per_node().max() < tol, r.check


def test_plane_moving_rigidly():
    spec = SurfaceSpec.from_text("sliding-plane", "u+0.3*t", "v", "0.1*t", [-1, 1, "clamped"], [-1, 1, "clamped"])
    f, s = setup(spec)
    np.testing.assert_allclose(s.normal_speed.value, 0.1, atol=1e-15)
    np.testing.assert_allclose(s.speed.value[0], 0.3, atol=1e-15)
    assert not np.any(s.temporal_curvature.value)
