import json
import math

import numpy as np
import pytest

from cmslab import geometry as g
from cmslab.cms import static_geometry_checks
from cmslab.expr import parse
from cmslab.geometry import (AMBIENTS, DegenerateChartError, SurfaceSpec, SurfaceSpecError, TensorField,
                             builtin_surface, covariant_derivative, riemann_commutator_check, sample_frame)
from cmslab.jets import Jet, contract, stack
from cmslab.residuals import residual

from _support import MOVING, STATIC, random_nodes, surface

THETA = np.array([0.3, 1.0, math.pi / 2, 2.5])
PHI = np.array([0.1, 2.0, 4.0, 5.9])


def plane():
    return SurfaceSpec.from_text("plane", "u", "v", "0", [-1, 1, "clamped"], [-1, 1, "clamped"])


def test_sphere_closed_forms():
    f = sample_frame(builtin_surface("sphere"), THETA, PHI, 0.0)
    s = np.sin(THETA)
    np.testing.assert_allclose(f.metric.value, [[np.ones(4), 0 * s], [0 * s, s * s]], atol=1e-15)
    np.testing.assert_allclose(f.curv_mixed.value, -np.eye(2)[..., None] * np.ones(4), atol=1e-14)
    G = f.christoffel.value
    np.testing.assert_allclose(G[0, 1, 1], -s * np.cos(THETA), atol=1e-15)
    np.testing.assert_allclose(G[1, 0, 1], np.cos(THETA) / s, rtol=1e-14)
    np.testing.assert_allclose(G[1, 1, 0], G[1, 0, 1], rtol=0)
    # outward normal
    np.testing.assert_allclose(f.normal.value, f.R.value, atol=1e-15)


def test_sphere_gauss_component():
    f = sample_frame(builtin_surface("sphere"), THETA, PHI, 0.0)
    R = g.riemann_gauss(f).value
    np.testing.assert_allclose(R[0, 1, 0, 1], np.sin(THETA) ** 2, rtol=1e-14)
    np.testing.assert_allclose(R, -np.swapaxes(R, 0, 1), atol=0)
    np.testing.assert_allclose(R, -np.swapaxes(R, 2, 3), atol=0)


def test_cylinder_closed_forms():
    f = sample_frame(builtin_surface("cylinder", radius="2"), PHI, [0.2, 0.4, 0.6, 0.8], 0.0)
    np.testing.assert_allclose(f.curv_mixed.value, np.array([[-0.5, 0], [0, 0]])[..., None] * np.ones(4), atol=1e-15)
    assert np.max(np.abs(f.christoffel.value)) < 1e-15
    assert np.max(np.abs(g.riemann_gauss(f).value)) < 1e-15


def test_plane_is_flat():
    f = sample_frame(plane(), [0.1, -0.5], [0.3, 0.9], 0.0)
    for q in (f.curv, f.christoffel, f.riemann, g.riemann_gauss(f)):
        assert not np.any(q.value)


def test_degenerate_chart_reports_nodes():
    bad = SurfaceSpec.from_text("line", "u", "u", "u", [0, 1, "clamped"], [0, 1, "clamped"])
    with pytest.raises(DegenerateChartError) as exc:
        sample_frame(bad, [0.5], [0.5], 0.0)
    assert exc.value.nodes == [(0.5, 0.5, 0.0)]


def test_sphere_pole_is_degenerate():
    with pytest.raises(DegenerateChartError):
        sample_frame(builtin_surface("sphere"), [0.0], [1.0], 0.0)


# -- validation and documents ---------------------------------------------------------------

def test_builtin_template_expansion():
    spec = builtin_surface("sphere", radius="1+0.5*t")
    assert spec.x == parse("(1+0.5*t)*sin(u)*cos(v)")
    assert spec.z == parse("(1+0.5*t)*cos(u)")
    assert spec.u_range == (0.0, math.pi) and not spec.u_periodic and spec.v_periodic


def test_document_round_trip():
    spec = builtin_surface("torus", minor="0.3+0.1*t")
    doc = json.loads(json.dumps(spec.to_document()))
    again = SurfaceSpec.from_text(doc["name"], doc["x"], doc["y"], doc["z"], doc["u"], doc["v"], doc["params"])
    assert again == spec


@pytest.mark.parametrize("kw,field", [
    (dict(x="sin(", y="0", z="0", u=[0, 1, "clamped"], v=[0, 1, "clamped"]), "x"),
    (dict(x="u", y="x", z="0", u=[0, 1, "clamped"], v=[0, 1, "clamped"]), "y"),
    (dict(x="u", y="v", z="k*u", u=[0, 1, "clamped"], v=[0, 1, "clamped"]), "z"),
    (dict(x="u", y="v", z="0", u=[1, 0, "clamped"], v=[0, 1, "clamped"]), "u"),
    (dict(x="u", y="v", z="0", u=[0, 1, "clamped"], v=[0, 1, "open"]), "v"),
    (dict(x="u", y="v", z="0", u=[0, 1, "clamped"], v=[0, 1, "clamped"], params={"t": 1.0}), "params"),
])
def test_validation_names_field(kw, field):
    name = kw.pop("name", "bad")
    with pytest.raises(SurfaceSpecError) as exc:
        SurfaceSpec.from_text(name, **kw)
    assert exc.value.field == field


def test_unknown_builtin():
    with pytest.raises(SurfaceSpecError):
        builtin_surface("klein-bottle")
    with pytest.raises(SurfaceSpecError):
        builtin_surface("sphere", colour="1")


# -- invariants on every family --------------------------------------------------------------

ALL = list(MOVING) + list(STATIC)


@pytest.mark.parametrize("name", ALL)
def test_frame_invariants_random_nodes(name):
    spec = surface(name)
    f = sample_frame(spec, *random_nodes(spec, 100, seed=5))
    N, S = f.normal.value, f.basis.value
    assert np.max(np.abs(np.einsum("ib,ib->b", N, N) - 1)) < 1e-12
    assert np.max(np.abs(np.einsum("ib,aib->ab", N, S))) < 1e-12
    assert np.max(np.abs(f.curv.value - f.curv.value.transpose(1, 0, 2))) < 1e-10
    G = f.christoffel.value
    assert np.max(np.abs(G - G.transpose(0, 2, 1, 3))) < 1e-12
    assert np.all(f.metric.value[0, 0] > 0) and np.all(f.sqrt_det.value > 0)
    rows = {r.check: r.per_node().max() for r in static_geometry_checks(f)}
    for check in ("frame.metric_compat", "frame.codazzi", "frame.eps_compat", "frame.bianchi"):
        assert rows[check] < 1e-9, check
    assert rows["frame.riemann_gauss"] < 1e-8
    assert rows["frame.curvature_routes"] < 1e-10
    assert rows["frame.christoffel_routes"] < 1e-10


def test_two_dimensional_riemann_has_one_component():
    spec = surface("wobbling-torus")
    f = sample_frame(spec, *random_nodes(spec, 20, seed=2))
    R = g.riemann_lowered(f).value
    r1212 = R[0, 1, 0, 1]
    np.testing.assert_allclose(R[1, 0, 1, 0], r1212, atol=1e-10)
    np.testing.assert_allclose(R[0, 1, 1, 0], -r1212, atol=1e-10)
    for idx in [(0, 0, 0, 1), (1, 1, 0, 1), (0, 1, 0, 0), (0, 1, 1, 1)]:
        assert np.max(np.abs(R[idx])) < 1e-10


# -- ambient coordinates -------------------------------------------------------------------------

def test_spherical_christoffels_closed_form():
    r, th, ph = 1.7, 0.8, 2.2
    Z = stack([Jet.const(np.array([r])), Jet.const(np.array([th])), Jet.const(np.array([ph]))])
    G = AMBIENTS["spherical"].christoffel(Z).value[..., 0]
    expect = np.zeros((3, 3, 3))
    expect[0, 1, 1], expect[0, 2, 2] = -r, -r * math.sin(th) ** 2
    expect[1, 0, 1] = expect[1, 1, 0] = 1 / r
    expect[1, 2, 2] = -math.sin(th) * math.cos(th)
    expect[2, 0, 2] = expect[2, 2, 0] = 1 / r
    expect[2, 1, 2] = expect[2, 2, 1] = math.cos(th) / math.sin(th)
    np.testing.assert_allclose(G, expect, atol=1e-15)


@pytest.mark.parametrize("kind", ["cylindrical", "spherical"])
def test_ambient_christoffels_from_metric(kind):
    # Gamma^i_jk = 1/2 Z^il (d_j Z_lk + d_k Z_lj - d_l Z_jk), metric derivatives from jets
    c = AMBIENTS[kind]
    pts = {"cylindrical": (1.3, 0.7, -0.2), "spherical": (1.3, 0.7, 2.0)}[kind]
    seeds = [Jet.variable(n, np.array([p])) for n, p in zip("uvt", pts)]
    Z = stack(seeds)
    M = c.metric(Z)
    dM = np.stack([M.d(n).value[..., 0] for n in "uvt"])  # [k, i, j]
    Minv = np.linalg.inv(M.value[..., 0])
    ref = 0.5 * np.einsum("il,jlk->ijk", Minv, dM) + 0.5 * np.einsum("il,klj->ijk", Minv, dM) \
        - 0.5 * np.einsum("il,ljk->ijk", Minv, dM)
    np.testing.assert_allclose(c.christoffel(Z).value[..., 0], ref, atol=1e-14)


@pytest.mark.parametrize("kind", ["cartesian", "cylindrical", "spherical"])
def test_ambient_metric_from_basis(kind):
    spec = surface("ellipsoid")
    f = sample_frame(spec, *random_nodes(spec, 30, seed=8))
    A = g.ambient_frame(f, kind)
    Zb = A.basis.value
    np.testing.assert_allclose(np.einsum("icb,jcb->ijb", Zb, Zb), A.metric.value, atol=1e-13)
    np.testing.assert_allclose(np.einsum("ijb,jkb->ikb", A.metric.value, A.metric_inv.value),
                               np.eye(3)[..., None] * np.ones(30), atol=1e-13)
    # shift tensor maps to the surface basis: Z^i_a Z_i = S_a
    np.testing.assert_allclose(np.einsum("aib,icb->acb", A.shift.value, Zb), f.basis.value, atol=1e-13)
    assert A.flat == (kind == "cartesian")


# -- covariant derivatives -------------------------------------------------------------------------

def test_gradient_of_scalar_is_partials():
    spec = surface("torus")
    f = sample_frame(spec, *random_nodes(spec, 10, seed=1))
    psi = Jet.variable("u", f.u) * Jet.variable("v", f.v)
    gpsi = covariant_derivative(TensorField(psi, ""), f).comps.value
    np.testing.assert_allclose(gpsi, np.stack([f.v, f.u]), atol=1e-15)


def test_signature_order_mismatch():
    spec = surface("torus")
    f = sample_frame(spec, *random_nodes(spec, 4, seed=1))
    with pytest.raises(ValueError):
        TensorField(f.metric, "s")
    with pytest.raises(ValueError):
        covariant_derivative(TensorField(f.metric.truncate(0), "ss"), f)


def test_riemann_commutation_sphere_bump():
    spec = builtin_surface("sphere")
    f = sample_frame(spec, *random_nodes(spec, 50, seed=3))
    bump = 1.0 / (1.5 + f.R[2])          # smooth in the ambient point
    psi_up = stack([bump, 0.0 * bump])   # bump along the theta direction
    psi_dn = contract("ab,b->a", f.metric, psi_up)
    for field in (TensorField(psi_up, "S"), TensorField(psi_dn, "s")):
        r = residual("c", "", "", riemann_commutator_check(f, field), sig="ss" + field.sig, frame=f)
        assert r.per_node().max() < 1e-9


def test_riemann_commutation_plane():
    f = sample_frame(plane(), [0.2, -0.4], [0.1, 0.5], 0.0)
    w = stack([Jet.variable("u", f.u) ** 2, Jet.variable("v", f.v) * Jet.variable("u", f.u)])
    for sig in ("", "S", "s"):
        field = TensorField(w[0] if sig == "" else w, sig)
        assert not np.any(riemann_commutator_check(f, field).value)
