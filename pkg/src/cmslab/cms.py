"""Moving-surface objects and operators.

Everything here works on a :class:`~cmslab.geometry.FrameSample` whose jets
carry the time variable, so ``d("t")`` of any frame quantity is the partial
time derivative at fixed surface coordinates.  Layouts follow the geometry
module; additionally

=========================  ==============================  ==============
quantity                   meaning                          layout
=========================  ==============================  ==============
``velocity``               V (Cartesian)                    [i]
``speed``                  V^a                              [a]
``christoffel_dot``        Gamma-dot^a_b                    [a, b]
``metric_dot``             K_ab = d_t S_ab                  [a, b]
``temporal_curvature``     Rdot^b_ac                        [b, a, c]
=========================  ==============================  ==============
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .geometry import (
    AmbientFrame,
    FrameSample,
    TensorField,
    _SLOT_LETTERS,
    covariant_derivative,
)
from .jets import Jet, contract, stack
from .residuals import residual


class OrderError(ValueError):
    pass


def _need(frame, order, what):
    if frame.order < order:
        raise OrderError(f"{what} needs jet order >= {order}, frame has {frame.order}")


@dataclass(frozen=True)
class CmsSample:
    frame: FrameSample
    velocity: Jet
    normal_speed: Jet
    speed: Jet
    speed_low: Jet
    grad_c: Jet
    grad_c_up: Jet
    christoffel_dot: Jet
    metric_dot: Jet
    metric_dot_up: Jet
    temporal_curvature: Jet | None
    trace: Jet | None
    scalar_differential: np.ndarray | None


def cms_sample(frame: FrameSample):
    _need(frame, 2, "cms_sample")
    V = frame.R.d("t")
    C = contract("i,i->", V, frame.normal)
    speed = contract("ai,i->a", frame.dual, V)
    speed_low = contract("ab,b->a", frame.metric, speed)
    grad_c = C.grad()
    grad_c_up = contract("ab,b->a", frame.metric_inv, grad_c)
    nabla_speed = covariant_derivative(TensorField(speed, "S"), frame).comps  # [b, a]
    gdot = contract("ba->ab", nabla_speed) - C * frame.curv_mixed
    K = frame.metric.d("t")
    K_up = contract("ac,cd,db->ab", frame.metric_inv, K, frame.metric_inv)
    rdot = trace = scalar = None
    partial = CmsSample(frame, V, C, speed, speed_low, grad_c, grad_c_up, gdot, K, K_up, None, None, None)
    if frame.order >= 3:
        rdot = temporal_curvature_def(frame, partial)
        trace, scalar = _trace_and_scalar(frame, rdot)
    return CmsSample(frame, V, C, speed, speed_low, grad_c, grad_c_up, gdot, K, K_up, rdot, trace, scalar)


# -- time derivatives --------------------------------------------------------

def _tconn(ambient, placement):
    if placement == "first":
        return contract("j,ijk->ik", ambient.velocity, ambient.christoffel)
    if placement == "second":
        return contract("k,ijk->ij", ambient.velocity, ambient.christoffel)
    raise ValueError(f"unknown ambient placement {placement!r}")


def inv_time_derivative(field: TensorField, frame: FrameSample, sample: CmsSample,
                        ambient: AmbientFrame | None = None, placement="first"):
    """Invariant (tensorial) time derivative with one correction per slot."""
    if field.order < 1:
        raise OrderError("time derivative needs field jets of order >= 1")
    n = len(field.sig)
    full = _SLOT_LETTERS[:n]
    nabla = covariant_derivative(field, frame, ambient).comps
    out = field.comps.d("t") - contract(f"a{full},a->{full}", nabla, sample.speed)
    tconn = None
    if ambient is not None and not ambient.flat and any(k in "Aa" for k in field.sig):
        tconn = _tconn(ambient, placement)
    for p, kind in enumerate(field.sig):
        s = full[p]
        dummy = full.replace(s, "z")
        if kind == "S":
            out = out + contract(f"{s}z,{dummy}->{full}", sample.christoffel_dot, field.comps)
        elif kind == "s":
            out = out - contract(f"z{s},{dummy}->{full}", sample.christoffel_dot, field.comps)
        elif kind == "A" and tconn is not None:
            out = out + contract(f"{s}z,{dummy}->{full}", tconn, field.comps)
        elif kind == "a" and tconn is not None:
            out = out - contract(f"z{s},{dummy}->{full}", tconn, field.comps)
    return TensorField(out, field.sig)


def inv_time_derivative_scalar(psi: Jet, sample: CmsSample):
    return psi.d("t") - contract("a,a->", psi.grad(), sample.speed)


def second_order_scalar(psi: Jet, frame: FrameSample, sample: CmsSample):
    """Closed-form second invariant time derivative of a scalar, and the iterated operator.

    Returns ``(formula, iterated)`` as jets.
    """
    if psi.order < 2:
        raise OrderError("second-order operator needs field jets of order >= 2")
    _need(frame, 3, "second_order_scalar")
    Va = sample.speed
    dpsi = psi.grad()
    accel = Va.d("t") - contract("b,ba->a", Va, Va.grad())
    inner = 2.0 * dpsi.d("t") - contract("b,ba->a", Va, dpsi.grad())
    formula = psi.d("t").d("t") - contract("a,a->", accel, dpsi) - contract("a,a->", Va, inner)
    iterated = inv_time_derivative_scalar(inv_time_derivative_scalar(psi, sample), sample)
    return formula, iterated


# -- temporal curvature --------------------------------------------------------

def temporal_curvature_def(frame: FrameSample, sample: CmsSample):
    """Rdot^b_ac = d_t Gamma^b_ac + R^b_cad V^d - grad_a Gamma-dot^b_c."""
    _need(frame, 3, "temporal_curvature_def")
    dtG = frame.christoffel.d("t")
    RV = contract("bcad,d->bac", frame.riemann, sample.speed)
    ngd = covariant_derivative(TensorField(sample.christoffel_dot, "Ss"), frame).comps  # [a, b, c]
    return dtG + RV - contract("abc->bac", ngd)


def temporal_curvature_reduced(frame: FrameSample, sample: CmsSample):
    """Rdot^b_ac = B_ac grad^b C - B^b_a grad_c C."""
    return contract("ac,b->bac", frame.curv, sample.grad_c_up) - contract("ba,c->bac", frame.curv_mixed, sample.grad_c)


def _trace_and_scalar(frame, rdot, floor=-1e-14):
    trace = rdot[0, :, 0] + rdot[1, :, 1]  # [a]
    rad = contract("ab,a,b->", frame.metric_inv, trace, trace).value
    if np.any(rad < floor):
        k = int(np.argmin(rad))
        raise ArithmeticError(f"negative radicand {rad[k]:.3e} in scalar temporal curvature differential at node {k}")
    return trace, np.sqrt(np.maximum(rad, 0.0))


def trace_and_scalar(frame: FrameSample, sample: CmsSample):
    """Trace vector Rdot^b_ab (jet, layout [a]) and the scalar differential (per node)."""
    rdot = sample.temporal_curvature if sample.temporal_curvature is not None else temporal_curvature_def(frame, sample)
    return _trace_and_scalar(frame, rdot)


# -- two-route checks -----------------------------------------------------------

def metric_dot_two_ways(sample: CmsSample, frame: FrameSample):
    nV = covariant_derivative(TensorField(sample.speed_low, "s"), frame).comps  # [a, b] = grad_a V_b
    closed = nV + contract("ab->ba", nV) - 2.0 * sample.normal_speed * frame.curv
    return [
        residual(
            "cms.metric_dot", "K_ab - (grad_a V_b + grad_b V_a - 2 C B_ab)",
            "metric time derivative in terms of speed and curvature", sample.metric_dot - closed, sig="ss", frame=frame,
        ),
        residual(
            "cms.metric_inv_dot", "d_t S^ab + K^ab",
            "time derivative of the contravariant metric", frame.metric_inv.d("t") + sample.metric_dot_up, sig="SS", frame=frame,
        ),
    ]


def dt_christoffel_two_ways(frame: FrameSample, sample: CmsSample):
    """Direct ``d_t Gamma`` against its closed form; returns ``(direct, closed)``."""
    _need(frame, 3, "dt_christoffel_two_ways")
    direct = frame.christoffel.d("t")
    gd = covariant_derivative(TensorField(sample.christoffel_dot, "Ss"), frame).comps  # [a, b, c]
    VR = contract("bcae,e->bac", frame.riemann, sample.speed)
    CB = sample.normal_speed * frame.curv
    nCB = covariant_derivative(TensorField(CB, "ss"), frame).comps  # [d, a, c]
    up = contract("bd,dac->bac", frame.metric_inv, nCB)
    CBm = sample.normal_speed * frame.curv_mixed
    nCBm = covariant_derivative(TensorField(CBm, "Ss"), frame).comps  # [c, b, a]
    closed = contract("abc->bac", gd) - VR + up - contract("cba->bac", nCBm)
    return direct, closed


def temporal_curvature_checks(frame, sample):
    rdef = sample.temporal_curvature
    rred = temporal_curvature_reduced(frame, sample)
    direct, closed = dt_christoffel_two_ways(frame, sample)
    trace, scalar = trace_and_scalar(frame, sample)
    return [
        residual("cms.rdot_def", "Rdot^b_ac by definition (d_t Gamma + R V - grad Gamma-dot)",
                 "temporal curvature tensor, definition", rdef, "third", gating=False, sig="Sss", frame=frame),
        residual("cms.rdot_reduced", "Rdot^b_ac = B_ac grad^b C - B^b_a grad_c C",
                 "temporal curvature tensor, reduced form", rred, "first", gating=False, sig="Sss", frame=frame),
        residual("cms.rdot_equivalence", "definition minus reduced form",
                 "temporal curvature tensor, reduced form", rdef - rred, "third", sig="Sss", frame=frame),
        residual("cms.dt_christoffel", "d_t Gamma^b_ac minus its closed form",
                 "time derivative of the Christoffel symbols", direct - closed, "third", sig="Sss", frame=frame),
        residual("cms.trace", "Rdot^b_ab", "trace of the temporal curvature tensor", trace, "third", sig="s", frame=frame),
        residual("cms.scalar_differential", "sqrt(S^ab T_a T_b), T_a = Rdot^c_ac",
                 "scalar temporal curvature differential", scalar, "third"),
    ]


def frame_commutation_projections(frame: FrameSample, sample: CmsSample):
    _need(frame, 3, "frame_commutation_projections")
    C = sample.normal_speed
    dB = inv_time_derivative(TensorField(frame.curv, "ss"), frame, sample).comps
    hessC = covariant_derivative(TensorField(sample.grad_c, "s"), frame).comps  # [a, b]
    BB = contract("ga,gb->ab", frame.curv_mixed, frame.curv)
    codazzi_like = dB - hessC - C * BB
    rdot = sample.temporal_curvature
    gauss_like = (
        rdot
        - contract("ab,g->gab", frame.curv, sample.grad_c_up)
        + contract("ga,b->gab", frame.curv_mixed, sample.grad_c)
    )
    shuffle = contract("ag,g->a", frame.curv, sample.grad_c_up) - contract("ga,g->a", frame.curv_mixed, sample.grad_c)
    return [
        residual("cms.projection_normal", "nabla-dot B_ab - grad_a grad_b C - C B^g_a B_gb",
                 "normal projection of the frame commutator", codazzi_like, "third", sig="ss", frame=frame),
        residual("cms.projection_tangential", "Rdot^g_ab - B_ab grad^g C + B^g_a grad_b C",
                 "tangential projection of the frame commutator", gauss_like, "third", sig="Sss", frame=frame),
        residual("cms.curvature_shuffle", "B_ag grad^g C - B^g_a grad_g C",
                 "index shuffle of the symmetric curvature tensor", shuffle, "first", sig="s", frame=frame),
    ]


def frame_derivative_table_check(frame: FrameSample, sample: CmsSample, ambient: AmbientFrame | None = None,
                                 surface_rows=True):
    """Invariant time derivatives of the frame objects against their table values.

    With ``ambient`` the ambient-basis, ambient-metric, shift and normal rows
    are added in those coordinates; in curvilinear coordinates each comes in
    both placements of the velocity in the ambient Christoffel term (the
    second is reported but not gating).  ``surface_rows=False`` returns only
    the ambient rows.
    """
    _need(frame, 3, "frame_derivative_table_check")
    C = sample.normal_speed
    N = frame.normal
    rows = []

    def itd(comps, sig, amb=None, placement="first"):
        return inv_time_derivative(TensorField(comps, sig), frame, sample, amb, placement).comps

    anchor = "invariant time derivative table"
    if not surface_rows:
        return rows + _ambient_table_rows(frame, sample, ambient, itd, anchor) if ambient is not None else rows
    rows.append(residual("table.metric", "nabla-dot S_ab", anchor, itd(frame.metric, "ss"), sig="ss", frame=frame))
    rows.append(residual("table.metric_inv", "nabla-dot S^ab", anchor, itd(frame.metric_inv, "SS"), sig="SS", frame=frame))
    rows.append(residual("table.basis", "nabla-dot S_a - N grad_a C", anchor,
                         itd(frame.basis, "sc") - contract("a,i->ai", sample.grad_c, N), sig="sc", frame=frame))
    rows.append(residual("table.dual", "nabla-dot S^a - N grad^a C", anchor,
                         itd(frame.dual, "Sc") - contract("a,i->ai", sample.grad_c_up, N), sig="Sc", frame=frame))
    rows.append(residual("table.normal", "nabla-dot N + S^a grad_a C", anchor,
                         itd(N, "c") + contract("ai,a->i", frame.dual, sample.grad_c), sig="c", frame=frame))
    rows.append(residual("table.eps", "nabla-dot eps_ab", anchor, itd(frame.eps_low(), "ss"), sig="ss", frame=frame))
    delta = Jet.const(np.broadcast_to(np.eye(2)[..., None], (2, 2, frame.size)), frame.order)
    rows.append(residual("table.delta", "nabla-dot delta^a_b", anchor, itd(delta, "Ss"), sig="Ss", frame=frame))
    hessC = covariant_derivative(TensorField(sample.grad_c_up, "S"), frame).comps  # [b, a] = grad_b grad^a C
    BB = contract("ag,gb->ab", frame.curv_mixed, frame.curv_mixed)
    rows.append(residual("table.curvature", "nabla-dot B^a_b - grad_b grad^a C - C B^a_g B^g_b", anchor,
                         itd(frame.curv_mixed, "Ss") - contract("ba->ab", hessC) - C * BB, "third", sig="Ss", frame=frame))
    if ambient is not None:
        rows += _ambient_table_rows(frame, sample, ambient, itd, anchor)
    return rows


def _ambient_table_rows(frame, sample, ambient, itd, anchor):
    rows = []
    kind = ambient.coords.kind
    for placement in ("first", "second") if not ambient.flat else ("first",):
        tag = f"{kind}" if placement == "first" else f"{kind}.alt"
        gating = placement == "first"
        rows.append(residual(f"table.ambient_basis.{tag}", f"nabla-dot Z_i ({kind}, {placement}-index placement)",
                             anchor, itd(ambient.basis, "ac", ambient, placement),
                             gating=gating, sig="ac", frame=frame, ambient=ambient))
        rows.append(residual(f"table.ambient_metric.{tag}", f"nabla-dot Z_ij ({kind}, {placement}-index placement)",
                             anchor, itd(ambient.metric, "aa", ambient, placement),
                             gating=gating, sig="aa", frame=frame, ambient=ambient))
        rows.append(residual(
            f"table.shift.{tag}", f"nabla-dot Z^i_a - N^i grad_a C ({kind}, {placement}-index placement)", anchor,
            itd(ambient.shift, "sA", ambient, placement) - contract("a,i->ai", sample.grad_c, ambient.normal),
            gating=gating, sig="sA", frame=frame, ambient=ambient,
        ))
        shift_up = contract("ab,bi->ai", frame.metric_inv, ambient.shift)
        rows.append(residual(
            f"table.ambient_normal.{tag}", f"nabla-dot N^i + Z^i_a grad^a C ({kind}, {placement}-index placement)",
            anchor,
            itd(ambient.normal, "A", ambient, placement) + contract("a,ai->i", sample.grad_c, shift_up),
            gating=gating, sig="A", frame=frame, ambient=ambient,
        ))
    return rows


# -- commutators ------------------------------------------------------------------

def semi_commutation_scalar(psi: Jet, frame: FrameSample, sample: CmsSample):
    """(nabla-dot grad_a - grad_a nabla-dot - C B^b_a grad_b) psi, layout [a]."""
    _need(frame, 3, "semi_commutation_scalar")
    g = covariant_derivative(TensorField(psi, ""), frame)
    lhs1 = inv_time_derivative(g, frame, sample).comps
    lhs2 = covariant_derivative(TensorField(inv_time_derivative_scalar(psi, sample), ""), frame).comps
    CB = sample.normal_speed * frame.curv_mixed
    return lhs1 - lhs2 - contract("ba,b->a", CB, g.comps)


def commutator_vector_check(psi: Jet, frame: FrameSample, sample: CmsSample, covariant=False):
    """Nested-operator commutator minus the temporal curvature term, layout [a, b].

    ``covariant=False`` treats ``psi`` as psi^b, otherwise as psi_b.
    """
    _need(frame, 3, "commutator_vector_check")
    sig = "s" if covariant else "S"
    P = TensorField(psi, sig)
    nab = covariant_derivative(P, frame)
    lhs1 = inv_time_derivative(nab, frame, sample).comps
    lhs2 = covariant_derivative(inv_time_derivative(P, frame, sample), frame).comps
    CB = sample.normal_speed * frame.curv_mixed
    lhs3 = contract("ga,gb->ab", CB, nab.comps)
    rdot = sample.temporal_curvature
    if covariant:
        return lhs1 - lhs2 - lhs3 + contract("gab,g->ab", rdot, psi)
    return lhs1 - lhs2 - lhs3 - contract("bag,g->ab", rdot, psi)


# -- ambient temporal curvature ----------------------------------------------------

def ambient_temporal_curvature(frame: FrameSample, sample: CmsSample, ambient: AmbientFrame):
    """d_t(Z^j_a Gamma^i_jk) - grad_a(V^j Gamma^i_jk), layout [a, i, k]; zero ambient Riemann."""
    if ambient.flat:
        return Jet.zeros((2, 3, 3, frame.size), frame.order - 2)
    conn = ambient.conn()  # [a, i, k]
    T = TensorField(ambient.tconn(), "Aa")
    return conn.d("t") - covariant_derivative(T, frame, ambient).comps


def ambient_commutator_check(psi: Jet, frame: FrameSample, sample: CmsSample, ambient: AmbientFrame):
    """(nabla-dot grad_a - grad_a nabla-dot - C B^b_a grad_b) psi^i - Rdot^i_ak psi^k, layout [a, i]."""
    P = TensorField(psi, "A")
    nab = covariant_derivative(P, frame, ambient)
    lhs1 = inv_time_derivative(nab, frame, sample, ambient).comps
    lhs2 = covariant_derivative(inv_time_derivative(P, frame, sample, ambient), frame, ambient).comps
    CB = sample.normal_speed * frame.curv_mixed
    lhs3 = contract("ba,bi->ai", CB, nab.comps)
    rdot = ambient_temporal_curvature(frame, sample, ambient)
    out = lhs1 - lhs2 - lhs3
    if not ambient.flat:
        out = out - contract("aik,k->ai", rdot, psi)
    return out


def static_geometry_checks(frame: FrameSample, ambient=None):
    """Pointwise identities of the static frame (unit normal, Codazzi, Bianchi, ...)."""
    from .geometry import christoffel_from_metric, curvature_routes, riemann_gauss, riemann_lowered

    N, S = frame.normal, frame.basis
    rows = [
        residual("frame.normal_unit", "|N| - 1", "unit normal", contract("i,i->", N, N) - 1.0),
        residual("frame.normal_tangent", "N . S_a", "unit normal", contract("i,ai->a", N, S), sig="s", frame=frame),
        residual("frame.curv_symmetric", "B_ab - B_ba", "curvature tensor", frame.curv - contract("ab->ba", frame.curv), sig="ss", frame=frame),
    ]
    nS = covariant_derivative(TensorField(frame.metric, "ss"), frame).comps
    rows.append(residual("frame.metric_compat", "grad_c S_ab", "metric compatibility", nS, sig="sss", frame=frame))
    ne = covariant_derivative(TensorField(frame.eps_low(), "ss"), frame).comps
    rows.append(residual("frame.eps_compat", "grad_c eps_ab", "Levi-Civita compatibility", ne, sig="sss", frame=frame))
    nB = covariant_derivative(TensorField(frame.curv, "ss"), frame).comps  # [d, g, a]
    rows.append(residual("frame.codazzi", "grad_d B_ga - grad_g B_da", "Codazzi equation",
                         nB - contract("gda->dga", nB), "third", sig="sss", frame=frame))
    rows.append(residual("frame.riemann_gauss", "R_abcd (Christoffel route) - (B_ac B_bd - B_ad B_bc)",
                         "Gauss equation", riemann_lowered(frame) - riemann_gauss(frame), "third", sig="ssss", frame=frame))
    R = frame.riemann  # [e, g, a, d]
    bianchi = R + contract("edga->egad", R) + contract("eadg->egad", R)
    rows.append(residual("frame.bianchi", "R^e_gad + R^e_dga + R^e_adg", "cyclic Bianchi identity", bianchi, "third", sig="Ssss", frame=frame))
    b1, b2 = curvature_routes(frame)
    rows.append(residual("frame.curvature_routes", "-S^a . d_b N  vs  N . d_b S^a", "curvature tensor, two routes", b1 - b2, sig="Ss", frame=frame))
    rows.append(residual("frame.christoffel_routes", "S^c . d_a S_b  vs  metric formula",
                         "Christoffel symbols, two routes", frame.christoffel - christoffel_from_metric(frame), sig="Sss", frame=frame))
    return rows
