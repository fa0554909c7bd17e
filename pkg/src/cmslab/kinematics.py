"""Velocities, accelerations, the normal/tangent commutator and surface energy."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import geometry
from .cms import CmsSample, cms_sample, inv_time_derivative, inv_time_derivative_scalar
from .expr import ExprEvalError, eval_jet, parse
from .geometry import AmbientFrame, DegenerateChartError, FrameSample, TensorField, levi_civita_symbol
from .grid import GridSpec, chart_nodes, integrate
from .jets import Jet, contract
from .residuals import residual


def _tri_velocity_terms(frame, sample):
    C = sample.normal_speed
    N = frame.normal
    V = TensorField(sample.velocity, "c")
    dV = inv_time_derivative(V, frame, sample).comps  # pseudotensor, Cartesian components
    dC = inv_time_derivative_scalar(C, sample)
    dVa = inv_time_derivative(TensorField(sample.speed, "S"), frame, sample).comps
    VgradC = contract("a,a->", sample.speed, sample.grad_c)
    return C, N, dV, dC, dVa, VgradC


def tri_velocity_check(frame: FrameSample, sample: CmsSample):
    C, N, dV, dC, dVa, VgradC = _tri_velocity_terms(frame, sample)
    recon = sample.velocity - C * N - contract("a,ai->i", sample.speed, frame.basis)
    tri = dV - (dC + VgradC) * N - contract("ai,a->i", frame.basis, dVa - C * sample.grad_c_up)
    normal_part = dC - (contract("i,i->", N, dV) - VgradC)
    tangent_part = dVa - (contract("ai,i->a", frame.dual, dV) + C * sample.grad_c_up)
    anchor = "tri-velocity equation"
    return [
        residual("kin.velocity_decomposition", "V - C N - V^a S_a", "decomposition of the ambient velocity",
                 recon, sig="c", frame=frame),
        residual("kin.tri_velocity", "nabla-dot V - N(nabla-dot C + V^a grad_a C) - S_a(nabla-dot V^a - C grad^a C)",
                 anchor, tri, sig="c", frame=frame),
        residual("kin.normal_speed_rate", "nabla-dot C - (N . nabla-dot V - V^a grad_a C)", anchor, normal_part),
        residual("kin.surface_speed_rate", "nabla-dot V^a - (S^a . nabla-dot V + C grad^a C)", anchor,
                 tangent_part, sig="S", frame=frame),
    ]


@dataclass(frozen=True)
class KinematicsSample:
    """Accelerations at the nodes; Cartesian components unless noted."""

    acceleration: Jet           # A = d_t V
    ambient_acceleration: Jet   # ambient acceleration tensor
    surface_acceleration: Jet   # [g]
    normal_acceleration: Jet
    unrepresented: Jet          # component missed by the normal/surface projections
    commutator: Jet             # (N o T)^{ij}_a, layout [i, j, a]
    ambient: AmbientFrame | None = None
    acceleration_components: Jet | None = None   # A^k in the ambient coordinates
    ambient_acceleration_components: Jet | None = None


def normal_tangent_commutator(N, shift):
    """(N o T)^{ij}_a = N^i Z^j_a - Z^i_a N^j, layout [i, j, a]; ``shift`` has layout [a, i]."""
    return contract("i,aj->ija", N, shift) - contract("ai,j->ija", shift, N)


def accelerations(frame: FrameSample, sample: CmsSample, ambient: AmbientFrame | None = None):
    C = sample.normal_speed
    N, S = frame.normal, frame.basis
    Va = sample.speed
    A = sample.velocity.d("t")
    VgradC = contract("a,a->", Va, sample.grad_c)
    VVB = contract("a,b,ab->", Va, Va, frame.curv)
    gd_V = contract("a,ba->b", Va, sample.christoffel_dot)  # V^a Gamma-dot^b_a
    amb = A - (VgradC + VVB) * N - contract("b,bi->i", gd_V, S)
    surf = contract("gi,i->g", frame.dual, A) - gd_V + C * sample.grad_c_up
    norm = contract("i,i->", N, A) - 2.0 * VgradC - VVB
    delta = amb - norm * N - contract("a,ai->i", surf, S)
    comm = normal_tangent_commutator(N, S)
    A_k = amb_k = None
    if ambient is not None:
        Vk = ambient.velocity
        A_k = Vk.d("t")
        if not ambient.flat:
            A_k = A_k + contract("i,j,kij->k", Vk, Vk, ambient.christoffel)
        amb_k = (
            A_k
            - (VgradC + VVB) * ambient.normal
            - contract("b,bi->i", gd_V, ambient.shift)
        )
    return KinematicsSample(A, amb, surf, norm, delta, comm, ambient, A_k, amb_k)


def tri_acceleration_check(kin: KinematicsSample, frame: FrameSample, sample: CmsSample):
    C, N, dV, dC, dVa, VgradC = _tri_velocity_terms(frame, sample)
    S = frame.basis
    tri = kin.ambient_acceleration - (kin.normal_acceleration + VgradC) * N - contract(
        "ai,a->i", S, kin.surface_acceleration - C * sample.grad_c_up
    )
    V_low = sample.velocity  # Cartesian: lowering is the identity
    abbrev = kin.unrepresented - contract("ija,j,a->i", kin.commutator, V_low, sample.grad_c_up)
    anchor = "tri-acceleration equation"
    rows = [
        residual("kin.tri_acceleration", "AA - N(A-hat + V^a grad_a C) - S_a(A-tilde^a - C grad^a C)", anchor, tri,
                 sig="c", frame=frame),
        residual("kin.unrepresented", "Delta A-hat^i - (N o T)^{ij}_a V_j grad^a C", anchor, abbrev, sig="c", frame=frame),
        residual("kin.ambient_tensor", "AA - nabla-dot V", "ambient acceleration tensor",
                 kin.ambient_acceleration - dV, sig="c", frame=frame),
        residual("kin.normal_tensor", "A-hat - nabla-dot C", "invariant normal acceleration",
                 kin.normal_acceleration - dC),
        residual("kin.surface_tensor", "A-tilde^g - nabla-dot V^g", "surface acceleration tensor",
                 kin.surface_acceleration - dVa, sig="S", frame=frame),
    ]
    amb = kin.ambient
    if amb is not None and kin.acceleration_components is not None:
        kind = amb.coords.kind
        dual_amb = contract("kj,jc->kc", amb.metric_inv, amb.basis)  # Z^k, Cartesian components
        rows.append(residual(
            f"kin.acceleration_components.{kind}", f"A^k (d_t V^k + V^i V^j Gamma^k_ij) - Z^k . A ({kind})",
            "acceleration components", kin.acceleration_components - contract("kc,c->k", dual_amb, kin.acceleration),
            sig="A", frame=frame, ambient=amb,
        ))
        tri_k = (
            kin.ambient_acceleration_components
            - (kin.normal_acceleration + VgradC) * amb.normal
            - contract("ai,a->i", amb.shift, kin.surface_acceleration - C * sample.grad_c_up)
        )
        rows.append(residual(f"kin.tri_acceleration.{kind}", f"tri-acceleration in {kind} components", anchor,
                             tri_k, sig="A", frame=frame, ambient=amb))
    return rows


def commutator_properties(frame: FrameSample, ambient: AmbientFrame | None = None):
    """Contractions of the normal/tangent commutator with eps and with the ambient metric.

    The eps identity is evaluated with the surface Levi-Civita tensor
    (``e^ab / sqrt(det S)``) and, as a non-gating row, with the bare symbol.
    """
    comm = normal_tangent_commutator(frame.normal, frame.basis)
    n = frame.size
    e3 = Jet.const(np.broadcast_to(levi_civita_symbol(3)[..., None], (3, 3, 3, n)), frame.order)
    e2 = Jet.const(np.broadcast_to(levi_civita_symbol(2)[..., None], (2, 2, n)), frame.order)
    half = 0.5 * contract("ijk,ija->ka", e3, comm)  # [k, a]
    weighted = contract("ab,ka->bk", frame.eps_up(), half)
    bare = contract("ab,ka->bk", e2, half)
    anchor = "properties of the normal/tangent commutator"
    rows = [
        residual("kin.commutator_eps", "1/2 eps_ijk eps^ab (N o T)^{ij}_a - Z^b_k  (eps^ab = e^ab / sqrt det S)",
                 anchor, weighted - frame.dual, sig="Sc", frame=frame),
        residual("kin.commutator_eps_bare", "same with the bare symbol e^ab", anchor, bare - frame.dual,
                 sig="Sc", frame=frame, gating=False),
        residual("kin.commutator_bare_ratio", "ratio of the bare-symbol result to Z^b_k (expected sqrt det S)",
                 anchor, _ratio(bare, frame.dual) - frame.sqrt_det.value, gating=False),
        residual("kin.commutator_metric", "Z_ij (N o T)^{ij}_a", anchor, contract("ija,ij->a", comm, _eye(n, frame.order)),
                 sig="s", frame=frame),
        residual("kin.commutator_antisym", "(N o T)^{ij}_a + (N o T)^{ji}_a", anchor,
                 comm + contract("jia->ija", comm), sig="cc" + "s", frame=frame),
    ]
    if ambient is not None and not ambient.flat:
        kind = ambient.coords.kind
        comm_k = normal_tangent_commutator(ambient.normal, ambient.shift)
        eps3 = ambient.eps_low()
        half_k = 0.5 * contract("ijk,ija->ka", eps3, comm_k)
        shift_up_low = contract("bg,kj,gj->bk", frame.metric_inv, ambient.metric, ambient.shift)  # Z^b_k
        rows.append(residual(f"kin.commutator_eps.{kind}", f"eps identity in {kind} components", anchor,
                             contract("ab,ka->bk", frame.eps_up(), half_k) - shift_up_low,
                             sig="Sa", frame=frame, ambient=ambient))
        rows.append(residual(f"kin.commutator_metric.{kind}", f"Z_ij (N o T)^{{ij}}_a in {kind} components", anchor,
                             contract("ija,ij->a", comm_k, ambient.metric), sig="s", frame=frame))
    return rows


def _eye(n, order):
    return Jet.const(np.broadcast_to(np.eye(3)[..., None], (3, 3, n)), order)


def _ratio(a, b):
    av, bv = a.value, b.value
    k = np.argmax(np.abs(bv).reshape(-1, bv.shape[-1]), axis=0)
    flat_a = av.reshape(-1, av.shape[-1])
    flat_b = bv.reshape(-1, bv.shape[-1])
    cols = np.arange(av.shape[-1])
    return flat_a[k, cols] / flat_b[k, cols]


# -- energy ---------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    t: float
    density: float
    kinetic: float
    rate_formula: float
    rate_numeric: float
    power: float
    residual_field: np.ndarray   # per node, shape grid.shape
    residual_integral: float     # rho * integral of the residual field
    excluded_nodes: int = 0

    @property
    def bookkeeping_formula(self):
        """(d K/dt - P) - integrated residual, formula rate (pure quadrature linearity)."""
        return (self.rate_formula - self.power) - self.residual_integral

    @property
    def bookkeeping_numeric(self):
        """(d K/dt - P) - integrated residual with the finite-difference rate."""
        return (self.rate_numeric - self.power) - self.residual_integral


def _frame_on_grid(spec, grid, t, order):
    u, v, _, _ = chart_nodes(spec, grid)
    tt = np.full(u.shape, float(t))
    keep = np.ones(u.size, dtype=bool)
    while True:
        try:
            frame = geometry.sample_frame(spec, u[keep], v[keep], tt[keep], order)
            break
        except DegenerateChartError as exc:
            bad = np.zeros_like(keep)
            for (bu, bv, _) in exc.nodes:
                bad |= (u == bu) & (v == bv)
            bad &= keep
            if not bad.any():
                raise
            keep &= ~bad
    excluded = int((~keep).sum())
    if excluded:
        warnings.warn(f"{spec.name}: excluded {excluded} degenerate node(s) at t={t}", RuntimeWarning, stacklevel=3)
    return frame, keep, excluded


def _scatter(keep, values):
    out = np.zeros(keep.shape)
    out[keep] = values
    return out


def kinetic_energy(spec, grid: GridSpec, t, density=1.0, order=2, rule="gregory"):
    frame, keep, _ = _frame_on_grid(spec, grid, t, order)
    V = frame.R.d("t").value
    dens = 0.5 * np.einsum("ib,ib->b", V, V) * frame.sqrt_det.value
    return density * integrate(_scatter(keep, dens), spec, grid, rule)


def _rate_integrand(frame, sample, kin):
    V = sample.velocity.value
    C = sample.normal_speed.value
    mean = kin_trace(frame)
    speed2 = np.einsum("ab,ab->b", sample.speed.value, sample.speed_low.value)
    return np.einsum("ib,ib->b", V, kin.ambient_acceleration.value) - 0.5 * C * mean * (C * C + speed2)


def kin_trace(frame):
    Bm = frame.curv_mixed.value
    return Bm[0, 0] + Bm[1, 1]


def kinetic_rate_two_ways(spec, grid: GridSpec, t, density=1.0, step=1e-3, order=2, rule="gregory"):
    """``(formula, numeric, formula - numeric)`` for the rate of kinetic energy."""
    frame, keep, _ = _frame_on_grid(spec, grid, t, order)
    sample = cms_sample(frame)
    kin = accelerations(frame, sample)
    dens = _rate_integrand(frame, sample, kin) * frame.sqrt_det.value
    formula = density * integrate(_scatter(keep, dens), spec, grid, rule)
    k = {s: kinetic_energy(spec, grid, t + s * step, density, order, rule) for s in (-2, -1, 1, 2)}
    numeric = (k[-2] - 8.0 * k[-1] + 8.0 * k[1] - k[2]) / (12.0 * step)
    return formula, numeric, formula - numeric


AlphaField = Callable[..., np.ndarray]


def _alpha_values(alpha, frame, order):
    """Force field at the nodes, shape (3, n); ``alpha`` is three expressions or a callable."""
    if alpha is None:
        return np.zeros((3, frame.size))
    R = frame.R.value
    if callable(alpha):
        out = np.asarray(alpha(R[0], R[1], R[2], frame.u, frame.v, frame.t), dtype=float)
        if out.shape != (3, frame.size):
            raise ValueError(f"force field callable returned shape {out.shape}, expected {(3, frame.size)}")
        return out
    if len(alpha) != 3:
        raise ValueError("force field needs exactly three components")
    env = {name: Jet.const(R[i], 0) for i, name in enumerate(("x", "y", "z"))}
    comps = []
    for k, a in enumerate(alpha):
        ast = parse(a) if isinstance(a, str) else a
        try:
            comps.append(eval_jet(ast, (frame.u, frame.v, frame.t), None, 0, env).value)
        except ExprEvalError as exc:
            raise ExprEvalError(f"force component {'xyz'[k]}: {exc}", exc.offset, exc.point) from exc
    return np.array(comps)


def power_and_work_energy(spec, grid: GridSpec, t, density=1.0, alpha=None, step=1e-3, order=2, rule="gregory"):
    """Kinetic energy, both rates, power of the force field and the work-energy residual.

    The pointwise residual is ``V.(AA - alpha) - 1/2 C B^a_a (C^2 + V^b V_b)``;
    its density-weighted integral equals ``dK/dt - P``.
    """
    frame, keep, excluded = _frame_on_grid(spec, grid, t, order)
    sample = cms_sample(frame)
    kin = accelerations(frame, sample)
    sq = frame.sqrt_det.value
    V = sample.velocity.value
    a = _alpha_values(alpha, frame, order)
    rate_pt = _rate_integrand(frame, sample, kin)
    power_pt = np.einsum("ib,ib->b", V, a)
    resid = rate_pt - power_pt
    K = density * integrate(_scatter(keep, 0.5 * np.einsum("ib,ib->b", V, V) * sq), spec, grid, rule)
    rate_f = density * integrate(_scatter(keep, rate_pt * sq), spec, grid, rule)
    P = density * integrate(_scatter(keep, power_pt * sq), spec, grid, rule)
    R_int = density * integrate(_scatter(keep, resid * sq), spec, grid, rule)
    k = {s: kinetic_energy(spec, grid, t + s * step, density, order, rule) for s in (-2, -1, 1, 2)}
    numeric = (k[-2] - 8.0 * k[-1] + 8.0 * k[1] - k[2]) / (12.0 * step)
    field = _scatter(keep, resid).reshape(grid.shape)
    return EnergyReport(float(t), float(density), K, rate_f, numeric, P, field, R_int, excluded)


def consistent_force(frame: FrameSample, sample: CmsSample):
    """A force field that satisfies the pointwise work-energy equation exactly.

    ``alpha = AA - (1/2 C B^a_a (C^2 + V^b V_b) / |V|^2) V``; nodes with
    ``V = 0`` get ``alpha = AA``.
    """
    kin = accelerations(frame, sample)
    V = sample.velocity.value
    C = sample.normal_speed.value
    speed2 = np.einsum("ab,ab->b", sample.speed.value, sample.speed_low.value)
    rhs = 0.5 * C * kin_trace(frame) * (C * C + speed2)
    v2 = np.einsum("ib,ib->b", V, V)
    scale = np.divide(rhs, v2, out=np.zeros_like(rhs), where=v2 > 0)
    return kin.ambient_acceleration.value - scale * V
