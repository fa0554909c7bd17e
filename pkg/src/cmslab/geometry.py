"""Static differential geometry of a parametric surface, sampled as jets.

Index layouts used throughout (surface indices run over (u, v), ambient
indices over the three ambient coordinates; a trailing grid-batch axis is
always implied):

=====================  ===========================  =================
quantity               meaning                       layout
=====================  ===========================  =================
``basis``              S_a (Cartesian components)    [a, i]
``dual``               S^a                           [a, i]
``metric``             S_ab                          [a, b]
``metric_inv``         S^ab                          [a, b]
``curv``               B_ab                          [a, b]
``curv_mixed``         B^a_b                         [a, b]
``christoffel``        Gamma^c_ab                    [c, a, b]
``riemann``            R^d_cab                       [d, c, a, b]
=====================  ===========================  =================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import jets
from .expr import AMBIENT_VARIABLES, ExprSyntaxError, eval_jet, free_names, parse, to_text
from .jets import Jet, contract, stack


class SurfaceSpecError(ValueError):
    """Invalid surface description; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class DegenerateChartError(ValueError):
    def __init__(self, message, nodes):
        super().__init__(message)
        self.nodes = nodes


@dataclass(frozen=True)
class SurfaceSpec:
    """Embedding ``R(u, v, t) = (x, y, z)`` over a rectangular chart."""

    name: str
    x: object
    y: object
    z: object
    u_range: tuple
    v_range: tuple
    u_periodic: bool = False
    v_periodic: bool = False
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for key, rng in (("u", self.u_range), ("v", self.v_range)):
            lo, hi = rng
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise SurfaceSpecError(f"degenerate range [{lo}, {hi}]", key)
        for key in ("x", "y", "z"):
            vars_, params = free_names(getattr(self, key))
            bad = vars_ & set(AMBIENT_VARIABLES)
            if bad:
                raise SurfaceSpecError(f"embedding cannot reference {sorted(bad)}", key)
            missing = params - set(self.params)
            if missing:
                raise SurfaceSpecError(f"unresolved parameters {sorted(missing)}", key)

    @classmethod
    def from_text(cls, name, x, y, z, u, v, params=None):
        """Build from expression strings and ``[min, max, "periodic"|"clamped"]`` ranges."""
        asts = {}
        for key, text in (("x", x), ("y", y), ("z", z)):
            if not isinstance(text, str):
                raise SurfaceSpecError("expected an expression string", key)
            try:
                asts[key] = parse(text)
            except ExprSyntaxError as exc:
                raise SurfaceSpecError(str(exc), key) from exc
        ranges = {}
        for key, rng in (("u", u), ("v", v)):
            if not (isinstance(rng, (list, tuple)) and len(rng) == 3 and rng[2] in ("periodic", "clamped")):
                raise SurfaceSpecError('expected [min, max, "periodic"|"clamped"]', key)
            try:
                ranges[key] = ((float(rng[0]), float(rng[1])), rng[2] == "periodic")
            except (TypeError, ValueError) as exc:
                raise SurfaceSpecError("range bounds must be numbers", key) from exc
        params = dict(params or {})
        for k, val in params.items():
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise SurfaceSpecError(f"parameter {k!r} must be a number", "params")
            if k in ("u", "v", "t", "x", "y", "z") or not k.isidentifier():
                raise SurfaceSpecError(f"invalid parameter name {k!r}", "params")
        return cls(
            name,
            asts["x"],
            asts["y"],
            asts["z"],
            ranges["u"][0],
            ranges["v"][0],
            ranges["u"][1],
            ranges["v"][1],
            params,
        )

    def to_document(self):
        def rng(r, periodic):
            return [r[0], r[1], "periodic" if periodic else "clamped"]

        return {
            "name": self.name,
            "x": to_text(self.x),
            "y": to_text(self.y),
            "z": to_text(self.z),
            "u": rng(self.u_range, self.u_periodic),
            "v": rng(self.v_range, self.v_periodic),
            "params": dict(self.params),
        }

    def embedding(self, u, v, t, order=jets.DEFAULT_ORDER):
        at = (u, v, t)
        return stack([eval_jet(e, at, self.params, order) for e in (self.x, self.y, self.z)])


# -- built-in families ------------------------------------------------------

TWO_PI = 2.0 * math.pi

_BUILTINS = {
    "sphere": (
        {"radius": "1"},
        ("({radius})*sin(u)*cos(v)", "({radius})*sin(u)*sin(v)", "({radius})*cos(u)"),
        lambda a: ([0.0, math.pi, "clamped"], [0.0, TWO_PI, "periodic"]),
    ),
    "cylinder": (
        {"radius": "1", "height": "1"},
        ("({radius})*cos(u)", "({radius})*sin(u)", "v"),
        lambda a: ([0.0, TWO_PI, "periodic"], [0.0, float(a["height"]), "clamped"]),
    ),
    "torus": (
        {"major": "1", "minor": "0.3"},
        (
            "(({major})+({minor})*cos(v))*cos(u)",
            "(({major})+({minor})*cos(v))*sin(u)",
            "({minor})*sin(v)",
        ),
        lambda a: ([0.0, TWO_PI, "periodic"], [0.0, TWO_PI, "periodic"]),
    ),
    "ellipsoid": (
        {"a": "1", "b": "0.8", "c": "0.6"},
        ("({a})*sin(u)*cos(v)", "({b})*sin(u)*sin(v)", "({c})*cos(u)"),
        lambda a: ([0.0, math.pi, "clamped"], [0.0, TWO_PI, "periodic"]),
    ),
    "translating-sphere": (
        {"speed": "0.2", "radius": "1"},
        ("({radius})*sin(u)*cos(v)", "({radius})*sin(u)*sin(v)", "({radius})*cos(u)+({speed})*t"),
        lambda a: ([0.0, math.pi, "clamped"], [0.0, TWO_PI, "periodic"]),
    ),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_surface(name, **args):
    """Expand a built-in family; arguments are expression strings (``height`` is a number)."""
    if name not in _BUILTINS:
        raise SurfaceSpecError(f"unknown builtin {name!r}; choose from {', '.join(BUILTIN_NAMES)}", "surface")
    defaults, templates, ranges = _BUILTINS[name]
    unknown = set(args) - set(defaults)
    if unknown:
        raise SurfaceSpecError(f"unknown arguments {sorted(unknown)} for {name}", "params")
    a = {k: str(args.get(k, d)) for k, d in defaults.items()}
    x, y, z = (tpl.format(**a) for tpl in templates)
    u, v = ranges(a)
    label = name + "(" + ", ".join(f"{k}={a[k]}" for k in defaults) + ")"
    return SurfaceSpec.from_text(label, x, y, z, u, v)


# -- ambient coordinate systems ---------------------------------------------

class AmbientCoords:
    """Closed-form description of a coordinate system on flat 3-space."""

    kind = "cartesian"

    def coordinates(self, R):
        return R

    def metric(self, Z):
        return Jet.const(np.broadcast_to(np.eye(3)[..., None], (3, 3) + Z.shape[1:]), Z.order)

    def christoffel(self, Z):
        return None

    def basis(self, Z):
        """Cartesian components of the covariant basis ``Z_i``, layout [i, cart]."""
        return Jet.const(np.broadcast_to(np.eye(3)[..., None], (3, 3) + Z.shape[1:]), Z.order)


class CylindricalCoords(AmbientCoords):
    kind = "cylindrical"  # (r, phi, z)

    def coordinates(self, R):
        x, y, z = R
        return stack([jets.sqrt(x * x + y * y), jets.atan2(y, x), z])

    def metric(self, Z):
        r = Z[0]
        one, zero = Jet.const(np.ones(r.shape), r.order), Jet.zeros(r.shape, r.order)
        return stack([stack([one, zero, zero]), stack([zero, r * r, zero]), stack([zero, zero, one])])

    def christoffel(self, Z):
        r = Z[0]
        zero = Jet.zeros(r.shape, r.order)
        g = [[[zero] * 3 for _ in range(3)] for _ in range(3)]
        g[0][1][1] = -r
        g[1][0][1] = g[1][1][0] = 1.0 / r
        return stack([stack([stack(row) for row in plane]) for plane in g])

    def basis(self, Z):
        r, phi = Z[0], Z[1]
        c, s = jets.cos(phi), jets.sin(phi)
        zero = Jet.zeros(r.shape, r.order)
        one = Jet.const(np.ones(r.shape), r.order)
        return stack([stack([c, s, zero]), stack([-r * s, r * c, zero]), stack([zero, zero, one])])


class SphericalCoords(AmbientCoords):
    kind = "spherical"  # (r, theta, phi)

    def coordinates(self, R):
        x, y, z = R
        rho2 = x * x + y * y
        return stack([jets.sqrt(rho2 + z * z), jets.atan2(jets.sqrt(rho2), z), jets.atan2(y, x)])

    def metric(self, Z):
        r, th = Z[0], Z[1]
        one, zero = Jet.const(np.ones(r.shape), r.order), Jet.zeros(r.shape, r.order)
        s = jets.sin(th)
        return stack([stack([one, zero, zero]), stack([zero, r * r, zero]), stack([zero, zero, r * r * s * s])])

    def christoffel(self, Z):
        r, th = Z[0], Z[1]
        s, c = jets.sin(th), jets.cos(th)
        zero = Jet.zeros(r.shape, r.order)
        g = [[[zero] * 3 for _ in range(3)] for _ in range(3)]
        g[0][1][1] = -r
        g[0][2][2] = -r * s * s
        g[1][0][1] = g[1][1][0] = 1.0 / r
        g[1][2][2] = -s * c
        g[2][0][2] = g[2][2][0] = 1.0 / r
        g[2][1][2] = g[2][2][1] = c / s
        return stack([stack([stack(row) for row in plane]) for plane in g])

    def basis(self, Z):
        r, th, ph = Z[0], Z[1], Z[2]
        st, ct, sp, cp = jets.sin(th), jets.cos(th), jets.sin(ph), jets.cos(ph)
        zero = Jet.zeros(r.shape, r.order)
        return stack(
            [
                stack([st * cp, st * sp, ct]),
                stack([r * ct * cp, r * ct * sp, -r * st]),
                stack([-r * st * sp, r * st * cp, zero]),
            ]
        )


AMBIENTS = {c.kind: c() for c in (AmbientCoords, CylindricalCoords, SphericalCoords)}


def levi_civita_symbol(n):
    e = np.zeros((n,) * n)
    if n == 2:
        e[0, 1], e[1, 0] = 1.0, -1.0
    else:
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            e[i, j, k], e[j, i, k] = 1.0, -1.0
    return e


# -- frame sampling -----------------------------------------------------------

@dataclass(frozen=True)
class FrameSample:
    """Static geometry at a batch of nodes (all fields are jets)."""

    u: np.ndarray
    v: np.ndarray
    t: np.ndarray
    order: int
    R: Jet
    basis: Jet
    dual: Jet
    metric: Jet
    metric_inv: Jet
    sqrt_det: Jet
    normal: Jet
    hessian: Jet
    curv: Jet
    curv_mixed: Jet
    christoffel: Jet
    riemann: Jet

    @property
    def size(self):
        return self.u.size

    def eps_low(self):
        """Surface Levi-Civita tensor eps_ab = sqrt(det S) e_ab."""
        e = Jet.const(np.broadcast_to(levi_civita_symbol(2)[..., None], (2, 2, self.size)), self.sqrt_det.order)
        return e * self.sqrt_det

    def eps_up(self):
        e = Jet.const(np.broadcast_to(levi_civita_symbol(2)[..., None], (2, 2, self.size)), self.sqrt_det.order)
        return e / self.sqrt_det


def cross(a, b):
    """Cross product of Cartesian vector jets with layout [..., i, batch] on axis 0."""
    return stack([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def frame_from_embedding(R, u, v, t, degenerate_tol=1e-12):
    """Build every static object from the embedding jet ``R`` (layout [i, batch])."""
    if R.order < 2:
        raise ValueError(f"curvature needs embedding jets of order >= 2, got {R.order}")
    basis = R.grad()
    metric = contract("ai,bi->ab", basis, basis)
    g11, g12, g22 = metric[0, 0], metric[0, 1], metric[1, 1]
    det = g11 * g22 - g12 * g12
    n = cross(basis[0], basis[1])
    norm2 = contract("i,i->", n, n)
    bad = np.sqrt(np.maximum(norm2.value, 0.0)) < degenerate_tol
    if np.any(bad):
        k = np.flatnonzero(bad)
        nodes = [(float(u.flat[i]), float(v.flat[i]), float(t.flat[i])) for i in k[:5]]
        raise DegenerateChartError(f"degenerate tangent plane at {len(k)} node(s), first {nodes}", nodes)
    normal = n / jets.sqrt(norm2)
    metric_inv = stack([stack([g22, -g12]), stack([-g12, g11])]) / det
    dual = contract("ab,bi->ai", metric_inv, basis)
    hessian = basis.grad()  # [a, b, i] = d_a S_b
    curv = contract("abi,i->ab", hessian, normal)
    christoffel = contract("ci,abi->cab", dual, hessian)
    curv_mixed = contract("ac,cb->ab", metric_inv, curv)
    riemann = riemann_from_christoffel(christoffel) if christoffel.order >= 1 else None
    return FrameSample(
        np.asarray(u), np.asarray(v), np.asarray(t), R.order, R, basis, dual, metric, metric_inv,
        jets.sqrt(det), normal, hessian, curv, curv_mixed, christoffel, riemann,
    )


def sample_frame(spec: SurfaceSpec, u, v, t, order=jets.DEFAULT_ORDER):
    """Sample every static object of ``spec`` at the nodes ``(u, v, t)`` (arrays or scalars)."""
    u, v, t = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float)) for a in (u, v, t)))
    u, v, t = (a.ravel() for a in (u, v, t))
    return frame_from_embedding(spec.embedding(u, v, t, order), u, v, t)


def riemann_from_christoffel(G):
    """R^r_smn = d_m G^r_ns - d_n G^r_ms + G^r_ml G^l_ns - G^r_nl G^l_ms."""
    dG = G.grad()  # [m, r, a, b]
    return (
        contract("mrns->rsmn", dG)
        - contract("nrms->rsmn", dG)
        + contract("rml,lns->rsmn", G, G)
        - contract("rnl,lms->rsmn", G, G)
    )


def christoffel_from_metric(frame):
    """Gamma^c_ab = 1/2 S^cd (d_a S_bd + d_b S_ad - d_d S_ab)."""
    dS = frame.metric.grad()  # [k, a, b] = d_k S_ab
    first = 0.5 * (contract("abd->abd", dS) + contract("bad->abd", dS) - contract("dab->abd", dS))
    return contract("cd,abd->cab", frame.metric_inv, first)


def riemann_gauss(frame):
    """All-lower R_abcd = B_ac B_bd - B_ad B_bc."""
    B = frame.curv
    return contract("ac,bd->abcd", B, B) - contract("ad,bc->abcd", B, B)


def riemann_lowered(frame):
    return contract("ae,ebcd->abcd", frame.metric, frame.riemann)


def curvature_routes(frame):
    """B^a_b as  -S^a . d_b N  and as  N . d_b S^a  (layout [a, b])."""
    dN = frame.normal.grad()  # [b, i]
    via_normal = -contract("ai,bi->ab", frame.dual, dN)
    dDual = frame.dual.grad()  # [b, a, i]
    via_dual = contract("i,bai->ab", frame.normal, dDual)
    return via_normal, via_dual


# -- tensor fields and covariant differentiation ------------------------------

SLOT_DIMS = {"S": 2, "s": 2, "A": 3, "a": 3, "c": 3}
_SLOT_LETTERS = "bcdefghijk"


@dataclass(frozen=True)
class TensorField:
    """Components of a field at the nodes plus its index signature.

    Signature letters: ``S``/``s`` surface upper/lower, ``A``/``a`` ambient
    upper/lower in the chosen ambient coordinates, ``c`` a Cartesian component
    slot (flat, never corrected).
    """

    comps: Jet
    sig: str

    def __post_init__(self):
        dims = tuple(SLOT_DIMS[k] for k in self.sig)
        if self.comps.ndim != len(dims) + 1 or self.comps.shape[: len(dims)] != dims:
            raise ValueError(f"signature {self.sig!r} needs shape {dims} + (nodes,), got {self.comps.shape}")

    @property
    def order(self):
        return self.comps.order

    def __add__(self, other):
        self._same(other)
        return TensorField(self.comps + other.comps, self.sig)

    def __sub__(self, other):
        self._same(other)
        return TensorField(self.comps - other.comps, self.sig)

    def _same(self, other):
        if self.sig != other.sig:
            raise ValueError(f"signature mismatch {self.sig!r} vs {other.sig!r}")


@dataclass(frozen=True)
class AmbientFrame:
    """Ambient-coordinate objects pulled back to the surface nodes."""

    coords: AmbientCoords
    Z: Jet                  # coordinates of the surface point, [i]
    velocity: Jet           # d_t Z^i at fixed (u, v), [i]
    shift: Jet              # Z^i_a, layout [a, i]
    metric: Jet             # Z_ij
    metric_inv: Jet
    basis: Jet              # Z_i in Cartesian components, [i, cart]
    christoffel: Jet | None  # Gamma^i_jk, [i, j, k]
    normal: Jet             # N^i
    normal_low: Jet         # N_i

    @property
    def flat(self):
        return self.christoffel is None

    def conn(self):
        """Z^j_a Gamma^i_jk, layout [a, i, k]."""
        return contract("aj,ijk->aik", self.shift, self.christoffel)

    def tconn(self):
        """V^j Gamma^i_jk, layout [i, k]."""
        return contract("j,ijk->ik", self.velocity, self.christoffel)

    def eps_low(self):
        det = _det3(self.metric)
        e = Jet.const(np.broadcast_to(levi_civita_symbol(3)[..., None], (3, 3, 3) + det.shape), det.order)
        return e * jets.sqrt(det)


def _det3(m):
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def ambient_frame(frame: FrameSample, kind="cartesian"):
    coords = AMBIENTS[kind] if isinstance(kind, str) else kind
    Z = coords.coordinates(frame.R)
    basis = coords.basis(Z)
    metric = coords.metric(Z)
    if coords.christoffel(Z) is None:
        metric_inv = metric
    else:
        metric_inv = stack([stack([1.0 / metric[i, i] if i == j else metric[i, j] for j in range(3)]) for i in range(3)])
    normal_low = contract("ic,c->i", basis, frame.normal)
    return AmbientFrame(
        coords,
        Z,
        Z.d("t"),
        Z.grad(),
        metric,
        metric_inv,
        basis,
        coords.christoffel(Z),
        contract("ij,j->i", metric_inv, normal_low),
        normal_low,
    )


def _slot_terms(field, kind_map, conn_for):
    """Yield ``(sign, spec, conn)`` correction terms for every slot of ``field``."""
    n = len(field.sig)
    full = _SLOT_LETTERS[:n]
    for p, kind in enumerate(field.sig):
        slot = full[p]
        dummy = full.replace(slot, "z")
        term = kind_map.get(kind)
        if term is None:
            continue
        conn = conn_for(kind)
        if conn is None:
            continue
        sign, pattern = term
        yield sign, pattern.format(s=slot, dummy=dummy, full=full), conn


def covariant_derivative(field: TensorField, frame: FrameSample, ambient: AmbientFrame | None = None):
    """Surface covariant derivative; the new lower surface index comes first in the result."""
    if field.order < 1:
        raise ValueError("covariant derivative needs field jets of order >= 1")
    out = field.comps.grad()
    kind_map = {
        "S": (+1, "{s}az,{dummy}->a{full}"),
        "s": (-1, "za{s},{dummy}->a{full}"),
        "A": (+1, "a{s}z,{dummy}->a{full}"),
        "a": (-1, "az{s},{dummy}->a{full}"),
    }
    conn = None
    if ambient is not None and not ambient.flat and any(k in "Aa" for k in field.sig):
        conn = ambient.conn()

    def conn_for(kind):
        return frame.christoffel if kind in "Ss" else conn

    for sign, spec, c in _slot_terms(field, kind_map, conn_for):
        term = contract(spec, c, field.comps)
        out = out + term if sign > 0 else out - term
    return TensorField(out, "s" + field.sig)


def riemann_commutator_check(frame: FrameSample, field: TensorField):
    """Residual of ``(grad_a grad_b - grad_b grad_a) psi`` against the Riemann term.

    Scalars must commute; vectors pick up ``+R^c_dab psi^d`` and covectors
    ``-R^d_cab psi_d``.  Returns the residual jet with layout [a, b, ...].
    """
    hess = covariant_derivative(covariant_derivative(field, frame), frame).comps  # [a, b, ...]
    comm = hess - hess.transpose(1, 0, *range(2, hess.ndim))
    if field.sig == "":
        return comm
    if field.sig == "S":
        return comm - contract("cdab,d->abc", frame.riemann, field.comps)
    if field.sig == "s":
        return comm + contract("dcab,d->abc", frame.riemann, field.comps)
    raise ValueError(f"unsupported signature {field.sig!r}")
