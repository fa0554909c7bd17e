"""Surface loading, the identity suite over grids, field export and reports."""

from __future__ import annotations

import csv
import json
import math
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, cms, geometry, jets, kinematics
from .expr import eval_jet, free_names, parse
from .geometry import SurfaceSpec, SurfaceSpecError, builtin_surface
from .grid import GridSpec, chart_nodes
from .residuals import Residual, residual

REPORT_FORMAT = "cmslab-report/1"
FIELDS_FORMAT = "cmslab-fields/1"
AMBIENT_KINDS = ("cartesian", "cylindrical", "spherical")
DEFAULT_TOLERANCES = {"first": 1e-10, "third": 1e-8}


# -- number formatting --------------------------------------------------------

def fmt(x):
    """17 significant digits; round-trips every finite double."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def to_json(obj, indent=1, _level=0):
    """JSON text with every float written via :func:`fmt`."""
    pad = " " * (indent * (_level + 1)) if indent else ""
    end = " " * (indent * _level) if indent else ""
    nl = "\n" if indent else ""
    sep = "," + nl
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{" + nl + sep.join(items) + nl + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        return "[" + nl + sep.join(pad + to_json(v, indent, _level + 1) for v in obj) + nl + end + "]"
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        s = fmt(obj)
        return json.dumps(s) if s in ("NaN", "Infinity", "-Infinity") else s
    if obj is None:
        return "null"
    return json.dumps(str(obj))


# -- surfaces -------------------------------------------------------------------

def load_surface(source, params=None, probe_nodes=16, seed=0):
    """Load ``builtin:NAME`` (params are expression strings) or a JSON surface document.

    For documents, ``params`` override the document's numeric parameters.
    The chart is probed for regularity at ``probe_nodes`` random interior nodes.
    """
    params = dict(params or {})
    if source.startswith("builtin:"):
        spec = builtin_surface(source.split(":", 1)[1], **params)
    else:
        path = Path(source)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise SurfaceSpecError(f"cannot read {path}: {exc.strerror}", "surface") from exc
        except json.JSONDecodeError as exc:
            raise SurfaceSpecError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                                   "surface") from exc
        spec = surface_from_document(doc, params)
    probe_regularity(spec, probe_nodes, seed)
    return spec


def surface_from_document(doc, overrides=None):
    if not isinstance(doc, dict):
        raise SurfaceSpecError("surface document must be an object", "surface")
    missing = [k for k in ("x", "y", "z", "u", "v") if k not in doc]
    if missing:
        raise SurfaceSpecError("missing required field", missing[0])
    unknown = set(doc) - {"name", "x", "y", "z", "u", "v", "params"}
    if unknown:
        raise SurfaceSpecError("unknown field", sorted(unknown)[0])
    params = doc.get("params") or {}
    if not isinstance(params, dict):
        raise SurfaceSpecError("expected an object of numbers", "params")
    params = dict(params)
    for k, val in (overrides or {}).items():
        try:
            params[k] = float(val)
        except (TypeError, ValueError) as exc:
            raise SurfaceSpecError(f"override {k}={val!r} is not a number", "params") from exc
    return SurfaceSpec.from_text(str(doc.get("name", "surface")), doc["x"], doc["y"], doc["z"], doc["u"], doc["v"],
                                 params)


def probe_regularity(spec, n=16, seed=0, pole_offset=1e-3):
    rng = np.random.default_rng(seed)

    def draw(r, periodic):
        lo, hi = r
        if not periodic:
            lo, hi = lo + pole_offset, hi - pole_offset
        return rng.uniform(lo, hi, n)

    u, v = draw(spec.u_range, spec.u_periodic), draw(spec.v_range, spec.v_periodic)
    geometry.sample_frame(spec, u, v, np.zeros(n), order=2)


def is_static(spec):
    return all("t" not in free_names(e)[0] for e in (spec.x, spec.y, spec.z))


# -- random test fields -----------------------------------------------------------

def random_scalar_text(rng, terms=3):
    """Trigonometric polynomial in the ambient point (x, y, z) and t.

    Written in ambient coordinates so the field stays smooth where the chart
    is singular (a (u, v) polynomial is not smooth at a sphere's poles).
    """
    parts = []
    for _ in range(terms):
        a = rng.uniform(0.2, 1.0)
        kx, ky, kz, kt = (int(k) for k in rng.integers(-2, 3, size=4))
        phase = rng.uniform(0.0, 2 * math.pi)
        fn = "sin" if rng.random() < 0.5 else "cos"
        parts.append(f"{a:.6f}*{fn}({kx}*x+{ky}*y+{kz}*z+{kt}*t+{phase:.6f})")
    return "+".join(parts).replace("+-", "-")


@dataclass(frozen=True)
class SuiteFields:
    """Random fields used by the commutator and second-order checks (expression text).

    Vectors are ambient fields; the checks use their tangential projections.
    """

    scalars: tuple
    second_order: tuple
    vectors: tuple

    @classmethod
    def generate(cls, seed=0, n_scalar=3, n_second=20, n_vector=2):
        rng = np.random.default_rng(seed)
        return cls(
            tuple(random_scalar_text(rng) for _ in range(n_scalar)),
            tuple(random_scalar_text(rng) for _ in range(n_second)),
            tuple(tuple(random_scalar_text(rng) for _ in range(3)) for _ in range(n_vector)),
        )

    def to_document(self):
        return {"scalars": list(self.scalars), "second_order": list(self.second_order),
                "vectors": [list(p) for p in self.vectors]}


# -- the suite ----------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    check: str
    description: str
    anchor: str
    t: float
    max_abs: float
    rms: float
    node_of_max: tuple          # (iu, iv, u, v)
    tolerance: float
    passed: bool
    gating: bool = True
    max_component: float = 0.0
    tol_class: str = "first"

    def to_document(self):
        iu, iv, u, v = self.node_of_max
        return {
            "check": self.check, "description": self.description, "anchor": self.anchor, "t": self.t,
            "max_abs": self.max_abs, "rms": self.rms,
            "node_of_max": {"iu": iu, "iv": iv, "u": u, "v": v},
            "tolerance": self.tolerance, "tol_class": self.tol_class, "pass": self.passed,
            "gating": self.gating, "max_component": self.max_component,
        }


def tolerance_table(tol_first=1e-10, tol_third=1e-8):
    return {"first": tol_first, "third": tol_third}


def _stack_rows(check, description, anchor, rows, tol_class):
    """Merge residuals of several random fields into one row (norm taken over all of them)."""
    values = np.stack([r.values for r in rows])
    metrics = None if rows[0].metrics is None else (None,) + rows[0].metrics
    return Residual(check, description, anchor, values, tol_class, True, metrics)


def evaluate_checks(spec, u, v, t, order=3, fields: SuiteFields | None = None, ambients=AMBIENT_KINDS):
    """Every identity residual at the given nodes (one time value or an array)."""
    fields = fields or SuiteFields.generate()
    t = np.broadcast_to(np.asarray(t, dtype=float), np.shape(u))
    frame = geometry.sample_frame(spec, u, v, t, order)
    sample = cms.cms_sample(frame)
    at = (frame.u, frame.v, frame.t)
    env = dict(zip("xyz", frame.R))

    def ev(text):
        return eval_jet(parse(text), at, None, order, env)

    scalars = [ev(s) for s in fields.scalars]
    ambient_vectors = [jets.stack([ev(c) for c in w]) for w in fields.vectors]

    rows = cms.static_geometry_checks(frame)
    rc = "Riemann commutation"
    rows.append(_stack_rows("frame.commutator_scalar", "(grad_a grad_b - grad_b grad_a) psi", rc,
                            [residual("", "", "", geometry.riemann_commutator_check(frame, geometry.TensorField(s, "")),
                                      sig="ss", frame=frame) for s in scalars], "first"))
    for cov, tag in ((False, "vector"), (True, "covector")):
        sig = "s" if cov else "S"
        vectors = [jets.contract("ai,i->a", frame.basis if cov else frame.dual, w) for w in ambient_vectors]
        desc = ("(grad_a grad_b - grad_b grad_a) psi_c + R^d_cab psi_d" if cov
                else "(grad_a grad_b - grad_b grad_a) psi^c - R^c_dab psi^d")
        rows.append(_stack_rows(f"frame.commutator_{tag}", desc, rc, [
            residual("", "", "", geometry.riemann_commutator_check(frame, geometry.TensorField(w, sig)),
                     sig="ss" + sig, frame=frame) for w in vectors], "third"))

    rows += cms.metric_dot_two_ways(sample, frame)
    rows += cms.temporal_curvature_checks(frame, sample)
    rows += cms.frame_commutation_projections(frame, sample)
    rows += cms.frame_derivative_table_check(frame, sample)

    rows.append(_stack_rows("cms.semi_commutation", "(nabla-dot grad_a - grad_a nabla-dot - C B^b_a grad_b) psi",
                            "spatiotemporal semi-commutation",
                            [residual("", "", "", cms.semi_commutation_scalar(s, frame, sample), sig="s", frame=frame)
                             for s in scalars], "third"))
    second = []
    for text in fields.second_order:
        f2, it = cms.second_order_scalar(ev(text), frame, sample)
        second.append(residual("", "", "", f2 - it))
    rows.append(_stack_rows("cms.second_order", "closed-form second invariant time derivative minus iterated operator",
                            "second invariant time derivative", second, "third"))
    for cov, tag in ((False, "vector"), (True, "covector")):
        sig = "ss" if cov else "sS"
        vectors = [jets.contract("ai,i->a", frame.basis if cov else frame.dual, w) for w in ambient_vectors]
        desc = ("(nabla-dot grad_a - grad_a nabla-dot - C B^g_a grad_g) psi_b + Rdot^g_ab psi_g" if cov
                else "(nabla-dot grad_a - grad_a nabla-dot - C B^g_a grad_g) psi^b - Rdot^b_ag psi^g")
        rows.append(_stack_rows(f"cms.commutator_{tag}", desc, "temporal curvature commutator", [
            residual("", "", "", cms.commutator_vector_check(w, frame, sample, cov), sig=sig, frame=frame)
            for w in vectors], "third"))

    kin_rows = kinematics.tri_velocity_check(frame, sample)
    for kind in ambients:
        amb = geometry.ambient_frame(frame, kind)
        if kind != "cartesian":
            rows += cms.frame_derivative_table_check(frame, sample, amb, surface_rows=False)
        rows.append(residual(f"cms.ambient_temporal_curvature.{kind}",
                             "d_t(Z^j_a Gamma^i_jk) - grad_a(V^j Gamma^i_jk)  (flat ambient)",
                             "ambient temporal curvature tensor", cms.ambient_temporal_curvature(frame, sample, amb),
                             "third", sig="sAa", frame=frame, ambient=amb))
        # ambient components of the first ambient vector field
        psi3 = jets.contract("kj,j->k", amb.metric_inv, jets.contract("jc,c->j", amb.basis, ambient_vectors[0]))
        rows.append(residual(f"cms.ambient_commutator.{kind}",
                             "(nabla-dot grad_a - grad_a nabla-dot - C B^b_a grad_b) psi^i - Rdot^i_ak psi^k",
                             "ambient temporal curvature tensor", cms.ambient_commutator_check(psi3, frame, sample, amb),
                             "third", sig="sA", frame=frame, ambient=amb))
        kin = kinematics.accelerations(frame, sample, amb if kind != "cartesian" else None)
        new = kinematics.tri_acceleration_check(kin, frame, sample)
        if kind == "cartesian":
            kin_rows += new + kinematics.commutator_properties(frame)
        else:
            kin_rows += [r for r in new if r.check.endswith("." + kind)]
            kin_rows += [r for r in kinematics.commutator_properties(frame, amb) if r.check.endswith("." + kind)]
    rows += kin_rows

    if is_static(spec):
        anchor = "static surfaces"
        for name, val, sig in (("normal_speed", sample.normal_speed, None), ("speed", sample.speed, "S"),
                               ("christoffel_dot", sample.christoffel_dot, "Ss"), ("metric_dot", sample.metric_dot, "ss"),
                               ("temporal_curvature", sample.temporal_curvature, "Sss")):
            rows.append(residual(f"static.{name}", f"{name} on a static surface", anchor, val, "first",
                                 sig=sig, frame=frame))
    return rows


def _concat(parts):
    """Join per-chunk residual lists along the node axis."""
    out = []
    for group in zip(*parts):
        r0 = group[0]
        values = np.concatenate([r.values for r in group], axis=-1)
        metrics = None
        if r0.metrics is not None:
            metrics = tuple(None if m is None else np.concatenate([r.metrics[i] for r in group], axis=-1)
                            for i, m in enumerate(r0.metrics))
        out.append(Residual(r0.check, r0.description, r0.anchor, values, r0.tol_class, r0.gating, metrics))
    return out


def _report(r: Residual, t, tol, u, v, index, shape):
    node = r.per_node()
    # NaN counts as the worst node
    k = int(np.argmax(np.where(np.isnan(node), np.inf, node)))
    mx = float(node[k])
    rms = float(np.sqrt(np.mean(node * node)))
    iu, iv = np.unravel_index(int(index[k]), shape)
    return ResidualReport(
        r.check, r.description, r.anchor, float(t), mx, rms, (int(iu), int(iv), float(u[k]), float(v[k])),
        tol, bool(mx <= tol), r.gating, float(r.per_node_components().max()), r.tol_class,
    )


@dataclass(frozen=True)
class SuiteResult:
    spec: SurfaceSpec
    grid: GridSpec
    order: int
    tolerances: dict
    fields: SuiteFields
    rows: tuple
    errors: tuple = ()

    @property
    def passed(self):
        return not self.errors and all(r.passed for r in self.rows if r.gating)

    def failures(self):
        return [r for r in self.rows if r.gating and not r.passed]


def run_suite(spec, grid: GridSpec | None = None, tolerances=None, order=3, workers=1, seed=0,
              ambients=AMBIENT_KINDS, chunk=1024):
    """Evaluate every identity over the grid at each time slice.

    Nodes are processed in fixed chunks (threads when ``workers > 1``); the
    chunking never depends on the worker count, so results are identical.
    A chunk that raises is bisected down to the failing nodes, which are
    recorded in ``errors`` and left out of the rows.
    """
    grid = grid or GridSpec()
    tol = tolerance_table(**(tolerances or {}))
    fields = SuiteFields.generate(seed)
    u, v, _, _ = chart_nodes(spec, grid)
    slices = [slice(i, min(i + chunk, u.size)) for i in range(0, u.size, chunk)]
    rows, errors = [], []
    for t in grid.times:

        def job(sl, t=t):
            try:
                part = evaluate_checks(spec, u[sl], v[sl], np.full(sl.stop - sl.start, t), order, fields, ambients)
                return [(sl, part)], []
            except (ArithmeticError, ValueError) as exc:
                if sl.stop - sl.start == 1:
                    iu, iv = np.unravel_index(sl.start, grid.shape)
                    return [], [f"t={fmt(t)} node ({iu}, {iv}) u={fmt(u[sl.start])} v={fmt(v[sl.start])}: {exc}"]
                mid = (sl.start + sl.stop) // 2
                a, ea = job(slice(sl.start, mid))
                b, eb = job(slice(mid, sl.stop))
                return a + b, ea + eb

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                done = list(pool.map(job, slices))
        else:
            done = [job(sl) for sl in slices]
        ok = [p for parts, _ in done for p in parts]
        errors += [e for _, errs in done for e in errs]
        if not ok:
            continue
        index = np.concatenate([np.arange(sl.start, sl.stop) for sl, _ in ok])
        for r in _concat([p for _, p in ok]):
            rows.append(_report(r, t, tol[r.tol_class], u[index], v[index], index, grid.shape))
    return SuiteResult(spec, grid, order, tol, fields, tuple(rows), tuple(errors))


def environment_stamp():
    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "jet_backend": jets.BACKEND,
        "machine": platform.machine(),
        "system": platform.system(),
    }


def suite_document(result: SuiteResult):
    return {
        "format": REPORT_FORMAT,
        "surface": result.spec.to_document(),
        "grid": {"nu": result.grid.nu, "nv": result.grid.nv, "pole_offset": result.grid.pole_offset,
                 "times": list(result.grid.times)},
        "order": result.order,
        "tolerances": result.tolerances,
        "fields": result.fields.to_document(),
        "rows": [r.to_document() for r in result.rows],
        "errors": list(result.errors),
        "pass": result.passed,
        "environment": environment_stamp(),
    }


def render_table(result: SuiteResult):
    head = f"{'check':44s} {'t':>6s} {'max':>10s} {'rms':>10s} {'tol':>8s}  result"
    lines = [f"surface: {result.spec.name}   grid {result.grid.nu}x{result.grid.nv}   order {result.order}", head,
             "-" * len(head)]
    for r in result.rows:
        verdict = ("pass" if r.passed else "FAIL") if r.gating else "info"
        lines.append(f"{r.check:44s} {r.t:6.3g} {r.max_abs:10.3e} {r.rms:10.3e} {r.tolerance:8.1e}  {verdict}")
    for e in result.errors:
        lines.append(f"error: {e}")
    n_fail = len(result.failures())
    lines.append(f"{len(result.rows)} rows, {n_fail} failing, overall {'PASS' if result.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


# -- field export ---------------------------------------------------------------------

@dataclass(frozen=True)
class FieldExport:
    name: str
    signature: str
    grid_shape: tuple
    components: tuple           # component labels
    values: np.ndarray          # (nodes, components)
    u: np.ndarray
    v: np.ndarray
    xyz: np.ndarray             # (nodes, 3)

    def __post_init__(self):
        n = self.grid_shape[0] * self.grid_shape[1]
        if self.values.shape != (n, len(self.components)):
            raise ValueError(f"{self.name}: expected {(n, len(self.components))} values, got {self.values.shape}")


_SLOT_LABELS = {"S": ("u", "v"), "s": ("u", "v"), "c": ("x", "y", "z"), "A": ("1", "2", "3"), "a": ("1", "2", "3")}

QUANTITIES = {
    # name: (group, signature, extractor(frame, sample, kin, energy) -> jet or array)
    "position": ("frame", "c", lambda f, s, k: f.R),
    "basis": ("frame", "sc", lambda f, s, k: f.basis),
    "dual_basis": ("frame", "Sc", lambda f, s, k: f.dual),
    "normal": ("frame", "c", lambda f, s, k: f.normal),
    "metric": ("frame", "ss", lambda f, s, k: f.metric),
    "metric_inverse": ("frame", "SS", lambda f, s, k: f.metric_inv),
    "area_element": ("frame", "", lambda f, s, k: f.sqrt_det),
    "curvature": ("frame", "ss", lambda f, s, k: f.curv),
    "curvature_mixed": ("frame", "Ss", lambda f, s, k: f.curv_mixed),
    "mean_curvature_trace": ("frame", "", lambda f, s, k: f.curv_mixed[0, 0] + f.curv_mixed[1, 1]),
    "christoffel": ("frame", "Sss", lambda f, s, k: f.christoffel),
    "riemann": ("frame", "Ssss", lambda f, s, k: f.riemann),
    "velocity": ("cms", "c", lambda f, s, k: s.velocity),
    "normal_speed": ("cms", "", lambda f, s, k: s.normal_speed),
    "surface_speed": ("cms", "S", lambda f, s, k: s.speed),
    "christoffel_dot": ("cms", "Ss", lambda f, s, k: s.christoffel_dot),
    "metric_dot": ("cms", "ss", lambda f, s, k: s.metric_dot),
    "temporal_curvature": ("temporal_curvature", "Sss", lambda f, s, k: s.temporal_curvature),
    "temporal_curvature_reduced": ("temporal_curvature", "Sss", lambda f, s, k: cms.temporal_curvature_reduced(f, s)),
    "temporal_curvature_trace": ("temporal_curvature", "s", lambda f, s, k: s.trace),
    "scalar_temporal_differential": ("temporal_curvature", "", lambda f, s, k: s.scalar_differential),
    "acceleration": ("accelerations", "c", lambda f, s, k: k.acceleration),
    "ambient_acceleration": ("accelerations", "c", lambda f, s, k: k.ambient_acceleration),
    "surface_acceleration": ("accelerations", "S", lambda f, s, k: k.surface_acceleration),
    "normal_acceleration": ("accelerations", "", lambda f, s, k: k.normal_acceleration),
    "unrepresented_acceleration": ("accelerations", "c", lambda f, s, k: k.unrepresented),
    "kinetic_density": ("energy", "", lambda f, s, k: _kinetic_density(f, s)),
    "kinetic_rate_density": ("energy", "", lambda f, s, k: _rate_density(f, s, k)),
}
GROUPS = tuple(dict.fromkeys(g for g, _, _ in QUANTITIES.values()))


def _kinetic_density(f, s):
    V = s.velocity.value
    return 0.5 * np.einsum("ib,ib->b", V, V) * f.sqrt_det.value


def _rate_density(f, s, k):
    return kinematics._rate_integrand(f, s, k) * f.sqrt_det.value


def expand_quantities(names):
    """Quantity names, groups (``group:NAME``, or a bare group name that is not itself a quantity)."""
    out = []
    for n in names:
        group = n[6:] if n.startswith("group:") else (n if n not in QUANTITIES else None)
        if group in GROUPS:
            out += [q for q, (g, _, _) in QUANTITIES.items() if g == group]
        elif n in QUANTITIES:
            out.append(n)
        else:
            raise KeyError(f"unknown quantity {n!r}; choose from groups {', '.join(GROUPS)} or {', '.join(QUANTITIES)}")
    return list(dict.fromkeys(out))


def component_labels(sig):
    labels = [""]
    for k in sig:
        labels = [f"{a}{b}" for a in labels for b in _SLOT_LABELS[k]]
    return tuple(labels) if sig else ("value",)


def sample_fields(spec, grid: GridSpec, t, quantities, order=3):
    names = expand_quantities(quantities)
    u, v, _, _ = chart_nodes(spec, grid)
    frame = geometry.sample_frame(spec, u, v, np.full(u.size, float(t)), order)
    sample = cms.cms_sample(frame)
    kin = kinematics.accelerations(frame, sample)
    xyz = frame.R.value.T.copy()
    out = []
    for name in names:
        _, sig, get = QUANTITIES[name]
        val = get(frame, sample, kin)
        if val is None:
            raise ValueError(f"{name} needs jet order >= 3")
        arr = np.asarray(val.value if isinstance(val, jets.Jet) else val, dtype=float)
        arr = arr.reshape(-1, arr.shape[-1]).T.copy()
        out.append(FieldExport(name, sig, grid.shape, component_labels(sig), arr, u, v, xyz))
    return out


def export_fields(spec, grid: GridSpec, t, quantities, fmt_name="csv", out_dir=".", order=3):
    """Write one file per quantity; returns the written paths."""
    if fmt_name not in ("csv", "structured"):
        raise ValueError(f"unknown format {fmt_name!r}; expected csv or structured")
    exports = sample_fields(spec, grid, t, quantities, order)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ex in exports:
        path = out_dir / (ex.name + (".csv" if fmt_name == "csv" else ".json"))
        if fmt_name == "csv":
            write_csv(ex, path, t)
        else:
            path.write_text(to_json(field_document(ex, spec, t)) + "\n")
        paths.append(path)
    return paths


def write_csv(ex: FieldExport, path, t):
    nv = ex.grid_shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iu", "iv", "u", "v", "t", "x", "y", "z", *ex.components])
        for k in range(ex.values.shape[0]):
            w.writerow([k // nv, k % nv, fmt(ex.u[k]), fmt(ex.v[k]), fmt(t), *(fmt(c) for c in ex.xyz[k]),
                        *(fmt(c) for c in ex.values[k])])


def field_document(ex: FieldExport, spec, t):
    return {
        "format": FIELDS_FORMAT,
        "quantity": ex.name,
        "signature": ex.signature,
        "surface": spec.name,
        "t": float(t),
        "grid_shape": list(ex.grid_shape),
        "components": list(ex.components),
        "nodes": {"u": ex.u.tolist(), "v": ex.v.tolist(), "x": ex.xyz[:, 0].tolist(), "y": ex.xyz[:, 1].tolist(),
                  "z": ex.xyz[:, 2].tolist()},
        "values": ex.values.tolist(),
    }


def energy_document(rep: kinematics.EnergyReport, spec, grid, alpha_text):
    return {
        "format": "cmslab-energy/1",
        "surface": spec.to_document(),
        "grid": {"nu": grid.nu, "nv": grid.nv, "pole_offset": grid.pole_offset},
        "t": rep.t,
        "density": rep.density,
        "alpha": list(alpha_text) if alpha_text else None,
        "kinetic_energy": rep.kinetic,
        "rate_formula": rep.rate_formula,
        "rate_numeric": rep.rate_numeric,
        "power": rep.power,
        "residual_integral": rep.residual_integral,
        "bookkeeping_formula": rep.bookkeeping_formula,
        "bookkeeping_numeric": rep.bookkeeping_numeric,
        "excluded_nodes": rep.excluded_nodes,
        "residual_field": rep.residual_field.ravel().tolist(),
        "environment": environment_stamp(),
    }


def default_workers():
    return max(1, min(8, os.cpu_count() or 1))
