"""Per-node residual records shared by the check operations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import Jet

TOL_CLASSES = ("first", "third")


@dataclass(frozen=True)
class Residual:
    """Residual of one identity at a batch of nodes.

    ``values`` carries component axes first and the node batch last.
    ``metrics`` holds, per component slot, the matrix (layout [i, j, node])
    that pairs the slot with itself, or ``None`` for an orthonormal slot.
    The per-node magnitude is then the coordinate-invariant norm
    ``sqrt(T . T)``; without metrics it is the largest absolute component.

    ``tol_class`` picks the tolerance: ``first`` for identities built from
    first/second derivatives, ``third`` when third derivatives enter.
    Rows with ``gating=False`` are reported but never fail a run.
    """

    check: str
    description: str
    anchor: str
    values: np.ndarray
    tol_class: str = "first"
    gating: bool = True
    metrics: tuple | None = None

    def per_node_components(self):
        v = np.abs(np.asarray(self.values, dtype=float))
        if v.ndim == 1:
            return v
        return v.reshape(-1, v.shape[-1]).max(axis=0)

    def per_node(self):
        if not self.metrics:
            return self.per_node_components()
        T = np.asarray(self.values, dtype=float)
        W = T
        for p, M in enumerate(self.metrics):
            if M is None:
                continue
            Wm = np.moveaxis(W, p, 0)
            Wm = np.einsum("ijb,j...b->i...b", M, Wm)
            W = np.moveaxis(Wm, 0, p)
        sq = (T * W).reshape(-1, T.shape[-1]).sum(axis=0)
        return np.sqrt(np.abs(sq))


def slot_metrics(sig, frame=None, ambient=None):
    """Metric pairing for each slot letter of an index signature."""
    out = []
    for k in sig:
        if k == "S":
            out.append(frame.metric.value)
        elif k == "s":
            out.append(frame.metric_inv.value)
        elif k in "Aa" and ambient is not None and not ambient.flat:
            out.append((ambient.metric if k == "A" else ambient.metric_inv).value)
        else:
            out.append(None)
    return tuple(out)


def residual(check, description, anchor, value, tol_class="first", gating=True, sig=None, frame=None, ambient=None):
    if tol_class not in TOL_CLASSES:
        raise ValueError(f"unknown tolerance class {tol_class!r}")
    if isinstance(value, Jet):
        value = value.value
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        value = value[None]
    metrics = None
    if sig:
        if value.ndim != len(sig) + 1:
            raise ValueError(f"{check}: signature {sig!r} does not match residual shape {value.shape}")
        metrics = slot_metrics(sig, frame, ambient)
    return Residual(check, description, anchor, value, tol_class, gating, metrics)
