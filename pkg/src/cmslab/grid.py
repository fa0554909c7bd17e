"""Chart grids and tensor-product quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_POLE_OFFSET = 1e-3
DEFAULT_TIMES = (0.0, 0.25, 0.5)


@dataclass(frozen=True)
class GridSpec:
    nu: int = 64
    nv: int = 64
    pole_offset: float = DEFAULT_POLE_OFFSET
    times: tuple = field(default=DEFAULT_TIMES)

    def __post_init__(self):
        if self.nu < 4 or self.nv < 4:
            raise ValueError(f"grid needs at least 4x4 nodes, got {self.nu}x{self.nv}")
        if not (math.isfinite(self.pole_offset) and self.pole_offset >= 0):
            raise ValueError(f"pole offset must be finite and non-negative, got {self.pole_offset}")
        times = tuple(float(t) for t in self.times)
        if not times or not all(math.isfinite(t) for t in times):
            raise ValueError("times must be a non-empty sequence of finite numbers")
        object.__setattr__(self, "times", times)

    @property
    def shape(self):
        return (self.nu, self.nv)


def axis_nodes(lo, hi, n, periodic, pole_offset=DEFAULT_POLE_OFFSET):
    """Periodic axes drop the repeated endpoint; clamped axes are pulled in by ``pole_offset``."""
    if periodic:
        return lo + (hi - lo) * np.arange(n) / n
    a, b = lo + pole_offset, hi - pole_offset
    if not b > a:
        raise ValueError(f"pole offset {pole_offset} leaves an empty range [{lo}, {hi}]")
    return np.linspace(a, b, n)


def chart_nodes(spec, grid: GridSpec):
    """Flattened node arrays ``(u, v)`` in C order over (iu, iv) plus the two axes."""
    ua = axis_nodes(*spec.u_range, grid.nu, spec.u_periodic, grid.pole_offset)
    va = axis_nodes(*spec.v_range, grid.nv, spec.v_periodic, grid.pole_offset)
    U, V = np.meshgrid(ua, va, indexing="ij")
    return U.ravel(), V.ravel(), ua, va


@lru_cache(maxsize=None)
def _gregory_end_corrections(m=6):
    """End weights that make the trapezoid rule exact for polynomials of degree < m."""
    bern = {2: 1.0 / 6.0, 4: -1.0 / 30.0, 6: 1.0 / 42.0, 8: -1.0 / 30.0}
    target = np.array([bern[p + 1] / (p + 1) if p % 2 else 0.0 for p in range(m)])
    A = np.array([[float(j) ** p if (j or p) else 1.0 for j in range(m)] for p in range(m)])
    return np.linalg.solve(A, target)


def axis_weights(lo, hi, n, periodic, pole_offset=DEFAULT_POLE_OFFSET, rule="gregory"):
    """Quadrature weights over the sampled interval.

    Periodic axes use the plain periodic trapezoid rule.  Clamped axes use
    the composite trapezoid rule, by default with Gregory end corrections
    through fifth differences (``rule="trapezoid"`` disables them; they are
    also skipped below 12 nodes).
    """
    if periodic:
        return np.full(n, (hi - lo) / n)
    a, b = lo + pole_offset, hi - pole_offset
    h = (b - a) / (n - 1)
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    if rule == "gregory" and n >= 12:
        c = _gregory_end_corrections()
        w[: c.size] += c
        w[-c.size :] += c[::-1]
    elif rule not in ("gregory", "trapezoid"):
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return h * w


def integrate(values, spec, grid: GridSpec, rule="gregory"):
    """Tensor-product quadrature of per-node values (flattened C order over (iu, iv))."""
    wu = axis_weights(*spec.u_range, grid.nu, spec.u_periodic, grid.pole_offset, rule)
    wv = axis_weights(*spec.v_range, grid.nv, spec.v_periodic, grid.pole_offset, rule)
    f = np.asarray(values, dtype=float).reshape(grid.nu, grid.nv)
    return float(np.sum(wu[:, None] * wv[None, :] * f))
