"""Truncated Taylor-series (jet) arithmetic in the chart variables (u, v, t).

A :class:`Jet` stores the Taylor coefficients of a smooth quantity about an
expansion point, densely, for every multi-index of total degree up to the jet
order ``K``.  Coefficients live on the leading axis; any trailing axes are
value axes (tensor components and/or a batch of grid nodes), so one Jet can
carry a whole field sampled on a grid.

The only hot loop is the truncated product.  It is delegated to the compiled
``_jetcore`` extension when available and to a numpy fallback otherwise;
``CMSLAB_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import math
import os
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import _jetcore_py

if os.environ.get("CMSLAB_BACKEND", "").lower() == "python":
    _kernel = _jetcore_py
    BACKEND = "python"
else:
    try:
        from . import _jetcore as _kernel  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _kernel = _jetcore_py
        BACKEND = "python"

VARIABLES = ("u", "v", "t")
DEFAULT_ORDER = 3


class JetDomainError(ValueError):
    """Elementary function or division evaluated outside its domain.

    ``where`` holds the flat indices of the offending value entries.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = np.asarray([] if where is None else where, dtype=int)


class MultiIndex(NamedTuple):
    iu: int
    iv: int
    it: int

    @property
    def degree(self) -> int:
        return self.iu + self.iv + self.it


def n_coeffs(order: int) -> int:
    return math.comb(order + 3, 3)


class _Tables:
    """Index bookkeeping for one jet order (graded ordering, degree-major)."""

    def __init__(self, order: int):
        self.order = order
        index = []
        for d in range(order + 1):
            for iu in range(d, -1, -1):
                for iv in range(d - iu, -1, -1):
                    index.append(MultiIndex(iu, iv, d - iu - iv))
        self.index = index
        self.lookup = {m: k for k, m in enumerate(index)}
        self.n = len(index)
        self.scale = np.array(
            [math.factorial(m.iu) * math.factorial(m.iv) * math.factorial(m.it) for m in index],
            dtype=float,
        )

        triples = []
        for i, mi in enumerate(index):
            for j, mj in enumerate(index):
                if mi.degree + mj.degree <= order:
                    k = self.lookup[MultiIndex(mi.iu + mj.iu, mi.iv + mj.iv, mi.it + mj.it)]
                    triples.append((k, i, j))
        triples.sort()
        tri = np.array(triples, dtype=np.intc)
        self.ko = np.ascontiguousarray(tri[:, 0])
        self.ia = np.ascontiguousarray(tri[:, 1])
        self.ib = np.ascontiguousarray(tri[:, 2])

        # d/d(var): coefficient of m in the (order-1) result is (m_var+1) c[m+e_var]
        self.deriv = {}
        if order > 0:
            lower = tables(order - 1)
            for axis, name in enumerate(VARIABLES):
                src, fac = [], []
                for m in lower.index:
                    bumped = list(m)
                    bumped[axis] += 1
                    src.append(self.lookup[MultiIndex(*bumped)])
                    fac.append(m[axis] + 1)
                self.deriv[name] = (np.array(src), np.array(fac, dtype=float))


@lru_cache(maxsize=None)
def tables(order: int) -> _Tables:
    if order < 0:
        raise ValueError(f"jet order must be non-negative, got {order}")
    return _Tables(order)


def _expand(c, ndim):
    """Reshape a per-coefficient vector so it broadcasts against ``c[..., value axes]``."""
    return c.reshape(c.shape + (1,) * ndim)


class Jet:
    """Immutable truncated Taylor expansion in (u, v, t).

    ``coeffs[k]`` is the Taylor coefficient of multi-index ``tables(order).index[k]``;
    the trailing axes of ``coeffs`` are value axes.
    """

    __slots__ = ("order", "coeffs")
    __array_priority__ = 1000

    def __init__(self, coeffs, order):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != n_coeffs(order):
            raise ValueError(
                f"order {order} jet needs {n_coeffs(order)} coefficients, got {coeffs.shape[0]}"
            )
        coeffs.flags.writeable = False
        self.order = order
        self.coeffs = coeffs

    # -- construction -----------------------------------------------------
    @classmethod
    def const(cls, x, order=DEFAULT_ORDER):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("jet constant must be finite")
        c = np.zeros((n_coeffs(order),) + x.shape)
        c[0] = x
        return cls(c, order)

    @classmethod
    def variable(cls, which, point, order=DEFAULT_ORDER):
        if which not in VARIABLES:
            raise ValueError(f"unknown jet variable {which!r}; expected one of {VARIABLES}")
        if order < 1:
            raise ValueError("a variable seed needs jet order >= 1")
        point = np.asarray(point, dtype=float)
        if not np.all(np.isfinite(point)):
            raise ValueError("jet seed point must be finite")
        c = np.zeros((n_coeffs(order),) + point.shape)
        c[0] = point
        e = [0, 0, 0]
        e[VARIABLES.index(which)] = 1
        c[tables(order).lookup[MultiIndex(*e)]] = 1.0
        return cls(c, order)

    @classmethod
    def zeros(cls, shape=(), order=DEFAULT_ORDER):
        return cls(np.zeros((n_coeffs(order),) + tuple(shape)), order)

    # -- inspection -------------------------------------------------------
    @property
    def value(self):
        return self.coeffs[0]

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    @property
    def ndim(self):
        return self.coeffs.ndim - 1

    def coeff(self, m):
        m = MultiIndex(*m)
        if m.degree > self.order:
            raise ValueError(f"multi-index {tuple(m)} exceeds jet order {self.order}")
        return self.coeffs[tables(self.order).lookup[m]]

    def partial(self, m):
        """True partial derivative value ``d^|m| / du^iu dv^iv dt^it``."""
        m = MultiIndex(*m)
        return self.coeff(m) * (math.factorial(m.iu) * math.factorial(m.iv) * math.factorial(m.it))

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape})"

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.coeffs[(slice(None),) + idx], self.order)

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    # -- structural -------------------------------------------------------
    def truncate(self, order):
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[: n_coeffs(order)], order)

    def d(self, var):
        """Partial derivative with respect to one chart variable; order drops by one."""
        if self.order == 0:
            raise ValueError(f"cannot differentiate an order-0 jet with respect to {var}")
        src, fac = tables(self.order).deriv[var]
        return Jet(self.coeffs[src] * _expand(fac, self.ndim), self.order - 1)

    def grad(self):
        """Stack ``(d/du, d/dv)`` along a new leading value axis."""
        return stack([self.d("u"), self.d("v")])

    def sum(self, axis):
        axis = tuple(a + 1 for a in np.atleast_1d(axis))
        return Jet(self.coeffs.sum(axis=axis), self.order)

    def transpose(self, *axes):
        return Jet(self.coeffs.transpose((0,) + tuple(a + 1 for a in axes)), self.order)

    def reshape(self, *shape):
        return Jet(self.coeffs.reshape((self.coeffs.shape[0],) + tuple(shape)), self.order)

    # -- arithmetic -------------------------------------------------------
    def __neg__(self):
        return Jet(-self.coeffs, self.order)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = _common(self, other)
            nd = max(a.ndim, b.ndim)
            return Jet(_lifted(a.coeffs, nd) + _lifted(b.coeffs, nd), a.order)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.broadcast_to(_lifted(self.coeffs, len(shape)), self.coeffs.shape[:1] + shape).copy()
        c[0] += other
        return Jet(c, self.order)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return _mul(self, other)
        other = np.asarray(other, dtype=float)
        nd = max(self.ndim, other.ndim)
        return Jet(_lifted(self.coeffs, nd) * other, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return _mul(self, reciprocal(other))
        other = np.asarray(other, dtype=float)
        if np.any(other == 0):
            raise JetDomainError("division by zero", np.flatnonzero(np.broadcast_to(other == 0, self.shape)))
        return Jet(_lifted(self.coeffs, max(self.ndim, other.ndim)) / other, self.order)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        return power(self, p)


def _common(a, b):
    k = min(a.order, b.order)
    return a.truncate(k), b.truncate(k)


def _lifted(c, ndim):
    """Coefficient array with value axes left-padded to ``ndim`` (numpy-style broadcasting)."""
    return c.reshape(c.shape[:1] + (1,) * (ndim - (c.ndim - 1)) + c.shape[1:])


def _flat_pair(a, b):
    shape = np.broadcast_shapes(a.shape, b.shape)
    n = a.coeffs.shape[0]
    ca = np.ascontiguousarray(np.broadcast_to(_lifted(a.coeffs, len(shape)), (n,) + shape)).reshape(n, -1)
    cb = np.ascontiguousarray(np.broadcast_to(_lifted(b.coeffs, len(shape)), (n,) + shape)).reshape(n, -1)
    return ca, cb, shape


def _mul(a, b):
    """Truncated product; jets of different order combine at the lower order."""
    a, b = _common(a, b)
    t = tables(a.order)
    ca, cb, shape = _flat_pair(a, b)
    out = _kernel.mul_truncated(ca, cb, t.ia, t.ib, t.ko, t.n)
    return Jet(np.asarray(out).reshape((t.n,) + shape), a.order)


def backend_module(name=None):
    if name is None:
        return _kernel
    if name == "python":
        return _jetcore_py
    if name == "compiled":
        from . import _jetcore  # type: ignore[attr-defined]

        return _jetcore
    raise ValueError(f"unknown backend {name!r}")


def mul_coeffs(ca, cb, order, backend=None):
    """Raw kernel entry point on flat ``(coefficients, width)`` blocks (benchmarks, tests)."""
    t = tables(order)
    return backend_module(backend).mul_truncated(
        np.ascontiguousarray(ca, dtype=float), np.ascontiguousarray(cb, dtype=float), t.ia, t.ib, t.ko, t.n
    )


def stack(jets, axis=0):
    k = min(j.order for j in jets)
    return Jet(np.stack([j.truncate(k).coeffs for j in jets], axis=axis + 1), k)


def contract(spec, *jets):
    """Einstein-style contraction of component axes, e.g. ``contract("ab,b->a", g, w)``.

    Letters name component axes only; any remaining trailing axes (grid batch)
    are carried along and broadcast.  Repeated letters absent from the output
    are summed.
    """
    lhs, out = spec.replace(" ", "").split("->")
    specs = lhs.split(",")
    if len(specs) != len(jets):
        raise ValueError(f"{spec!r} names {len(specs)} operands, got {len(jets)}")
    cur, cur_spec = jets[0], specs[0]
    for i in range(1, len(jets)):
        later = set(out).union(*specs[i + 1:])
        cur, cur_spec = _pair(cur, cur_spec, jets[i], specs[i], later)
    # single operand (or leftovers): sum letters not in output, then permute
    drop = [ax for ax, c in enumerate(cur_spec) if c not in out]
    if drop:
        cur = cur.sum(drop)
        cur_spec = "".join(c for c in cur_spec if c in out)
    if cur_spec != out:
        perm = [cur_spec.index(c) for c in out]
        cur = cur.transpose(*(perm + list(range(len(out), cur.ndim))))
    return cur


def _align(j, spec, letters, nbatch):
    ncomp = len(spec)
    batch = j.shape[ncomp:]
    src = [spec.index(c) for c in letters if c in spec]
    c = j.coeffs.transpose([0] + [s + 1 for s in src] + list(range(ncomp + 1, j.coeffs.ndim)))
    dims = []
    present = iter(c.shape[1 : 1 + len(src)])
    for ch in letters:
        dims.append(next(present) if ch in spec else 1)
    pad = (1,) * (nbatch - len(batch))
    return Jet(c.reshape((c.shape[0],) + tuple(dims) + pad + batch), j.order)


def _pair(a, sa, b, sb, keep):
    letters = "".join(dict.fromkeys(sa + sb))
    nbatch = max(a.ndim - len(sa), b.ndim - len(sb))
    prod = _mul(_align(a, sa, letters, nbatch), _align(b, sb, letters, nbatch))
    drop = [ax for ax, c in enumerate(letters) if c not in keep]
    if drop:
        prod = prod.sum(drop)
    return prod, "".join(c for c in letters if c in keep)


# -- elementary functions by univariate composition -----------------------

def _compose(a, series):
    """Evaluate ``sum_n series[n] * (a - a0)^n`` by Horner's rule on the nilpotent part."""
    c = a.coeffs.copy()
    c[0] = 0.0
    h = Jet(c, a.order)
    res = Jet.const(np.broadcast_to(series[a.order], a.shape), a.order)
    for n in range(a.order - 1, -1, -1):
        res = res * h + series[n]
    return res


def _check(mask, message):
    if np.any(mask):
        raise JetDomainError(message, np.flatnonzero(mask))


def reciprocal(a):
    a0 = a.value
    _check(a0 == 0, "division by a zero-valued jet")
    return _compose(a, [(-1.0) ** n / a0 ** (n + 1) for n in range(a.order + 1)])


def exp(a):
    e = np.exp(a.value)
    return _compose(a, [e / math.factorial(n) for n in range(a.order + 1)])


def log(a):
    a0 = a.value
    _check(~(a0 > 0), "log of a non-positive value")
    series = [np.log(a0)] + [(-1.0) ** (n + 1) / (n * a0**n) for n in range(1, a.order + 1)]
    return _compose(a, series)


def _trig_series(a, start):
    s, c = np.sin(a.value), np.cos(a.value)
    cycle = (s, c, -s, -c)
    return _compose(a, [cycle[(start + n) % 4] / math.factorial(n) for n in range(a.order + 1)])


def sin(a):
    return _trig_series(a, 0)


def cos(a):
    return _trig_series(a, 1)


def tan(a):
    c = cos(a)
    _check(c.value == 0, "tan at an odd multiple of pi/2")
    return sin(a) / c


def sinh(a):
    s, c = np.sinh(a.value), np.cosh(a.value)
    return _compose(a, [(s if n % 2 == 0 else c) / math.factorial(n) for n in range(a.order + 1)])


def cosh(a):
    s, c = np.sinh(a.value), np.cosh(a.value)
    return _compose(a, [(c if n % 2 == 0 else s) / math.factorial(n) for n in range(a.order + 1)])


def _real_power_series(a0, p, order):
    coef, series = 1.0, []
    for n in range(order + 1):
        series.append(coef * a0 ** (p - n))
        coef *= (p - n) / (n + 1)
    return series


def sqrt(a):
    a0 = a.value
    if a.order == 0:
        _check(a0 < 0, "sqrt of a negative value")
    else:
        _check(~(a0 > 0), "sqrt needs a strictly positive value to be differentiable")
    return _compose(a, _real_power_series(a0, 0.5, a.order))


def power(a, p):
    """``a ** p`` for integer ``p`` (any base), real ``p`` (positive base) or jet ``p``."""
    if isinstance(p, Jet):
        _check(~(a.value > 0), "power with a variable exponent needs a positive base")
        return exp(p * log(a))
    if float(p).is_integer():
        p = int(p)
        if p < 0:
            return power(reciprocal(a), -p)
        result = Jet.const(np.ones(a.shape), a.order)
        base = a
        while p:
            if p & 1:
                result = result * base
            p >>= 1
            if p:
                base = base * base
        return result
    _check(~(a.value > 0), "non-integer power needs a positive base")
    return _compose(a, _real_power_series(a.value, float(p), a.order))


def atan(a):
    a0 = a.value
    q = [1.0 + a0**2, 2.0 * a0, np.ones_like(a0)] + [np.zeros_like(a0)] * a.order
    r = [1.0 / q[0]]
    for n in range(1, a.order):
        r.append(-sum(q[k] * r[n - k] for k in range(1, n + 1)) / q[0])
    series = [np.arctan(a0)] + [r[n - 1] / n for n in range(1, a.order + 1)]
    return _compose(a, series)


def atan2(y, x):
    """Angle jet; expands ``atan2(y0, x0) + atan((x0 y - y0 x) / (x0 x + y0 y))``."""
    y, x = _common(y, x)
    x0, y0 = x.value, y.value
    _check((x0 == 0) & (y0 == 0), "atan2 at the origin")
    w = (x * x0 + y * y0)
    turn = atan((y * x0 - x * y0) / w)
    return turn + np.arctan2(y0, x0)


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "sinh": sinh,
    "cosh": cosh,
}


# -- spec-level operation names -------------------------------------------

def jet_const(x, K=DEFAULT_ORDER):
    return Jet.const(x, K)


def jet_var(which, point, K=DEFAULT_ORDER):
    return Jet.variable(which, point, K)


def jet_arith(a, b, op):
    if a.order != b.order:
        raise ValueError(f"jet orders differ ({a.order} vs {b.order})")
    ops = {"add": Jet.__add__, "sub": Jet.__sub__, "mul": Jet.__mul__, "div": Jet.__truediv__}
    return ops[op](a, b)


def jet_fn(a, f, p=None):
    if f == "pow":
        return power(a, p)
    return FUNCTIONS[f](a)


def jet_partial(j, m):
    return j.partial(m)
