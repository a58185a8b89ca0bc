"""Approximation properties of local smoothing kernels.

All integrals are done in the scaled variable: over ``y = x + eps z`` when
integrating against the second slot and over ``x = y + eps z`` when
integrating against the first, so the quadrature grid follows the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Callable

import itertools

import numpy as np
import sympy as sp

from . import fd, quad
from .bump import as_points
from .kernel import (
    Box,
    LocalSmoothingKernel,
    MarginError,
    MultiIndexPair,
    derivative,
    stencil,
)
from .rates import FLOOR, RateReport, SuiteReport, check_sweep, dyadic_sweep, fit_rate

# FD step for derivatives of the two-point field itself (no symbolic form).
FIELD_FD_STEP = 1e-4
SLOPE_TOL = 0.2
CHUNK = 200_000


class MissingSupportError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TwoPointField:
    """A smooth ``f(x, y)`` on Omega x Omega.

    ``x_support``, when given, is a box outside of which ``f(., y)`` vanishes
    for every ``y``. ``derivs`` maps ``(alpha_x, alpha_y)`` to an exact
    partial derivative; without it partials fall back to central differences.
    """

    n: int
    fn: Callable = field(repr=False)
    x_support: Box | None = None
    name: str = ""
    derivs: Callable | None = field(default=None, repr=False)

    def __call__(self, x, y):
        x = as_points(x, self.n)
        y = as_points(y, self.n)
        return np.asarray(self.fn(x, y), dtype=float) * np.ones(np.broadcast_shapes(x.shape, y.shape)[:-1])

    def partial(self, ax=None, ay=None) -> Callable:
        zero = (0,) * self.n
        ax = tuple(ax) if ax is not None else zero
        ay = tuple(ay) if ay is not None else zero
        if ax == zero and ay == zero:
            return self
        if self.derivs is not None:
            return self.derivs(ax, ay)
        index = ax + ay

        def g(x, y):
            x, y = np.broadcast_arrays(as_points(x, self.n), as_points(y, self.n))
            xy = np.concatenate([x, y], axis=-1)
            return fd.partial(lambda p: self(p[..., : self.n], p[..., self.n:]), xy, index, FIELD_FD_STEP)

        return g

    def on_diagonal(self, ax=None, ay=None) -> Callable:
        """``p -> (d_x^ax d_y^ay f)(p, p)``."""
        g = self.partial(ax, ay)
        return lambda p: np.asarray(g(p, p), dtype=float)

    @classmethod
    def from_sympy(cls, expr, n: int, x_support: Box | None = None, name: str = "") -> "TwoPointField":
        """Build from an expression in symbols ``x1..xn, y1..yn``."""
        xs = sp.symbols(f"x1:{n + 1}")
        ys = sp.symbols(f"y1:{n + 1}")
        args = list(xs) + list(ys)

        def compile_(e):
            lam = sp.lambdify(args, e, "numpy")

            def g(x, y):
                x = as_points(x, n)
                y = as_points(y, n)
                shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
                with np.errstate(all="ignore"):
                    v = lam(*(x[..., i] for i in range(n)), *(y[..., i] for i in range(n)))
                return np.nan_to_num(np.asarray(v, dtype=float) * np.ones(shape), nan=0.0)

            return g

        @lru_cache(maxsize=None)
        def derivs(ax, ay):
            e = expr
            for s, k in itertools.chain(zip(xs, ax), zip(ys, ay)):
                if k:
                    e = sp.diff(e, s, k)
            return compile_(e)

        return cls(n, compile_(expr), x_support, name or str(expr), derivs)


def sym_bump(s):
    """Sympy form of ``exp(1/(s - 1))`` for ``s < 1``, 0 otherwise."""
    return sp.Piecewise((sp.exp(1 / (s - 1)), s < 1), (0, True))


def kernel_nodes(K: LocalSmoothingKernel, N: int | None = None):
    """Scaled quadrature nodes on the support box of ``phi~``, split at the bump radii."""
    return quad.scaled_nodes(K.n, K.C, N or K.nodes, quad.ball_cuts(K.radii or (K.C,)))


def _chunks(P: int, M: int):
    per = max(1, CHUNK // max(M, 1))
    for start in range(0, P, per):
        yield slice(start, min(P, start + per))


def _grouped(K: LocalSmoothingKernel, deriv: MultiIndexPair, eps: float):
    """Stencil terms grouped by their shift in ``d``.

    Each group is integrated after the substitution ``d -> d - shift``, which
    moves the shift onto ``f`` and keeps every kernel copy on the grid that is
    aligned with its support. The zeroth moment of a difference stencil then
    cancels to rounding instead of to quadrature accuracy.
    """
    groups: dict[tuple[float, ...], list] = {}
    for sx, sd, w in stencil(K, deriv, eps):
        groups.setdefault(tuple(sd), []).append((sx, w))
    return [(np.array(sd), terms) for sd, terms in groups.items()]


def _kernel_sum(K, eps, x, d, terms):
    if not K.depends_on_x:
        x = np.zeros((1, K.n))
    total = 0.0
    for sx, w in terms:
        total = total + w * K.fn(eps, x + sx, d)
    return total


def functional_y(f: TwoPointField, K: LocalSmoothingKernel, deriv: MultiIndexPair | None = None,
                 eps: float = 0.1, x=None, N: int | None = None, check: bool = True):
    """``int f(x, y) (D phi~)(eps, x, y) dy`` for a batch of base points ``x``."""
    out = functional_y_many([f], K, deriv, eps, x, N, check)[0]
    return float(out) if out.ndim == 0 else out


def functional_y_many(fields, K: LocalSmoothingKernel, deriv: MultiIndexPair | None = None,
                      eps: float = 0.1, x=None, N: int | None = None, check: bool = True) -> np.ndarray:
    """``functional_y`` for several fields at once, sharing the kernel values.

    Returns shape ``(len(fields),) + x.shape[:-1]``.
    """
    deriv = deriv or MultiIndexPair.none(K.n)
    x = as_points(x, K.n)
    if check:
        K.check_margin(eps, x)
    flat = x.reshape(-1, K.n)
    z, w = kernel_nodes(K, N)
    d = eps * z
    groups = _grouped(K, deriv, eps)
    masks = [np.ones(len(flat), bool) if f.x_support is None else f.x_support.contains(flat) for f in fields]
    near = np.flatnonzero(np.any(masks, axis=0))
    out = np.zeros((len(fields), len(flat)))
    for sl in _chunks(len(near), len(z)):
        sl = near[sl]
        xs = flat[sl, None, :]
        vals = np.zeros((len(fields), len(xs), len(z)))
        for sd, terms in groups:
            ker = _kernel_sum(K, eps, xs, d, terms)
            for i, f in enumerate(fields):
                vals[i] += f(xs, xs + d - sd) * ker
        out[:, sl] = eps**K.n * (vals @ w)
    out *= np.array(masks)
    return out.reshape((len(fields),) + x.shape[:-1])


def functional_x(f: TwoPointField, K: LocalSmoothingKernel, deriv: MultiIndexPair | None = None,
                 eps: float = 0.1, y=None, N: int | None = None):
    """``int f(x, y) (D phi~)(eps, x, y) dx`` for a batch of points ``y``.

    Needs ``f`` to carry its x-support; the integrand lives on
    ``|x - y| < eps C``.
    """
    if f.x_support is None:
        raise MissingSupportError("integration over x needs a field with compact x-support")
    if not K.domain.shrink(eps * K.C).contains(np.array([f.x_support.lo, f.x_support.hi])).all():
        raise MarginError("x-support of the field is too close to the domain boundary")
    deriv = deriv or MultiIndexPair.none(K.n)
    y = as_points(y, K.n)
    flat = y.reshape(-1, K.n)
    z, w = kernel_nodes(K, N)
    d = eps * z
    groups = _grouped(K, deriv, eps)
    out = np.zeros(len(flat))
    # the integrand vanishes unless y is within eps C (plus the stencil) of the x-support
    near = np.flatnonzero(f.x_support.contains(flat, margin=-eps * (K.C + 0.01)))
    for sl in _chunks(len(near), len(z)):
        sl = near[sl]
        ys = flat[sl, None, :]
        vals = np.zeros((len(ys), len(z)))
        for sd, terms in groups:
            # x = y - d before the substitution d -> d - sd
            xs = ys - d + sd
            vals = vals + f(xs, ys) * _kernel_sum(K, eps, xs, d, terms)
        out[sl] = eps**K.n * (vals @ w)
    out = out.reshape(y.shape[:-1])
    return float(out) if out.ndim == 0 else out


def _sweep(eps):
    return check_sweep(dyadic_sweep() if eps is None else eps)


def _as_index(index, n: int) -> tuple[int, ...]:
    if np.ndim(index) == 0:
        return tuple(fd.unit(n, int(index)))
    return tuple(int(v) for v in index)


def _rate(values_fn, target_fn, points, eps, target, label) -> RateReport:
    truth = target_fn(points)
    errors = [float(np.max(np.abs(values_fn(e, points) - truth))) for e in eps]
    return fit_rate(eps, errors, target=target, label=label)


def base_points(K: LocalSmoothingKernel, eps, grid: int) -> np.ndarray:
    """Grid on the compact sub-box where every support ball stays in the domain."""
    return K.compact(float(np.max(eps))).grid(grid)


_CASES = {
    # case: (slot differentiated, integration variable, which f-slot in the limit, sign per order)
    "a": (None, "y", None, 1),
    "b": (None, "x", None, 1),
    "c": ("y", "y", "y", -1),
    "d": ("x", "x", "x", -1),
    "e": ("x", "y", "y", 1),
    "f": ("y", "x", "x", 1),
}


def check_limits_af(f: TwoPointField, K: LocalSmoothingKernel, case: str, index=0, eps=None,
                    grid: int = 21, N: int | None = None) -> RateReport:
    """Rate at which the six basic two-point integrals reach their limits.

    ``index`` is an axis (first-order cases) or a full multi-index for the
    higher-order analogues.
    """
    if case not in _CASES:
        raise ValueError(f"unknown case {case!r}")
    eps = _sweep(eps)
    kslot, over, fslot, sign = _CASES[case]
    n = K.n
    alpha = (0,) * n if kslot is None else _as_index(index, n)
    if kslot == "x":
        deriv = MultiIndexPair.x(alpha)
    elif kslot == "y":
        deriv = MultiIndexPair.y(alpha)
    else:
        deriv = MultiIndexPair.none(n)
    sign = sign ** sum(alpha)
    if fslot == "x":
        target = f.on_diagonal(ax=alpha)
    elif fslot == "y":
        target = f.on_diagonal(ay=alpha)
    else:
        target = f.on_diagonal()
    label = f"{case}:{f.name}:{deriv.label()}"
    if over == "y":
        pts = base_points(K, eps, grid)
        return _rate(lambda e, p: functional_y(f, K, deriv, e, p, N), lambda p: sign * target(p),
                     pts, eps, 1.0 - SLOPE_TOL, label)
    pts = K.domain.grid(grid)
    return _rate(lambda e, p: functional_x(f, K, deriv, e, p, N), lambda p: sign * target(p),
                 pts, eps, 1.0 - SLOPE_TOL, label)


def check_diag_vanishing(f: TwoPointField, K: LocalSmoothingKernel, alpha, eps=None,
                         grid: int = 21, N: int | None = None) -> RateReport:
    """``sup_y |int f(x, y) (d_{x+y}^alpha phi~)(eps, x, y) dx|`` should be O(eps)."""
    alpha = _as_index(alpha, K.n)
    if sum(alpha) not in (1, 2):
        raise ValueError("|alpha| must be 1 or 2")
    eps = _sweep(eps)
    deriv = MultiIndexPair.diag(alpha)
    pts = K.domain.grid(grid)
    return _rate(lambda e, p: functional_x(f, K, deriv, e, p, N), lambda p: 0.0,
                 pts, eps, 1.0 - SLOPE_TOL, f"diag:{f.name}:{deriv.label()}")


def check_corollary(f: TwoPointField, K: LocalSmoothingKernel, alpha, case: str = "i", eps=None,
                    grid: int = 21, N: int | None = None) -> RateReport:
    """(i) ``int f d_x^alpha phi~ dy -> d_y^alpha f(x, x)``;
    (ii) ``int f d_y^alpha phi~ dx -> d_x^alpha f(y, y)``."""
    alpha = _as_index(alpha, K.n)
    if sum(alpha) > 2:
        raise ValueError("corollary checks support |alpha| <= 2")
    eps = _sweep(eps)
    label = f"corollary-{case}:{f.name}:{''.join(map(str, alpha))}"
    if case == "i":
        deriv = MultiIndexPair.x(alpha)
        pts = base_points(K, eps, grid)
        return _rate(lambda e, p: functional_y(f, K, deriv, e, p, N), f.on_diagonal(ay=alpha),
                     pts, eps, 1.0 - SLOPE_TOL, label)
    if case == "ii":
        deriv = MultiIndexPair.y(alpha)
        pts = K.domain.grid(grid)
        return _rate(lambda e, p: functional_x(f, K, deriv, e, p, N), f.on_diagonal(ax=alpha),
                     pts, eps, 1.0 - SLOPE_TOL, label)
    raise ValueError(f"unknown corollary case {case!r}")


def two_point_order(f: TwoPointField, K: LocalSmoothingKernel, eps=None, grid: int = 21,
                    order: int | None = None, N: int | None = None) -> RateReport:
    """``sup_x |f(x, x) - int f(x, y) phi~(eps, x, y) dy|`` should be O(eps^(k+1))."""
    k = K.order if order is None else order
    eps = _sweep(eps)
    pts = base_points(K, eps, grid)
    return _rate(lambda e, p: functional_y(f, K, None, e, p, N), f.on_diagonal(),
                 pts, eps, k + 1.0 - SLOPE_TOL, f"order{k}:{f.name}")


def two_point_orders(fields, K: LocalSmoothingKernel, eps=None, grid: int = 21,
                     order: int | None = None, N: int | None = None) -> list[RateReport]:
    """``two_point_order`` for several fields with one pass over the kernel."""
    k = K.order if order is None else order
    eps = _sweep(eps)
    pts = base_points(K, eps, grid)
    truth = [f.on_diagonal()(pts) for f in fields]
    errors = [[] for _ in fields]
    for e in eps:
        vals = functional_y_many(fields, K, None, float(e), pts, N)
        for i in range(len(fields)):
            errors[i].append(float(np.max(np.abs(vals[i] - truth[i]))))
    return [fit_rate(eps, err, target=k + 1.0 - SLOPE_TOL, label=f"order{k}:{f.name}")
            for f, err in zip(fields, errors)]


def corollary_identity_residual(K: LocalSmoothingKernel, alpha, eps: float, x, y) -> np.ndarray:
    """``|d_x^a - (d_{x+y}^a - sum_{0<b<=a} C(a,b) d_y^b d_x^(a-b))| phi~`` at given points."""
    alpha = _as_index(alpha, K.n)
    x = as_points(x, K.n)
    d = as_points(y, K.n) - x
    lhs = derivative(K, MultiIndexPair.x(alpha), eps, x, d)
    rhs = derivative(K, MultiIndexPair.diag(alpha), eps, x, d)
    for beta in itertools.product(*(range(a + 1) for a in alpha)):
        if sum(beta) == 0:
            continue
        rest = tuple(a - b for a, b in zip(alpha, beta))
        c = np.prod([comb(a, b) for a, b in zip(alpha, beta)])
        rhs = rhs - c * derivative(K, MultiIndexPair(rest, beta), eps, x, d)
    return np.abs(lhs - rhs)


def standard_fields(n: int = 1, support_half: float = 2.0) -> list[TwoPointField]:
    """Non-degenerate two-point fields used by the limit and corollary suites.

    The last two carry a compact x-support (a radial bump of radius
    ``support_half``) so they also serve the integrals over ``x``.
    """
    xs = sp.symbols(f"x1:{n + 1}")
    ys = sp.symbols(f"y1:{n + 1}")
    v = [1.0, 0.7, 0.4][:n]
    sx = sum(c * s for c, s in zip(v, xs))
    sy = sum(c * s for c, s in zip(v, ys))
    r2 = sum(s**2 for s in xs) / support_half**2
    g = sym_bump(r2)
    box = Box.cube(support_half, n)
    return [
        TwoPointField.from_sympy(sp.sin(sx + 2 * sy), n, name="sin(x+2y)"),
        TwoPointField.from_sympy(sp.exp(sp.Rational(3, 10) * sx) * sp.cos(sy), n, name="exp(.3x)cos(y)"),
        TwoPointField.from_sympy(g * sp.cos(sx + sy), n, box, name="bump(x)cos(x+y)"),
        TwoPointField.from_sympy(g * sp.exp(sy / 2), n, box, name="bump(x)exp(y/2)"),
    ]


def limits_suite(K: LocalSmoothingKernel, fields=None, eps=None, grid: int = 21, axes=None) -> SuiteReport:
    """Cases (a)-(f) over the field suite; x-integral cases use compactly supported fields."""
    fields = standard_fields(K.n) if fields is None else fields
    axes = range(K.n) if axes is None else axes
    out = SuiteReport()
    for f in fields:
        for case in "abcdef":
            if case in "bdf" and f.x_support is None:
                continue
            for i in ([0] if case in "ab" else axes):
                r = check_limits_af(f, K, case, i, eps, grid)
                out.reports[r.label] = r
    return out
