"""Local smoothing kernels: families ``(eps, x) -> test function`` on a box domain.

Kernels are evaluated in offset form ``fn(eps, x, d)`` with ``d = y - x``.
Small displacements never have to be recovered by cancellation, which keeps
finite differences of kernels at scale ``eps`` clean down to ``eps ~ 1e-3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fd, quad
from .bump import OrderTooHighError, as_points
from .mollifier import Mollifier
from .rates import check_sweep, dyadic_sweep

MAX_KERNEL_ORDER = 4
FD_REL_STEP = 1e-3
SCALING_RATIO = 10.0
# Scaled sup-norms at or below this are treated as exact zeros.
SCALING_FLOOR = 1e-10


class MarginError(ValueError):
    """A kernel support ball does not fit inside the domain."""


class KernelMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"bad box {self.lo} .. {self.hi}")

    @classmethod
    def of(cls, lo, hi) -> "Box":
        return cls(tuple(float(v) for v in np.atleast_1d(lo)), tuple(float(v) for v in np.atleast_1d(hi)))

    @classmethod
    def cube(cls, half: float, n: int, center: float = 0.0) -> "Box":
        return cls((center - half,) * n, (center + half,) * n)

    @property
    def n(self) -> int:
        return len(self.lo)

    def shrink(self, margin: float) -> "Box":
        return Box.of(np.add(self.lo, margin), np.subtract(self.hi, margin))

    def contains(self, p, margin: float = 0.0) -> np.ndarray:
        p = as_points(p, self.n)
        return np.all((p >= np.add(self.lo, margin)) & (p <= np.subtract(self.hi, margin)), axis=-1)

    def grid(self, per_axis: int) -> np.ndarray:
        """Closed tensor grid with ``per_axis`` points per axis, shape (M, n)."""
        axes = [np.linspace(a, b, per_axis) for a, b in zip(self.lo, self.hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)


def _index(a, n: int) -> tuple[int, ...]:
    a = tuple(int(v) for v in np.atleast_1d(a))
    if len(a) != n or min(a) < 0:
        raise ValueError(f"bad multi-index {a} for dimension {n}")
    return a


@dataclass(frozen=True)
class MultiIndexPair:
    """Derivative orders: ``alpha`` on x (or along the diagonal), ``beta`` on y."""

    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    diagonal: bool = False

    def __post_init__(self):
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta differ in dimension")
        if min(self.alpha + self.beta) < 0:
            raise ValueError("multi-indices must be non-negative")

    @classmethod
    def make(cls, n: int, alpha=None, beta=None, diagonal: bool = False) -> "MultiIndexPair":
        zero = (0,) * n
        return cls(_index(alpha, n) if alpha is not None else zero,
                   _index(beta, n) if beta is not None else zero, diagonal)

    @classmethod
    def none(cls, n: int):
        return cls.make(n)

    @classmethod
    def y(cls, beta):
        beta = tuple(beta)
        return cls.make(len(beta), beta=beta)

    @classmethod
    def x(cls, alpha):
        alpha = tuple(alpha)
        return cls.make(len(alpha), alpha=alpha)

    @classmethod
    def diag(cls, alpha, beta=None):
        alpha = tuple(alpha)
        return cls.make(len(alpha), alpha=alpha, beta=beta, diagonal=True)

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def order(self) -> int:
        return sum(self.alpha) + sum(self.beta)

    def directions(self) -> list[np.ndarray]:
        """Shift directions in the stacked ``(x, d)`` coordinates."""
        n = self.n
        out = []
        for i in fd.expand(self.alpha):
            e = fd.unit(n, i)
            # moving x with y fixed shifts d = y - x the other way
            out.append(np.concatenate([e, 0 * e if self.diagonal else -e]))
        for i in fd.expand(self.beta):
            e = fd.unit(n, i)
            out.append(np.concatenate([0 * e, e]))
        return out

    def label(self) -> str:
        def fmt(a):
            return "".join(str(v) for v in a)
        xs = "xy" if self.diagonal else "x"
        return f"d{xs}^{fmt(self.alpha)} dy^{fmt(self.beta)}"


@dataclass(frozen=True, eq=False)
class LocalSmoothingKernel:
    """``phi~(eps, x)(y) = fn(eps, x, y - x)`` with ``supp`` inside ``B(x, eps * C)``."""

    n: int
    domain: Box
    fn: Callable = field(repr=False)
    C: float
    order: int
    kind: str
    eps0: float = 0.5
    label: str = ""
    # scaled radii of the bumps the evaluator is built from
    radii: tuple[float, ...] = ()
    depends_on_x: bool = True
    # Gauss-Legendre nodes per panel when integrating against the kernel
    nodes: int | None = None

    def __call__(self, eps, x, y):
        x = as_points(x, self.n)
        y = as_points(y, self.n)
        return _squeeze(self.fn(eps, x, y - x))

    def at(self, eps, x, d):
        return self.fn(eps, as_points(x, self.n), as_points(d, self.n))

    def compact(self, eps0: float | None = None) -> Box:
        """Largest sub-box whose points keep their support ball inside the domain."""
        return self.domain.shrink((self.eps0 if eps0 is None else eps0) * self.C)

    def check_margin(self, eps, x):
        x = as_points(x, self.n)
        if not np.all(self.domain.contains(x, margin=eps * self.C)):
            raise MarginError(f"support ball of radius {eps * self.C:g} leaves the domain")


def _squeeze(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


def canonical_kernel(phi: Mollifier, domain: Box | None = None, eps0: float = 0.5) -> LocalSmoothingKernel:
    """Convolution kernel ``eps^-n phi((y - x) / eps)``."""
    n = phi.n
    domain = domain or Box.cube(5.0, n)

    def fn(eps, x, d):
        return eps**-n * phi(d / eps) * np.ones(np.broadcast_shapes(x.shape, d.shape)[:-1])

    return LocalSmoothingKernel(n, domain, fn, phi.radius, phi.order, "canonical", eps0, "canonical",
                                (phi.radius,), depends_on_x=False)


def tanh_blend(n: int, direction=None) -> Callable:
    """``w(x) = (1 + tanh(v . x)) / 2`` with a fixed direction ``v``."""
    v = np.asarray(direction if direction is not None else np.array([1.0, 0.5, 0.25])[:n], dtype=float)

    def w(x):
        return 0.5 * (1.0 + np.tanh(as_points(x, n) @ v))

    return w


def varying_kernel(phi0: Mollifier, phi1: Mollifier, blend: Callable | None = None,
                   domain: Box | None = None, eps0: float = 0.5) -> LocalSmoothingKernel:
    """Kernel whose shape blends from ``phi0`` to ``phi1`` as ``x`` moves."""
    if phi0.n != phi1.n:
        raise KernelMismatchError("mollifiers differ in dimension")
    if phi0.order != phi1.order:
        raise KernelMismatchError("mollifiers differ in order")
    n = phi0.n
    w = blend or tanh_blend(n)
    domain = domain or Box.cube(5.0, n)

    def fn(eps, x, d):
        wx = w(x)
        z = d / eps
        return eps**-n * ((1.0 - wx) * phi0(z) + wx * phi1(z))

    C = max(phi0.radius, phi1.radius)
    radii = tuple(sorted({phi0.radius, phi1.radius}))
    return LocalSmoothingKernel(n, domain, fn, C, phi0.order, "varying", eps0, "blended", radii)


def fd_step(eps: float) -> float:
    return FD_REL_STEP * eps


def stencil(K: LocalSmoothingKernel, pair: MultiIndexPair, eps: float) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """``[(x_shift, d_shift, weight)]`` such that ``D fn(x, d) = sum w fn(x + sx, d + sd)``."""
    if pair.n != K.n:
        raise ValueError("multi-index dimension does not match kernel")
    m = pair.order
    if m > MAX_KERNEL_ORDER:
        raise OrderTooHighError(f"derivative order {m} exceeds {MAX_KERNEL_ORDER}")
    n = K.n
    if m == 0:
        return [(np.zeros(n), np.zeros(n), 1.0)]
    h = fd_step(eps)
    dirs = pair.directions()
    if not K.depends_on_x:
        # x-shifts are exact no-ops; dropping them lets the weights cancel exactly
        dirs = [np.concatenate([0 * v[:n], v[n:]]) for v in dirs]
    scale = (2.0 * h) ** m
    return [(h * off[:n], h * off[n:], w / scale) for off, w in fd.compose(dirs)]


def derivative(K: LocalSmoothingKernel, pair: MultiIndexPair, eps: float, x, d) -> np.ndarray:
    """Composed central differences of ``K`` in offset coordinates."""
    terms = stencil(K, pair, eps)
    x = as_points(x, K.n)
    d = as_points(d, K.n)
    if pair.order == 0:
        return np.asarray(K.fn(eps, x, d), dtype=float)
    out_shape = np.broadcast_shapes(x.shape, d.shape)[:-1]
    total = 0.0
    for sx, sd, w in terms:
        total = total + w * K.fn(eps, x + sx, d + sd)
    return np.broadcast_to(total, out_shape)


def partial(K: LocalSmoothingKernel, pair: MultiIndexPair, eps: float, x, y):
    """``(d_x^alpha d_y^beta phi~)(eps, x)(y)`` by central differences with step ``1e-3 eps``."""
    x = as_points(x, K.n)
    y = as_points(y, K.n)
    return _squeeze(derivative(K, pair, eps, x, y - x))


def partial_diag(K: LocalSmoothingKernel, alpha, eps: float, x, y):
    """Derivative along simultaneous translation of both slots, ``(d_x + d_y)^alpha``."""
    return partial(K, MultiIndexPair.diag(_index(alpha, K.n)), eps, x, y)


def _offset_grid(n: int, R: float, per_axis: int) -> np.ndarray:
    return Box.cube(R, n).grid(per_axis)


_SUPPORT_SAMPLES = {1: 801, 2: 161, 3: 41}


def support_radius(K: LocalSmoothingKernel, eps: float, x, tol: float = np.finfo(float).tiny,
                   pair: MultiIndexPair | None = None, samples: int | None = None) -> float:
    """Largest sampled ``|y - x|`` where ``|D phi~(eps, x)(y)| >= tol``.

    Samples cover the box of half-width ``1.25 * eps * C`` around ``x``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    pair = pair or MultiIndexPair.none(K.n)
    x = as_points(x, K.n)
    z = _offset_grid(K.n, 1.25 * K.C, samples or _SUPPORT_SAMPLES[K.n])
    d = eps * z
    vals = np.abs(derivative(K, pair, eps, x[..., None, :], d))
    hit = vals >= tol
    radii = np.linalg.norm(d, axis=-1) * np.ones_like(vals)
    rho = np.where(hit, radii, 0.0).max(axis=-1)
    return _squeeze(rho)


@dataclass(frozen=True)
class ScalingReport:
    eps: tuple[float, ...]
    values: tuple[float, ...]
    label: str = ""
    limit: float = SCALING_RATIO

    @property
    def floor(self) -> bool:
        return max(self.values) <= SCALING_FLOOR

    @property
    def ratio(self) -> float:
        lo, hi = min(self.values), max(self.values)
        return hi / lo if lo > 0 else float("inf")

    @property
    def passed(self) -> bool:
        return self.floor or self.ratio <= self.limit

    def __str__(self):
        tag = "floor" if self.floor else f"ratio={self.ratio:.3f}"
        return f"{self.label or 'scaling'}: {tag} -> {'pass' if self.passed else 'fail'}"


def check_scaling(K: LocalSmoothingKernel, alpha=None, beta=None, eps=None, compact: Box | None = None,
                  x_grid: int = 21, y_grid: int = 41) -> ScalingReport:
    """Track ``eps^(n+|beta|) sup |d_y^beta d_{x+y}^alpha phi~|`` over a sweep.

    The sup is sampled over an ``x_grid``-per-axis grid on ``compact`` and a
    ``y_grid``-per-axis grid on the support box around each ``x``.
    """
    pair = MultiIndexPair.make(K.n, alpha, beta, diagonal=True)
    if pair.order > 3:
        raise OrderTooHighError("check_scaling supports |alpha| + |beta| <= 3")
    eps = check_sweep(dyadic_sweep() if eps is None else eps)
    compact = compact or K.compact(eps.max())
    xs = compact.grid(x_grid)
    z = _offset_grid(K.n, K.C * (1.0 + 0.01 * pair.order), y_grid)
    values = []
    for e in eps:
        sup = 0.0
        for chunk in np.array_split(xs, max(1, len(xs) * len(z) // 200_000)):
            vals = derivative(K, pair, e, chunk[:, None, :], e * z)
            sup = max(sup, float(np.max(np.abs(vals))))
        values.append(sup * e ** (K.n + sum(pair.beta)))
    return ScalingReport(tuple(eps), tuple(values), pair.label())
