"""Diffeomorphisms, vector fields and flows, Lie derivatives and pullbacks.

Everything is in Euclidean coordinates. Test functions are vectorized
callables on points of shape (..., n); two-point functions are callables
``Phi(x, y)`` where ``x`` is the base point and ``y`` the integration variable.
Pullbacks carry the Jacobian determinant, the local form of an n-form pullback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import quad
from .bump import as_points
from .kernel import (
    FD_REL_STEP,
    Box,
    LocalSmoothingKernel,
    MultiIndexPair,
    ScalingReport,
    check_scaling,
    support_radius,
)
from .rates import SuiteReport, check_sweep, dyadic_sweep

FD_JAC_STEP = 1e-6
FD_DIV_STEP = 1e-5
FD_GRAD_STEP = 3e-5
LIE_PRIME_STEP = 1e-4
FLOW_MAX_STEP = 1e-3
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 60
# relative head-room on the sampled Lipschitz constant of the inverse map
LIPSCHITZ_GUARD = 1.01
NONLINEAR_NODE_FACTOR = {1: 3.0, 2: 1.5, 3: 1.0}


class FlowExitError(ValueError):
    """A flow line left the domain."""


class InverseError(ArithmeticError):
    """Newton iteration for an inverse map did not converge."""


def _eye_like(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()


def det_small(J: np.ndarray) -> np.ndarray:
    """Determinant over the last two axes; closed form up to 3x3 (batched LU is slow on tiny blocks)."""
    n = J.shape[-1]
    if n == 1:
        return J[..., 0, 0].copy()
    if n == 2:
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if n == 3:
        return (J[..., 0, 0] * (J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1])
                - J[..., 0, 1] * (J[..., 1, 0] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 0])
                + J[..., 0, 2] * (J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0]))
    return np.linalg.det(J)


def fd_jacobian(fn: Callable, x: np.ndarray, h: float = FD_JAC_STEP) -> np.ndarray:
    """Central-difference Jacobian, shape (..., n, n) with ``J[..., i, j] = d fn_i / d x_j``."""
    n = x.shape[-1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True, eq=False)
class Diffeomorphism:
    """Orientation-preserving map ``mu`` with inverse and Jacobian.

    Missing pieces are filled in numerically: the Jacobian by central
    differences with step 1e-6, the inverse by Newton iteration.
    ``difference(x, d)`` should return ``mu(x + d) - mu(x)`` without
    cancellation when a closed form is available.
    """

    n: int
    forward: Callable = field(repr=False)
    inverse_fn: Callable | None = field(default=None, repr=False)
    jacobian_fn: Callable | None = field(default=None, repr=False)
    difference: Callable | None = field(default=None, repr=False)
    label: str = ""
    affine: bool = False

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.forward(as_points(x, self.n)), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        x = as_points(x, self.n)
        if self.jacobian_fn is not None:
            return np.asarray(self.jacobian_fn(x), dtype=float)
        return fd_jacobian(self.forward, x)

    def det(self, x) -> np.ndarray:
        return det_small(self.jacobian(x))

    def inverse(self, y) -> np.ndarray:
        y = as_points(y, self.n)
        if self.inverse_fn is not None:
            return np.asarray(self.inverse_fn(y), dtype=float)
        return newton_inverse(self, y)

    def delta(self, x, d) -> np.ndarray:
        """``mu(x + d) - mu(x)``."""
        x = as_points(x, self.n)
        d = as_points(d, self.n)
        if self.difference is not None:
            return np.asarray(self.difference(x, d), dtype=float)
        return self(x + d) - self(x)

    def then(self, other: "Diffeomorphism") -> "Diffeomorphism":
        """``other o self``."""
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        return Diffeomorphism(
            self.n,
            lambda x: other(self(x)),
            lambda y: self.inverse(other.inverse(y)),
            lambda x: other.jacobian(self(x)) @ self.jacobian(x),
            lambda x, d: other.delta(self(x), self.delta(x, d)),
            f"{other.label}o{self.label}",
            self.affine and other.affine,
        )


def newton_inverse(mu: Diffeomorphism, y: np.ndarray, tol: float = NEWTON_TOL) -> np.ndarray:
    x = np.array(y, dtype=float)
    for _ in range(NEWTON_MAX_ITER):
        r = mu(x) - y
        step = np.linalg.solve(mu.jacobian(x), r[..., None])[..., 0]
        x = x - step
        if np.all(np.abs(step) <= tol * (1.0 + np.abs(x))):
            return x
    raise InverseError("Newton iteration for the inverse did not converge")


def identity(n: int = 1) -> Diffeomorphism:
    return Diffeomorphism(n, lambda x: x.copy(), lambda y: y.copy(), _eye_like, lambda x, d: d.copy(),
                          "identity", True)


def affine(A, b=None, label: str = "affine") -> Diffeomorphism:
    """``x -> A x + b``; ``A`` must have positive determinant."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    if np.linalg.det(A) <= 0:
        raise ValueError("affine map must preserve orientation")
    Ainv = np.linalg.inv(A)
    return Diffeomorphism(
        n,
        lambda x: x @ A.T + b,
        lambda y: (y - b) @ Ainv.T,
        lambda x: np.broadcast_to(A, x.shape[:-1] + (n, n)).copy(),
        lambda x, d: d @ A.T,
        label,
        True,
    )


def scaling(n: int = 1, s: float = 2.0) -> Diffeomorphism:
    return affine(s * np.eye(n), label=f"scale{s:g}")


def rotation(theta: float = 0.5, shift=(0.3, -0.2)) -> Diffeomorphism:
    c, s = np.cos(theta), np.sin(theta)
    return affine([[c, -s], [s, c]], shift, label="rotation")


def sine_map(n: int = 1, a: float = 0.1) -> Diffeomorphism:
    """``x -> x + a sin(x)`` componentwise; inverse by Newton."""
    if not 0 <= a < 1:
        raise ValueError("need 0 <= a < 1 for a diffeomorphism")

    def jac(x):
        return np.einsum("...i,ij->...ij", 1.0 + a * np.cos(x), np.eye(n))

    def diff(x, d):
        # sin(x + d) - sin(x) = 2 cos(x + d/2) sin(d/2)
        return d + 2.0 * a * np.cos(x + 0.5 * d) * np.sin(0.5 * d)

    return Diffeomorphism(n, lambda x: x + a * np.sin(x), None, jac, diff, f"sine{a:g}")


def standard_battery(n: int = 1) -> dict[str, Diffeomorphism]:
    out = {"identity": identity(n), "scale2": scaling(n, 2.0)}
    if n == 2:
        out["rotation"] = rotation()
    out["sine"] = sine_map(n)
    return out


@dataclass(frozen=True, eq=False)
class VectorField:
    n: int
    fn: Callable = field(repr=False)
    div_fn: Callable | None = field(default=None, repr=False)
    label: str = ""
    # flows are checked against this box when given
    domain: Box | None = None

    def __call__(self, x) -> np.ndarray:
        x = as_points(x, self.n)
        return np.asarray(self.fn(x), dtype=float) * np.ones_like(x)

    def divergence(self, x) -> np.ndarray:
        x = as_points(x, self.n)
        if self.div_fn is not None:
            return np.asarray(self.div_fn(x), dtype=float) * np.ones(x.shape[:-1])
        h = FD_DIV_STEP
        total = np.zeros(x.shape[:-1])
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = h
            total += (self(x + e)[..., i] - self(x - e)[..., i]) / (2.0 * h)
        return total


def constant_field(c, domain: Box | None = None) -> VectorField:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return VectorField(len(c), lambda x: np.broadcast_to(c, x.shape), lambda x: 0.0, "constant", domain)


def linear_field(B, domain: Box | None = None) -> VectorField:
    """``X(x) = B x``, divergence ``tr B``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return VectorField(B.shape[0], lambda x: x @ B.T, lambda x: float(np.trace(B)), "linear", domain)


def flow(X: VectorField, x, t: float, domain: Box | None = None, max_step: float = FLOW_MAX_STEP) -> np.ndarray:
    """RK4 flow of ``X`` for time ``t`` with steps no longer than ``max_step``."""
    x = np.array(as_points(x, X.n), dtype=float)
    if t == 0:
        return x
    domain = domain or X.domain
    steps = int(np.ceil(abs(t) / max_step))
    h = t / steps
    for _ in range(steps):
        k1 = X(x)
        k2 = X(x + 0.5 * h * k1)
        k3 = X(x + 0.5 * h * k2)
        k4 = X(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if domain is not None and not np.all(domain.contains(x)):
            raise FlowExitError("flow line left the domain")
    return x


def gradient(f: Callable, x: np.ndarray, h: float = FD_GRAD_STEP) -> np.ndarray:
    """Five-point central differences, fourth order in ``h``.

    Pulled-back kernel slices have large third derivatives, which leave the
    plain central difference short of the commutation tolerance.
    """
    n = x.shape[-1]
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        near = np.asarray(f(x + e)) - np.asarray(f(x - e))
        far = np.asarray(f(x + 2 * e)) - np.asarray(f(x - 2 * e))
        cols.append((8.0 * near - far) / (12.0 * h))
    return np.stack(cols, axis=-1)


def lie_derivative(f: Callable, X: VectorField, x) -> np.ndarray:
    """``(L_X f)(x) = df(x) . X(x) + div X(x) f(x)``, the Lie derivative of ``f dx``."""
    x = as_points(x, X.n)
    return np.sum(gradient(f, x) * X(x), axis=-1) + X.divergence(x) * np.asarray(f(x))


def lie_prime(Phi: Callable, X: VectorField, x, domain: Box | None = None,
              h: float = LIE_PRIME_STEP) -> Callable:
    """``y -> d/dt Phi(Fl_t x)(y)`` at ``t = 0`` by a central difference along the flow."""
    x = as_points(x, X.n)
    fwd = flow(X, x, h, domain)
    bwd = flow(X, x, -h, domain)
    return lambda y: (np.asarray(Phi(fwd, y)) - np.asarray(Phi(bwd, y))) / (2.0 * h)


def pushforward_field(mu: Diffeomorphism, X: VectorField) -> VectorField:
    """``(mu_* X)(x) = dmu(mu^-1 x) X(mu^-1 x)``; divergence by central differences."""
    if mu.n != X.n:
        raise ValueError("dimension mismatch")

    def fn(y):
        x = mu.inverse(y)
        return np.einsum("...ij,...j->...i", mu.jacobian(x), X(x))

    return VectorField(X.n, fn, None, f"push({X.label})")


def pullback_testfn(mu: Diffeomorphism, f: Callable) -> Callable:
    """``(mu* f)(x) = f(mu x) det dmu(x)``."""
    return lambda x: np.asarray(f(mu(x))) * mu.det(x)


def pullback_twopoint(mu: Diffeomorphism, Phi: Callable) -> Callable:
    """``(mu* Phi)(x)(y) = Phi(mu x)(mu y) det dmu(y)``."""
    return lambda x, y: np.asarray(Phi(mu(x), mu(y))) * mu.det(y)


def lipschitz_inverse(mu: Diffeomorphism, box: Box, per_axis: int | None = None) -> float:
    """Sampled ``sup ||dmu(x)^-1||_2`` over ``box``: a Lipschitz bound for ``mu^-1`` on ``mu(box)``."""
    per_axis = per_axis or {1: 401, 2: 61, 3: 21}[mu.n]
    J = mu.jacobian(box.grid(per_axis))
    return float(np.max(np.linalg.norm(np.linalg.inv(J), ord=2, axis=(-2, -1))))


def preimage_box(mu: Diffeomorphism, box: Box, per_axis: int = 21, iters: int = 60) -> Box:
    """A cube around ``mu^-1(center)`` that ``mu`` maps into ``box``."""
    c = mu.inverse(0.5 * (np.asarray(box.lo) + np.asarray(box.hi)))

    def fits(h):
        pts = Box.of(c - h, c + h).grid(per_axis)
        return bool(np.all(box.contains(mu(pts))))

    lo, hi = 0.0, 1.0
    while fits(hi):
        lo, hi = hi, 2.0 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if fits(mid) else (lo, mid)
    if lo == 0.0:
        raise ValueError("no box of positive size maps into the target domain")
    return Box.of(c - lo, c + lo)


def pullback_kernel(mu: Diffeomorphism, K: LocalSmoothingKernel, domain: Box | None = None) -> LocalSmoothingKernel:
    """``(mu* K)(eps, x)(y) = K(eps, mu x)(mu y) det dmu(y)`` as a kernel on ``domain``.

    The support constant becomes ``C L`` with ``L`` the sampled Lipschitz
    constant of ``mu^-1``, since ``mu^-1(B(mu x, eps C))`` lies in ``B(x, eps C L)``.
    """
    if mu.n != K.n:
        raise ValueError("dimension mismatch")
    domain = domain or preimage_box(mu, K.domain)
    L = lipschitz_inverse(mu, domain)
    if not mu.affine:
        L *= LIPSCHITZ_GUARD

    def fn(eps, x, d):
        return K.fn(eps, mu(x), mu.delta(x, d)) * mu.det(x + d)

    radii = tuple(r * L for r in K.radii)
    # a nonlinear map bends the support seams off the panel cuts; more nodes make up for it
    nodes = None if mu.affine else int(NONLINEAR_NODE_FACTOR[K.n] * (K.nodes or quad.default_nodes(K.n)))
    return LocalSmoothingKernel(K.n, domain, fn, K.C * L, K.order, "pullback", K.eps0,
                                f"{mu.label}*{K.label}", radii, K.depends_on_x or not mu.affine, nodes)


@dataclass
class CommutationReport:
    first: float
    second: float
    label: str = ""

    @property
    def max(self) -> float:
        return max(self.first, self.second)

    def __str__(self):
        return f"{self.label or 'commutation'}: L {self.first:.2e}, L' {self.second:.2e}"


def check_commutation(mu: Diffeomorphism, X: VectorField, Phi: Callable, x, y, label: str = "") -> CommutationReport:
    """Residuals of ``L_X(mu* Phi) = mu*(L_Y Phi)`` and ``L'_X(mu* Phi) = mu*(L'_Y Phi)``, ``Y = mu_* X``.

    ``x`` and ``y`` are paired batches of base and integration points.
    """
    x = as_points(x, mu.n)
    y = as_points(y, mu.n)
    Y = pushforward_field(mu, X)
    pb = pullback_twopoint(mu, Phi)
    mx, my, jy = mu(x), mu(y), mu.det(y)

    lhs = lie_derivative(lambda q: pb(x, q), X, y)
    rhs = lie_derivative(lambda q: Phi(mx, q), Y, my) * jy
    first = float(np.max(np.abs(lhs - rhs)))

    lhs = lie_prime(pb, X, x)(y)
    rhs = lie_prime(Phi, Y, mx)(my) * jy
    second = float(np.max(np.abs(lhs - rhs)))
    return CommutationReport(first, second, label)


def check_flow_conjugacy(mu: Diffeomorphism, X: VectorField, x, t: float = 0.5) -> float:
    """``max |mu(Fl^X_t x) - Fl^{mu_* X}_t(mu x)|``."""
    x = as_points(x, mu.n)
    return float(np.max(np.abs(mu(flow(X, x, t)) - flow(pushforward_field(mu, X), mu(x), t))))


@dataclass
class SupportReport:
    eps: tuple[float, ...]
    ratios: tuple[float, ...]
    bound: float
    label: str = ""

    @property
    def constant(self) -> float:
        """Smallest ``C'`` with measured radius ``<= eps C'`` over the sweep."""
        return max(self.ratios)

    @property
    def passed(self) -> bool:
        return self.constant <= self.bound

    def __str__(self):
        return f"{self.label or 'support'}: C'={self.constant:.4f} bound={self.bound:.4f} -> {'pass' if self.passed else 'fail'}"


def default_pairs(n: int) -> list[MultiIndexPair]:
    """Tested index pairs for support and scaling, ``|alpha| + |beta| <= 3``."""
    e = tuple(int(i == 0) for i in range(n))
    z = (0,) * n
    two = tuple(2 * v for v in e)
    return [
        MultiIndexPair.diag(z, z),
        MultiIndexPair.diag(z, e),
        MultiIndexPair.diag(e, z),
        MultiIndexPair.diag(e, e),
        MultiIndexPair.diag(z, two),
        MultiIndexPair.diag(two, e),
    ]


def check_support(K: LocalSmoothingKernel, pairs=None, eps=None, grid: int = 5) -> SupportReport:
    """Measured support radius over a sweep against ``eps C`` plus the stencil reach."""
    pairs = pairs or default_pairs(K.n)
    eps = check_sweep(dyadic_sweep() if eps is None else eps)
    xs = K.compact(float(eps.max())).grid(grid)
    order = max(p.order for p in pairs)
    ratios = []
    for e in eps:
        rho = max(float(np.max(support_radius(K, e, xs, pair=p))) for p in pairs)
        ratios.append(rho / e)
    return SupportReport(tuple(eps), tuple(ratios), K.C * (1.0 + 1e-9) + FD_REL_STEP * order * np.sqrt(K.n),
                         K.label)


@dataclass
class PullbackReport:
    support: SupportReport
    scaling: list[ScalingReport]
    order: SuiteReport
    label: str = ""

    @property
    def passed(self) -> bool:
        return self.support.passed and all(r.passed for r in self.scaling) and self.order.passed


def check_pullback_preserves(mu: Diffeomorphism, K: LocalSmoothingKernel, eps=None, grid: int = 21,
                             fields=None, support_grid: int = 5) -> PullbackReport:
    """Support, scaling and two-point order of ``mu* K``, each with its own constants."""
    from .approx import TwoPointField, two_point_orders
    from .mollifier import standard_suite

    eps = check_sweep(dyadic_sweep() if eps is None else eps)
    P = pullback_kernel(mu, K)
    support = check_support(P, eps=eps, grid=support_grid)
    scaling = [check_scaling(P, p.alpha, p.beta, eps) for p in default_pairs(K.n)[:4]]
    if fields is None:
        fields = [TwoPointField(K.n, lambda x, y, g=g: g(y), name=name) for name, g in standard_suite(K.n).items()]
    order = SuiteReport()
    for r in two_point_orders(fields, P, eps=eps, grid=grid):
        order.reports[r.label] = r
    return PullbackReport(support, scaling, order, P.label)
