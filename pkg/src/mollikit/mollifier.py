"""Order-k mollifiers: polynomial corrections of a bump with vanishing moments."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import quad
from .bump import BumpFunction, as_points, normalize
from .rates import SuiteReport

MAX_ORDER = 6
COND_LIMIT = 1e12


class SingularMomentSystemError(np.linalg.LinAlgError):
    pass


def multi_indices(n: int, k: int) -> list[tuple[int, ...]]:
    """All multi-indices of dimension ``n`` with ``|alpha| <= k``, graded."""
    out = []
    for total in range(k + 1):
        for a in itertools.product(range(total + 1), repeat=n):
            if sum(a) == total:
                out.append(a)
    return out


def monomials(y: np.ndarray, exponents) -> np.ndarray:
    """``y^alpha`` for every alpha in ``exponents``; shape (..., len(exponents))."""
    e = np.asarray(exponents, dtype=int)
    return np.prod(y[..., None, :] ** e, axis=-1)


@dataclass(frozen=True)
class Mollifier:
    """``phi(y) = p(y) * base(y)`` with ``p`` a polynomial in monomials of ``y``."""

    base: BumpFunction
    exponents: tuple[tuple[int, ...], ...]
    coeffs: tuple[float, ...]
    order: int

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def radius(self) -> float:
        return self.base.radius

    @property
    def coefficients(self) -> dict[tuple[int, ...], float]:
        return dict(zip(self.exponents, self.coeffs))

    def poly(self, y) -> np.ndarray:
        y = as_points(y, self.n)
        top = max(max(a) for a in self.exponents)
        if top == 0:
            return np.full(y.shape[:-1], sum(self.coeffs))
        # powers per axis once, then one product per monomial
        pw = [[None] + [y[..., i] ** j for j in range(1, top + 1)] for i in range(self.n)]
        out = np.zeros(y.shape[:-1])
        for a, c in zip(self.exponents, self.coeffs):
            term = np.full(y.shape[:-1], c)
            for i, j in enumerate(a):
                if j:
                    term = term * pw[i][j]
            out = out + term
        return out

    def __call__(self, y) -> np.ndarray:
        y = as_points(y, self.n)
        out = self.poly(y) * self.base(y)
        return float(out) if np.ndim(out) == 0 else out


def from_bump(base: BumpFunction) -> Mollifier:
    """Normalized ``base`` as an order-0 mollifier with ``p == 1``."""
    base = normalize(base)
    return Mollifier(base, ((0,) * base.n,), (1.0,), 0)


def moment(phi, alpha, N: int | None = None) -> float:
    """Quadrature value of the moment ``int y^alpha phi(y) dy``."""
    alpha = tuple(int(a) for a in np.atleast_1d(alpha))
    return quad.integrate_ball(lambda y: monomials(y, [alpha])[..., 0] * phi(y), phi.n, phi.radius, N)


def build_order_k(base: BumpFunction, k: int, N: int | None = None) -> Mollifier:
    """Solve ``int y^alpha p(y) base(y) dy = delta_{alpha,0}`` for ``|alpha| <= k``.

    The system is assembled in the rescaled variable ``u = y / r`` so the
    condition number does not depend on the support radius.
    """
    if not 0 <= k <= MAX_ORDER:
        raise ValueError(f"order must be in 0..{MAX_ORDER}, got {k}")
    base = normalize(base, N)
    n, r = base.n, base.radius
    exps = multi_indices(n, k)
    z, w = quad.ball_nodes(n, r, N)
    gram = np.zeros((len(exps), len(exps)))
    for sl in np.array_split(np.arange(len(z)), max(1, len(z) * len(exps) // 2_000_000)):
        V = monomials(z[sl] / r, exps)
        gram += V.T @ ((w[sl] * base(z[sl]))[:, None] * V)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMomentSystemError(f"moment system condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    rhs = np.zeros(len(exps))
    rhs[0] = 1.0
    c = np.linalg.solve(gram, rhs)
    degrees = np.array([sum(a) for a in exps])
    coeffs = c / r**degrees
    return Mollifier(base, tuple(exps), tuple(float(v) for v in coeffs), k)


def _weights(n: int) -> np.ndarray:
    return np.array([1.0, 0.7, 0.4])[:n]


def standard_suite(n: int = 1) -> dict:
    """Smooth, non-polynomial test functions of one point argument."""
    v = _weights(n)
    return {
        "sin": lambda y: np.sin(y @ v),
        "exp": lambda y: np.exp(y @ v),
        "runge": lambda y: 1.0 / (1.0 + np.sum(y * y, axis=-1)),
    }


def verify_order(phi: Mollifier, k: int | None = None, suite: dict | None = None, eps=None,
                 half_width: float = 5.0, grid: int = 21) -> SuiteReport:
    """Measure ``sup_x |f(x) - int f(y) phi_eps(y - x) dy|`` against ``eps``.

    Each function passes when its fitted slope is at least ``k + 0.8`` or its
    errors sit at the floor.
    """
    from .approx import TwoPointField, two_point_order
    from .kernel import Box, canonical_kernel

    k = phi.order if k is None else k
    suite = standard_suite(phi.n) if suite is None else suite
    if not suite:
        raise ValueError("empty test-function suite")
    K = canonical_kernel(phi, Box.cube(half_width, phi.n))
    out = SuiteReport()
    for name, g in suite.items():
        f = TwoPointField(phi.n, lambda x, y, g=g: g(y), name=name)
        out.reports[name] = two_point_order(f, K, eps=eps, grid=grid, order=k)
    return out

