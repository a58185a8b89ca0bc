import numpy as np
import pytest

from mollikit.bump import BumpFunction, normalize
from mollikit.mollifier import (SingularMomentSystemError, build_order_k, from_bump, moment, multi_indices,
                                verify_order)
from mollikit.rates import dyadic_sweep


def _moments_1d(m, N=400):
    """Independent moments of the normalized standard bump on [-1, 1]."""
    z, w = np.polynomial.legendre.leggauss(N)
    g = np.exp(1 / (z * z - 1))
    g = g / np.sum(w * g)
    return {j: float(np.sum(w * z**j * g)) for j in range(m + 1)}


def test_multi_indices():
    assert multi_indices(1, 3) == [(0,), (1,), (2,), (3,)]
    idx = multi_indices(2, 2)
    assert idx[0] == (0, 0) and len(idx) == 6 and set(idx) >= {(1, 1), (2, 0), (0, 2)}


def test_order_zero_is_normalized_base():
    phi = build_order_k(BumpFunction(1, 1.0), 0)
    assert phi.coeffs == pytest.approx((1.0,))
    assert phi.base == normalize(BumpFunction(1, 1.0))
    assert moment(phi, 0) == pytest.approx(1.0, abs=1e-10)
    assert from_bump(BumpFunction(1, 1.0)).base == phi.base


def test_symmetric_order_one_matches_order_zero():
    p0 = build_order_k(BumpFunction(1, 1.0), 0)
    p1 = build_order_k(BumpFunction(1, 1.0), 1)
    y = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(p1(y), p0(y), atol=1e-12)


def test_order_three_matches_explicit_2x2_solve():
    m = _moments_1d(4)
    a, b = np.linalg.solve([[1.0, m[2]], [m[2], m[4]]], [1.0, 0.0])
    phi = build_order_k(BumpFunction(1, 1.0), 3)
    c = phi.coefficients
    assert c[(0,)] == pytest.approx(a, abs=1e-8)
    assert c[(2,)] == pytest.approx(b, abs=1e-8)
    assert abs(c[(1,)]) < 1e-8 and abs(c[(3,)]) < 1e-8


def test_second_moment_oracle():
    phi = from_bump(BumpFunction(1, 1.0))
    m2 = moment(phi, 2)
    assert m2 > 0
    assert m2 == pytest.approx(_moments_1d(2)[2], rel=1e-10)


@pytest.mark.parametrize("n,k", [(1, 2), (1, 4), (1, 6), (2, 2), (2, 3), (3, 2)])
def test_vanishing_moments(n, k):
    phi = build_order_k(BumpFunction(n, 0.8), k)
    assert moment(phi, (0,) * n) == pytest.approx(1.0, abs=1e-10)
    for alpha in multi_indices(n, k)[1:]:
        assert abs(moment(phi, alpha)) < 1e-8, alpha


def test_support_within_radius():
    phi = build_order_k(BumpFunction(2, 0.7), 2)
    p = np.array([[0.7, 0.0], [0.5, 0.5], [0.0, -0.71]])
    assert np.all(phi(p) == 0.0)


def test_odd_moments_vanish_by_symmetry():
    phi = from_bump(BumpFunction(2, 1.0))
    for alpha in ((1, 0), (0, 1), (1, 2), (3, 0)):
        assert abs(moment(phi, alpha)) < 1e-12


def test_order_out_of_range_and_singular():
    with pytest.raises(ValueError):
        build_order_k(BumpFunction(1), 7)
    # a tiny node count cannot separate high moments
    with pytest.raises(SingularMomentSystemError):
        build_order_k(BumpFunction(1, 1.0), 6, N=2)


def test_verify_order_rates():
    eps = dyadic_sweep()
    poly = {"quad": lambda y: 1.0 + y[..., 0] ** 2 - 3 * y[..., 0] ** 3}
    rep = verify_order(build_order_k(BumpFunction(1), 3), suite=poly, eps=eps)
    assert rep["quad"].floor and rep.passed

    rep = verify_order(from_bump(BumpFunction(1)), suite={"sin": lambda y: np.sin(y[..., 0])}, eps=eps)
    assert rep["sin"].slope == pytest.approx(2.0, abs=0.1)

    rep = verify_order(build_order_k(BumpFunction(1), 3), suite={"exp": lambda y: np.exp(y[..., 0])},
                       eps=2.0 ** -np.arange(1, 8))
    assert rep["exp"].slope >= 3.8 and rep.passed


def test_verify_order_needs_suite():
    with pytest.raises(ValueError):
        verify_order(from_bump(BumpFunction(1)), suite={})
