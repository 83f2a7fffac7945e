from __future__ import annotations

import numpy as np
import pytest
import sympy as sp

from vstar.jets import Jet, value_of

t = sp.symbols("t")
K = 5


def jet_of(expr):
    ser = sp.series(expr, t, 0, K + 1).removeO()
    return Jet(np.array([[float(ser.coeff(t, k))] for k in range(K + 1)]))


def coeffs(expr):
    ser = sp.series(expr, t, 0, K + 1).removeO()
    return np.array([float(ser.coeff(t, k)) for k in range(K + 1)])


@pytest.mark.parametrize("fa,fb", [(1 + t + t ** 2, sp.exp(t)), (sp.cos(t) + 2, 1 + sp.sin(t))])
def test_arithmetic_matches_sympy_series(fa, fb):
    a, b = jet_of(fa), jet_of(fb)
    np.testing.assert_allclose((a * b).c[:, 0], coeffs(fa * fb), atol=1e-13)
    np.testing.assert_allclose((a / b).c[:, 0], coeffs(fa / fb), atol=1e-12)
    np.testing.assert_allclose((a ** 2.5).c[:, 0], coeffs(fa ** sp.Rational(5, 2)), atol=1e-12)
    np.testing.assert_allclose((a ** -1.5).c[:, 0], coeffs(fa ** sp.Rational(-3, 2)), atol=1e-12)
    np.testing.assert_allclose((3.0 - a).c[:, 0], coeffs(3 - fa), atol=1e-14)
    np.testing.assert_allclose((2.0 / b).c[:, 0], coeffs(2 / fb), atol=1e-12)


def test_derivatives_scale_by_factorial():
    j = jet_of(sp.exp(2 * t))
    np.testing.assert_allclose(j.derivatives()[:, 0], [2.0 ** k for k in range(K + 1)], rtol=1e-12)


def test_constant_and_linear():
    c = Jet.constant(np.arange(3.0), 2)
    assert c.K == 2 and np.all(c.c[1:] == 0)
    d = c.linear(lambda a: 2 * a)
    np.testing.assert_array_equal(d.value, 2 * np.arange(3.0))
    np.testing.assert_array_equal(value_of(d), d.value)
    assert value_of(1.5) == 1.5
