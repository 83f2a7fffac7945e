"""Truncated Taylor series in time over spatial arrays (Taylor-mode AD).

A Jet holds normalized coefficients c[k] = f^(k)(t0) / k! with shape (K+1, n).
Plain ndarrays and scalars act as constants.
"""
from __future__ import annotations

import numpy as np


class Jet:
    __array_priority__ = 1000
    __array_ufunc__ = None

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    @property
    def K(self) -> int:
        return self.c.shape[0] - 1

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    @classmethod
    def constant(cls, value, K: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((K + 1,) + value.shape)
        c[0] = value
        return cls(c)

    def derivatives(self) -> np.ndarray:
        """Actual time derivatives k! c[k]."""
        fact = np.cumprod(np.r_[1.0, np.arange(1, self.K + 1)])
        return self.c * fact.reshape((-1,) + (1,) * (self.c.ndim - 1))

    def linear(self, op) -> "Jet":
        """Apply a linear spatial operator to every coefficient (op takes a 2D array)."""
        return Jet(op(self.c))

    def __neg__(self):
        return Jet(-self.c)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.c + other.c)
        c = self.c.copy()
        c[0] = c[0] + other
        return Jet(c)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self.c, other.c
            out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
            for k in range(out.shape[0]):
                for j in range(k + 1):
                    out[k] += a[j] * b[k - j]
            return Jet(out)
        return Jet(self.c * np.asarray(other, dtype=float))

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        a = self.c
        b = np.zeros_like(a)
        b[0] = 1.0 / a[0]
        for k in range(1, a.shape[0]):
            s = np.zeros_like(a[0])
            for j in range(1, k + 1):
                s += a[j] * b[k - j]
            b[k] = -s * b[0]
        return Jet(b)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.c / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        p = float(p)
        a = self.c
        b = np.zeros_like(a)
        b[0] = a[0] ** p
        for k in range(1, a.shape[0]):
            s = np.zeros_like(a[0])
            for j in range(1, k + 1):
                s += ((p + 1.0) * j - k) * a[j] * b[k - j]
            b[k] = s / (k * a[0])
        return Jet(b)


def value_of(f):
    return f.value if isinstance(f, Jet) else f
