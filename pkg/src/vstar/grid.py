"""Lagrangian mass grid on (0, 1] with finite-difference and quadrature operators.

Nodes sit at x = g(xi) where xi is uniform and g(xi) = xi + (beta/pi) sin(pi xi)
clusters points toward x = 1 for beta in (0, 1). beta = 0 gives the uniform grid.
Derivative stencils are built with Fornberg weights directly in x, so the same
code covers uniform and clustered grids, parity ghosts at the origin and an
optional known value at x = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeError, ValidationError

PARITIES = (None, "odd", "even")


def fornberg_weights(z: float, xs, m: int) -> np.ndarray:
    """Finite-difference weights for derivatives 0..m at z on nodes xs.

    Returns an array of shape (len(xs), m + 1).
    """
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = xs[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - z
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def lagrange_integral_weights(nodes, a: float, b: float) -> np.ndarray:
    """Weights w with sum w_k f(nodes_k) = integral over [a, b] of the interpolant."""
    nodes = np.asarray(nodes, dtype=float)
    k = nodes.size
    c = 0.5 * (a + b)
    s = max(np.ptp(np.append(nodes, [a, b])), 1e-300)
    t = (nodes - c) / s
    ta, tb = (a - c) / s, (b - c) / s
    p = np.arange(k)
    moments = s * (tb ** (p + 1) - ta ** (p + 1)) / (p + 1)
    V = t[None, :] ** p[:, None]
    return np.linalg.solve(V, moments)


@dataclass(frozen=True)
class Stencil:
    """Sparse derivative operator: out_i = sum_k w[i,k] f[idx[i,k]] + wb[i] * f(1)."""

    idx: np.ndarray
    w: np.ndarray
    wb: np.ndarray
    uses_boundary: bool

    def apply(self, f: np.ndarray, bval=None) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        flat = f.ndim == 1
        f2 = f[None, :] if flat else f.reshape(-1, f.shape[-1])
        out = _kernels.stencil_apply(self.idx, self.w, f2)
        if self.uses_boundary:
            if bval is None:
                raise ValidationError("stencil needs a boundary value at x=1")
            b = np.broadcast_to(np.asarray(bval, dtype=float).reshape(-1, 1), (f2.shape[0], 1))
            out = out + b * self.wb[None, :]
        return out[0] if flat else out.reshape(f.shape[:-1] + (out.shape[-1],))


@dataclass(frozen=True)
class Grid:
    n: int
    offset: bool = True
    cluster: float = 0.0
    xi: np.ndarray = field(init=False, repr=False, compare=False)
    x: np.ndarray = field(init=False, repr=False, compare=False)
    jac: np.ndarray = field(init=False, repr=False, compare=False)
    _cache: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise ValidationError(f"grid needs at least 8 nodes, got n={self.n}")
        if not 0.0 <= self.cluster < 1.0:
            raise ValidationError(f"cluster parameter must lie in [0, 1), got {self.cluster}")
        i = np.arange(self.n, dtype=float)
        xi = (i + 0.5) / self.n if self.offset else (i + 1.0) / self.n
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "x", self._map(xi))
        object.__setattr__(self, "jac", 1.0 + self.cluster * np.cos(np.pi * xi))

    def _map(self, xi):
        return xi + (self.cluster / np.pi) * np.sin(np.pi * xi)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def spacing(self) -> np.ndarray:
        """Local cell widths around each node."""
        edges = self._map(np.clip(self.xi[:, None] + np.array([-0.5, 0.5]) / self.n, 0.0, 1.0))
        return edges[:, 1] - edges[:, 0]

    @property
    def has_right_node(self) -> bool:
        return not self.offset

    def check(self, f, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.n:
            raise ShapeError(f"{name} has {f.shape[-1]} nodes, grid has {self.n}")
        return f

    # --- derivatives -----------------------------------------------------

    def stencil(self, order: int, parity=None, right_value: bool = False,
                width: int | None = None) -> Stencil:
        if parity not in PARITIES:
            raise ValidationError(f"parity must be one of {PARITIES}")
        if order < 0:
            raise ValidationError("derivative order must be non-negative")
        width = int(width or order + 4)
        use_b = bool(right_value) and self.offset
        key = ("D", order, parity, use_b, width)
        if key in self._cache:
            return self._cache[key]
        n = self.n
        ng = width - 1 if parity else 0
        sign = -1.0 if parity == "odd" else 1.0
        pos = np.concatenate([-self.x[:ng][::-1], self.x, [1.0] if use_b else []])
        col = np.concatenate([np.arange(ng)[::-1], np.arange(n), [-1] if use_b else []]).astype(int)
        sgn = np.concatenate([np.full(ng, sign), np.ones(n), [1.0] if use_b else []])
        if pos.size < width:
            raise ValidationError(f"grid too small for a {width}-point stencil")
        idx = np.zeros((n, width), dtype=np.int64)
        w = np.zeros((n, width))
        wb = np.zeros(n)
        for i in range(n):
            s = min(max(ng + i - width // 2, 0), pos.size - width)
            sl = slice(s, s + width)
            c = fornberg_weights(self.x[i], pos[sl], order)[:, order] * sgn[sl]
            for k, (cc, wk) in enumerate(zip(col[sl], c)):
                if cc < 0:
                    wb[i] += wk
                    idx[i, k] = i
                else:
                    idx[i, k] = cc
                    w[i, k] = wk
        st = Stencil(idx, w, wb, use_b)
        self._cache[key] = st
        return st

    def derivative(self, f, order: int = 1, parity=None, right_value=None,
                   width: int | None = None) -> np.ndarray:
        """d^order f / dx^order at the nodes.

        parity: 'odd' or 'even' reflects f through x = 0 (ghost values);
        right_value: known value of f at x = 1 appended to the stencil.
        """
        f = self.check(f)
        st = self.stencil(order, parity, right_value is not None, width)
        return st.apply(f, right_value)

    def d_dx(self, f, parity=None, right_value=None) -> np.ndarray:
        return self.derivative(f, 1, parity, right_value)

    # --- quadrature --------------------------------------------------------

    def _piece_nodes(self, a: float, b: float, breaks: np.ndarray, k: int = 4) -> np.ndarray:
        lo = breaks[np.searchsorted(breaks, a, side="right") - 1]
        hi = breaks[np.searchsorted(breaks, b, side="left")]
        inside = np.flatnonzero((self.x >= lo) & (self.x <= hi))
        if inside.size == 0:
            raise ValidationError(f"no grid nodes in quadrature piece [{lo}, {hi}]")
        if inside.size <= k:
            return inside
        mid = 0.5 * (a + b)
        j = int(np.searchsorted(self.x[inside], mid))
        s = min(max(j - k // 2, 0), inside.size - k)
        return inside[s:s + k]

    def quadrature_weights(self, breakpoints=()) -> np.ndarray:
        bp = tuple(sorted(float(b) for b in breakpoints if 0.0 < b < 1.0))
        key = ("Q", bp)
        if key in self._cache:
            return self._cache[key]
        breaks = np.array((0.0,) + bp + (1.0,))
        pts = np.unique(np.concatenate([breaks, self.x]))
        w = np.zeros(self.n)
        for a, b in zip(pts[:-1], pts[1:]):
            nodes = self._piece_nodes(a, b, breaks)
            w[nodes] += lagrange_integral_weights(self.x[nodes], a, b)
        self._cache[key] = w
        return w

    @property
    def weights(self) -> np.ndarray:
        return self.quadrature_weights()

    def quadrature(self, f, breakpoints=()) -> float | np.ndarray:
        """Integral over (0, 1), exact for piecewise cubics between breakpoints."""
        f = self.check(f)
        return f @ self.quadrature_weights(breakpoints)

    def _cumulative_stencil(self) -> tuple[Stencil, np.ndarray, np.ndarray]:
        key = ("C",)
        if key in self._cache:
            return self._cache[key]
        breaks = np.array([0.0, 1.0])
        idx = np.zeros((self.n, 4), dtype=np.int64)
        w = np.zeros((self.n, 4))
        left = 0.0
        for i in range(self.n):
            nodes = self._piece_nodes(left, self.x[i], breaks)
            idx[i, :nodes.size] = nodes
            idx[i, nodes.size:] = nodes[0]
            w[i, :nodes.size] = lagrange_integral_weights(self.x[nodes], left, self.x[i])
            left = self.x[i]
        tail_nodes = self._piece_nodes(self.x[-1], 1.0, breaks)
        tail_w = (lagrange_integral_weights(self.x[tail_nodes], self.x[-1], 1.0)
                  if self.offset else np.zeros(tail_nodes.size))
        out = (Stencil(idx, w, np.zeros(self.n), False), tail_nodes, tail_w)
        self._cache[key] = out
        return out

    def cumulative(self, f) -> np.ndarray:
        """Running integral from 0 to each node."""
        f = self.check(f)
        st, _, _ = self._cumulative_stencil()
        return np.cumsum(st.apply(f), axis=-1)

    def prefix_moment(self, rho0) -> np.ndarray:
        """m(x) = integral_0^x rho0(y) y^2 dy at every node."""
        rho0 = self.check(rho0, "rho0")
        if np.any(rho0 < 0):
            raise DomainError("density must be non-negative")
        return self.cumulative(rho0 * self.x ** 2)

    def total_moment(self, rho0) -> float:
        rho0 = self.check(rho0, "rho0")
        return float(self.quadrature(rho0 * self.x ** 2))

    # --- extrapolation -------------------------------------------------------

    def extrapolate(self, f, at: float = 1.0, npts: int = 3, deriv: int = 0):
        """Value (or derivative) at `at` of the polynomial through the nearest end nodes."""
        f = self.check(f)
        nodes = np.arange(self.n - npts, self.n) if at >= 0.5 else np.arange(npts)
        c = fornberg_weights(at, self.x[nodes], deriv)[:, deriv]
        return f[..., nodes] @ c


def ceil_div(a: float, b: float) -> int:
    return max(1, int(math.ceil(a / b - 1e-12)))
