"""Weights derived from the initial density, cutoff functions and the norms
used by the energy functionals."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import _kernels
from .errors import CapabilityError, ResolutionError, ValidationError
from .grid import Grid, fornberg_weights
from .profiles import InitialData, check_physical_vacuum

log = logging.getLogger(__name__)

PUBLIC_MAX_DERIV = 3
# Smoothstep 6t^5 - 15t^4 + 10t^3 peaks at slope 15/8 on a unit transition; chi
# transitions over delta/2, so the shared bound for zeta and chi is 15/4.
CUTOFF_SLOPE = 15.0 / 4.0


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def zeta_cutoff(x, delta: float):
    """1 on [0, delta], 0 on [2 delta, 1]."""
    return 1.0 - smoothstep((np.asarray(x) - delta) / delta)


def chi_cutoff(x, delta: float):
    """0 on [0, delta/2], 1 on [delta, 1]."""
    return smoothstep((np.asarray(x) - 0.5 * delta) / (0.5 * delta))


@dataclass(frozen=True)
class WeightSet:
    grid: Grid
    gamma: float
    rho0: np.ndarray
    sigma: np.ndarray      # rho0^(gamma-1) x
    q: np.ndarray          # sigma / x = rho0^(gamma-1)
    dq: np.ndarray         # (sigma / x)'
    dsigma: np.ndarray     # sigma'
    phi: np.ndarray        # 4 pi x^-3 int_0^x rho0 y^2 dy
    mass: np.ndarray       # int_0^x rho0 y^2 dy
    d: np.ndarray
    m0: float
    m1: float
    delta0: float
    delta: float
    zeta: np.ndarray
    chi: np.ndarray
    s0: float
    vacuum: bool           # rho0 vanishes at x = 1, so fluxes get the boundary value 0

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def nu(self) -> float:
        return (2.0 - self.gamma) / (2.0 * self.gamma - 2.0)

    @property
    def bval(self):
        """Boundary value for degenerate fluxes at x = 1 (None when not vacuum)."""
        return 0.0 if self.vacuum else None

    def sigma_over_x_pow(self, p: float) -> np.ndarray:
        return self.q ** p if p else np.ones_like(self.q)


def _center_value(grid: Grid, f) -> float:
    """Value at x = 0 of the even interpolant through the first three nodes."""
    x2 = grid.x[:3] ** 2
    return float(f[:3] @ fornberg_weights(0.0, x2, 0)[:, 0])


def _window_end(x, margin) -> float:
    """Largest x such that margin >= 0 on [0, x], refined by a cubic spline root."""
    bad = np.flatnonzero(margin < 0)
    if bad.size == 0:
        return float(x[-1])
    j = int(bad[0])
    if j == 0:
        return 0.0
    lo, hi = max(j - 3, 0), min(j + 3, x.size)
    spl = CubicSpline(x[lo:hi], margin[lo:hi])
    try:
        return float(brentq(spl, x[j - 1], x[j]))
    except ValueError:
        return float(x[j - 1])


def build_weights(data: InitialData, delta: float | None = None, validate: bool = True,
                  min_cells: int = 4) -> WeightSet:
    """Assemble sigma, phi, d, the cutoff scale delta and the cutoffs.

    delta defaults to delta0 / 2 where delta0 is the end of the window on which
    m0 <= rho0 <= 3 m0 and m0s <= sigma' <= 3 m0s, with m0 = rho0(0)/2 and
    m0s = sigma'(0)/2 (the two coincide when rho0(0)^(gamma-1) = rho0(0)).
    """
    g = data.grid
    x = g.x
    if validate:
        ok, slope = check_physical_vacuum(data)
        if not ok:
            raise ValidationError(f"initial density fails the physical vacuum check (slope {slope})")
    rho0 = data.rho0
    q = rho0 ** (data.gamma - 1.0)
    sigma = q * x
    dq = g.d_dx(q, parity="even")
    dsigma = q + x * dq
    mass = g.prefix_moment(rho0)
    phi = 4.0 * math.pi * mass / x ** 3
    d = np.minimum(x, 1.0 - x)

    rho_c = _center_value(g, rho0)
    m0 = 0.5 * rho_c
    m0s = 0.5 * _center_value(g, q)
    margin = np.minimum.reduce([rho0 - m0, 3 * m0 - rho0, dsigma - m0s, 3 * m0s - dsigma])
    delta0 = _window_end(x, margin)
    if delta0 < min_cells * g.h:
        raise ResolutionError(f"delta0={delta0:.3g} spans fewer than {min_cells} grid cells")
    drho = g.d_dx(rho0, parity="even")
    d2rho = g.derivative(rho0, 2, parity="even")
    inside = x <= delta0
    m1 = float(max(np.abs(drho[inside]).max(), np.abs(d2rho[inside]).max()))
    if delta is None:
        delta = 0.5 * delta0
    elif not 0 < delta <= 0.5:
        raise ValidationError(f"delta override must lie in (0, 1/2], got {delta}")
    vacuum = abs(g.extrapolate(rho0)) <= max(g.h, 1e-12) * max(rho_c, 1.0)
    log.debug("weights: m0=%g delta0=%g delta=%g m1=%g vacuum=%s", m0, delta0, delta, m1, vacuum)
    return WeightSet(grid=g, gamma=data.gamma, rho0=rho0, sigma=sigma, q=q, dq=dq, dsigma=dsigma,
                     phi=phi, mass=mass, d=d, m0=m0, m1=m1, delta0=delta0, delta=float(delta),
                     zeta=zeta_cutoff(x, delta), chi=chi_cutoff(x, delta), s0=CUTOFF_SLOPE,
                     vacuum=bool(vacuum))


# --- norms -------------------------------------------------------------------

def _check_order(k: int, cap: int):
    if k > cap:
        raise CapabilityError(f"derivative order {k} exceeds supported order {cap}")


def derivatives(grid: Grid, F, k: int) -> list[np.ndarray]:
    """[F, F', ..., F^(k)] on the nodes."""
    F = grid.check(F)
    return [F] + [grid.derivative(F, m) for m in range(1, k + 1)]


def sobolev_norm(grid: Grid, F, k: int, cap: int = PUBLIC_MAX_DERIV, breakpoints=()) -> float:
    _check_order(k, cap)
    return math.sqrt(sum(grid.quadrature(D * D, breakpoints) for D in derivatives(grid, F, k)))


def gagliardo_seminorm_sq(grid: Grid, F, theta: float, dF=None) -> float:
    """Double-integral seminorm with kernel |x-y|^(-1-2 theta).

    Off-diagonal cell pairs use the midpoint rule; each diagonal cell is
    integrated analytically for the local linearization F ~ F(x_i) + F'(x_i)(x - x_i).
    """
    if not 0.0 < theta < 1.0:
        raise ValidationError("theta must lie in (0, 1)")
    F = grid.check(F)
    c = grid.spacing
    off = _kernels.gagliardo_sum(grid.x, c, F, theta)
    if dF is None:
        dF = grid.d_dx(F)
    p = 1.0 - 2.0 * theta
    diag = np.sum(dF * dF * 2.0 * c ** (p + 2.0) / ((p + 1.0) * (p + 2.0)))
    return off + float(diag)


def fractional_norm(grid: Grid, F, s: float, cap: int = PUBLIC_MAX_DERIV) -> float:
    """H^s norm; s = k + theta uses the full H^k norm plus the seminorm of D^k F."""
    if s < 0:
        raise ValidationError("Sobolev index must be non-negative")
    k = int(math.floor(s + 1e-12))
    theta = s - k
    if theta < 1e-12:
        return sobolev_norm(grid, F, k, cap)
    _check_order(k + 1, cap + 1)
    Ds = derivatives(grid, F, k + 1)
    base = sum(grid.quadrature(D * D) for D in Ds[:k + 1])
    return math.sqrt(base + gagliardo_seminorm_sq(grid, Ds[k], theta, dF=Ds[k + 1]))


def weighted_sobolev_norm(grid: Grid, F, a: float, b: int, cap: int = PUBLIC_MAX_DERIV) -> float:
    """(sum_{k<=b} int d^a |D^k F|^2)^(1/2) with d(x) = min(x, 1-x)."""
    if a <= 0 or b < 0:
        raise ValidationError("need a > 0 and b >= 0")
    _check_order(b, cap)
    d = np.minimum(grid.x, 1.0 - grid.x) ** a
    return math.sqrt(sum(grid.quadrature(d * D * D, breakpoints=(0.5,))
                         for D in derivatives(grid, F, b)))


def sigma_weighted_norm(F, sigma_power: float, deriv: int, W: WeightSet,
                        cap: int = PUBLIC_MAX_DERIV) -> float:
    """L2 norm of sigma^p D^deriv F."""
    _check_order(deriv, cap)
    g = W.grid
    D = g.check(F) if deriv == 0 else g.derivative(F, deriv)
    G = W.sigma ** sigma_power * D
    return math.sqrt(g.quadrature(G * G))


def write_norm_table(path, rows: dict, meta: dict | None = None):
    from .io import write_csv
    return write_csv(path, ["term", "value"], [(k, v) for k, v in rows.items()], meta=meta)
