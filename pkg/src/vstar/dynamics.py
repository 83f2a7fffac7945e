"""Right-hand sides of the Lagrangian system and Taylor jets in time.

The state is (r, v) on the mass grid with dr/dt = v. Every acceleration
function returns dv/dt directly. All of them accept either ndarrays or
Jet objects for r (and v), so the same code produces time derivatives at
t = 0 through Taylor-mode arithmetic.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BlowupError, CapabilityError, DataIncompatibilityError, ShellCrossingError
from .jets import Jet, value_of
from .profiles import InitialData
from .weights import WeightSet

log = logging.getLogger(__name__)

MAX_JET_ORDER = 4
# First-derivative stencil width used by the dynamics. Seven points (sixth order
# in the interior) keep the h^k/x^2 center error of the conservative flux form
# below the levels that matter for fourth time derivatives, and the resulting
# semi-discrete operator has no spurious growing modes.
DYN_WIDTH = 7


@dataclass(frozen=True)
class LagrangianState:
    t: float
    r: np.ndarray
    v: np.ndarray
    history: tuple = field(default=(), repr=False, compare=False)  # recent (t, v) pairs


@dataclass(frozen=True)
class Jets:
    """dv[k] = d^k v/dt^k and dr[k] = d^k r/dt^k at time t."""

    K: int
    dv: np.ndarray
    dr: np.ndarray
    t: float = 0.0

    @property
    def coefficients(self) -> list[np.ndarray]:
        return list(self.dv)


def _D(W: WeightSet, f, parity=None, bval=None, width=DYN_WIDTH):
    g = W.grid
    if isinstance(f, Jet):
        return f.linear(lambda c: g.derivative(c, 1, parity, bval, width))
    return g.derivative(f, 1, parity, bval, width)


def _guard(r, rp):
    r0, rp0 = value_of(r), value_of(rp)
    if not (np.isfinite(r0).all() and np.isfinite(rp0).all()):
        raise BlowupError("non-finite position or deformation gradient")
    if np.any(rp0 <= 0) or np.any(r0 <= 0):
        i = int(np.argmin(np.minimum(rp0, r0)))
        raise ShellCrossingError(f"shell crossing at node {i}: r'={float(rp0[i]):.3g}")


def _finite(a):
    if not np.isfinite(value_of(a)).all():
        raise BlowupError("non-finite acceleration")
    return a


def deformation(r, W: WeightSet):
    """r' with odd reflection through the origin."""
    return _D(W, r, "odd")


def gravity(r, data: InitialData, W: WeightSet):
    """-kappa 4 pi G m(x) / r^2; m is frozen by the mass identity."""
    if not data.kappa:
        return 0.0 * r
    return (-4.0 * math.pi * data.G * W.mass) / (r * r)


def _pressure(r, rp, W: WeightSet, gamma: float, Q):
    """Pressure part of dv/dt divided by -A, for Q = (x/r)^(2g-2) r'^-g.

    {[sigma^2 Q]' - 2 sigma^2 Q r'/r + ((2-g)/(g-1)) sigma x (sigma/x)' Q} / (x sigma).
    The flux sigma^2 Q is differenced in conservative form with its value 0 at a
    vacuum boundary.
    """
    x, sig = W.x, W.sigma
    s2Q = (sig * sig) * Q
    out = (_D(W, s2Q, "even", W.bval) - 2.0 * s2Q * rp / r) / (x * sig)
    if gamma != 2.0:
        out = out + ((2.0 - gamma) / (gamma - 1.0)) * W.dq * Q
    return out


def accel_general(r, data: InitialData, W: WeightSet, rp=None):
    """dv/dt from the sigma-weighted momentum equation, any gamma > 1.

    x sigma v_t + A{ [sigma^2 (x/r)^(2g-2) r'^-g]' - 2 (sigma^2/x)(x/r)^(2g-1) r'^(1-g)
                     + ((2-g)/(g-1)) sigma x (sigma/x)' (x/r)^(2g-2) r'^-g }
                + kappa G phi sigma x^2 (x/r)^2 = 0
    """
    if rp is None:
        rp = deformation(r, W)
    _guard(r, rp)
    g = data.gamma
    Q = (W.x / r) ** (2 * g - 2) * (1.0 / rp) ** g
    a = _pressure(r, rp, W, g, Q) * (-data.A) + gravity(r, data, W)
    return _finite(a)


def accel_gamma2(r, data: InitialData, W: WeightSet, rp=None):
    """dv/dt from x sigma v_t + A{[x^2 sigma^2/(r^2 r'^2)]' - 2 x^2 sigma^2/(r^3 r')} + gravity = 0.

    Shares the flux discretization of accel_general, so the two agree to
    rounding at gamma = 2.
    """
    if data.gamma != 2.0:
        raise CapabilityError("accel_gamma2 requires gamma = 2")
    if rp is None:
        rp = deformation(r, W)
    _guard(r, rp)
    Q = (W.x * W.x) / (r * r * rp * rp)
    a = _pressure(r, rp, W, 2.0, Q) * (-data.A) + gravity(r, data, W)
    return _finite(a)


def accel_physical(r, data: InitialData, W: WeightSet, rp=None):
    """dv/dt = -(A/rho0)(r/x)^2 d/dx[(x^2 rho0/(r^2 r'))^gamma] + gravity.

    Independent cross-check of accel_general; converges to it under refinement.
    """
    if rp is None:
        rp = deformation(r, W)
    _guard(r, rp)
    x = W.x
    f = (x / r) ** 2 * W.rho0 / rp
    dP = _D(W, f ** data.gamma, "even", W.bval)
    a = dP * (r / x) ** 2 * (-data.A / W.rho0) + gravity(r, data, W)
    return _finite(a)


def visc_coefficient(data: InitialData, W: WeightSet) -> np.ndarray:
    """(x sigma)^2 (sigma/x)^(2 nu), which simplifies to x^4 rho0^gamma."""
    return W.x ** 4 * W.rho0 ** data.gamma


def visc_rhs(v, data: InitialData, W: WeightSet, mu: float):
    """Regularization acceleration (gamma mu/(x^2 sigma)) [K (v/x)']', K = x^4 rho0^gamma."""
    if mu == 0:
        return 0.0 * v
    if mu < 0:
        raise ValueError("mu must be non-negative")
    x = W.x
    K = visc_coefficient(data, W)
    dflux = _D(W, K * _D(W, v / x, "even"), "odd", W.bval)
    return dflux * (data.gamma * mu / (x * x * W.sigma))


def visc_banded(data: InitialData, W: WeightSet, mu: float) -> np.ndarray:
    """Conservative three-point version of visc_rhs acting on v, in banded storage.

    Fluxes K (v/x)' live on cell faces and vanish at both ends, so the operator
    is symmetric negative semi-definite in the inner product sum x sigma dx v w.
    """
    g = W.grid
    x = g.x
    n = g.n
    K = visc_coefficient(data, W)
    Kf = 0.5 * (K[1:] + K[:-1])
    hf = np.diff(x)
    cell = g.spacing
    c = data.gamma * mu / (x ** 3 * W.q * cell)
    ab = np.zeros((3, n))
    up = Kf / hf           # coupling across face i+1/2
    ab[0, 1:] = c[:-1] * up / x[1:]
    ab[2, :-1] = c[1:] * up / x[:-1]
    diag = np.zeros(n)
    diag[:-1] -= up
    diag[1:] -= up
    ab[1] = c * diag / x
    return ab


def banded_matvec(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def total_accel(r, v, data: InitialData, W: WeightSet, mu: float = 0.0, forces: bool = True):
    a = accel_general(r, data, W) if forces else 0.0 * r
    if mu:
        a = a + visc_rhs(v, data, W, mu)
    return a


def state_jets(r, v, data: InitialData, W: WeightSet, K: int, mu: float = 0.0,
               forces: bool = True, max_order: int = MAX_JET_ORDER, t: float = 0.0) -> Jets:
    """Time derivatives 0..K of v (and 0..K+1 of r) at a state, by Taylor-mode arithmetic."""
    if K < 0:
        raise ValueError("K must be non-negative")
    if K > max_order:
        raise CapabilityError(f"jet order {K} exceeds cap {max_order}")
    n = W.grid.n
    rc = np.zeros((K + 2, n))
    vc = np.zeros((K + 1, n))
    rc[0], vc[0] = r, v
    rc[1] = v
    for k in range(K):
        a = total_accel(Jet(rc[:k + 1]), Jet(vc[:k + 1]), data, W, mu, forces)
        ak = a.c[k] if isinstance(a, Jet) else (a if k == 0 else 0.0)
        vc[k + 1] = ak / (k + 1)
        rc[k + 2] = vc[k + 1] / (k + 2)
    if not (np.isfinite(vc).all() and np.isfinite(rc).all()):
        raise DataIncompatibilityError("non-finite Taylor coefficient; data too rough for jets")
    return Jets(K, Jet(vc).derivatives(), Jet(rc).derivatives(), t)


def compat_jets(data: InitialData, W: WeightSet, K: int, mu: float = 0.0, forces: bool = True,
                max_order: int = MAX_JET_ORDER) -> Jets:
    """d^k v/dt^k at t = 0 implied by the equations, k = 0..K."""
    return state_jets(data.x.copy(), data.u0.copy(), data, W, K, mu, forces, max_order)


def _balanced_weights(W: WeightSet, data: InitialData, rho0: np.ndarray) -> WeightSet:
    g = W.grid
    q = rho0 ** (data.gamma - 1.0)
    dq = g.d_dx(q, parity="even")
    mass = g.prefix_moment(np.maximum(rho0, 0.0))
    return replace(W, rho0=rho0, q=q, sigma=q * g.x, dq=dq, dsigma=q + g.x * dq, mass=mass,
                   phi=4.0 * math.pi * mass / g.x ** 3)


def balance_equilibrium(data: InitialData, W: WeightSet, iters: int = 8,
                        tol: float = 1e-14) -> InitialData:
    """Newton-polish rho0 so that the semi-discrete acceleration at r = x vanishes.

    The Jacobian of the residual a(x) is formed column by column with finite
    differences (n residual evaluations per iteration). At gamma = 2 hydrostatic
    balance is linear in rho0, so the Jacobian has the scaling direction as a
    null vector; steps are minimum-norm least-squares solutions.
    """
    x = W.x
    n = x.size
    rho = data.rho0.copy()

    def resid(rho):
        Wb = _balanced_weights(W, data, rho)
        return accel_general(x, data, Wb)

    F = resid(rho)
    scale = max(float(np.abs(F).max()), 1e-300)
    for it in range(iters):
        if np.abs(F).max() <= tol:
            break
        J = np.empty((n, n))
        for j in range(n):
            e = 1e-7 * max(rho[j], 1e-8)
            rj = rho.copy()
            rj[j] += e
            J[:, j] = (resid(rj) - F) / e
        step = np.linalg.lstsq(J, F, rcond=1e-10)[0]
        lam = 1.0
        while lam > 1e-3:
            new = rho - lam * step
            if np.all(new > 0):
                Fn = resid(new)
                if np.abs(Fn).max() < np.abs(F).max():
                    break
            lam *= 0.5
        else:
            log.debug("balance_equilibrium: no descent at iteration %d", it)
            break
        rho, F = new, Fn
    log.debug("balance_equilibrium: residual %.3g -> %.3g", scale, float(np.abs(F).max()))
    return InitialData(data.grid, rho, data.u0, gamma=data.gamma, kappa=data.kappa, A=data.A,
                       G=data.G, R0=data.R0, label=data.label + "+balanced")
