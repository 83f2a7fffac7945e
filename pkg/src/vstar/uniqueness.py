"""Stability machinery: extension across the vacuum boundary, relative entropy,
the Newtonian potential estimate and the Lagrangian uniqueness functional."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import PchipInterpolator

from .dynamics import LagrangianState
from .errors import ConfigurationError, ValidationError
from .eulerian import EulerianRadial, to_eulerian
from .grid import fornberg_weights
from .io import write_json
from .solver import monitor_apriori
from .weights import WeightSet, smoothstep

log = logging.getLogger(__name__)

DEFAULT_EPS_CELLS = 5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


# --- extension -----------------------------------------------------------------------

def eta_cutoff(s, eps: float):
    """1 on [0, eps/3], 0 on [2 eps/3, eps], smoothstep in between."""
    third = eps / 3.0
    return 1.0 - smoothstep((np.asarray(s, dtype=float) - third) / third)


@dataclass(frozen=True)
class ExtendedRadial:
    r_nodes: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    R: float
    t: float
    eps: float
    r_max: float
    u_R: float          # one-sided boundary value of u
    du_R: float         # one-sided boundary derivative of u

    @property
    def interior(self) -> np.ndarray:
        return self.r_nodes <= self.R

    def eta(self, s):
        return eta_cutoff(s, self.eps)


def _boundary_spacing(sol: EulerianRadial, k: int = 5) -> float:
    r = sol.r_nodes[sol.r_nodes < sol.R]
    return float(np.mean(np.diff(r[-(k + 1):])))


def _edge_poly(r, f, at, npts, deriv):
    return float(f[-npts:] @ fornberg_weights(at, r[-npts:], deriv)[:, deriv])


def extend_radial(sol: EulerianRadial, eps: float | None = None, r_max: float | None = None,
                  refine: int = 4, npts: int = 4) -> ExtendedRadial:
    """Extend (rho, u) past R: rho = 0 outside, u(R+s) = eta(s)[u(R) + s u'(R)].

    eps defaults to DEFAULT_EPS_CELLS boundary cells and r_max to R + 2 eps.
    The exterior is sampled at the boundary spacing divided by `refine`.
    """
    hb = _boundary_spacing(sol)
    eps = DEFAULT_EPS_CELLS * hb if eps is None else float(eps)
    if eps <= 0:
        raise ValidationError("extension width eps must be positive")
    R = float(sol.R)
    r_max = R + 2.0 * eps if r_max is None else float(r_max)
    if eps > r_max - R:
        raise ConfigurationError(f"eps={eps:.3g} exceeds the padding r_max - R = {r_max - R:.3g}")
    inside = sol.r_nodes < R
    ri, rho_i, u_i = sol.r_nodes[inside], sol.rho[inside], sol.u[inside]
    uR = _edge_poly(ri, u_i, R, npts, 0)
    duR = _edge_poly(ri, u_i, R, npts, 1)
    rhoR = max(_edge_poly(ri, rho_i, R, 3, 0), 0.0)
    # centre value of the even field rho from the first three nodes in r^2
    rho_c = float(rho_i[:3] @ fornberg_weights(0.0, ri[:3] ** 2, 0)[:, 0])
    step = hb / refine
    m = max(int(math.ceil((r_max - R) / step)), 1)
    s = np.linspace(0.0, r_max - R, m + 1)[1:]
    ue = eta_cutoff(s, eps) * (uR + s * duR)
    r = np.concatenate([[0.0], ri, [R], R + s])
    rho = np.concatenate([[max(rho_c, 0.0)], rho_i, [rhoR], np.zeros(m)])
    u = np.concatenate([[0.0], u_i, [uR], ue])
    return ExtendedRadial(r, rho, u, R, sol.t, eps, r_max, uR, duR)


@dataclass(frozen=True)
class RegularityReport:
    drho_inner: float
    drho_outer: float
    du_inner: float
    du_outer: float
    u_jump: float
    gamma: float

    @property
    def drho_jump(self) -> float:
        return abs(self.drho_inner - self.drho_outer)

    @property
    def du_jump(self) -> float:
        return abs(self.du_inner - self.du_outer)

    @property
    def expected(self) -> str:
        return "C1" if self.gamma < 2.0 else "W1inf"

    def to_dict(self) -> dict:
        return {"drho_inner": self.drho_inner, "drho_outer": self.drho_outer,
                "drho_jump": self.drho_jump, "du_inner": self.du_inner,
                "du_outer": self.du_outer, "du_jump": self.du_jump, "u_jump": self.u_jump,
                "gamma": self.gamma, "expected": self.expected}


def extension_regularity(ext: ExtendedRadial, gamma: float, npts: int = 4) -> RegularityReport:
    """One-sided slopes of rho and u at R from each side and their jumps."""
    r = ext.r_nodes
    inner = np.flatnonzero((r < ext.R) & (r > 0))
    outer = np.flatnonzero(r > ext.R)
    ri, ro = r[inner], r[outer[:npts]]
    R = ext.R
    drho_in = _edge_poly(ri, ext.rho[inner], R, npts, 1)
    du_in = _edge_poly(ri, ext.u[inner], R, npts, 1)
    # outer side: polynomial through R and the first exterior nodes
    ro_full = np.concatenate([[R], ro])
    w = fornberg_weights(R, ro_full, 1)[:, 1]
    drho_out = float(np.concatenate([[0.0], ext.rho[outer[:npts]]]) @ w)
    du_out = float(np.concatenate([[ext.u_R], ext.u[outer[:npts]]]) @ w)
    u_in = _edge_poly(ri, ext.u[inner], R, npts, 0)
    u_out = float(ext.u[outer[0]] - (ro[0] - R) * du_out) if outer.size else math.nan
    return RegularityReport(drho_in, drho_out, du_in, du_out, abs(u_in - u_out), float(gamma))


# --- relative entropy ----------------------------------------------------------------------

def rel_entropy_density(rho1, u1, rho2, u2, gamma: float):
    """1/(g-1)[rho2^g - rho1^g - g rho1^(g-1)(rho2 - rho1)] + rho2 |u2 - u1|^2 / 2."""
    rho1, rho2 = np.asarray(rho1, dtype=float), np.asarray(rho2, dtype=float)
    if np.any(rho1 < 0) or np.any(rho2 < 0):
        raise ValidationError("densities must be non-negative")
    if np.any(np.asarray(gamma) <= 1):
        raise ValidationError("gamma must exceed 1")
    du = np.asarray(u2, dtype=float) - np.asarray(u1, dtype=float)
    p = (rho2 ** gamma - rho1 ** gamma - gamma * rho1 ** (gamma - 1.0) * (rho2 - rho1)) / (gamma - 1.0)
    return p + 0.5 * rho2 * du * du


def rel_entropy_lower_bound(rho1, u1, rho2, u2, gamma: float):
    """(g/2)(rho1 + rho2)^(g-2)(rho2 - rho1)^2 + rho2 |u2 - u1|^2 / 2 (valid for 1 < g <= 2)."""
    rho1, rho2 = np.asarray(rho1, dtype=float), np.asarray(rho2, dtype=float)
    s = rho1 + rho2
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(s > 0, 0.5 * gamma * np.where(s > 0, s, 1.0) ** (gamma - 2.0), 0.0)
    du = np.asarray(u2, dtype=float) - np.asarray(u1, dtype=float)
    return c * (rho2 - rho1) ** 2 + 0.5 * rho2 * du * du


def entropy_bound_sweep(rho_values, du_values, gammas, rtol: float = 1e-12) -> dict:
    """Check the lower bound on the full tensor grid of (rho1, rho2, du, gamma)."""
    r1, r2, du, g = np.meshgrid(np.asarray(rho_values, float), np.asarray(rho_values, float),
                                np.asarray(du_values, float), np.asarray(gammas, float),
                                indexing="ij")
    if np.any(g <= 1) or np.any(g > 2):
        raise ValidationError("the lower bound is stated for 1 < gamma <= 2")
    eta = rel_entropy_density(r1, 0.0, r2, du, g)
    low = rel_entropy_lower_bound(r1, 0.0, r2, du, g)
    scale = r1 ** g + r2 ** g + r2 * du * du + 1e-300
    margin = (eta - low) / scale
    worst = int(np.argmin(margin))
    return {"points": int(eta.size), "violations": int(np.sum(margin < -rtol)),
            "min_margin": float(margin.flat[worst]),
            "worst": [float(a.flat[worst]) for a in (r1, r2, du, g)]}


def rel_entropy_flux(rho1, u1, rho2, u2, gamma: float, A: float = 1.0):
    """Radial relative entropy flux q*(U1, U2) for p = A rho^gamma."""
    rho1, rho2 = np.asarray(rho1, dtype=float), np.asarray(rho2, dtype=float)
    u1, u2 = np.asarray(u1, dtype=float), np.asarray(u2, dtype=float)
    k = A * gamma / (gamma - 1.0)

    def q(rho, u):
        return (0.5 * rho * u * u + k * rho ** gamma) * u

    m1, m2 = rho1 * u1, rho2 * u2
    p1, p2 = A * rho1 ** gamma, A * rho2 ** gamma
    d_rho = -0.5 * u1 * u1 + k * rho1 ** (gamma - 1.0)
    return q(rho2, u2) - q(rho1, u1) - (d_rho * (m2 - m1) + u1 * (m2 * u2 + p2 - m1 * u1 - p1))


def rel_entropy_rhs(r, rho1, u1, rho2, u2, gamma: float, du1_dr, dpsi1=None, dpsi2=None,
                    kappa: float = 0.0, A: float = 1.0):
    """Pointwise right-hand side of the radial relative entropy identity.

    kappa rho2 (u1 - u2)(Psi2 - Psi1)' - [p2 - p1 - p'(rho1)(rho2 - rho1)] div u1
    - rho2 (u2 - u1)^2 u1'.
    """
    r = np.asarray(r, dtype=float)
    rho1, rho2 = np.asarray(rho1, dtype=float), np.asarray(rho2, dtype=float)
    du = np.asarray(u2, dtype=float) - np.asarray(u1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        div = np.where(r > 0, du1_dr + 2.0 * np.asarray(u1) / np.where(r > 0, r, 1.0), 3.0 * du1_dr)
    pr = A * (rho2 ** gamma - rho1 ** gamma - gamma * rho1 ** (gamma - 1.0) * (rho2 - rho1))
    out = -pr * div - rho2 * du * du * du1_dr
    if kappa:
        out = out + kappa * rho2 * (-du) * (np.asarray(dpsi2) - np.asarray(dpsi1))
    return out


def _common_nodes(a, b) -> np.ndarray:
    return np.unique(np.concatenate([a.r_nodes, b.r_nodes]))


def _resample(ext, r):
    rho = PchipInterpolator(ext.r_nodes, ext.rho, extrapolate=False)(r)
    u = PchipInterpolator(ext.r_nodes, ext.u, extrapolate=False)(r)
    return np.nan_to_num(rho, nan=0.0).clip(min=0.0), np.nan_to_num(u, nan=0.0)


def rel_entropy_integral(a: ExtendedRadial, b: ExtendedRadial, gamma: float) -> float:
    """Integral of eta*(U_a, U_b) 4 pi r^2 dr over the union of the two node sets.

    Both solutions are resampled with monotone cubic interpolation and each
    interval is integrated with four-point Gauss-Legendre.
    """
    nodes = _common_nodes(a, b)
    lo, hi = nodes[:-1], nodes[1:]
    half = 0.5 * (hi - lo)
    r = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_X[None, :]
    ra, ua = _resample(a, r.ravel())
    rb, ub = _resample(b, r.ravel())
    f = rel_entropy_density(ra, ua, rb, ub, gamma).reshape(r.shape) * 4.0 * math.pi * r * r
    return float(np.sum(half * (f @ _GL_W)))


# --- potential ----------------------------------------------------------------------------

def _radial_gradient(r, f, G: float = 1.0) -> np.ndarray:
    """(4 pi G / r^2) int_0^r f s^2 ds on nodes r (r[0] may be 0)."""
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    if r[0] > 0:
        rr, ff = np.concatenate([[0.0], r]), np.concatenate([[f[0]], f])
    else:
        rr, ff = r, f
    m = cumulative_simpson(ff * rr * rr, x=rr, initial=0.0)
    if r[0] > 0:
        m = m[1:]
        rr = r
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(rr > 0, 4.0 * math.pi * G * m / np.where(rr > 0, rr, 1.0) ** 2, 0.0)
    return g


def potential_gradient(sol, G: float = 1.0) -> np.ndarray:
    """d Psi/dr on sol.r_nodes for Laplace Psi = 4 pi G rho (regular at r = 0)."""
    if np.any(np.asarray(sol.rho) < 0):
        raise ValidationError("density must be non-negative")
    return _radial_gradient(sol.r_nodes, sol.rho, G)


def total_mass(sol) -> float:
    """4 pi int rho r^2 dr (over the nodes, with r = 0 and r = R closing the range)."""
    r, rho = np.asarray(sol.r_nodes), np.asarray(sol.rho)
    if r[0] > 0:
        r, rho = np.concatenate([[0.0], r]), np.concatenate([[rho[0]], rho])
    return float(4.0 * math.pi * simpson(rho * r * r, x=r))


@dataclass(frozen=True)
class PotentialEstimate:
    lhs: float
    rhs_factor: float
    ratio: float


def potential_estimate_check(r, h) -> PotentialEstimate:
    """|grad N[h]|_2^2 against (int |h|^(4/3)) (int |h|)^(2/3), radial, 3-D measure.

    N[h] is the Newtonian potential int h(y)/|x-y| dy, so |dN/dr| is
    (4 pi / r^2) int_0^r h s^2 ds. The exterior beyond the last node (where h
    vanishes) contributes 64 pi^3 M^2 / r_max with M = int h s^2 ds.
    """
    r = np.asarray(r, dtype=float)
    h = np.asarray(h, dtype=float)
    if r.ndim != 1 or r.shape != h.shape or np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValidationError("need ascending radial nodes and matching h")
    if abs(h[-1]) > 0:
        raise ValidationError("h must vanish at the last node (compact support)")
    if not np.any(h):
        return PotentialEstimate(0.0, 0.0, 0.0)
    # positive and negative parts are handled by linearity of the potential
    g = _radial_gradient(r, np.maximum(h, 0.0)) - _radial_gradient(r, np.maximum(-h, 0.0))
    if r[0] > 0:
        rr = np.concatenate([[0.0], r])
        g, hh = np.concatenate([[0.0], g]), np.concatenate([[h[0]], h])
    else:
        rr, hh = r, h
    w = 4.0 * math.pi * rr * rr
    M = simpson(hh * rr * rr, x=rr)
    lhs = simpson(g * g * w, x=rr) + 64.0 * math.pi ** 3 * M * M / rr[-1]
    a = simpson(np.abs(hh) ** (4.0 / 3.0) * w, x=rr)
    b = simpson(np.abs(hh) * w, x=rr)
    rhs = a * b ** (2.0 / 3.0)
    return PotentialEstimate(float(lhs), float(rhs), float(lhs / rhs) if rhs > 0 else 0.0)


def random_radial_family(rng: np.random.Generator, count: int, r):
    """Bounded, compactly supported radial test functions on nodes r (ending at the support edge).

    Mixtures of bumps, shells and signed pieces with random supports inside [0, r[-1]].
    """
    r = np.asarray(r, dtype=float)
    L = r[-1]
    out = []
    for _ in range(count):
        kind = rng.integers(3)
        a = rng.uniform(0.2, 1.0) * L
        if kind == 0:       # smooth ball profile
            p = rng.uniform(0.5, 3.0)
            h = np.clip(1.0 - (r / a) ** 2, 0.0, None) ** p
        elif kind == 1:     # shell
            c = rng.uniform(0.0, 0.8) * a
            h = np.where((r > c) & (r < a), np.sin(np.pi * (r - c) / (a - c)), 0.0)
        else:               # signed oscillation
            k = rng.integers(1, 5)
            h = np.where(r < a, np.cos(k * np.pi * r / a) * (1.0 - r / a), 0.0)
        h = h * rng.uniform(0.5, 2.0)
        h[-1] = 0.0
        out.append(h)
    return out


# --- Lagrangian uniqueness functional ------------------------------------------------------------

def coercivity_constants(w2: float) -> tuple[float, float]:
    """k1 = 1/(4 w2^5), k2 = 17/(8 w2^5)."""
    if w2 < 1:
        raise ValidationError("w2 bounds r/x and r' from above and must be >= 1")
    return 0.25 / w2 ** 5, 17.0 / 8.0 / w2 ** 5


def uniqueness_functional(theta, theta_t, W: WeightSet, w2: float, k1: float | None = None,
                          k2: float | None = None, nu_weighted: bool = False) -> float:
    """D = int [x sigma theta_t^2 + k1 (sigma theta')^2 + k2 (sigma theta/x)^2] dx.

    nu_weighted multiplies the kinetic term by (sigma/x)^(2 nu) (general gamma).
    """
    g = W.grid
    theta = g.check(theta, "theta")
    theta_t = g.check(theta_t, "theta_t")
    d1, d2 = coercivity_constants(w2)
    k1 = d1 if k1 is None else k1
    k2 = d2 if k2 is None else k2
    x, s = W.x, W.sigma
    dth = g.d_dx(theta, parity="odd")
    kin = x * s * theta_t ** 2
    if nu_weighted:
        kin = kin * W.sigma_over_x_pow(2.0 * W.nu)
    f = kin + k1 * (s * dth) ** 2 + k2 * (s * theta / x) ** 2
    return float(g.quadrature(f))


def smallness(theta, W: WeightSet) -> float:
    """sup_x |theta'| + |theta/x|."""
    g = W.grid
    return float(np.max(np.abs(g.d_dx(theta, parity="odd")) + np.abs(theta / W.x)))


@dataclass
class GronwallCertificate:
    ok: bool
    fitted_rate: float
    violation: bool = False
    conditional: bool = False
    C: float = math.nan

    def __iter__(self):
        return iter((self.ok, self.fitted_rate))


def gronwall_certificate(times, D, C: float, tol: float = 1e-14,
                         smallness_ok: bool = True) -> GronwallCertificate:
    """fitted_rate = max_t log(D(t)/D(0))/t; ok iff it is at most C.

    If D(0) = 0 but D(t) exceeds tol the uniqueness conclusion fails and the
    certificate carries the violation flag.
    """
    t = np.asarray(times, dtype=float)
    D = np.asarray(D, dtype=float)
    if t.shape != D.shape or t.size < 2:
        raise ValidationError("need matching time and D series with at least two entries")
    if np.any(D < 0):
        raise ValidationError("D must be non-negative")
    if D[0] <= tol:
        bad = bool(np.any(D > tol))
        return GronwallCertificate(not bad, 0.0 if not bad else math.inf, bad, not smallness_ok, C)
    later = t > t[0]
    with np.errstate(divide="ignore"):
        rates = np.log(D[later] / D[0]) / (t[later] - t[0])
    rate = float(np.max(rates)) if rates.size else 0.0
    return GronwallCertificate(bool(rate <= C), rate, False, not smallness_ok, C)


@dataclass
class TwinReport:
    times: np.ndarray
    D: np.ndarray
    D_normalized: np.ndarray
    smallness: np.ndarray
    w2: float
    eps0: float
    certificate: GronwallCertificate
    entropy: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def smallness_ok(self) -> bool:
        return bool(np.all(self.smallness <= self.eps0))

    def to_dict(self) -> dict:
        c = self.certificate
        return {"times": self.times, "D": self.D, "D_normalized": self.D_normalized,
                "smallness": self.smallness, "smallness_ok": self.smallness_ok, "w2": self.w2,
                "eps0": self.eps0, "entropy": self.entropy,
                "certificate": {"ok": c.ok, "fitted_rate": c.fitted_rate,
                                "violation": c.violation, "conditional": c.conditional,
                                "C": c.C}}

    def write_json(self, path):
        return write_json(path, self.to_dict())


def _common_times(a, b, tol=1e-9):
    ia, ib = [], []
    for i, t in enumerate(a.times):
        j = int(np.argmin(np.abs(b.times - t)))
        if abs(b.times[j] - t) <= tol * max(1.0, abs(t)):
            ia.append(i)
            ib.append(j)
    if not ia:
        raise ValidationError("the two trajectories share no output times")
    return np.array(ia), np.array(ib)


def twin_comparison(a, b, W: WeightSet | None = None, w2: float | None = None,
                    eps0: float = 0.1, C: float = 10.0, entropy: bool = False) -> TwinReport:
    """Uniqueness functional of theta = r_b - r_a along two trajectories on one grid."""
    W = W or a.W
    if a.grid.n != b.grid.n:
        raise ValidationError("twin trajectories must share the mass grid")
    ia, ib = _common_times(a, b)
    if w2 is None:
        w2 = 1.0
        for tr, idx in ((a, ia), (b, ib)):
            for i in idx:
                _, hi_rx, _, hi_rp = monitor_apriori(_lstate(tr, i), W)
                w2 = max(w2, hi_rx, hi_rp)
    D, Dn, sm, ent = [], [], [], []
    for i, j in zip(ia, ib):
        th = b.r[j] - a.r[i]
        tht = b.v[j] - a.v[i]
        d = uniqueness_functional(th, tht, W, w2)
        vnorm = float(W.grid.quadrature(W.x * W.sigma * a.v[i] ** 2))
        D.append(d)
        Dn.append(d / vnorm if vnorm > 0 else math.nan)
        sm.append(smallness(th, W))
        if entropy:
            ea = extend_radial(to_eulerian(_lstate(a, i), a.data))
            eb = extend_radial(to_eulerian(_lstate(b, j), b.data))
            ent.append(rel_entropy_integral(ea, eb, a.data.gamma))
    times = a.times[ia].astype(float)
    sm = np.array(sm)
    cert = gronwall_certificate(times, np.array(D), C, smallness_ok=bool(np.all(sm <= eps0)))
    return TwinReport(times, np.array(D), np.array(Dn), sm, float(w2), eps0, cert,
                      np.array(ent))


def _lstate(tr, i):
    return LagrangianState(float(tr.times[i]), tr.r[i], tr.v[i])
