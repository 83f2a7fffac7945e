"""Higher-order weighted energy functionals and the short-time boundedness check.

Each functional is described by a static manifest of TermSpec entries. A term
is the (squared) H^s norm of

    zeta^c * sigma^a * (sigma/x)^b * d_x^m (d_t^k v) [/ x]

and is evaluated on the grid from a stack of time derivatives of v.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .dynamics import MAX_JET_ORDER, state_jets
from .errors import CapabilityError, ValidationError
from .grid import fornberg_weights
from .io import write_csv, write_json
from .weights import WeightSet, fractional_norm

log = logging.getLogger(__name__)

# Derivative cap for internal norm evaluation (public norm helpers stop at 3;
# the general-gamma functionals need fourth spatial derivatives).
INTERNAL_MAX_DERIV = 6
_SUP = str.maketrans("0123456789-.", "⁰¹²³⁴⁵⁶⁷⁸⁹⁻·")


@dataclass(frozen=True)
class TermSpec:
    time: int              # order of the time derivative of v
    sigma: float = 0.0     # exponent of sigma
    ratio: float = 0.0     # exponent of sigma / x
    dx: int = 0            # spatial derivatives applied before weighting
    norm: float = 0.0      # Sobolev index of the outer norm
    zeta: bool = False
    over_x: bool = False
    squared: bool = True
    family: str = ""

    @property
    def label(self) -> str:
        w = ""
        if self.zeta:
            w += "ζ"
        if self.sigma:
            w += "σ" + ("" if self.sigma == 1 else "^" + _num(self.sigma))
        if self.ratio:
            w += "(σ/x)" + ("" if self.ratio == 1 else "^" + _num(self.ratio))
        d = f"∂t{str(self.time).translate(_SUP)}" if self.time else ""
        if self.dx:
            d += f"∂x{str(self.dx).translate(_SUP)}"
        body = w + d + "v" + ("/x" if self.over_x else "")
        return f"‖{body}‖_{_num(self.norm)}" + ("²" if self.squared else "")

    def x_power(self) -> float:
        return self.sigma

    def q_power(self) -> float:
        """sigma^a (sigma/x)^b = x^a q^(a+b) with q = sigma/x."""
        return self.sigma + self.ratio


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:g}"


def nu_of(gamma: float) -> float:
    return (2.0 - gamma) / (2.0 * gamma - 2.0)


def l_of(gamma: float) -> int:
    """Time-derivative order of the 1 < gamma < 2 functional: 3 + 2 ceil(1/2 + nu)."""
    return 3 + 2 * math.ceil(0.5 + nu_of(gamma) - 1e-12)


# --- manifests -----------------------------------------------------------------

def manifest_gamma2(square_leading: bool = False) -> tuple[TermSpec, ...]:
    t = [TermSpec(4, sigma=1, norm=1, family="leading"),
         TermSpec(4, norm=0, squared=square_leading, family="leading")]
    for j in (1, 2):
        a, b = 4 - 2 * j, 5 - 2 * j
        f = f"j={j}"
        t += [TermSpec(a, sigma=1, norm=j + 1, family=f),
              TermSpec(a, norm=j, family=f),
              TermSpec(a, norm=j - 1, over_x=True, family=f),
              TermSpec(b, sigma=1.5, dx=j + 1, family=f),
              TermSpec(b, sigma=0.5, dx=j, family=f),
              TermSpec(b, norm=j - 0.5, family=f),
              TermSpec(b, norm=j - 1, over_x=True, family=f)]
    for j in (1, 2):
        b = 5 - 2 * j
        f = f"zeta j={j}"
        t += [TermSpec(b, sigma=1, norm=j + 1, zeta=True, family=f),
              TermSpec(b, norm=j, zeta=True, family=f)]
    return tuple(t)


def _manifest_general(nu: float, l: int, n_odd: int, n_even: int) -> tuple[TermSpec, ...]:
    """Shared layout of the gamma != 2 functionals.

    l is the top time order; the odd families use orders l - 2j + 1 for
    j = 1..n_odd and the even families l - 2j for j = 1..n_even.
    """
    t = [TermSpec(l, sigma=1, ratio=nu, dx=1, family="leading"),
         TermSpec(l, ratio=1 + nu, family="leading")]
    for j in range(1, n_odd + 1):
        k = l - 2 * j + 1
        f = f"odd j={j}"
        t.append(TermSpec(k, sigma=1.5 + nu, dx=j + 1, family=f))
        t += [TermSpec(k, sigma=0.5 + nu, dx=i, family=f) for i in range(j + 1)]
    for j in range(1, n_even + 1):
        k = l - 2 * j
        f = f"even j={j}"
        t.append(TermSpec(k, sigma=2 + nu, dx=j + 2, family=f))
        t += [TermSpec(k, sigma=1 + nu, dx=i + 1, family=f) for i in range(-1, j + 1)]
    for j in range(1, n_odd + 1):
        k = l - 2 * j + 1
        f = f"zeta odd j={j}"
        t += [TermSpec(k, sigma=1, norm=j + 1, zeta=True, family=f),
              TermSpec(k, norm=j, zeta=True, family=f),
              TermSpec(k, norm=j - 1, zeta=True, over_x=True, family=f)]
    for j in range(1, n_even + 1):
        k = l - 2 * j
        f = f"zeta even j={j}"
        t += [TermSpec(k, sigma=1, norm=j + 2, zeta=True, family=f),
              TermSpec(k, norm=j + 1, zeta=True, family=f),
              TermSpec(k, norm=j, zeta=True, over_x=True, family=f)]
    return tuple(t)


def manifest_lt2(gamma: float) -> tuple[TermSpec, ...]:
    if not 1.0 < gamma < 2.0:
        raise ValidationError("manifest_lt2 needs 1 < gamma < 2")
    l = l_of(gamma)
    return _manifest_general(nu_of(gamma), l, (l + 1) // 2, (l - 1) // 2)


def manifest_gt2(gamma: float) -> tuple[TermSpec, ...]:
    if not gamma > 2.0:
        raise ValidationError("manifest_gt2 needs gamma > 2")
    return _manifest_general(nu_of(gamma), 4, 2, 2)


def manifest_for(gamma: float, square_leading: bool = False) -> tuple[TermSpec, ...]:
    if gamma == 2.0:
        return manifest_gamma2(square_leading)
    return manifest_lt2(gamma) if gamma < 2.0 else manifest_gt2(gamma)


# --- reports ---------------------------------------------------------------------

@dataclass
class EnergyReport:
    total: float
    terms: dict
    t: float = 0.0
    K_available: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"total": self.total, "t": self.t, "K_available": self.K_available,
                "terms": dict(self.terms), "meta": dict(self.meta)}

    def write_json(self, path):
        return write_json(path, self.to_dict())


def write_energy_series_csv(reports: list[EnergyReport], path, meta: dict | None = None):
    if not reports:
        raise ValidationError("no energy reports to write")
    labels = list(reports[0].terms)
    rows = ([r.t, r.total] + [r.terms[k] for k in labels] for r in reports)
    return write_csv(path, ["t", "total"] + labels, rows, meta=meta)


# --- time derivatives ------------------------------------------------------------

@dataclass(frozen=True)
class TimeDerivatives(Sequence):
    """Stack fields[k] = d^k v / dt^k at time t."""

    fields: np.ndarray
    t: float
    method: str
    order: float           # truncation order in the snapshot spacing (inf for jets)
    r: np.ndarray | None = None

    def __len__(self):
        return self.fields.shape[0]

    def __getitem__(self, k):
        return self.fields[k]

    @property
    def K(self) -> int:
        return len(self) - 1


def _jets_at(traj, i: int, K: int, max_order: int) -> TimeDerivatives:
    cfg = traj.cfg
    J = state_jets(traj.r[i], traj.v[i], traj.data, traj.W, K, mu=cfg.mu, forces=cfg.forces,
                   max_order=max_order, t=float(traj.times[i]))
    return TimeDerivatives(J.dv, float(traj.times[i]), "jets", math.inf, traj.r[i])


def time_derivatives(traj, t: float, K: int, method: str = "auto", npts: int | None = None,
                     max_order: int = MAX_JET_ORDER) -> TimeDerivatives:
    """d^k v/dt^k, k = 0..K, at time t.

    'jets' uses Taylor-mode arithmetic at the stored state (t must be a
    snapshot); 'history' uses one-sided differences of the stored snapshots
    (K + 2 points by default, so the K-th derivative is second order);
    'auto' picks jets at t = 0 and history otherwise.
    """
    if K < 0:
        raise ValidationError("K must be non-negative")
    if method == "auto":
        method = "jets" if abs(t - traj.times[0]) <= 1e-12 else "history"
    if method == "jets":
        return _jets_at(traj, traj.index_of(t), K, max_order)
    if method != "history":
        raise ValidationError(f"unknown method {method!r}")
    npts = npts or K + 2
    times = np.asarray(traj.times)
    if times.size < npts or npts < K + 1:
        raise CapabilityError(f"need {max(npts, K + 1)} snapshots for order {K}, have {times.size}")
    end = int(np.searchsorted(times, t + 1e-12 * max(1.0, abs(t)), side="right"))
    start = min(max(end - npts, 0), times.size - npts)
    idx = np.arange(start, start + npts)
    w = fornberg_weights(t, times[idx], K)
    fields = w.T @ traj.v[idx]
    r = traj.r[idx[-1]] if end == idx[-1] + 1 and abs(times[idx[-1]] - t) < 1e-12 else None
    return TimeDerivatives(fields, float(t), "history", float(npts - K), r)


# --- evaluation --------------------------------------------------------------------

def _field_stack(derivs) -> list[np.ndarray]:
    if isinstance(derivs, TimeDerivatives):
        return list(derivs.fields)
    return [np.asarray(d, dtype=float) for d in derivs]


def _sq_norm(grid, G, s: float) -> float:
    if s == 0:
        return float(grid.quadrature(G * G))
    return fractional_norm(grid, G, s, cap=INTERNAL_MAX_DERIV) ** 2


def term_value(spec: TermSpec, D: np.ndarray, W: WeightSet) -> float:
    """Value of one term given the time derivative field D = d_t^k v."""
    g = W.grid
    F = D if spec.dx == 0 else g.derivative(D, spec.dx, parity="odd")
    if spec.q_power() < 0:
        raise ValidationError(f"term {spec.label} has a singular weight")
    w = W.x ** spec.x_power() * W.q ** spec.q_power()
    if spec.zeta:
        w = w * W.zeta
    G = w * F
    if spec.over_x:
        G = G / W.x
    sq = max(_sq_norm(g, G, spec.norm), 0.0)
    return sq if spec.squared else math.sqrt(sq)


def evaluate(manifest, derivs, W: WeightSet, t: float | None = None,
             meta: dict | None = None) -> EnergyReport:
    fields = _field_stack(derivs)
    need = max(s.time for s in manifest)
    if len(fields) <= need:
        ok = [s.label for s in manifest if s.time < len(fields)]
        raise CapabilityError(f"time derivatives up to order {need} required, got "
                              f"{len(fields) - 1}; evaluable terms: {ok}")
    for f in fields[:need + 1]:
        W.grid.check(f, "time derivative")
    terms = {}
    for spec in manifest:
        lab = spec.label
        if lab in terms:
            raise RuntimeError(f"duplicate term label {lab}")
        terms[lab] = term_value(spec, fields[spec.time], W)
    if t is None:
        t = derivs.t if isinstance(derivs, TimeDerivatives) else 0.0
    return EnergyReport(total=float(sum(terms.values())), terms=terms, t=float(t),
                        K_available=len(fields) - 1, meta=dict(meta or {}))


def energy_gamma2(derivs, W: WeightSet, square_leading: bool = False,
                  t: float | None = None) -> EnergyReport:
    if W.gamma != 2.0:
        raise CapabilityError("energy_gamma2 requires gamma = 2")
    return evaluate(manifest_gamma2(square_leading), derivs, W, t,
                    {"functional": "E", "gamma": 2.0, "square_leading": square_leading})


def energy_lt2(derivs, W: WeightSet, gamma: float | None = None,
               t: float | None = None) -> EnergyReport:
    gamma = W.gamma if gamma is None else gamma
    man = manifest_lt2(gamma)
    return evaluate(man, derivs, W, t, {"functional": "E_tilde", "gamma": gamma,
                                        "nu": nu_of(gamma), "l": l_of(gamma)})


def energy_gt2(derivs, W: WeightSet, gamma: float | None = None,
               t: float | None = None) -> EnergyReport:
    gamma = W.gamma if gamma is None else gamma
    man = manifest_gt2(gamma)
    return evaluate(man, derivs, W, t, {"functional": "E_hat", "gamma": gamma,
                                        "nu": nu_of(gamma), "l": 4})


def energy(derivs, W: WeightSet, square_leading: bool = False,
           t: float | None = None) -> EnergyReport:
    """Dispatch on W.gamma."""
    if W.gamma == 2.0:
        return energy_gamma2(derivs, W, square_leading, t)
    return energy_lt2(derivs, W, t=t) if W.gamma < 2.0 else energy_gt2(derivs, W, t=t)


def required_order(gamma: float) -> int:
    return l_of(gamma) if 1.0 < gamma < 2.0 else 4


# --- boundedness check -------------------------------------------------------------

def energy_series(traj, W: WeightSet | None = None, method: str = "history", stride: int = 1,
                  square_leading: bool = False, max_order: int | None = None) -> list[EnergyReport]:
    """Energy at every stride-th snapshot.

    t = 0 always uses jets. For t > 0 the default is snapshot differences:
    jets of a computed state amplify its grid-scale truncation error by
    roughly (c n)^4, while differences at the output cadence do not.
    """
    W = W or traj.W
    K = required_order(W.gamma)
    max_order = max(MAX_JET_ORDER, K) if max_order is None else max_order
    out = []
    for i in range(0, traj.times.size, max(1, int(stride))):
        t = float(traj.times[i])
        m = "jets" if i == 0 else method
        d = time_derivatives(traj, t, K, m, max_order=max_order)
        out.append(energy(d, W, square_leading, t))
    return out


def boundedness_check(traj, W: WeightSet | None = None, multiple: float = 2.0,
                    method: str = "history", stride: int = 1, atol: float = 1e-8,
                    square_leading: bool = False) -> tuple[bool, float]:
    """sup_t E(t) / E(0) along the trajectory, ok if it stays below `multiple`.

    When E(0) vanishes (equilibrium) the returned value is sup_t E(t) and ok
    means it stays below atol.
    """
    reports = energy_series(traj, W, method, stride, square_leading)
    E = np.array([r.total for r in reports])
    if not np.all(np.isfinite(E)):
        return False, math.inf
    E0 = E[0]
    if E0 <= atol:
        sup = float(E.max())
        return bool(sup <= atol), sup
    ratio = float(E.max() / E0)
    log.info("energy ratio sup E/E(0) = %.6g over %d snapshots", ratio, E.size)
    return bool(ratio <= multiple), ratio


theorem31_check = boundedness_check
