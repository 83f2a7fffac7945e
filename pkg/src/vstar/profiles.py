"""Initial data: vacuum profiles, polytropic equilibria, perturbations, file IO."""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, DomainError, IOFailure, ShapeError, ValidationError
from .grid import Grid, fornberg_weights

log = logging.getLogger(__name__)

SHAPES = ("quadratic", "linear_enthalpy", "polytrope")


@dataclass(frozen=True)
class InitialData:
    """Density and velocity on the mass grid plus physical constants.

    r(x, 0) = x, so x doubles as the initial radius. R0 is only carried as the
    reference length for output scaling.
    """

    grid: Grid
    rho0: np.ndarray
    u0: np.ndarray
    gamma: float = 2.0
    kappa: int = 0
    A: float = 1.0
    G: float = 1.0
    R0: float = 1.0
    label: str = field(default="", compare=False)

    def __post_init__(self):
        n = self.grid.n
        rho0 = np.asarray(self.rho0, dtype=float)
        u0 = np.asarray(self.u0, dtype=float)
        if rho0.shape != (n,) or u0.shape != (n,):
            raise ShapeError(f"rho0/u0 must have shape ({n},)")
        if not (np.isfinite(rho0).all() and np.isfinite(u0).all()):
            raise ValidationError("initial data contains non-finite values")
        if np.any(rho0 < 0):
            raise DomainError("rho0 must be non-negative")
        if not self.gamma > 1.0:
            raise DomainError(f"gamma must exceed 1, got {self.gamma}")
        if self.kappa not in (0, 1):
            raise ValidationError(f"kappa must be 0 or 1, got {self.kappa}")
        if self.A < 0 or self.G <= 0 or self.R0 <= 0:
            raise ValidationError("need A >= 0, G > 0, R0 > 0")
        object.__setattr__(self, "rho0", rho0)
        object.__setattr__(self, "u0", u0)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def nu(self) -> float:
        return (2.0 - self.gamma) / (2.0 * self.gamma - 2.0)

    def params(self) -> dict:
        return {"gamma": self.gamma, "kappa": self.kappa, "A": self.A, "G": self.G, "R0": self.R0}

    def with_velocity(self, u0) -> "InitialData":
        return replace(self, u0=np.asarray(u0, dtype=float))


def vacuum_profile(grid: Grid, gamma: float = 2.0, c: float = 1.0, shape: str = "quadratic",
                   u0=None, **params) -> InitialData:
    """Density with a physical vacuum boundary at x = 1.

    quadratic:       rho0 = c (1 - x^2)^(1/(gamma-1))
    linear_enthalpy: rho0 = c (1 - x)^(1/(gamma-1))   (not smooth at the origin)
    polytrope:       rho0 = c sin(pi x)/(pi x), the gamma = 2 equilibrium shape
    """
    if not gamma > 1:
        raise DomainError(f"gamma must exceed 1, got {gamma}")
    if c <= 0:
        raise DomainError("profile amplitude must be positive")
    x = grid.x
    shape = "linear_enthalpy" if shape == "linear" else shape
    if shape == "quadratic":
        rho0 = c * (1.0 - x ** 2) ** (1.0 / (gamma - 1.0))
    elif shape == "linear_enthalpy":
        rho0 = c * (1.0 - x) ** (1.0 / (gamma - 1.0))
    elif shape == "polytrope":
        rho0 = c * np.sinc(x)
    else:
        raise ValidationError(f"unknown shape {shape!r}; choose from {SHAPES}")
    u = np.zeros_like(x) if u0 is None else (u0(x) if callable(u0) else np.asarray(u0, float))
    return InitialData(grid, rho0, u, gamma=gamma, label=f"vacuum-{shape}", **params)


def check_physical_vacuum(data: InitialData, tol_floor: float = 1e-6) -> tuple[bool, float]:
    """Check the physical-vacuum condition on rho0^(gamma-1) at x = 1.

    Returns (ok, slope). The slope is the one-sided derivative from the last
    three nodes. It is compared against the same estimate at doubled spacing;
    if the two disagree by more than 10% the slope is not converging (a cusp,
    as for rho0 ~ sqrt(1-x)) and is reported as -inf.
    """
    g = data.grid
    q = data.rho0 ** (data.gamma - 1.0)
    n = g.n

    def slope(stride):
        nodes = np.arange(n - 1 - 2 * stride, n, stride)
        return float(q[nodes] @ fornberg_weights(1.0, g.x[nodes], 1)[:, 1])

    s1, s2 = slope(1), slope(2)
    edge = float(q[-3:] @ fornberg_weights(1.0, g.x[-3:], 0)[:, 0])
    interior_ok = bool(np.all(q[:-1] > 0))
    if abs(s1 - s2) > 0.1 * max(abs(s1), abs(s2)) and abs(s1) > tol_floor:
        if abs(s1) > abs(s2):
            log.debug("vacuum slope diverges under refinement: %g vs %g", s1, s2)
            return False, -math.inf
    ok = interior_ok and s1 < -tol_floor and s1 > -1.0 / tol_floor and abs(edge) <= g.h
    return ok, s1


# --- polytropic equilibria ---------------------------------------------------

def _lane_emden_zero(n: float) -> tuple[float, object]:
    """First zero xi1 of theta'' + 2 theta'/xi = -theta^n and a dense solution."""
    xi0 = 1e-4
    y0 = [1 - xi0 ** 2 / 6 + n * xi0 ** 4 / 120, -xi0 / 3 + n * xi0 ** 3 / 30]

    def rhs(xi, y):
        return [y[1], -np.maximum(y[0], 0.0) ** n - 2.0 * y[1] / xi]

    def surface(xi, y):
        return y[0]
    surface.terminal = True
    surface.direction = -1
    sol = solve_ivp(rhs, (xi0, 50.0), y0, method="DOP853", events=surface,
                    dense_output=True, rtol=1e-12, atol=1e-14)
    if not sol.t_events[0].size:
        raise DomainError(f"polytrope index n={n} has no finite radius")
    return float(sol.t_events[0][0]), sol.sol


def required_A(gamma: float, rho_c: float = 1.0, G: float = 1.0) -> float:
    """Pressure constant for which the equilibrium support is exactly [0, 1]."""
    if gamma == 2.0:
        return 2.0 * G / math.pi
    _check_equilibrium_gamma(gamma)
    n = 1.0 / (gamma - 1.0)
    xi1, _ = _lane_emden_zero(n)
    return 4.0 * math.pi * G * rho_c ** (1.0 - 1.0 / n) / ((n + 1.0) * xi1 ** 2)


def _check_equilibrium_gamma(gamma):
    if not (6.0 / 5.0 < gamma <= 2.0):
        raise DomainError(f"compact equilibria need 6/5 < gamma <= 2, got {gamma}")


def lane_emden_equilibrium(grid: Grid, gamma: float = 2.0, rho_c: float = 1.0,
                           G: float = 1.0, A: float | None = None, tol: float = 1e-8,
                           R0: float = 1.0, balance: bool = False) -> InitialData:
    """Static self-gravitating polytrope with support [0, 1].

    If A is given it must match required_A to relative tolerance `tol`.
    balance=True Newton-polishes rho0 so the discrete acceleration also vanishes
    (removes the O(h^p) force imbalance that high time derivatives amplify).
    """
    _check_equilibrium_gamma(gamma)
    if rho_c <= 0:
        raise DomainError("central density must be positive")
    A_req = required_A(gamma, rho_c, G)
    if A is not None and abs(A - A_req) > tol * A_req:
        err = ConfigurationError(f"equilibrium with support [0,1] needs A={A_req:.12g}, got A={A}")
        err.required_A = A_req
        raise err
    x = grid.x
    if gamma == 2.0:
        rho0 = rho_c * np.sinc(x)
    else:
        n = 1.0 / (gamma - 1.0)
        xi1, dense = _lane_emden_zero(n)
        theta = np.where(xi1 * x < 1e-4, 1 - (xi1 * x) ** 2 / 6, 0.0)
        big = xi1 * x >= 1e-4
        theta[big] = dense(xi1 * x[big])[0]
        rho0 = rho_c * np.maximum(theta, 0.0) ** n
    data = InitialData(grid, rho0, np.zeros_like(x), gamma=gamma, kappa=1, A=A_req, G=G,
                       R0=R0, label=f"equilibrium-gamma{gamma:g}")
    if balance:
        from .dynamics import balance_equilibrium
        from .weights import build_weights
        data = balance_equilibrium(data, build_weights(data))
    return data


def perturb(data: InitialData, mode: int, amplitude: float, kind: str = "velocity") -> InitialData:
    """Add amplitude * x (1 - x) sin(mode pi x) to u0, or a relative bump to rho0.

    The density perturbation is multiplicative, (1 + a (1-x) cos(mode pi x)),
    so the vacuum slope at x = 1 is preserved.
    """
    x = data.x
    if mode < 1:
        raise ValidationError("perturbation mode must be >= 1")
    if kind == "velocity":
        return replace(data, u0=data.u0 + amplitude * x * (1 - x) * np.sin(mode * np.pi * x))
    if kind == "density":
        factor = 1.0 + amplitude * (1 - x) * np.cos(mode * np.pi * x)
        if np.any(factor <= 0):
            raise DomainError("density perturbation too large: density would turn negative")
        return replace(data, rho0=data.rho0 * factor)
    raise ValidationError(f"unknown perturbation kind {kind!r}")


# --- columnar text IO ----------------------------------------------------------

_META_RE = re.compile(r"(\w+)=([^\s]+)")


def save_profile(data: InitialData, path) -> Path:
    path = Path(path)
    meta = " ".join(f"{k}={v!r}" for k, v in data.params().items())
    g = data.grid
    head = f"# vstar profile n={g.n} offset={int(g.offset)} cluster={g.cluster!r} {meta}\n"
    rows = np.column_stack([g.x, data.rho0, data.u0])
    try:
        with open(path, "w") as fh:
            fh.write(head)
            fh.write("x,rho0,u0\n")
            np.savetxt(fh, rows, delimiter=",", fmt="%.17g")
    except OSError as exc:
        raise IOFailure(f"cannot write profile {path}: {exc}") from exc
    return path


def load_profile(path, grid: Grid | None = None, **overrides) -> InitialData:
    """Read a profile written by save_profile (or any x,rho0,u0 table).

    When `grid` is given and its nodes differ from the file, values are
    resampled with monotone cubic interpolation.
    """
    path = Path(path)
    meta: dict = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read profile {path}: {exc}") from exc
    body = []
    header = None
    for line in lines:
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            meta.update(dict(_META_RE.findall(s)))
        elif header is None:
            header = [c.strip() for c in s.split(",")]
        else:
            body.append(s)
    if header is None or header[:3] != ["x", "rho0", "u0"]:
        raise ValidationError(f"{path}: expected header 'x,rho0,u0'")
    try:
        table = np.loadtxt(body, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed rows ({exc})") from exc
    xs, rho, u = table[:, 0], table[:, 1], table[:, 2]
    if grid is None:
        grid = Grid(int(meta.get("n", len(xs))), offset=bool(int(meta.get("offset", 1))),
                    cluster=float(meta.get("cluster", 0.0)))
    if xs.size != grid.n or not np.allclose(xs, grid.x, rtol=0, atol=1e-12):
        if np.any(np.diff(xs) <= 0):
            raise ValidationError(f"{path}: x column must be strictly increasing")
        log.info("resampling profile from %d to %d nodes", xs.size, grid.n)
        rho = np.maximum(PchipInterpolator(xs, rho, extrapolate=True)(grid.x), 0.0)
        u = PchipInterpolator(xs, u, extrapolate=True)(grid.x)
    params = {k: float(meta[k]) for k in ("gamma", "A", "G", "R0") if k in meta}
    if "kappa" in meta:
        params["kappa"] = int(float(meta["kappa"]))
    params.update(overrides)
    return InitialData(grid, rho, u, label=path.stem, **params)
