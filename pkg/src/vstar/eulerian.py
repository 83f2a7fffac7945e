"""Lagrangian to Eulerian conversion, mass bookkeeping and boundary kinematics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .dynamics import LagrangianState
from .errors import ShellCrossingError, ValidationError
from .grid import fornberg_weights
from .io import write_csv
from .profiles import InitialData


@dataclass(frozen=True)
class EulerianRadial:
    r_nodes: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    R: float
    t: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.r_nodes, dtype=float)
        if r.ndim != 1 or r.size != np.size(self.rho) or r.size != np.size(self.u):
            raise ValidationError("r_nodes, rho and u must be 1-D of equal length")
        if np.any(np.diff(r) <= 0):
            raise ValidationError("r_nodes must be strictly increasing")
        if np.any(np.asarray(self.rho) < 0):
            raise ValidationError("density must be non-negative")
        object.__setattr__(self, "r_nodes", r)
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))

    def boundary_value(self, f, npts: int = 3, deriv: int = 0) -> float:
        """One-sided polynomial extrapolation of f (on r_nodes) to r = R."""
        nodes = np.flatnonzero(self.r_nodes < self.R)[-npts:]
        return float(f[nodes] @ fornberg_weights(self.R, self.r_nodes[nodes], deriv)[:, deriv])


@dataclass(frozen=True)
class ConversionReport:
    R: float
    mass_lagrangian: float
    mass_eulerian: float
    Rdot_consistency: float = float("nan")

    @property
    def mass_error(self) -> float:
        return abs(self.mass_eulerian - self.mass_lagrangian)


def to_eulerian(state: LagrangianState, data: InitialData) -> EulerianRadial:
    """rho(r(x,t), t) = (x/r)^2 rho0 / r', u(r(x,t), t) = v(x,t)."""
    g = data.grid
    rp = g.d_dx(state.r, parity="odd")
    if np.any(rp <= 0) or np.any(np.diff(state.r) <= 0) or state.r[0] <= 0:
        raise ShellCrossingError("Lagrangian map is not monotone; cannot convert")
    rho = (g.x / state.r) ** 2 * data.rho0 / rp
    R = float(g.extrapolate(state.r, 1.0))
    return EulerianRadial(state.r.copy(), rho, state.v.copy(), R, state.t)


def eulerian_mass(sol: EulerianRadial) -> float:
    """Simpson integral of rho r^2 over [0, R] on the image nodes.

    The endpoints r = 0 and r = R are appended; rho r^2 at R is the one-sided
    extrapolation (zero for vacuum data).
    """
    f = sol.rho * sol.r_nodes ** 2
    inside = sol.r_nodes < sol.R
    fR = max(sol.boundary_value(f), 0.0)
    r = np.concatenate([[0.0], sol.r_nodes[inside], [sol.R]])
    y = np.concatenate([[0.0], f[inside], [fR]])
    return float(simpson(y, x=r))


def mass_check(sol, data: InitialData) -> ConversionReport:
    """Frozen Lagrangian mass against the Eulerian integral (sol may be a LagrangianState)."""
    if isinstance(sol, LagrangianState):
        sol = to_eulerian(sol, data)
    return ConversionReport(R=sol.R, mass_lagrangian=float(data.grid.total_moment(data.rho0)),
                            mass_eulerian=eulerian_mass(sol))


@dataclass(frozen=True)
class BoundaryKinematics:
    t: np.ndarray
    R: np.ndarray
    Rdot_fd: np.ndarray
    v_boundary: np.ndarray

    @property
    def max_mismatch(self) -> float:
        return float(np.max(np.abs(self.Rdot_fd - self.v_boundary)))


def boundary_kinematics(traj) -> BoundaryKinematics:
    """R(t) from the extrapolated map and dR/dt by finite differences vs v at x = 1."""
    g = traj.grid
    if traj.times.size < 3:
        raise ValidationError("need at least three snapshots")
    R = np.array([g.extrapolate(r, 1.0) for r in traj.r])
    vb = np.array([g.extrapolate(v, 1.0) for v in traj.v])
    Rdot = np.gradient(R, traj.times, edge_order=2)
    return BoundaryKinematics(traj.times.copy(), R, Rdot, vb)


def write_eulerian_csv(sol: EulerianRadial, path, meta: dict | None = None):
    m = {"t": sol.t, "R": sol.R}
    m.update(meta or {})
    return write_csv(path, ["r", "rho", "u"], zip(sol.r_nodes, sol.rho, sol.u), meta=m)
