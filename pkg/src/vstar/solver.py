"""Time integration with CFL control and a-priori window monitoring."""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels
from .dynamics import LagrangianState, banded_matvec, deformation, total_accel, visc_banded
from .errors import (BlowupError, ConfigurationError, NumericalError, ShellCrossingError,
                     ValidationError)
from .io import read_csv, write_csv
from .profiles import InitialData
from .weights import WeightSet, build_weights

log = logging.getLogger(__name__)

SCHEMES = ("explicit_ssprk3", "imex")
HISTORY_DEPTH = 8


class Termination(str, enum.Enum):
    COMPLETED = "completed"
    APRIORI_VIOLATED = "apriori_violated"
    SHELL_CROSSING = "shell_crossing"
    BLOWUP = "blowup"


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 0.0
    T_final: float = 0.1
    cfl: float = 0.4
    scheme: str = "explicit_ssprk3"
    dt_max: float = math.inf
    output_every: float | None = None   # defaults to T_final / 64
    apriori_enforce: bool = True
    dt: float | None = None             # fixed step; still aligned to the output cadence
    forces: bool = True                 # False switches pressure and gravity off (test mode)
    window: tuple = (0.5, 1.5)

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ConfigurationError(f"cfl must lie in (0, 1), got {self.cfl}")
        if not self.T_final > 0:
            raise ConfigurationError("T_final must be positive")
        if self.mu < 0:
            raise ConfigurationError("mu must be non-negative")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.output_every is not None and not 0 < self.output_every <= self.T_final:
            raise ConfigurationError("output_every must lie in (0, T_final]")
        if self.dt is not None and self.dt <= 0:
            raise ConfigurationError("dt must be positive")

    @property
    def cadence(self) -> float:
        return self.output_every if self.output_every is not None else self.T_final / 64.0

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown solver options: {sorted(extra)}")
        d = dict(d)
        if "window" in d:
            d["window"] = tuple(d["window"])
        return cls(**d)


@dataclass
class Trajectory:
    data: InitialData
    W: WeightSet
    cfg: SolverConfig
    times: np.ndarray
    r: np.ndarray
    v: np.ndarray
    diagnostics: list = field(default_factory=list)
    termination: Termination = Termination.COMPLETED
    termination_time: float = math.nan
    message: str = ""
    steps: int = 0

    @property
    def grid(self):
        return self.data.grid

    @property
    def states(self) -> list[LagrangianState]:
        return [LagrangianState(float(t), r, v) for t, r, v in zip(self.times, self.r, self.v)]

    @property
    def final(self) -> LagrangianState:
        return LagrangianState(float(self.times[-1]), self.r[-1], self.v[-1])

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError(f"no stored snapshot at t={t}")
        return i

    def diagnostics_columns(self) -> dict:
        if not self.diagnostics:
            return {}
        return {k: np.array([row[k] for row in self.diagnostics]) for k in self.diagnostics[0]}


def monitor_apriori(state: LagrangianState, W: WeightSet) -> tuple[float, float, float, float]:
    rx = state.r / W.x
    rp = deformation(state.r, W)
    return float(rx.min()), float(rx.max()), float(rp.min()), float(rp.max())


def classical_energy(r, v, data: InitialData, W: WeightSet) -> dict:
    """Kinetic, internal and gravitational energy per unit solid angle."""
    g = W.grid
    x = g.x
    rp = deformation(r, W)
    f = (x / r) ** 2 * data.rho0 / rp
    kin = 0.5 * g.quadrature(data.rho0 * x * x * v * v)
    internal = data.A / (data.gamma - 1.0) * g.quadrature(x * x * data.rho0 * f ** (data.gamma - 1.0))
    grav = 0.0
    if data.kappa:
        grav = -4.0 * math.pi * data.G * g.quadrature(W.mass * data.rho0 * x * x / r)
    return {"kinetic": float(kin), "internal": float(internal), "gravitational": float(grav),
            "energy": float(kin + internal + grav)}


def spectral_radius(state: LagrangianState, data: InitialData, W: WeightSet,
                    iters: int = 40, start=None) -> tuple[float, np.ndarray]:
    """Largest |eigenvalue| of d(accel)/dr at the state, by power iteration.

    Returns (radius, vector) so callers can warm-start the next estimate.
    """
    r0 = state.r
    a0 = total_accel(r0, state.v, data, W)
    y = np.random.default_rng(0).standard_normal(r0.size) if start is None else start.copy()
    y /= np.linalg.norm(y)
    lam = 0.0
    eps = 1e-7 * max(1.0, float(np.abs(r0).max()))
    for _ in range(iters):
        z = (total_accel(r0 + eps * y, state.v, data, W) - a0) / eps
        lam = float(np.linalg.norm(z))
        if lam == 0.0:
            break
        y = z / lam
    return lam, y


# SSPRK3 is stable on the imaginary axis up to |z| = sqrt(3)
_IMAG_LIMIT = math.sqrt(3.0)
_REAL_LIMIT = 2.51        # SSPRK3 stability interval on the negative real axis
_VISC_RADIUS = 45.0


def stable_dt(state: LagrangianState, data: InitialData, W: WeightSet, cfg: SolverConfig,
              omega: float | None = None) -> float:
    """cfl * min(dx r'/c_s), also capped by the SSPRK3 limit for the stiffest mode.

    omega is the spectral radius of the acceleration Jacobian when known; the
    oscillation frequency is its square root.
    """
    g = W.grid
    x = g.x
    rp = deformation(state.r, W)
    dx = g.spacing
    dt = cfg.dt_max
    if cfg.forces and data.A > 0:
        f = (x / state.r) ** 2 * data.rho0 / rp
        cs = np.sqrt(data.gamma * data.A * f ** (data.gamma - 1.0))
        live = cs > 0
        if live.any():
            dt = min(dt, cfg.cfl * float(np.min(dx[live] * rp[live] / cs[live])))
    if cfg.forces and data.kappa:
        ag = 4.0 * math.pi * data.G * W.mass / state.r ** 2
        dt = min(dt, cfg.cfl * float(np.min(np.sqrt(dx * rp / np.maximum(ag, 1e-300)))))
    if cfg.mu > 0 and cfg.scheme == "explicit_ssprk3":
        # the 7-point viscous operator has spectral radius ~ 43 diff / h^2, set by
        # the v/x terms next to the origin
        diff = data.gamma * cfg.mu * float(np.max(W.rho0))
        lam = _VISC_RADIUS * diff / float(np.min(dx)) ** 2
        dt = min(dt, (cfg.cfl / 0.5) * 0.9 * _REAL_LIMIT / lam)
    if omega is not None and omega > 0:
        dt = min(dt, (cfg.cfl / 0.5) * 0.9 * _IMAG_LIMIT / math.sqrt(omega))
    if not math.isfinite(dt):
        dt = cfg.cadence / 4.0
    return dt


class _Stepper:
    """Holds per-run caches (the banded diffusion matrix)."""

    def __init__(self, data: InitialData, W: WeightSet, cfg: SolverConfig):
        self.data, self.W, self.cfg = data, W, cfg
        self._ab = visc_banded(data, W, cfg.mu) if (cfg.scheme == "imex" and cfg.mu > 0) else None

    def rhs(self, r, v, mu):
        return v, total_accel(r, v, self.data, self.W, mu, self.cfg.forces)

    def ssprk3(self, r, v, dt, mu):
        k_r, k_v = self.rhs(r, v, mu)
        r1, v1 = r + dt * k_r, v + dt * k_v
        k_r, k_v = self.rhs(r1, v1, mu)
        r2 = 0.75 * r + 0.25 * (r1 + dt * k_r)
        v2 = 0.75 * v + 0.25 * (v1 + dt * k_v)
        k_r, k_v = self.rhs(r2, v2, mu)
        r3 = r / 3.0 + 2.0 / 3.0 * (r2 + dt * k_r)
        v3 = v / 3.0 + 2.0 / 3.0 * (v2 + dt * k_v)
        return r3, v3

    def diffuse(self, v, tau):
        """Crank-Nicolson for dv/dt = L v over time tau."""
        ab = self._ab
        lhs = -0.5 * tau * ab
        lhs[1] += 1.0
        rhs = v + 0.5 * tau * banded_matvec(ab, v)
        try:
            out = solve_banded((1, 1), lhs, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"implicit diffusion solve failed: {exc}") from exc
        return out

    def step(self, state: LagrangianState, dt: float) -> LagrangianState:
        r, v = state.r, state.v
        if self._ab is None:
            r, v = self.ssprk3(r, v, dt, self.cfg.mu)
        else:
            v = self.diffuse(v, 0.5 * dt)
            r, v = self.ssprk3(r, v, dt, 0.0)
            v = self.diffuse(v, 0.5 * dt)
        if not (np.isfinite(r).all() and np.isfinite(v).all()):
            raise BlowupError(f"non-finite state at t={state.t + dt:.6g}")
        return LagrangianState(state.t + dt, r, v)


def step(state: LagrangianState, data: InitialData, W: WeightSet, cfg: SolverConfig,
         dt: float) -> LagrangianState:
    """Advance (r, v) by one step of the configured scheme."""
    if dt <= 0:
        raise ValidationError("dt must be positive")
    return _Stepper(data, W, cfg).step(state, dt)


def _diagnostics_row(state: LagrangianState, data: InitialData, W: WeightSet) -> dict:
    from .eulerian import mass_check, to_eulerian
    lo_rx, hi_rx, lo_rp, hi_rp = monitor_apriori(state, W)
    sol = to_eulerian(state, data)
    rep = mass_check(sol, data)
    row = {"t": state.t, "R": sol.R, "min_rx": lo_rx, "max_rx": hi_rx, "min_rp": lo_rp,
           "max_rp": hi_rp, "mass": rep.mass_lagrangian, "mass_eulerian": rep.mass_eulerian,
           "vmax": float(np.abs(state.v).max())}
    row.update(classical_energy(state.r, state.v, data, W))
    return row


def run(data: InitialData, cfg: SolverConfig, W: WeightSet | None = None,
        diagnostics: bool = True) -> Trajectory:
    """Integrate to cfg.T_final, stopping early on a-priori violation or breakdown."""
    if W is None:
        W = build_weights(data)
    stepper = _Stepper(data, W, cfg)
    cad = cfg.cadence
    n_out = max(1, int(round(cfg.T_final / cad)))
    state = LagrangianState(0.0, data.x.copy(), data.u0.copy())
    times, rs, vs, diags = [0.0], [state.r], [state.v], []
    if diagnostics:
        diags.append(_diagnostics_row(state, data, W))
    term, t_term, msg, nsteps = Termination.COMPLETED, math.nan, "", 0
    lo, hi = cfg.window
    history = [(0.0, state.v)]

    def record(s):
        times.append(s.t)
        rs.append(s.r)
        vs.append(s.v)
        if diagnostics:
            diags.append(_diagnostics_row(s, data, W))

    vec = None
    try:
        for k in range(1, n_out + 1):
            t_target = k * cad
            if cfg.dt is not None:
                dt = cfg.dt
            else:
                omega = None
                if cfg.forces:
                    omega, vec = spectral_radius(state, data, W, iters=40 if vec is None else 8,
                                                 start=vec)
                dt = stable_dt(state, data, W, cfg, omega)
            m = max(1, int(math.ceil((t_target - state.t) / dt - 1e-9)))
            h = (t_target - state.t) / m
            for j in range(m):
                new = stepper.step(state, h)
                nsteps += 1
                if j == m - 1:
                    new = LagrangianState(t_target, new.r, new.v)
                state = new
                if cfg.apriori_enforce:
                    b = monitor_apriori(state, W)
                    if b[0] < lo or b[1] > hi or b[2] < lo or b[3] > hi:
                        term, t_term = Termination.APRIORI_VIOLATED, state.t
                        msg = "a-priori window left: r/x in [%.4g, %.4g], r' in [%.4g, %.4g]" % b
                        record(state)
                        raise StopIteration
            history = (history + [(state.t, state.v)])[-HISTORY_DEPTH:]
            record(state)
    except StopIteration:
        pass
    except ShellCrossingError as exc:
        term, t_term, msg = Termination.SHELL_CROSSING, state.t, str(exc)
    except BlowupError as exc:
        term, t_term, msg = Termination.BLOWUP, state.t, str(exc)
    if term is Termination.COMPLETED:
        t_term = float(times[-1])
    else:
        log.warning("run stopped at t=%.6g: %s (%s)", t_term, term.value, msg)
    return Trajectory(data=data, W=W, cfg=cfg, times=np.array(times), r=np.array(rs),
                      v=np.array(vs), diagnostics=diags, termination=term,
                      termination_time=float(t_term), message=msg, steps=nsteps)


# --- mu study ------------------------------------------------------------------

def weighted_l2(W: WeightSet, f) -> float:
    return math.sqrt(max(float(W.grid.quadrature(W.x * W.sigma * f * f)), 0.0))


def _run_final(args):
    data, cfg, W = args
    traj = run(data, cfg, W, diagnostics=False)
    return traj.v[-1], traj.termination.value, float(traj.times[-1])


def mu_convergence_study(data: InitialData, mu_list, cfg: SolverConfig,
                         W: WeightSet | None = None, workers: int | None = None) -> list[dict]:
    """Weighted L2 distance of v(., T) between consecutive mu values."""
    mu_list = [float(m) for m in mu_list]
    if len(mu_list) < 3:
        raise ValidationError("mu study needs at least three values")
    if W is None:
        W = build_weights(data)
    jobs = [(data, replace(cfg, mu=m), W) for m in mu_list]
    workers = min(workers or _kernels.thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_final, jobs))
    else:
        results = [_run_final(j) for j in jobs]
    rows = []
    for (ma, ra), (mb, rb) in zip(zip(mu_list, results), zip(mu_list[1:], results[1:])):
        ok = ra[1] == "completed" and rb[1] == "completed"
        rows.append({"mu_a": ma, "mu_b": mb,
                     "distance": weighted_l2(W, ra[0] - rb[0]) if ok else math.nan,
                     "termination_a": ra[1], "termination_b": rb[1],
                     "flag": "" if ok else "early_termination"})
    return rows


# --- IO ----------------------------------------------------------------------

def trajectory_meta(traj: Trajectory, extra: dict | None = None) -> dict:
    g = traj.grid
    meta = {"format": "vstar-trajectory-1", "n": g.n, "offset": int(g.offset),
            "cluster": g.cluster, "termination": traj.termination.value,
            "termination_time": traj.termination_time, "backend": _kernels.backend_name()}
    meta.update({f"cfg.{k}": v for k, v in asdict(traj.cfg).items()})
    meta.update(traj.data.params())
    meta.update(extra or {})
    return meta


def write_trajectory_csv(traj: Trajectory, path, extra_meta: dict | None = None):
    x = traj.grid.x
    rows = ((t, xi, ri, vi) for t, r, v in zip(traj.times, traj.r, traj.v)
            for xi, ri, vi in zip(x, r, v))
    return write_csv(path, ["t", "x", "r", "v"], rows, meta=trajectory_meta(traj, extra_meta))


def write_diagnostics_csv(traj: Trajectory, path, extra_meta: dict | None = None):
    cols = traj.diagnostics_columns()
    if not cols:
        raise ValidationError("trajectory has no diagnostics")
    keys = list(cols)
    rows = zip(*(cols[k] for k in keys))
    return write_csv(path, keys, rows, meta=trajectory_meta(traj, extra_meta))


def read_trajectory_csv(path, data: InitialData, W: WeightSet | None = None) -> Trajectory:
    meta, header, table = read_csv(path)
    if header != ["t", "x", "r", "v"]:
        raise ValidationError(f"{path}: not a trajectory file")
    n = data.grid.n
    if table.shape[0] % n:
        raise ValidationError(f"{path}: row count is not a multiple of n={n}")
    table = table.reshape(-1, n, 4)
    if not np.allclose(table[0, :, 1], data.x, atol=1e-12):
        raise ValidationError(f"{path}: node coordinates do not match the grid")
    cfg_fields = {k[4:]: v for k, v in meta.items() if k.startswith("cfg.")}
    cfg = _cfg_from_meta(cfg_fields)
    term = Termination(meta.get("termination", "completed"))
    return Trajectory(data=data, W=W or build_weights(data), cfg=cfg, times=table[:, 0, 0],
                      r=table[:, :, 2], v=table[:, :, 3], termination=term,
                      termination_time=float(meta.get("termination_time", "nan")))


def _cfg_from_meta(m: dict) -> SolverConfig:
    def num(k, default):
        s = m.get(k)
        return default if s in (None, "None") else float(s)
    window = m.get("window", "(0.5, 1.5)").strip("()").split(",")
    return SolverConfig(mu=num("mu", 0.0), T_final=num("T_final", 1.0), cfl=num("cfl", 0.4),
                        scheme=m.get("scheme", "explicit_ssprk3"), dt_max=num("dt_max", math.inf),
                        output_every=num("output_every", None),
                        apriori_enforce=m.get("apriori_enforce", "True") == "True",
                        dt=num("dt", None), forces=m.get("forces", "True") == "True",
                        window=tuple(float(w) for w in window))
