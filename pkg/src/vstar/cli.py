"""Command-line driver.

    vstar simulate --config run.toml --out out/
    vstar energy out/trajectory.csv --config run.toml
    vstar unique a/trajectory.csv b/trajectory.csv --config run.toml
    vstar equilibrium --gamma 2 --rho-c 1 --grid-n 400 --out eq/
    vstar sweep-mu --config run.toml --mu 1e-2 5e-3 2.5e-3 1.25e-3
    vstar extend-check --config run.toml

Exit codes: 0 success, 2 validation, 3 numerical termination, 4 I/O.
"""
from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _kernels
from .dynamics import LagrangianState
from .energy import energy_series, manifest_for, write_energy_series_csv
from .errors import ConfigurationError, IOFailure, ValidationError, VstarError
from .eulerian import mass_check, to_eulerian, write_eulerian_csv
from .grid import Grid
from .io import config_hash, load_config, read_csv, write_csv, write_json
from .profiles import (InitialData, lane_emden_equilibrium, load_profile, perturb, required_A,
                       save_profile, vacuum_profile)
from .solver import (SolverConfig, Termination, Trajectory, mu_convergence_study, run,
                     write_diagnostics_csv, write_trajectory_csv)
from .uniqueness import extend_radial, extension_regularity, twin_comparison

log = logging.getLogger("vstar")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

DEFAULTS: dict = {
    "seed": 0,
    "grid": {"n": 200, "offset": True, "cluster": 0.0},
    "profile": {"kind": "vacuum", "shape": "quadratic", "c": 1.0, "rho_c": 1.0,
                "path": "", "balance": False,
                "velocity": {"amplitude": 0.0, "shape": "parabola"},
                "perturb": {"mode": 0, "amplitude": 0.0, "kind": "velocity"}},
    "physics": {},
    "solver": {"T_final": 0.1, "cfl": 0.4, "scheme": "explicit_ssprk3", "mu": 0.0},
    "diagnostics": {"energy": False, "entropy": False, "uniqueness": False,
                    "extension": False, "stride": 1},
    "sweep": {"mu": [1e-2, 5e-3, 2.5e-3, 1.25e-3]},
    "extension": {"grids": [100, 200, 400]},
    "output": {"dir": "vstar-out"},
}

VELOCITY_SHAPES = {
    "parabola": lambda x: x * (1.0 - x),
    "cubic": lambda x: x * (1.0 - x * x),
    "linear": lambda x: x,
}
PROFILE_KINDS = ("vacuum", "equilibrium", "file")
# physics keys left unset fall back to these, or to the profile file's own metadata
PHYSICS_DEFAULTS = {"gamma": 2.0, "kappa": 0, "A": 1.0, "G": 1.0, "R0": 1.0}


# --- configuration -------------------------------------------------------------

def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigurationError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigurationError(f"config key {path + k!r} must be a table")
            if k == "solver":
                out[k].update(v)   # validated by SolverConfig.from_dict
            elif k == "physics":
                bad = set(v) - set(PHYSICS_DEFAULTS)
                if bad:
                    raise ConfigurationError(f"unknown physics keys: {sorted(bad)}")
                out[k].update(v)
            else:
                out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def build_config(args) -> dict:
    """Defaults, then the config file, then command-line overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise IOFailure(f"config file not found: {path}")
        cfg = _merge(cfg, load_config(path))
    if getattr(args, "grid_n", None) is not None:
        cfg["grid"]["n"] = args.grid_n
    if getattr(args, "gamma", None) is not None:
        cfg["physics"]["gamma"] = args.gamma
    if getattr(args, "kappa", None) is not None:
        cfg["physics"]["kappa"] = args.kappa
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    mu = getattr(args, "mu", None)
    if mu is not None:
        if isinstance(mu, list):
            cfg["sweep"]["mu"] = mu
        else:
            cfg["solver"]["mu"] = mu
    if getattr(args, "out", None):
        cfg["output"]["dir"] = args.out
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    p = cfg["profile"]
    if p["kind"] not in PROFILE_KINDS:
        raise ConfigurationError(f"profile.kind must be one of {PROFILE_KINDS}")
    if p["kind"] == "file":
        if not p["path"]:
            raise ConfigurationError("profile.kind = 'file' needs profile.path")
        if not Path(p["path"]).exists():
            raise IOFailure(f"profile file not found: {p['path']}")
    if not physics(cfg, "gamma") > 1.0:
        raise ValidationError(f"gamma must exceed 1, got {physics(cfg, 'gamma')}")
    if physics(cfg, "kappa") not in (0, 1):
        raise ValidationError("kappa must be 0 or 1")
    if p["velocity"]["shape"] not in VELOCITY_SHAPES:
        raise ConfigurationError(f"velocity.shape must be one of {sorted(VELOCITY_SHAPES)}")
    if int(cfg["diagnostics"]["stride"]) < 1:
        raise ConfigurationError("diagnostics.stride must be >= 1")
    SolverConfig.from_dict(cfg["solver"])


def physics(cfg: dict, key: str):
    return cfg["physics"].get(key, PHYSICS_DEFAULTS[key])


def make_grid(cfg: dict, n: int | None = None) -> Grid:
    g = cfg["grid"]
    return Grid(int(n if n is not None else g["n"]), offset=bool(g["offset"]),
                cluster=float(g["cluster"]))


def make_data(cfg: dict, grid: Grid | None = None) -> InitialData:
    grid = grid or make_grid(cfg)
    p, ph = cfg["profile"], cfg["physics"]
    if p["kind"] == "equilibrium":
        data = lane_emden_equilibrium(grid, float(physics(cfg, "gamma")),
                                      rho_c=float(p["rho_c"]), G=float(physics(cfg, "G")),
                                      A=ph.get("A"), R0=float(physics(cfg, "R0")),
                                      balance=bool(p["balance"]))
    elif p["kind"] == "file":
        data = load_profile(p["path"], grid, **ph)
    else:
        data = vacuum_profile(grid, float(physics(cfg, "gamma")), c=float(p["c"]),
                              shape=p["shape"], **{k: physics(cfg, k)
                                                   for k in ("kappa", "A", "G", "R0")})
    vel = p["velocity"]
    if vel["amplitude"]:
        u = data.u0 + float(vel["amplitude"]) * VELOCITY_SHAPES[vel["shape"]](grid.x)
        data = data.with_velocity(u)
    pt = p["perturb"]
    if pt["amplitude"]:
        mode = pt["mode"]
        if mode == "random":
            mode = int(np.random.default_rng(int(cfg["seed"])).integers(1, 5))
            log.info("seed %s picked perturbation mode %d", cfg["seed"], mode)
        data = perturb(data, int(mode), float(pt["amplitude"]), pt["kind"])
    return data


def solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig.from_dict(cfg["solver"])


def physics_hash(cfg: dict) -> str:
    # the output location does not change results
    return config_hash({k: v for k, v in cfg.items() if k != "output"})


def run_meta(cfg: dict, n: int) -> dict:
    return {"config_hash": physics_hash(cfg), "n": n, "scheme": cfg["solver"].get("scheme")}


def _out_dir(cfg: dict) -> Path:
    d = Path(cfg["output"]["dir"])
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create output directory {d}: {exc}") from exc
    return d


def _trajectory_grid(meta: dict) -> Grid:
    try:
        return Grid(int(meta["n"]), offset=bool(int(meta.get("offset", 1))),
                    cluster=float(meta.get("cluster", 0.0)))
    except KeyError as exc:
        raise ValidationError("trajectory file lacks grid metadata") from exc


def load_trajectory(path, cfg: dict, grid: Grid | None = None) -> Trajectory:
    """Read a trajectory CSV, rebuilding initial data from cfg on the file's grid.

    If `grid` differs from the file's grid, snapshots are resampled onto it.
    """
    from .solver import _cfg_from_meta
    from .weights import build_weights
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"trajectory file not found: {path}")
    meta, header, table = read_csv(path)
    if header != ["t", "x", "r", "v"]:
        raise ValidationError(f"{path}: not a trajectory file")
    fgrid = _trajectory_grid(meta)
    h = meta.get("config_hash")
    if h and h != physics_hash(cfg):
        log.warning("%s was written with config %s, current config is %s", path, h,
                    physics_hash(cfg))
    if table.shape[0] % fgrid.n:
        raise ValidationError(f"{path}: row count is not a multiple of n={fgrid.n}")
    table = table.reshape(-1, fgrid.n, 4)
    times, r, v = table[:, 0, 0], table[:, :, 2], table[:, :, 3]
    target = grid or fgrid
    if target.n != fgrid.n or not np.allclose(target.x, fgrid.x, atol=1e-12):
        log.warning("resampling %s from n=%d onto n=%d", path.name, fgrid.n, target.n)
        r = np.array([_resample_odd(fgrid.x, ri, target.x) for ri in r])
        v = np.array([_resample_odd(fgrid.x, vi, target.x) for vi in v])
    data = make_data(cfg, target)
    scfg = _cfg_from_meta({k[4:]: val for k, val in meta.items() if k.startswith("cfg.")})
    return Trajectory(data=data, W=build_weights(data), cfg=scfg, times=times, r=r, v=v,
                      termination=Termination(meta.get("termination", "completed")),
                      termination_time=float(meta.get("termination_time", "nan")))


def _resample_odd(xs, f, x_new):
    # odd reflection keeps the interpolant regular at the origin
    xx = np.concatenate([-xs[::-1], xs])
    ff = np.concatenate([-f[::-1], f])
    return PchipInterpolator(xx, ff, extrapolate=True)(x_new)


# --- subcommands -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = build_config(args)
    data = make_data(cfg)
    out = _out_dir(cfg)
    meta = run_meta(cfg, data.grid.n)
    traj = run(data, solver_config(cfg))
    write_trajectory_csv(traj, out / "trajectory.csv", meta)
    write_diagnostics_csv(traj, out / "diagnostics.csv", meta)
    diag = cfg["diagnostics"]
    cols = traj.diagnostics_columns()
    summary = {"termination": traj.termination.value, "termination_time": traj.termination_time,
               "message": traj.message, "steps": traj.steps, "config_hash": meta["config_hash"],
               "sup_vmax": float(cols["vmax"].max()),
               "R_drift": float(np.abs(cols["R"] - cols["R"][0]).max()),
               "mass_error": float(np.max(np.abs(cols["mass_eulerian"] - cols["mass"])
                                          / cols["mass"]))}
    if diag["energy"]:
        summary["energy"] = _energy_outputs(traj, out, meta, int(diag["stride"]))
    if diag["extension"]:
        ext = extend_radial(to_eulerian(traj.final, data))
        write_eulerian_csv(to_eulerian(traj.final, data), out / "eulerian_final.csv", meta)
        summary["extension"] = extension_regularity(ext, data.gamma).to_dict()
    write_json(out / "summary.json", summary)
    print(f"termination: {traj.termination.value} at t={traj.termination_time:.6g}"
          + (f" ({traj.message})" if traj.message else ""))
    print(f"sup|v| = {summary['sup_vmax']:.6e}  R drift = {summary['R_drift']:.6e}  "
          f"mass error = {summary['mass_error']:.3e}")
    return EXIT_OK if traj.termination is Termination.COMPLETED else EXIT_NUMERICAL


def _energy_outputs(traj, out: Path, meta: dict, stride: int) -> dict:
    gamma = traj.data.gamma
    manifest = manifest_for(gamma)
    reports = energy_series(traj, stride=stride)
    labels = [t.label for t in manifest]
    if list(reports[0].terms) != labels:
        raise ValidationError("energy terms do not match the manifest")
    write_energy_series_csv(reports, out / "energy.csv", meta)
    E = np.array([r.total for r in reports])
    ratio = float(E.max() / E[0]) if E[0] > 0 else math.nan
    return {"gamma": gamma, "terms": len(manifest), "E0": float(E[0]), "sup_E": float(E.max()),
            "ratio": ratio}


def cmd_energy(args) -> int:
    cfg = build_config(args)
    traj = load_trajectory(args.trajectory, cfg)
    out = _out_dir(cfg)
    meta = run_meta(cfg, traj.grid.n)
    info = _energy_outputs(traj, out, meta, int(cfg["diagnostics"]["stride"]))
    write_json(out / "energy_manifest.json",
               {"gamma": traj.data.gamma,
                "terms": [dict(asdict(t), label=t.label) for t in manifest_for(traj.data.gamma)]})
    print(f"gamma={info['gamma']:g}: {info['terms']} terms, E(0)={info['E0']:.6e}, "
          f"sup E={info['sup_E']:.6e}, ratio={info['ratio']:.6g}")
    return EXIT_OK


def cmd_unique(args) -> int:
    cfg = build_config(args)
    a = load_trajectory(args.traj_a, cfg)
    b = load_trajectory(args.traj_b, cfg, grid=a.grid)
    out = _out_dir(cfg)
    meta = run_meta(cfg, a.grid.n)
    rep = twin_comparison(a, b, W=a.W, entropy=bool(cfg["diagnostics"]["entropy"]))
    cols = [rep.times, rep.D, rep.D_normalized, rep.smallness]
    header = ["t", "D", "D_normalized", "smallness"]
    if rep.entropy.size:
        cols.append(rep.entropy)
        header.append("entropy_integral")
    write_csv(out / "uniqueness.csv", header, zip(*cols), meta)
    rep_dict = rep.to_dict()
    for k in ("times", "D", "D_normalized", "smallness", "entropy"):
        rep_dict.pop(k)
    write_json(out / "certificate.json", rep_dict)
    c = rep.certificate
    print(f"max D = {rep.D.max():.6e}, fitted rate = {c.fitted_rate:.6g}, "
          f"smallness {'ok' if rep.smallness_ok else 'VIOLATED'}, certificate "
          f"{'ok' if c.ok else 'failed'}")
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    cfg = build_config(args)
    gamma = float(physics(cfg, "gamma"))
    rho_c = float(args.rho_c)
    grid = make_grid(cfg)
    data = lane_emden_equilibrium(grid, gamma, rho_c=rho_c, G=float(physics(cfg, "G")),
                                  balance=bool(cfg["profile"]["balance"]))
    out = _out_dir(cfg)
    save_profile(data, out / "profile.csv")
    A = required_A(gamma, rho_c, data.G)
    write_json(out / "equilibrium.json", {"gamma": gamma, "rho_c": rho_c, "A": A,
                                          "G": data.G, "n": grid.n,
                                          "mass": float(grid.total_moment(data.rho0))})
    print(f"gamma={gamma:g} rho_c={rho_c:g}: required A = {A:.15g}")
    return EXIT_OK


def cmd_sweep_mu(args) -> int:
    cfg = build_config(args)
    data = make_data(cfg)
    out = _out_dir(cfg)
    rows = mu_convergence_study(data, cfg["sweep"]["mu"], solver_config(cfg),
                                workers=_kernels.thread_cap())
    keys = list(rows[0])
    write_csv(out / "sweep_mu.csv", keys, ([r[k] for k in keys] for r in rows),
              run_meta(cfg, data.grid.n))
    d = [r["distance"] for r in rows]
    for r in rows:
        print(f"mu {r['mu_a']:.4g} -> {r['mu_b']:.4g}: distance {r['distance']:.6e} {r['flag']}")
    if any(r["flag"] for r in rows):
        return EXIT_NUMERICAL
    mono = all(x > y for x, y in zip(d, d[1:]))
    print("consecutive distances strictly decreasing: " + ("yes" if mono else "no"))
    return EXIT_OK


def cmd_extend_check(args) -> int:
    cfg = build_config(args)
    out = _out_dir(cfg)
    rows = []
    for n in cfg["extension"]["grids"]:
        data = make_data(cfg, make_grid(cfg, int(n)))
        if args.evolve:
            state = run(data, solver_config(cfg), diagnostics=False).final
        else:
            state = LagrangianState(0.0, data.x.copy(), data.u0.copy())
        rep = extension_regularity(extend_radial(to_eulerian(state, data)), data.gamma)
        mc = mass_check(state, data)
        rows.append([int(n), rep.drho_inner, rep.drho_outer, rep.drho_jump, rep.du_jump,
                     rep.u_jump, mc.mass_error / mc.mass_lagrangian])
    orders = [math.nan] + [
        math.log2(a[3] / b[3]) if a[3] > 0 and b[3] > 0 else math.nan
        for a, b in zip(rows, rows[1:])]
    for row, p in zip(rows, orders):
        row.append(p)
    header = ["n", "drho_inner", "drho_outer", "drho_jump", "du_jump", "u_jump",
              "mass_rel_error", "jump_order"]
    write_csv(out / "extension.csv", header, rows, run_meta(cfg, rows[-1][0]))
    for row in rows:
        print(f"n={row[0]}: d_r rho jump {row[3]:.4e}, d_r u jump {row[4]:.3e}, "
              f"u jump {row[5]:.3e}, order {row[7]:.3g}")
    return EXIT_OK


# --- entry point --------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, mu_list: bool = False):
    p.add_argument("--config", help="TOML or JSON experiment config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--grid-n", type=int, help="number of mass-grid nodes")
    if mu_list:
        p.add_argument("--mu", type=float, nargs="+", help="viscosity values to sweep")
    else:
        p.add_argument("--mu", type=float, help="parabolic regularization strength")
    p.add_argument("--gamma", type=float, help="adiabatic exponent")
    p.add_argument("--kappa", type=int, choices=(0, 1), help="1 switches self-gravity on")
    p.add_argument("--seed", type=int, help="seed for randomized perturbations")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vstar", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the solver and write trajectory + diagnostics")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("energy", help="energy functional time series of a trajectory")
    p.add_argument("trajectory")
    _common(p)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("unique", help="uniqueness functional between two trajectories")
    p.add_argument("traj_a")
    p.add_argument("traj_b")
    _common(p)
    p.set_defaults(func=cmd_unique)

    p = sub.add_parser("equilibrium", help="write a polytropic equilibrium profile")
    p.add_argument("--rho-c", type=float, default=1.0, help="central density")
    _common(p)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("sweep-mu", help="distances between runs at decreasing viscosity")
    _common(p, mu_list=True)
    p.set_defaults(func=cmd_sweep_mu)

    p = sub.add_parser("extend-check", help="regularity of the vacuum extension under refinement")
    p.add_argument("--evolve", action="store_true", help="check the final state instead of t=0")
    _common(p)
    p.set_defaults(func=cmd_extend_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VstarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
