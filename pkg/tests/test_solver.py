from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import simpson

from vstar.dynamics import LagrangianState, compat_jets
from vstar.errors import ConfigurationError, ValidationError
from vstar.grid import Grid
from vstar.profiles import lane_emden_equilibrium, vacuum_profile
from vstar.solver import (SolverConfig, Termination, monitor_apriori, mu_convergence_study,
                          read_trajectory_csv, run, step, weighted_l2, write_diagnostics_csv,
                          write_trajectory_csv)
from vstar.weights import build_weights


def rest(data):
    return LagrangianState(0.0, data.x.copy(), data.u0.copy())


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(cfl=1.5)
    with pytest.raises(ConfigurationError):
        SolverConfig(mu=-1)
    with pytest.raises(ConfigurationError):
        SolverConfig(scheme="euler")
    with pytest.raises(ConfigurationError):
        SolverConfig.from_dict({"bogus": 1})
    assert SolverConfig.from_dict({"window": [0.4, 1.6]}).window == (0.4, 1.6)


def test_monitor_examples(quad200):
    data, W = quad200
    x = data.x
    assert monitor_apriori(LagrangianState(0, x, 0 * x), W) == pytest.approx((1, 1, 1, 1))
    assert monitor_apriori(LagrangianState(0, 1.4 * x, 0 * x), W) == pytest.approx((1.4,) * 4)
    b = monitor_apriori(LagrangianState(0, x + 0.6 * x * x, 0 * x), W)
    # the outermost node sits just inside x = 1
    assert b[3] == pytest.approx(1 + 1.2 * x.max(), abs=1e-9)


def test_equilibrium_step_stays_at_rest():
    data = lane_emden_equilibrium(Grid(200), 2.0)
    W = build_weights(data)
    s = step(rest(data), data, W, SolverConfig(), 1e-3)
    assert np.abs(s.v).max() <= 1e-6


def test_pure_diffusion_of_linear_field(quad200):
    data, W = quad200
    d = data.with_velocity(0.3 * data.x)
    for scheme in ("explicit_ssprk3", "imex"):
        cfg = SolverConfig(mu=0.05, forces=False, scheme=scheme)
        s = step(LagrangianState(0.0, d.x.copy(), d.u0.copy()), d, W, cfg, 1e-5)
        np.testing.assert_allclose(s.v, d.u0, atol=1e-12)


def test_first_step_matches_jets_to_second_order(quad200):
    data, W = quad200
    a = compat_jets(data, W, 1).dv[1]
    errs = []
    for dt in (4e-4, 2e-4, 1e-4):
        s = step(rest(data), data, W, SolverConfig(), dt)
        errs.append(np.abs(s.v - dt * a).max())
    assert all(e1 / e2 > 3.5 for e1, e2 in zip(errs, errs[1:]))


def test_short_expansion_stays_in_window():
    data = vacuum_profile(Grid(200), 2.0)
    traj = run(data, SolverConfig(T_final=0.1))
    assert traj.termination is Termination.COMPLETED
    d = traj.diagnostics_columns()
    assert d["min_rp"].min() >= 0.5 and d["max_rp"].max() <= 1.5


def test_inward_data_terminates():
    data = vacuum_profile(Grid(100), 2.0, u0=lambda x: -6.0 * x)
    traj = run(data, SolverConfig(T_final=0.5))
    assert traj.termination in (Termination.APRIORI_VIOLATED, Termination.SHELL_CROSSING)
    assert 0 < traj.termination_time < 0.5
    assert traj.times[-1] == pytest.approx(traj.termination_time)


def test_temporal_convergence_ssprk3():
    data = vacuum_profile(Grid(100), 2.0, u0=lambda x: 0.05 * x * (1 - x * x))
    W = build_weights(data)
    T = 0.05
    finals = [run(data, SolverConfig(T_final=T, dt=dt, output_every=T), W, False).v[-1]
              for dt in (T / 40, T / 80, T / 160)]
    e1 = weighted_l2(W, finals[0] - finals[1])
    e2 = weighted_l2(W, finals[1] - finals[2])
    assert math.log2(e1 / e2) > 2.7


def test_temporal_convergence_imex():
    data = vacuum_profile(Grid(80), 2.0, u0=lambda x: 0.05 * x * (1 - x * x))
    W = build_weights(data)
    T = 0.02
    finals = [run(data, SolverConfig(T_final=T, dt=dt, output_every=T, mu=1e-2, scheme="imex"),
                  W, False).v[-1] for dt in (T / 10, T / 20, T / 40)]
    e1 = weighted_l2(W, finals[0] - finals[1])
    e2 = weighted_l2(W, finals[1] - finals[2])
    assert math.log2(e1 / e2) >= 1.0


def test_explicit_viscous_step_is_stable():
    data = vacuum_profile(Grid(100), 2.0, u0=lambda x: 0.01 * x * (1 - x * x))
    traj = run(data, SolverConfig(T_final=0.05, mu=1e-2))
    assert traj.termination is Termination.COMPLETED


def test_position_is_time_integral_of_velocity():
    data = vacuum_profile(Grid(100), 2.0, u0=lambda x: 0.05 * x * (1 - x * x))
    traj = run(data, SolverConfig(T_final=0.1, output_every=0.1 / 256), diagnostics=False)
    integral = simpson(traj.v, x=traj.times, axis=0)
    np.testing.assert_allclose(traj.r[-1], data.x + integral, atol=1e-8)


def test_energy_conserved_without_gravity_or_viscosity():
    data = vacuum_profile(Grid(200), 2.0, u0=lambda x: 0.05 * x * (1 - x * x))
    traj = run(data, SolverConfig(T_final=0.2))
    E = traj.diagnostics_columns()["energy"]
    assert np.max(E) <= E[0] * (1 + 1e-5)


def test_mu_study_examples():
    data = vacuum_profile(Grid(80), 2.0, u0=lambda x: 0.01 * x * (1 - x * x))
    rows = mu_convergence_study(data, [1e-3, 1e-3, 1e-3], SolverConfig(T_final=0.02), workers=1)
    assert all(r["distance"] == 0.0 for r in rows)
    eq = lane_emden_equilibrium(Grid(80), 2.0)
    rows = mu_convergence_study(eq, [1e-2, 5e-3, 2.5e-3], SolverConfig(T_final=0.05), workers=1)
    assert all(r["distance"] <= 1e-6 for r in rows)
    with pytest.raises(ValidationError):
        mu_convergence_study(eq, [1e-2, 5e-3], SolverConfig(T_final=0.05))


def test_mu_study_parallel_matches_serial():
    data = vacuum_profile(Grid(60), 2.0, u0=lambda x: 0.01 * x * (1 - x * x))
    cfg = SolverConfig(T_final=0.02)
    a = mu_convergence_study(data, [1e-2, 5e-3, 2.5e-3], cfg, workers=1)
    b = mu_convergence_study(data, [1e-2, 5e-3, 2.5e-3], cfg, workers=2)
    assert [r["distance"] for r in a] == [r["distance"] for r in b]


def test_trajectory_csv_round_trip(tmp_path, quad200):
    data, W = quad200
    traj = run(data, SolverConfig(T_final=0.01, output_every=0.005), W)
    p = write_trajectory_csv(traj, tmp_path / "t.csv", {"config_hash": "abc"})
    write_diagnostics_csv(traj, tmp_path / "d.csv")
    back = read_trajectory_csv(p, data, W)
    np.testing.assert_array_equal(back.r, traj.r)
    np.testing.assert_array_equal(back.v, traj.v)
    assert back.cfg == traj.cfg
    text = p.read_text()
    assert "# config_hash=abc" in text and "\nt,x,r,v\n" in text
    with pytest.raises(ValidationError):
        read_trajectory_csv(p, vacuum_profile(Grid(100), 2.0))
