from __future__ import annotations

import math

import numpy as np
import pytest

from vstar.dynamics import LagrangianState
from vstar.errors import ShellCrossingError, ValidationError
from vstar.eulerian import (EulerianRadial, boundary_kinematics, eulerian_mass, mass_check,
                            to_eulerian, write_eulerian_csv)
from vstar.grid import Grid
from vstar.io import read_csv
from vstar.profiles import vacuum_profile
from vstar.solver import SolverConfig, run


def test_homologous_dilation():
    data = vacuum_profile(Grid(200), 2.0)
    x = data.x
    sol = to_eulerian(LagrangianState(0.0, 1.25 * x, 0.3 * x), data)
    # rho(r) = rho0(r / 1.25) / 1.25^3
    np.testing.assert_allclose(sol.rho, (1 - x * x) / 1.25 ** 3, atol=1e-12)
    np.testing.assert_allclose(sol.u, 0.3 * x)
    assert sol.R == pytest.approx(1.25, abs=1e-12)
    rep = mass_check(LagrangianState(0.0, 1.25 * x, 0.3 * x), data)
    # int (1 - x^2) x^2 dx = 2/15
    assert rep.mass_lagrangian == pytest.approx(2 / 15, rel=1e-8)
    assert rep.mass_error <= 1e-8


def test_nonmonotone_map_rejected():
    data = vacuum_profile(Grid(50), 2.0)
    r = data.x.copy()
    r[10], r[11] = r[11], r[10]
    with pytest.raises(ShellCrossingError):
        to_eulerian(LagrangianState(0.0, r, 0 * r), data)


def test_eulerian_validation():
    with pytest.raises(ValidationError):
        EulerianRadial(np.array([0.2, 0.1]), np.ones(2), np.zeros(2), 1.0)
    with pytest.raises(ValidationError):
        EulerianRadial(np.array([0.1, 0.2]), -np.ones(2), np.zeros(2), 1.0)
    with pytest.raises(ValidationError):
        EulerianRadial(np.array([0.1, 0.2]), np.ones(3), np.zeros(2), 1.0)


def test_eulerian_mass_of_ball():
    r = np.linspace(0.005, 0.995, 100)
    sol = EulerianRadial(r, np.ones_like(r), np.zeros_like(r), 1.0)
    assert eulerian_mass(sol) == pytest.approx(1 / 3, rel=1e-6)


def test_mass_conserved_along_run():
    data = vacuum_profile(Grid(200), 2.0, u0=lambda x: 0.05 * x * (1 - x * x))
    tr = run(data, SolverConfig(T_final=0.2, output_every=0.05))
    for i in range(tr.times.size):
        st = LagrangianState(float(tr.times[i]), tr.r[i], tr.v[i])
        assert mass_check(st, data).mass_error <= 1e-7


def test_boundary_kinematics():
    data = vacuum_profile(Grid(100), 2.0, u0=lambda x: 0.05 * x * (1 - x * x))
    tr = run(data, SolverConfig(T_final=0.1, output_every=0.1 / 64))
    bk = boundary_kinematics(tr)
    assert bk.max_mismatch <= 1e-5
    assert bk.R[0] == pytest.approx(1.0, abs=1e-12)


def test_eulerian_csv(tmp_path):
    data = vacuum_profile(Grid(20), 2.0)
    sol = to_eulerian(LagrangianState(0.5, data.x.copy(), data.u0.copy()), data)
    meta, header, table = read_csv(write_eulerian_csv(sol, tmp_path / "e.csv", {"n": 20}))
    assert header == ["r", "rho", "u"] and table.shape == (20, 3)
    assert float(meta["t"]) == 0.5 and math.isclose(float(meta["R"]), 1.0)
