from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pytest

from vstar.dynamics import compat_jets
from vstar.energy import (TermSpec, energy, energy_gamma2, energy_series, evaluate, l_of,
                          manifest_for, manifest_gamma2, manifest_gt2, manifest_lt2, nu_of,
                          required_order, term_value, boundedness_check, time_derivatives,
                          write_energy_series_csv)
from vstar.errors import CapabilityError, ValidationError
from vstar.grid import Grid
from vstar.io import read_csv
from vstar.profiles import InitialData, lane_emden_equilibrium, vacuum_profile
from vstar.solver import SolverConfig, run
from vstar.weights import build_weights


@pytest.fixture(scope="module")
def flat():
    g = Grid(400)
    data = InitialData(g, np.ones(g.n), np.zeros(g.n), gamma=2.0)
    return data, build_weights(data, validate=False)


@pytest.mark.parametrize("gamma,nu,l", [(1.5, 0.5, 5), (1.2, 2.0, 9), (1.9, 1 / 18, 5),
                                        (4 / 3, 1.0, 7)])
def test_nu_and_l(gamma, nu, l):
    assert nu_of(gamma) == pytest.approx(nu)
    assert l_of(gamma) == l
    assert required_order(gamma) == l


def test_gt2_nu_metadata(quad200):
    data, W = quad200
    assert nu_of(3.0) == pytest.approx(-0.25)
    rep = evaluate(manifest_gt2(3.0), np.zeros((5, data.grid.n)), W)
    assert rep.total == 0.0 and len(rep.terms) == 30


def test_manifest_shapes():
    assert len(manifest_gamma2()) == 20
    assert len(manifest_lt2(1.5)) == 38
    assert len(manifest_gt2(3.0)) == 30
    assert manifest_for(2.0, True)[1].squared
    assert not manifest_for(2.0)[1].squared
    for man in (manifest_gamma2(), manifest_lt2(1.2), manifest_gt2(2.5)):
        labels = [s.label for s in man]
        assert len(set(labels)) == len(labels)
        assert all(s.q_power() >= 0 for s in man)
    with pytest.raises(ValidationError):
        manifest_lt2(2.5)
    with pytest.raises(ValidationError):
        manifest_gt2(1.5)


def test_label_rendering():
    assert TermSpec(4, sigma=1, norm=1).label == "‖σ∂t⁴v‖_1²"
    assert TermSpec(1, sigma=1.5, dx=2).label == "‖σ^1.5∂t¹∂x²v‖_0²"
    assert TermSpec(2, norm=0, over_x=True, zeta=True, squared=False).label == "‖ζ∂t²v/x‖_0"


def test_term_values_on_flat_weights(flat):
    data, W = flat
    x = data.x
    # q = 1 so sigma = x
    assert term_value(TermSpec(0), x, W) == pytest.approx(1 / 3, rel=1e-9)
    assert term_value(TermSpec(0, sigma=1, dx=1), x, W) == pytest.approx(1 / 3, rel=1e-9)
    assert term_value(TermSpec(0, over_x=True), x, W) == pytest.approx(1.0, rel=1e-9)
    assert term_value(TermSpec(0, squared=False), x, W) == pytest.approx(math.sqrt(1 / 3), rel=1e-9)
    # sigma^(1 + nu) v' with nu = -1/4 (gamma = 3): int x^(3/2) dx
    assert term_value(TermSpec(0, sigma=0.75, dx=1), x, W) == pytest.approx(0.4, rel=1e-6)
    # H^1 of x: |x|_0^2 + |1|_0^2
    assert term_value(TermSpec(0, norm=1), x, W) == pytest.approx(4 / 3, rel=1e-6)


def test_fake_history_derivatives_exact():
    g = Grid(20)
    times = np.linspace(0, 0.5, 11)
    v = np.array([g.x * (1 + t + t * t + t ** 3) for t in times])
    traj = SimpleNamespace(times=times, v=v, r=v.copy())
    d = time_derivatives(traj, 0.5, 3, "history")
    np.testing.assert_allclose(d[1], g.x * (1 + 1.0 + 0.75), rtol=1e-9)
    np.testing.assert_allclose(d[2], g.x * (2 + 3.0), rtol=1e-8)
    np.testing.assert_allclose(d[3], 6 * g.x, rtol=1e-7)
    assert d.K == 3 and d.method == "history"
    with pytest.raises(CapabilityError):
        time_derivatives(SimpleNamespace(times=times[:3], v=v[:3], r=v[:3]), 0.1, 3, "history")
    with pytest.raises(ValidationError):
        time_derivatives(traj, 0.1, 1, "spline")


def test_quadratic_in_time_history():
    g = Grid(10)
    times = np.linspace(0, 1, 9)
    traj = SimpleNamespace(times=times, v=np.array([g.x * t * t for t in times]), r=np.zeros((9, 10)))
    d = time_derivatives(traj, 0.75, 2, "history")
    np.testing.assert_allclose(d[1], 1.5 * g.x, atol=1e-12)
    np.testing.assert_allclose(d[2], 2 * g.x, atol=1e-11)
    assert d.order == 2.0


def test_equilibrium_history_derivatives():
    data = lane_emden_equilibrium(Grid(100), 2.0, balance=True)
    traj = run(data, SolverConfig(T_final=0.5))
    d = time_derivatives(traj, 0.5, 4)
    # order 4 divides roundoff-level v by (T/64)^4 and is not held to this bound
    assert max(np.abs(d[k]).max() for k in range(4)) <= 1e-5


def test_evaluate_requires_enough_orders(quad200):
    data, W = quad200
    J = compat_jets(data, W, 2)
    with pytest.raises(CapabilityError, match="evaluable terms"):
        energy_gamma2(J.dv, W)


def test_energy_is_quadratic(quad200):
    data, W = quad200
    J = compat_jets(data.with_velocity(0.05 * data.x * (1 - data.x ** 2)), W, 4)
    e1 = energy(J.dv, W, square_leading=True).total
    e2 = energy(2 * J.dv, W, square_leading=True).total
    assert e2 == pytest.approx(4 * e1, rel=1e-12)
    assert energy(0 * J.dv, W).total == 0.0


def test_equilibrium_energy_nearly_vanishes():
    data = lane_emden_equilibrium(Grid(100), 2.0, balance=True)
    W = build_weights(data)
    J = compat_jets(data, W, 4)
    assert energy(J.dv, W, square_leading=True).total <= 1e-10


def test_general_gamma_energy_evaluates():
    data = vacuum_profile(Grid(200), 1.5, u0=lambda x: 0.05 * x * (1 - x * x))
    W = build_weights(data)
    J = compat_jets(data, W, 5, max_order=5)
    rep = energy(J.dv, W)
    assert len(rep.terms) == 38 and math.isfinite(rep.total) and rep.total > 0
    assert rep.meta["functional"] == "E_tilde" and rep.meta["l"] == 5


def test_series_and_check_on_equilibrium(tmp_path):
    data = lane_emden_equilibrium(Grid(100), 2.0, balance=True)
    traj = run(data, SolverConfig(T_final=0.05, output_every=0.005))
    reports = energy_series(traj)
    assert len(reports) == traj.times.size
    # fourth differences at spacing 5e-3 lift roundoff-level velocities to ~1e-5
    ok, sup = boundedness_check(traj, atol=1e-4)
    assert ok and sup <= 1e-4
    p = write_energy_series_csv(reports, tmp_path / "e.csv", {"n": 100})
    meta, header, table = read_csv(p)
    assert meta["n"] == "100" and header[:2] == ["t", "total"] and len(header) == 22
    np.testing.assert_allclose(table[:, 1], [r.total for r in reports])
    with pytest.raises(ValidationError):
        write_energy_series_csv([], tmp_path / "x.csv")


def test_check_on_expansion():
    data = vacuum_profile(Grid(100), 2.0, u0=lambda x: 0.05 * x * (1 - x * x))
    traj = run(data, SolverConfig(T_final=0.05, output_every=0.005))
    ok, ratio = boundedness_check(traj)
    assert ok and 0.5 < ratio < 2.0
