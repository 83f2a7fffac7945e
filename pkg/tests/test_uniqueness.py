from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vstar.dynamics import LagrangianState
from vstar.errors import ConfigurationError, ValidationError
from vstar.eulerian import EulerianRadial, to_eulerian
from vstar.grid import Grid
from vstar.profiles import InitialData, vacuum_profile
from vstar.solver import SolverConfig, run
from vstar.uniqueness import (ExtendedRadial, coercivity_constants, entropy_bound_sweep, eta_cutoff, extend_radial,
                              extension_regularity, gronwall_certificate, potential_estimate_check,
                              potential_gradient, random_radial_family, rel_entropy_density,
                              rel_entropy_flux, rel_entropy_integral, rel_entropy_lower_bound,
                              rel_entropy_rhs, smallness, total_mass, twin_comparison,
                              uniqueness_functional)
from vstar.weights import build_weights

pos = st.floats(0.0, 10.0)
vel = st.floats(-5.0, 5.0)


def test_eta_cutoff_values():
    np.testing.assert_allclose(eta_cutoff([0.0, 1.0, 1.5, 2.0, 3.0], 3.0), [1, 1, 0.5, 0, 0])


@settings(max_examples=200, deadline=None)
@given(pos, vel, pos, vel, st.floats(1.05, 3.0))
def test_rel_entropy_nonnegative(r1, u1, r2, u2, g):
    assert rel_entropy_density(r1, u1, r2, u2, g) >= -1e-12 * (1 + r1 ** g + r2 ** g)


def test_rel_entropy_examples():
    assert rel_entropy_density(1.3, 0.2, 1.3, 0.2, 1.5) == 0.0
    # gamma = 2: (rho2 - rho1)^2 + rho2 du^2 / 2
    assert rel_entropy_density(1.0, 0.0, 3.0, 2.0, 2.0) == pytest.approx(4.0 + 6.0)
    assert rel_entropy_lower_bound(1.0, 0.0, 3.0, 2.0, 2.0) == pytest.approx(4.0 + 6.0)
    with pytest.raises(ValidationError):
        rel_entropy_density(-1.0, 0, 1.0, 0, 2.0)
    with pytest.raises(ValidationError):
        rel_entropy_density(1.0, 0, 1.0, 0, 1.0)


def test_entropy_bound_sweep_small():
    res = entropy_bound_sweep(np.linspace(0, 3, 9), np.linspace(-1, 1, 5), [1.2, 1.5, 2.0])
    assert res["points"] == 9 * 9 * 5 * 3 and res["violations"] == 0
    with pytest.raises(ValidationError):
        entropy_bound_sweep([1.0], [0.0], [2.5])


def test_flux_with_equal_velocities_is_transport():
    rho1, rho2, u, g, A = 0.7, 1.9, 0.4, 1.4, 2.0
    eta = rel_entropy_density(rho1, u, rho2, u, g) * A
    assert rel_entropy_flux(rho1, u, rho2, u, g, A) == pytest.approx(u * eta, rel=1e-12)
    assert rel_entropy_flux(rho1, 0.3, rho1, 0.3, g, A) == pytest.approx(0.0, abs=1e-15)


def test_rhs_vanishes_for_identical_states():
    r = np.linspace(0, 1, 11)
    rho, u = 1 - r * r, 0.5 * r
    out = rel_entropy_rhs(r, rho, u, rho, u, 2.0, 0.5 * np.ones_like(r), r, r, kappa=1.0)
    np.testing.assert_array_equal(out, 0.0)


def test_potential_of_uniform_ball():
    r = np.linspace(0, 1, 201)
    sol = EulerianRadial(r, np.ones_like(r), np.zeros_like(r), 1.0)
    np.testing.assert_allclose(potential_gradient(sol), 4 * math.pi * r / 3, atol=1e-12)
    assert total_mass(sol) == pytest.approx(4 * math.pi / 3, rel=1e-12)


def test_potential_estimate_check():
    r = np.linspace(0, 1, 401)
    h = np.where(r < 0.5, 1.0, 0.0)
    h[-1] = 0.0
    est = potential_estimate_check(r, 1.0 - r)
    assert est.lhs > 0 and est.rhs_factor > 0 and est.ratio < 30
    assert potential_estimate_check(r, 0 * r).ratio == 0.0
    with pytest.raises(ValidationError):
        potential_estimate_check(r, np.ones_like(r))
    for h in random_radial_family(np.random.default_rng(3), 10, r):
        assert h[-1] == 0.0
        assert potential_estimate_check(r, h).ratio < 30


def test_coercivity_and_functional():
    assert coercivity_constants(1.0) == (0.25, 2.125)
    with pytest.raises(ValidationError):
        coercivity_constants(0.9)
    g = Grid(400)
    data = InitialData(g, np.ones(g.n), np.zeros(g.n), gamma=2.0)
    W = build_weights(data, validate=False)
    x = g.x
    assert uniqueness_functional(0 * x, 0 * x, W, 1.0) == 0.0
    # sigma = x on flat data: (k1 + k2) int x^2
    assert uniqueness_functional(x, 0 * x, W, 1.0) == pytest.approx(2.375 / 3, rel=1e-9)
    assert uniqueness_functional(0 * x, x, W, 1.0) == pytest.approx(0.2, rel=1e-9)
    assert smallness(0.1 * x, W) == pytest.approx(0.2)


def test_gronwall_certificate():
    t = np.linspace(0, 1, 11)
    c = gronwall_certificate(t, np.exp(0.5 * t), 1.0)
    assert c.ok and c.fitted_rate == pytest.approx(0.5)
    assert not gronwall_certificate(t, np.exp(0.5 * t), 0.4).ok
    bad = gronwall_certificate(t, np.r_[0.0, np.full(10, 1e-3)], 1.0)
    assert bad.violation and not bad.ok
    ok, rate = gronwall_certificate(t, np.zeros(11), 1.0, smallness_ok=False)
    assert ok and rate == 0.0
    with pytest.raises(ValidationError):
        gronwall_certificate(t, -np.ones(11), 1.0)


def test_twin_of_itself_is_zero():
    data = vacuum_profile(Grid(60), 2.0, u0=lambda x: 0.05 * x * (1 - x * x))
    tr = run(data, SolverConfig(T_final=0.02, output_every=0.01))
    rep = twin_comparison(tr, tr, entropy=True)
    assert np.all(rep.D == 0) and rep.certificate.ok and rep.smallness_ok
    assert np.allclose(rep.entropy, 0.0)
    assert set(rep.to_dict()["certificate"]) == {"ok", "fitted_rate", "violation",
                                                 "conditional", "C"}


def test_extension_of_linear_velocity():
    data = vacuum_profile(Grid(200), 2.0, u0=lambda x: 0.5 * x)
    sol = to_eulerian(LagrangianState(0.0, data.x.copy(), data.u0.copy()), data)
    ext = extend_radial(sol)
    assert ext.u_R == pytest.approx(0.5, abs=1e-10) and ext.du_R == pytest.approx(0.5, abs=1e-8)
    out = ext.r_nodes > ext.R
    s = ext.r_nodes[out] - ext.R
    np.testing.assert_allclose(ext.u[out], eta_cutoff(s, ext.eps) * 0.5 * (1 + s), atol=1e-8)
    assert np.all(ext.rho[out] == 0)
    assert ext.eps == pytest.approx(5 / 200, rel=1e-6)
    rep = extension_regularity(ext, 2.0)
    assert rep.expected == "W1inf" and rep.u_jump < 1e-8 and rep.du_jump < 1e-6
    # rho0 = 1 - x^2 has slope -2 at the boundary and 0 outside
    assert rep.drho_jump == pytest.approx(2.0, rel=1e-6)
    with pytest.raises(ConfigurationError):
        extend_radial(sol, eps=0.1, r_max=1.05)
    with pytest.raises(ValidationError):
        extend_radial(sol, eps=-1.0)


def test_entropy_integral_of_density_shift():
    g = Grid(200)
    a = vacuum_profile(g, 2.0)
    b = vacuum_profile(g, 2.0, c=1.01)
    ea = extend_radial(to_eulerian(LagrangianState(0.0, g.x.copy(), a.u0.copy()), a))
    eb = extend_radial(to_eulerian(LagrangianState(0.0, g.x.copy(), b.u0.copy()), b))
    assert rel_entropy_integral(ea, ea, 2.0) == 0.0
    # gamma = 2 and equal velocities: int (0.01 (1 - r^2))^2 4 pi r^2 dr
    exact = 1e-4 * 4 * math.pi * (1 / 3 - 2 / 5 + 1 / 7)
    assert rel_entropy_integral(ea, eb, 2.0) == pytest.approx(exact, rel=1e-6)


def test_entropy_integral_of_velocity_shift():
    r = np.linspace(0, 1, 201)
    rho = 1 - r * r
    a = ExtendedRadial(r, rho, 0.2 * r, 1.0, 0.0, 0.1, 1.2, 0.2, 0.2)
    b = ExtendedRadial(r, rho, 0.2 * r + 0.3, 1.0, 0.0, 0.1, 1.2, 0.5, 0.2)
    # only the kinetic term survives: 0.3^2 / 2 times the mass 8 pi / 15
    assert rel_entropy_integral(a, b, 2.0) == pytest.approx(0.045 * 8 * math.pi / 15, rel=1e-8)
