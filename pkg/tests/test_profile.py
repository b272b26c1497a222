import numpy as np
import pytest

from evansflow.profile import (ProfileGrid, ShockContext, compute_slow_manifold, fenichel_data,
                               integrate_profile, profile_residual)
from evansflow.shock import build_shock_family


def test_fenichel_constants(burgers, pair):
    fam = build_shock_family(burgers, [0.1])
    data = fenichel_data(burgers, fam, 0.1)
    assert data.a == pytest.approx(-1.0)
    assert data.gamma0 == pytest.approx(1.0)
    assert data.scaled_c[0] == pytest.approx(-0.1, abs=1e-15)
    data2 = fenichel_data(pair, build_shock_family(pair, [0.1]), 0.1)
    assert data2.a == pytest.approx(-1.0)
    assert data2.c_eps[1] == pytest.approx(0.0, abs=1e-15)


def test_burgers_slow_manifold_is_exact(burgers):
    fam = build_shock_family(burgers, [0.1])
    sm = compute_slow_manifold(burgers, fam, 0.1)
    tau = np.linspace(-1, 1, 7)
    assert np.allclose(sm.u_at(tau)[:, 0], tau, atol=1e-13)
    assert np.allclose(sm.h_at(tau), 1.0, atol=1e-13)


def test_pair_slow_manifold(pair):
    sm = compute_slow_manifold(pair, build_shock_family(pair, [0.1]), 0.1)
    tau = np.linspace(-1, 1, 7)
    u = sm.u_at(tau)
    assert np.allclose(u[:, 0], tau, atol=1e-13)
    assert np.allclose(u[:, 1], 0.0, atol=1e-13)
    assert np.allclose(sm.h_at(tau), 1.0, atol=1e-13)


def test_zero_amplitude_manifold_is_axis(pair):
    ctx = ShockContext(pair, 0.0)
    tau = np.linspace(-1, 1, 5)
    assert np.allclose(ctx.u_at(tau)[:, 0], tau)
    assert np.allclose(ctx.u_at(tau)[:, 1], 0.0)


def test_burgers_profile_is_tanh(burgers):
    fam = build_shock_family(burgers, [0.2])
    grid = integrate_profile(burgers, fam, 0.2, L=100.0, tol=1e-10)
    exact = 0.2 * np.tanh(0.2 * grid.x)
    assert np.abs(grid.phi[:, 0] - exact).max() < 1e-8
    assert grid.phi_at(np.array([5.0]))[0, 0] == pytest.approx(0.2 * np.tanh(1.0), abs=1e-10)
    assert grid.phi_at(np.array([0.0]))[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_pair_profile_keeps_inert_component(pair):
    fam = build_shock_family(pair, [0.1])
    grid = integrate_profile(pair, fam, 0.1)
    assert np.abs(grid.phi[:, 1]).max() < 1e-14


def test_residual_converges_quadratically(burgers):
    fam = build_shock_family(burgers, [0.2])
    res = []
    for nodes in (401, 801):
        x = np.linspace(-50, 50, nodes)
        phi = 0.2 * np.tanh(0.2 * x)[:, None]
        res.append(profile_residual(burgers, fam, ProfileGrid(x, phi, np.tanh(0.2 * x), 50.0, 0.2)))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.05)


def test_residual_of_constant_and_perturbed_grids(burgers):
    fam = build_shock_family(burgers, [0.2])
    x = np.linspace(-50, 50, 1001)
    const = ProfileGrid(x, np.full((x.size, 1), -0.2), -np.ones_like(x), 50.0, 0.2)
    assert profile_residual(burgers, fam, const) == pytest.approx(0.0, abs=1e-16)
    phi = 0.2 * np.tanh(0.2 * x)[:, None] + 0.01
    bumped = ProfileGrid(x, phi, np.tanh(0.2 * x), 50.0, 0.2)
    assert profile_residual(burgers, fam, bumped) > 1e-3
