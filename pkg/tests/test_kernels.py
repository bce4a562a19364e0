import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import exp1

from yudovich.fields import Grid2D, ScalarField2D, VectorField2D, make_cutoff
from yudovich.kernels import (
    KernelTable,
    LambdaOutOfRange,
    SupportViolation,
    UnresolvedCutoff,
    decay_slope,
    envelope_constant,
    far_radial,
    free_space_poisson,
    gamma_lambda,
    gamma_radial,
    log_derivs,
    low_pass,
    m_function,
    mhat,
    mhat_direct,
    near_radial,
    offset_mesh,
    psi_radial,
    radial_third,
    tabulate_split_kernels,
)

THETA = make_cutoff(1.0, 2.0)


def test_m_function_has_unit_mass():
    r = np.linspace(1.0, 2.0, 20001)
    mass = np.trapezoid(2 * math.pi * r * m_function(THETA, r), r)
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert mhat_direct(THETA, [0.0])[0] == pytest.approx(1.0, abs=1e-10)


@given(st.floats(0.0, 60.0))
def test_mhat_spline_matches_quadrature(rho):
    assert float(mhat(THETA, np.array([rho]))[0]) == pytest.approx(float(mhat_direct(THETA, [rho])[0]), abs=1e-9)


def test_split_kernels_sum_to_log_derivatives():
    r = np.geomspace(0.3, 10.0, 50)
    E, E1, E2, E3 = log_derivs(r)
    g1, _, _ = far_radial(THETA, r)
    assert np.allclose(near_radial(THETA, r) + g1, E1, atol=1e-14)


def test_radial_third_of_r_squared():
    # g = r^2: d_i d_j d_k g = 0 everywhere
    x1, x2 = np.array([0.3, -1.2]), np.array([0.7, 0.5])
    r = np.hypot(x1, x2)
    for c in radial_third(2 * r, 2 + 0 * r, 0 * r, r, x1, x2):
        assert np.allclose(c, 0.0, atol=1e-13)


def test_poisson_against_gaussian():
    # omega = exp(-r^2 / s^2) has psi = -(s^2 / 4) (log(r^2 / s^2) + E1(r^2 / s^2)) - (s^2 / 2) log s
    g = Grid2D(256, 8.0)
    s = 0.5
    r = g.radius()
    w = ScalarField2D(g, np.exp(-(r / s) ** 2))
    q = (r / s) ** 2
    exact = -(s * s / 4) * (np.log(q) + exp1(q)) - (s * s / 2) * math.log(s)
    for method in ("cell_average", "spectral"):
        psi = free_space_poisson(w, method=method).data
        assert np.max(np.abs(psi - exact)) / np.max(np.abs(exact)) < 1e-3


def test_poisson_rejects_wide_support():
    g = Grid2D(64, 4.0)
    with pytest.raises(SupportViolation):
        free_space_poisson(ScalarField2D(g, np.ones((64, 64))))


def test_psi_scaling():
    r = np.array([0.5, 1.0, 3.0])
    p1, A1, B1 = psi_radial(r, 1.0)
    p2, A2, B2 = psi_radial(2 * r, 2.0)
    assert np.allclose(p2, p1 / 4) and np.allclose(A2, A1 / 16) and np.allclose(B2, B1 / 16)


def test_low_pass_fixes_constants():
    g = Grid2D(64, 8.0)
    c = ScalarField2D(g, np.full((64, 64), 2.5))
    assert np.allclose(low_pass(c, 4.0).data, 2.5, atol=1e-12)
    v = VectorField2D(g, np.full((64, 64), 1.0), np.full((64, 64), -1.0))
    out = low_pass(v, 2.0)
    assert np.allclose(out.u1, 1.0) and np.allclose(out.u2, -1.0)
    with pytest.raises(ValueError):
        low_pass(c, 1.0, boundary="mirror")


def test_low_pass_removes_high_frequencies():
    g = Grid2D(128, 8.0)
    x1, _ = g.mesh()
    k = 2 * math.pi * 16 / (2 * g.L)  # well above the cutoff 2 / lam for lam = 4
    f = ScalarField2D(g, np.cos(k * x1))
    assert np.max(np.abs(low_pass(f, 4.0, boundary="periodic").data)) < 1e-12


def test_gamma_table_matches_radial_quadrature():
    g = Grid2D(256, 32.0)
    lam = 2.0
    G = gamma_lambda(g, lam)
    z1, z2, r = offset_mesh(g)
    pick = [(g.n + 8, g.n + 3), (g.n + 20, g.n - 11), (g.n - 40, g.n + 25)]
    tn = max(np.max(np.abs(v[np.abs(r) < 2 * lam])) for v in G.values.values())
    for i, j in pick:
        ex = gamma_radial(z1[i, j], z2[i, j], lam)
        for k in G.components:
            assert abs(G[k][i, j] - ex[k][0]) < 1e-3 * tn


def test_gamma_range_checks():
    g = Grid2D(256, 32.0)
    with pytest.raises(LambdaOutOfRange):
        gamma_lambda(g, 8.0)
    with pytest.raises(LambdaOutOfRange):
        gamma_lambda(g, 0.5)
    with pytest.raises(UnresolvedCutoff):
        tabulate_split_kernels(g, make_cutoff(1.0, 1.1))


def test_envelope_and_slope_small_grid():
    g = Grid2D(512, 64.0)
    env = []
    for lam in (1.0, 2.0):
        G = gamma_lambda(g, lam)
        env.append(envelope_constant(G, lam))
        assert decay_slope(G, lam) <= -2.85
    assert max(env) / min(env) < 2.0
    with pytest.raises(LambdaOutOfRange):
        decay_slope(G, 8.0, r_max=16.0)


def test_table_save_load(tmp_path):
    g = Grid2D(16, 2.0)
    rng = np.random.default_rng(0)
    t = KernelTable(g, {"1": rng.standard_normal((32, 32)), "2": rng.standard_normal((32, 32))}, "test")
    t.save(tmp_path / "k.yud")
    t2 = KernelTable.load(tmp_path / "k.yud", g, ("1", "2"))
    assert np.array_equal(t2["1"], t["1"]) and np.array_equal(t2["2"], t["2"])
    data = rng.standard_normal((16, 16))
    direct = np.zeros((16, 16))
    for i in range(16):
        for j in range(16):
            direct[i, j] = np.sum(t["1"][i - np.arange(16)[:, None] + 16, j - np.arange(16)[None, :] + 16] * data) * g.h**2
    assert np.allclose(t.convolve("1", data), direct, atol=1e-12)
