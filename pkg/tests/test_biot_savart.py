import math

import numpy as np
import pytest
from scipy.integrate import quad

from yudovich.fields import Grid2D, ScalarField2D, make_cutoff
from yudovich import biot_savart as bs


def gaussians(g, items):
    x1, x2 = g.mesh()
    return ScalarField2D(g, sum(s * np.exp(-((x1 - a) ** 2 + (x2 - b) ** 2) / 0.8) for a, b, s in items))


def test_rankine_far_field():
    g = Grid2D(256, 4.0)
    a = 1.0
    prof = make_cutoff(a - 0.15, a + 0.15)
    gam = 2 * math.pi * quad(lambda r: float(prof(r)) * r, 0, a + 0.2, points=[a - 0.15, a + 0.15])[0]
    u = bs.velocity_from_vorticity(prof.on_grid(g))
    r = g.radius()
    m = (r > 1.2 * a) & (r < 3.0)
    ex = bs.rankine_profile(r, a, gam)
    assert np.max(np.abs(bs.azimuthal(u) - ex)[m] / ex[m]) < 1e-3
    # a positive vortex turns counter-clockwise
    assert np.all(bs.azimuthal(u)[m] > 0)


def test_rankine_profile_inside_and_outside():
    r = np.array([0.0, 0.5, 2.0])
    assert np.allclose(bs.rankine_profile(r, 1.0), [0.0, 0.25, 0.25])


def test_divergence_free_to_rounding():
    g = Grid2D(128, 16.0)
    u = bs.velocity_from_vorticity(gaussians(g, [(1, 0, 1), (-1, 1, -0.5)]))
    assert bs.divergence_sup(u) < 1e-13


def test_roundtrip_second_order():
    errs = []
    for n in (128, 256, 512):
        g = Grid2D(n, 8.0)
        errs.append(bs.roundtrip_error(ScalarField2D(g, np.exp(-g.radius() ** 2 / 0.5))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8)
    assert errs[-1] < 1e-2


def test_decomposition_sums_to_gradient():
    g = Grid2D(256, 16.0)
    w = gaussians(g, [(1, 0.5, 1), (-2, 1, -0.7), (0.5, -2.5, 0.5)])
    u = bs.velocity_from_vorticity(w, method="spectral")
    dec = bs.gradient_decomposition(u, 1.0, omega=w)
    assert bs.decomposition_error(dec, bs.gradient_from_vorticity(w)) < 1e-6
    # the local part carries the field near the origin, the far parts are small there
    m = g.radius() < 2.0
    loc = max(np.max(np.abs(dec.local_part[p][m])) for p in bs.PAIRS)
    far = max(np.max(np.abs(dec.smooth_far_part[p][m])) for p in bs.PAIRS)
    assert far < 0.1 * loc


def test_decomposition_rejects_small_R():
    g = Grid2D(64, 16.0)
    u = bs.velocity_from_vorticity(gaussians(g, [(0, 0, 1)]))
    with pytest.raises(ValueError):
        bs.gradient_decomposition(u, 0.5)


def test_gradient_reference_matches_differences():
    g = Grid2D(256, 16.0)
    w = gaussians(g, [(0.5, 0.2, 1)])
    G = bs.gradient_from_vorticity(w)
    u = bs.velocity_from_vorticity(w, method="spectral")
    fd = bs.spectral_velocity_gradient(u)
    m = g.radius() < 3
    scale = max(np.max(np.abs(G[p])) for p in bs.PAIRS)
    # fd is an FFT derivative of a velocity that does not vanish at the box edge,
    # so it carries a small Gibbs error of its own
    for p in bs.PAIRS:
        assert np.max(np.abs(G[p] - fd[p])[m]) < 1e-2 * scale
    assert np.allclose(G[(1, 1)] + G[(2, 2)], 0.0, atol=1e-12)
    assert np.allclose((G[(1, 2)] - G[(2, 1)])[m], w.data[m], atol=1e-6)


def test_smooth_far_kernel_decays_like_cube():
    assert bs.smooth_far_kernel_slope() == pytest.approx(-3.0, abs=0.01)


def test_cz_probe_plancherel_and_range():
    g = Grid2D(256, 16.0)
    x1, x2 = g.mesh()
    c = make_cutoff(0.4, 0.6)
    w = ScalarField2D(g, c(np.abs(x1)) * c(np.abs(x2)))
    (p, r2), = bs.cz_growth_probe(w, [2])
    assert r2 == pytest.approx(1.0, abs=0.01)
    fd = bs.cz_growth_probe(w, [2], method="fd")[0][1]
    assert fd < r2
    with pytest.raises(ValueError):
        bs.cz_growth_probe(w, [1.5])
    with pytest.raises(ValueError):
        bs.cz_growth_probe(w, [4], method="nope")


def test_lp_norm_scaling():
    a = np.full((8, 8), 1e200)
    assert bs.lp_norm(a, 64.0, 0.5) == pytest.approx(1e200 * 16.0 ** (1 / 64), rel=1e-12)
    assert bs.lp_norm(np.zeros((4, 4)), 2.0, 1.0) == 0.0
