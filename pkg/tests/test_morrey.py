import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yudovich.fields import Grid2D, ScalarField2D, VectorField2D
from yudovich.morrey import (
    MorreyParams,
    TrustedRegionError,
    embedding_check,
    interpolate_check,
    morrey_norm,
    norm,
    radius_ladder,
    yudovich_norm,
)

GRID = Grid2D(256, 8.0)


def const(g, c=1.0):
    return ScalarField2D(g, np.full((g.n, g.n), c))


def power(g, a):
    return ScalarField2D(g, g.radius() ** a)


def test_constant_fixture():
    # r^-(1 + a) ||1||_{L^2(B_r)} = sqrt(pi) r^-a, largest at r = 1
    rep = morrey_norm(const(GRID), MorreyParams(2.0, 0.25))
    assert rep.norm == pytest.approx(math.sqrt(math.pi), rel=2e-3)
    assert rep.argmax_radius == 1.0


@pytest.mark.parametrize("a", [0.0, 0.25, 0.5])
def test_power_fixture(a):
    # ||x|^a|_{L^2(B_r)} = sqrt(pi / (1 + a)) r^(1 + a): the weighted value is flat in r
    rep = morrey_norm(power(GRID, a), MorreyParams(2.0, a))
    assert rep.norm == pytest.approx(math.sqrt(math.pi / (1 + a)), rel=5e-3)
    assert np.ptp(rep.values) / rep.norm < 1e-2


def test_sup_norm_fixture():
    assert norm(const(GRID, 3.0), math.inf, 0.0) == 3.0
    # |x|^a / r^a attains 1 in each ball, up to the cell-centre offset
    assert norm(power(GRID, 0.5), math.inf, 0.5) == pytest.approx(1.0, abs=2 * GRID.h)


def test_scaling_and_vector_magnitude():
    g = GRID
    x1, _ = g.mesh()
    s = ScalarField2D(g, np.sin(x1))
    v = VectorField2D(g, 0.6 * np.sin(x1), -0.8 * np.sin(x1))
    assert norm(s.scale(-2.5), 2.0, 0.1) == pytest.approx(2.5 * norm(s, 2.0, 0.1), rel=1e-12)
    assert norm(v, 2.0, 0.1) == pytest.approx(norm(s, 2.0, 0.1), rel=1e-12)


def test_ladder_steps():
    rs = radius_ladder(GRID)
    steps = np.diff(rs)
    assert rs[0] == 1.0 and rs[-1] <= 0.75 * GRID.L
    assert np.all(steps <= 4 * GRID.h + 1e-12)
    assert np.all(np.array(rs[1:]) / rs[:-1] <= 2 ** 0.125 + 1e-12)


def test_tails_are_monotone():
    rng = np.random.default_rng(1)
    f = ScalarField2D(GRID, rng.standard_normal((GRID.n, GRID.n)))
    rep = morrey_norm(f, MorreyParams(2.0, 0.25))
    tails = [rep.tail_norms[r] for r in rep.radii]
    assert all(a >= b for a, b in zip(tails, tails[1:]))
    assert rep.tail(rep.radii[3]) == tails[3]
    assert rep.norm == tails[0]


def test_trusted_region_enforced():
    with pytest.raises(TrustedRegionError):
        morrey_norm(const(GRID), MorreyParams(), radii=[1.0, 7.0])
    with pytest.raises(ValueError):
        morrey_norm(const(GRID), MorreyParams(), radii=[0.5, 1.0])
    with pytest.raises(ValueError):
        MorreyParams(p=0.5)
    with pytest.raises(ValueError):
        MorreyParams(alpha=-0.1)


@given(st.floats(0.0, 0.4), st.floats(0.05, 0.3), st.floats(0.1, 0.9), st.integers(0, 1000))
def test_interpolation_inequality(alpha, gap, t, seed):
    rng = np.random.default_rng(seed)
    g = Grid2D(64, 8.0)
    f = ScalarField2D(g, rng.standard_normal((64, 64)) * (1 + g.radius()) ** rng.uniform(0, 0.5))
    beta = alpha + gap
    gamma = alpha + t * gap
    lhs, rhs, _ = interpolate_check(f, alpha, beta, gamma)
    assert lhs <= rhs * (1 + 1e-12)


def test_embedding_on_rotation():
    # u = x_perp |x|^(a - 1): |u| = |x|^a and curl u = (1 + a) |x|^(a - 1)
    g = Grid2D(256, 8.0)
    x1, x2 = g.mesh()
    a = 0.3
    r = g.radius()
    u = VectorField2D(g, -x2 * r ** (a - 1.0) * np.minimum(r, 1.0) ** 0, x1 * r ** (a - 1.0))
    for R in (1.0, 2.0, 4.0):
        lhs, rhs = embedding_check(u, 0.0, R)
        assert lhs <= rhs
    l2, wsup = yudovich_norm(u, a)
    assert l2 == pytest.approx(math.sqrt(math.pi / (1 + a)), rel=1e-2)
    assert wsup > 0
