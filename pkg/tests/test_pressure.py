import numpy as np
import pytest

from yudovich import analysis as A
from yudovich.fields import Grid2D, VectorField2D, make_cutoff
from yudovich.pressure import (
    BoundaryDecayError,
    curl_ratio,
    leray_oracle,
    pressure_force_lowpass,
    pressure_force_split,
    relative_l2,
    sym_product,
    tail_bound,
    velocity_gradients,
)


@pytest.fixture(scope="module")
def forces():
    g = Grid2D(256, 8.0)
    u = A.build_field(A.random_yudovich(2, count=4, region=1.5), g).u
    return {
        "u": u,
        "split": pressure_force_split(u, u, make_cutoff(1.0, 2.0)),
        "split_wide": pressure_force_split(u, u, make_cutoff(1.5, 3.0)),
        "lowpass": pressure_force_lowpass(u, u),
        "oracle": leray_oracle(u, u),
    }


def test_operators_agree_on_small_grid(forces):
    o = forces["oracle"]
    assert relative_l2(forces["split"], o) < 1e-4
    assert relative_l2(forces["lowpass"], o) < 1e-4
    assert relative_l2(forces["lowpass"], forces["split"]) < 1e-4


def test_split_independent_of_cutoff(forces):
    assert relative_l2(forces["split_wide"], forces["split"]) < 1e-6


def test_forces_are_gradients(forces):
    assert curl_ratio(forces["oracle"], "spectral") < 1e-5
    assert curl_ratio(forces["split"], "fd4") < curl_ratio(forces["split"], "fd2")


def test_trusted_radius_and_provenance(forces):
    s = forces["split"]
    assert s.trusted_radius == pytest.approx(0.75 * 8.0 - 2.0)
    assert s.provenance["operator"] == "split"
    assert forces["lowpass"].provenance["operator"] == "lowpass"


def test_force_is_quadratic(forces):
    u = forces["u"]
    f = pressure_force_split(u.scale(2.0), u, make_cutoff(1.0, 2.0))
    assert np.allclose(f.f1, 2 * forces["split"].f1, atol=1e-12 * np.abs(f.f1).max())


def test_sym_product_and_gradients():
    g = Grid2D(32, 4.0)
    x1, x2 = g.mesh()
    u = VectorField2D(g, x2, -x1)
    F = sym_product(u, u)
    assert np.allclose(F["12"], -x1 * x2)
    du = velocity_gradients(u, "fd2")
    assert np.allclose(du[(2, 1)], 1.0) and np.allclose(du[(1, 2)], -1.0)


def test_oracle_requires_decay():
    g = Grid2D(32, 4.0)
    u = VectorField2D(g, np.ones((32, 32)), np.zeros((32, 32)))
    with pytest.raises(BoundaryDecayError):
        leray_oracle(u, u)


def test_tail_bound_decreases_with_box():
    assert tail_bound(1.0, 1.0, 0.25, 64.0) < tail_bound(1.0, 1.0, 0.25, 16.0)
    f = pressure_force_split(*(2 * [A.build_field(A.vortices([(0, 0, 1, 1)]), Grid2D(64, 8.0)).u]),
                             make_cutoff(1.0, 2.0), alpha=0.25, norms=(1.0, 1.0))
    assert f.tail_bound == tail_bound(1.0, 1.0, 0.25, 8.0)


def test_force_save(tmp_path, forces):
    forces["split"].save(tmp_path / "f.yud")
    assert (tmp_path / "f.yud").exists() and (tmp_path / "f.yud.json").exists()
