import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yudovich import analysis as A
from yudovich.fields import Grid2D, curl, divergence
from yudovich.solver import SolverConfig, vortex_field

SPECS = [
    A.dyadic_bump(0.6, 2),
    A.power_rotation(0.3),
    A.galileo_shift(A.power_rotation(0.2), "sine", (1.0, 0.5), 2.0),
    A.truncated(A.power_rotation(0.3), 2.0),
    A.random_yudovich(3),
    A.vortices([(0, 0, 1, 1), (2, 0, 0.8, -1)]),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind)
def test_spec_roundtrip(spec):
    assert A.FieldSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


@pytest.mark.parametrize("spec", [s for s in SPECS if s.kind != "vortices"], ids=lambda s: s.kind)
def test_closed_form_derivatives(spec):
    # gradient and Laplacian of psi against centred differences at scattered points
    rng = np.random.default_rng(0)
    x1, x2 = rng.uniform(-5, 5, 200), rng.uniform(-5, 5, 200)
    e = 1e-4
    f = lambda a, b: A.stream(spec, a, b, 0.7).psi
    s = A.stream(spec, x1, x2, 0.7)
    d1 = (f(x1 + e, x2) - f(x1 - e, x2)) / (2 * e)
    d2 = (f(x1, x2 + e) - f(x1, x2 - e)) / (2 * e)
    E = 1e-3
    lap = (f(x1 + E, x2) + f(x1 - E, x2) + f(x1, x2 + E) + f(x1, x2 - E) - 4 * f(x1, x2)) / E**2
    scale = max(1.0, np.max(np.abs(s.d1)), np.max(np.abs(s.d2)))
    assert np.max(np.abs(d1 - s.d1)) < 1e-6 * scale
    assert np.max(np.abs(d2 - s.d2)) < 1e-6 * scale
    assert np.max(np.abs(lap - s.lap)) < 1e-3 * max(1.0, np.max(np.abs(s.lap)))


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind)
def test_grid_curl_converges(spec):
    # sampled closed forms: curl_h u - omega and div_h u are pure O(h^2) truncation
    errs, divs = [], []
    for n in (512, 1024):
        g = Grid2D(n, 16.0)
        b = A.build_field(spec, g, t=0.7)
        m = g.radius() < 10
        errs.append(np.max(np.abs(curl(b.u).data - b.omega.data)[m]))
        divs.append(np.max(np.abs(divergence(b.u).data[m])))
    # the asymptotic ratio is 4; the narrowest dyadic disc is still pre-asymptotic at n=512
    assert errs[1] < errs[0] / 2.5
    assert divs[1] < divs[0] / 2.5


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown parameter"):
        A.FieldSpec("power_rotation", {"alpha": 0.2, "beta": 1})
    with pytest.raises(ValueError, match="missing parameter"):
        A.FieldSpec("dyadic_bump", {"gamma": 0.5})
    with pytest.raises(ValueError, match="unknown field kind"):
        A.FieldSpec("tornado", {})
    with pytest.raises(ValueError, match="overlap"):
        A.dyadic_bump(0.9, 3, radius=0.6)
    with pytest.raises(ValueError):
        A.shift_of("cubic", (1, 0), 1.0, 0.5)


def test_capacity_checks():
    with pytest.raises(A.CapacityError):
        A.build_field(A.dyadic_bump(0.6, 4), Grid2D(64, 16.0))
    with pytest.raises(A.CapacityError):
        A.build_field(A.truncated(A.power_rotation(0.2), 8.0), Grid2D(64, 16.0))


def test_power_rotation_values():
    a = 0.25
    g = Grid2D(64, 8.0)
    b = A.build_field(A.power_rotation(a), g)
    assert b.meta["omega_sup"] == 2 * (1 + a)
    assert np.max(np.abs(b.omega.data)) <= 2 * (1 + a)
    # |u| = (1 + a) |x| (1 + |x|^2)^((a - 1) / 2) grows like |x|^a
    r = g.radius()
    assert np.allclose(b.u.magnitude(), (1 + a) * r * (1 + r * r) ** ((a - 1) / 2))


def test_dyadic_sup_is_one():
    spec = A.dyadic_bump(0.625, 2)
    centres = np.array([2.0**k for k in range(3)])
    w = -A.stream(spec, centres, 0 * centres).lap
    assert np.allclose(w, 1.0, atol=1e-12)
    g = Grid2D(512, 16.0)
    b = A.build_field(spec, g)
    assert b.meta["omega_sup"] == 1.0
    assert np.max(np.abs(b.omega.data)) <= 1.0
    assert b.meta["morrey_alpha"] == pytest.approx(0.25)


def test_galileo_shift_at_t0_and_later():
    g = Grid2D(64, 8.0)
    base = A.power_rotation(0.2)
    b0 = A.build_field(base, g)
    s0 = A.build_field(A.galileo_shift(base, "linear", (1.0, -0.5)), g, t=0.0)
    assert np.allclose(s0.u.u1, b0.u.u1) and np.allclose(s0.u.u2, b0.u.u2)
    c = A.build_field(A.galileo_shift(base, "const", (0.3, 0.4)), g, t=0.0)
    assert np.allclose(c.u.u1 - b0.u.u1, 0.3) and np.allclose(c.u.u2 - b0.u.u2, 0.4)
    gv, G = A.shift_of("sine", (1.0, 0.0), 2.0, math.pi / 4)
    assert gv[0] == pytest.approx(1.0) and G[0] == pytest.approx(0.5)


def test_random_yudovich_is_seeded():
    g = Grid2D(64, 16.0)
    a = A.build_field(A.random_yudovich(5), g).omega.data
    b = A.build_field(A.random_yudovich(5), g).omega.data
    c = A.build_field(A.random_yudovich(6), g).omega.data
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.max(np.abs(a)) <= 6.0


def test_vortex_velocity_matches_biot_savart():
    from yudovich.biot_savart import velocity_from_vorticity

    errs = []
    for n in (128, 256):
        g = Grid2D(n, 8.0)
        b = A.build_field(A.vortices([(0.5, 0, 1, 1), (-1, 1, 0.7, -0.5)]), g)
        u = velocity_from_vorticity(b.omega)
        m = g.radius() < 4
        errs.append(np.max(np.hypot(u.u1 - b.u.u1, u.u2 - b.u.u2)[m]))
    assert errs[1] < 2e-3 and errs[1] < errs[0] / 3


def steady_series(n_times=9):
    g = Grid2D(64, 8.0)
    return A.spec_series(A.power_rotation(0.25), g, np.linspace(0, 2, n_times), 0.25)


def test_energy_check_steady_and_inconclusive():
    s = steady_series()
    assert s.tail_monotone()
    rep = A.energy_distribution_check(s, 0.25, 0.1)
    assert rep.status == A.PASS and rep.lhs[0] <= rep.rhs[0]
    huge = A.energy_distribution_check(s, 0.25, 1e4)
    assert huge.trust["skipped_times"] > 0
    # only t = 0 keeps an admissible radius when K is huge
    assert huge.abscissa == [0.0]
    with pytest.raises(ValueError):
        A.energy_distribution_check(s, 0.6, 1.0)


def test_energy_check_fails_on_growth():
    s = steady_series()
    s.tails[-1] = [3 * x for x in s.tails[-1]]
    assert A.energy_distribution_check(s, 0.25, 1e-3).status == A.FAIL
    s.tails[-1][-1] = 1e9  # non-monotone tail
    assert A.energy_distribution_check(s, 0.25, 1e4).status == A.FAIL


def test_growth_check():
    s = steady_series()
    rep = A.growth_bound_check(s, 0.25, 1.0)
    assert rep.status == A.PASS
    assert abs(rep.details["growth_exponent"]) < 1e-6
    assert A.growth_bound_check(steady_series(5), 0.25, 1.0).status == A.INCONCLUSIVE
    assert A.growth_bound_check(s, 0.25, 0.5).status == A.FAIL


def test_growth_envelope_at_zero():
    assert A.growth_envelope(0.0, 2.0, 1.0, 0.25) == 2.0


@given(st.floats(-3, 3))
def test_calibrate_picks_smallest_passing(threshold):
    def check(c):
        return A.BoundCheckReport("x", A.PASS if math.log10(c) >= threshold else A.FAIL, [], [], [])

    c = A.calibrate(check)
    assert math.log10(c) >= threshold - 1e-12
    assert math.log10(c) - 0.25 < threshold


def test_calibrate_raises_when_nothing_passes():
    with pytest.raises(RuntimeError):
        A.calibrate(lambda c: A.BoundCheckReport("x", A.FAIL, [], [], []))


def test_dichotomy_logic():
    yud = A.FarFieldTable([1, 2, 4], [1.0, 0.2, 0.05])
    slow = A.FarFieldTable([1, 2, 4], [1.0, 0.5, 0.3])
    gal = A.FarFieldTable([1, 2, 4], [0.5, 0.7, 0.81])
    assert A.dichotomy_check([yud], [(gal, 0.8)]).status == A.PASS
    assert A.dichotomy_check([slow], [(gal, 0.8)]).status == A.FAIL
    assert A.dichotomy_check([yud], [(gal, 0.5)]).status == A.FAIL
    assert A.dichotomy_check([yud], []).status == A.INCONCLUSIVE
    assert A.dichotomy_check([yud], [(gal, 0.8)], decay=0.01).status == A.FAIL


def test_reports_csv_columns():
    rep = A.BoundCheckReport("c1", A.PASS, [0.0, 1.0], [1.0, 3.0], [2.0, 2.0])
    rows = list(csv.reader(io.StringIO(A.reports_csv([rep]))))
    assert rows[0] == ["claim_id", "t_or_lambda", "lhs", "rhs", "pass"]
    assert rows[1][4] == "true" and rows[2][4] == "false"
    assert json.loads(A.to_json(rep.to_dict()))["claim_id"] == "c1"
    assert A.to_json({"x": np.float64(1.5), "n": np.int64(2)}) == A.to_json({"n": 2, "x": 1.5})


def test_shift_vorticity_by_whole_cells():
    g = Grid2D(64, 8.0)
    w = vortex_field(g, [(0.0, 0.0, 1.0, 1.0)])
    out = A.shift_vorticity(w, (3 * g.h, -2 * g.h))
    assert np.allclose(out.data, np.roll(np.roll(w.data, 3, axis=0), -2, axis=1), atol=1e-12)


def test_velocity_criterion_and_counterpart():
    g = Grid2D(128, 32.0)
    w = vortex_field(g, [(0.0, 0.0, 1.0, 1.0)])
    from yudovich.biot_savart import velocity_from_vorticity

    u = velocity_from_vorticity(w)
    assert A.velocity_criterion(u, u, [1.0, 2.0]) == [0.0, 0.0]
    v, gn = A.galileo_counterpart(w, "const", (0.3, 0.4), 1.0, 0.0)
    assert gn == pytest.approx(0.5)
    tab = A.farfield_diagnostic(v, u, [1.0, 2.0, 4.0])
    assert tab.velocity[-1] == pytest.approx(0.5, rel=1e-3)
    with pytest.raises(ValueError):
        A.farfield_diagnostic(v, u, [1.0, 2.0])
    with pytest.raises(ValueError):
        A.farfield_diagnostic(v, u, [1.0, 2.0, 8.0])


def test_stability_on_small_grid():
    g = Grid2D(128, 8.0)
    base = vortex_field(g, [(-0.8, 0, 0.9, 1.0), (0.9, 0.2, 0.7, 0.8)])
    pert = vortex_field(g, [(0.2, 0.6, 0.6, 1.0)])
    d = A.stability_data(base, pert, SolverConfig(dt=0.25, t_end=1.0), [0.5, 1.0], 0.25, 0.3)
    assert d.deterministic
    assert all(0.9 < s < 1.05 for s in d.slopes)
    rep = A.stability_check(d, 1e-2)
    assert rep.status == A.PASS
    assert A.stability_check(d, 1e-2, upper=0.5).status == A.FAIL
    with pytest.raises(ValueError):
        A.stability_data(base, pert, SolverConfig(dt=0.25, t_end=1.0), [1.0], 0.25, 0.8)


def test_sph_decay_parts_and_check():
    g = Grid2D(256, 32.0)
    b = A.build_field(A.dyadic_bump(0.625, 2), g)
    dec = A.sph_decay(b.u, [1.0, 2.0], 0.25, stride=8)
    assert len(dec.I1_sup) == 2 and all(x > 0 for x in dec.I2_ball)
    assert A.sph_decay_check(dec, 0.25).status == A.INCONCLUSIVE


def test_manifest_validation(tmp_path):
    m = A.load_manifest()
    assert m["version"] == A.MANIFEST_VERSION
    ids = [c["claim_id"] for c in m["checks"]]
    assert len(ids) == len(set(ids))
    groups = A.job_groups(m)
    assert sum(len(gp) for gp in groups) == len(ids)
    for bad, msg in [({**m, "version": 99}, "version"),
                     ({**m, "checks": [{**m["checks"][0], "scenario": "nope"}]}, "unknown scenario"),
                     ({**m, "checks": [{**m["checks"][0], "constant": "Z"}]}, "not frozen"),
                     ({**m, "checks": [{**m["checks"][0], "kind": "vibes"}]}, "unknown kind")]:
        with pytest.raises(A.ManifestError, match=msg):
            A.validate_manifest(bad)
    p = tmp_path / "m.json"
    p.write_text(json.dumps(m))
    assert A.load_manifest(p) == m


def test_contaminated_scenario_reports_fail():
    m = {
        "version": 1,
        "constants": {"K": 1.0},
        "scenarios": {"boom": {"mode": "simulate", "grid": {"n": 64, "L": 4.0}, "t_end": 3.0, "samples": 4,
                               "spec": A.vortices([(0, 0.35, 0.3, 200.0), (0, -0.35, 0.3, -200.0)]).to_dict()}},
        "checks": [{"claim_id": "e", "kind": "energy", "scenario": "boom", "constant": "K"}],
    }
    (rep,) = A.run_suite(m)
    assert rep.status == A.FAIL and "buffer" in rep.details["error"]
