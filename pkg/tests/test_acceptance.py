"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -s tests/test_acceptance.py`` to see the summary lines.
Everything here is marked ``acceptance``; the whole file needs about six
minutes on a single core and about 3 GB of memory.
"""

import gc
import json
import math
import time

import numpy as np
import pytest

from yudovich import analysis as A
from yudovich import kernels as K
from yudovich import pressure as P
from yudovich.biot_savart import cz_growth_probe, velocity_from_vorticity
from yudovich.cli import main
from yudovich.fields import Grid2D, ScalarField2D, make_cutoff, read_snapshot, write_snapshot
from yudovich.morrey import MorreyParams, morrey_norm
from yudovich.solver import SolverConfig, max_speed, rel_l2, simulate, validate_exact, vortex_field

pytestmark = pytest.mark.acceptance


def verdict(number, ok, summary):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {summary}")
    assert ok, summary


def fitted_order(ns, errors):
    return -np.polyfit(np.log(ns), np.log(errors), 1)[0]


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    t0 = time.perf_counter()
    code = main(["check", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    reports = {r["claim_id"]: r for r in json.loads((out / "reports.json").read_text())}
    return code, reports, elapsed


def test_criterion_1_morrey_fixtures():
    t0 = time.perf_counter()
    alpha = 0.25
    ns = [64, 128, 256, 512]
    e_one, e_pow = [], []
    for n in ns:
        g = Grid2D(n, 8.0)
        one = morrey_norm(ScalarField2D(g, np.ones((n, n))), MorreyParams(2.0, alpha)).norm
        pw = morrey_norm(ScalarField2D(g, g.radius() ** alpha), MorreyParams(2.0, alpha)).norm
        e_one.append(abs(one / math.sqrt(math.pi) - 1.0))
        e_pow.append(abs(pw / math.sqrt(math.pi / (1.0 + alpha)) - 1.0))
    elapsed = time.perf_counter() - t0
    o1, o2 = fitted_order(ns, e_one), fitted_order(ns, e_pow)
    ok = e_one[-1] < 0.01 and e_pow[-1] < 0.01 and o1 >= 1.0 and o2 >= 1.0 and elapsed < 10.0
    verdict(1, ok, f"errors at n=512 {e_one[-1]:.2e}, {e_pow[-1]:.2e}; orders {o1:.2f}, {o2:.2f}; "
                   f"{elapsed:.1f}s")


def test_criterion_2_pressure_equivalence():
    t0 = time.perf_counter()
    g = Grid2D(512, 8.0)
    worst_pair, worst_theta = 0.0, 0.0
    for seed in range(5):
        u = A.build_field(A.random_yudovich(seed, count=4, region=1.5), g).u
        theta_a, theta_b = make_cutoff(1.0, 2.0), make_cutoff(1.5, 3.0)
        split = P.pressure_force_split(u, u, theta_a)
        split_b = P.pressure_force_split(u, u, theta_b)
        low = P.pressure_force_lowpass(u, u)
        oracle = P.leray_oracle(u, u)
        R = min(split.trusted_radius, split_b.trusted_radius)
        worst_pair = max(worst_pair, P.relative_l2(split, oracle, R), P.relative_l2(low, oracle, R),
                         P.relative_l2(low, split, R))
        worst_theta = max(worst_theta, P.relative_l2(split_b, split, R))
        del split, split_b, low, oracle
        gc.collect()
    elapsed = time.perf_counter() - t0
    ok = worst_pair <= 1e-5 and worst_theta <= 1e-7 and elapsed < 120.0
    verdict(2, ok, f"pairwise {worst_pair:.2e}, theta {worst_theta:.2e}; {elapsed:.1f}s")


def test_criterion_3_kernel_envelope():
    t0 = time.perf_counter()
    g = Grid2D(1024, 128.0)
    env, slopes = [], []
    for lam in (1.0, 2.0, 4.0, 8.0):
        G = K.gamma_lambda(g, lam)
        env.append(K.envelope_constant(G, lam))
        slopes.append(K.decay_slope(G, lam))
        del G
        gc.collect()
    elapsed = time.perf_counter() - t0
    spread = max(env) / min(env)
    ok = spread < 2.0 and max(slopes) <= -2.85 and elapsed < 180.0
    verdict(3, ok, f"envelope spread {spread:.3f}, slopes {[round(s, 2) for s in slopes]}; {elapsed:.1f}s")


def test_criterion_4_sph_decay():
    t0 = time.perf_counter()
    g = Grid2D(1024, 128.0)
    b = A.build_field(A.dyadic_bump(0.625, 4), g)
    dec = A.sph_decay(b.u, [2.0, 4.0, 8.0, 16.0], 0.25)
    del b
    gc.collect()
    elapsed = time.perf_counter() - t0
    ok = dec.slope_I1 <= -0.35 and dec.slope_I2 <= -2.8 and elapsed < 180.0
    verdict(4, ok, f"I1 slope {dec.slope_I1:.2f}, I2 slope {dec.slope_I2:.2f}; {elapsed:.1f}s")


def test_criterion_5_solver_validation():
    t0 = time.perf_counter()
    g = Grid2D(512, 4.0)
    w0 = vortex_field(g, [(0.0, 0.0, 1.2, 1.0)])
    dt = 0.5 * g.h / max_speed(velocity_from_vorticity(w0))
    sup0 = np.max(np.abs(w0.data))
    sups = []
    run = simulate(w0, SolverConfig(dt=dt, t_end=500 * dt, diag_every=0),
                   on_step=lambda k, t, w: sups.append(np.max(np.abs(w.data))))
    steady = rel_l2(run.final().data, w0.data)
    bitwise = len(sups) == 500 and all(s <= sup0 for s in sups)
    del run
    gc.collect()
    tab = validate_exact("corotating_pair_reference", resolution_ladder=(256, 512, 1024))
    elapsed = time.perf_counter() - t0
    ok = steady <= 1e-3 and bitwise and tab.order >= 1.8 and elapsed < 600.0
    verdict(5, ok, f"steady error {steady:.2e}, max principle {bitwise}, pair order {tab.order:.2f}; "
                   f"{elapsed:.1f}s")


def test_criterion_6_energy_bound(suite):
    _, reports, elapsed = suite
    energy = [r for cid, r in reports.items() if cid.startswith("energy_")]
    passing = [r for r in energy if r["status"] == "pass" and r["details"]["tail_monotone"]]
    ok = len(passing) >= 3 and len(passing) == len(energy) and elapsed < 900.0
    verdict(6, ok, f"{len(passing)}/{len(energy)} energy scenarios within factor 2 with monotone tails")


def test_criterion_7_holder_stability(suite):
    _, reports, _ = suite
    r = reports["holder_two_vortex"]
    ok = r["status"] == "pass" and len(r["abscissa"]) == 3
    verdict(7, ok, f"slopes {[round(s, 3) for s in r['rhs']]} at t={r['abscissa']}, "
                   f"lower bounds {[round(s, 3) for s in r['lhs']]}")


def test_criterion_8_farfield_dichotomy(suite):
    _, reports, _ = suite
    r = reports["farfield_dichotomy"]
    ok = r["status"] == "pass"
    verdict(8, ok, f"decay ratios {[round(y[-1] / y[0], 4) for y in r['details']['yudovich']]}, "
                   f"shifted errors {[round(abs(v[-1] - g) / g, 4) for v, g in r['details']['galilean']]}")


def test_criterion_9_cz_growth():
    t0 = time.perf_counter()
    g = Grid2D(512, 8.0)
    x1, x2 = g.mesh()
    c = make_cutoff(0.4, 0.6)
    w = ScalarField2D(g, c(np.abs(x1)) * c(np.abs(x2)))
    probe = dict(cz_growth_probe(w, [2, 8, 16, 32, 64]))
    per_p = [probe[p] / p for p in (8, 16, 32, 64)]
    elapsed = time.perf_counter() - t0
    ok = abs(probe[2] - 1.0) <= 0.02 and all(b <= a for a, b in zip(per_p, per_p[1:])) and elapsed < 120.0
    verdict(9, ok, f"ratio_2 {probe[2]:.4f}, ratio_p/p {[round(v, 4) for v in per_p]}; {elapsed:.1f}s")


def test_criterion_10_infrastructure(suite, tmp_path):
    g = Grid2D(64, 8.0)
    w = A.build_field(A.random_yudovich(1, count=3, region=1.5), g).omega
    write_snapshot(w, tmp_path / "w.yud")
    back = read_snapshot(tmp_path / "w.yud")
    exact = back.data.tobytes() == w.data.tobytes()

    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 4\n[grid]\nn = 64\nL = 16.0\n[scenario]\nkind = "random_yudovich"\n'
                   'params = {count = 3, region = 1.5}\n[solver]\ndt = 0.25\nt_end = 1.0\n')
    trees = []
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        root = tmp_path / name
        trees.append({p.relative_to(root).as_posix(): p.read_bytes() for p in root.rglob("*") if p.is_file()})
    same = trees[0] == trees[1]

    code, reports, elapsed = suite
    failing = [cid for cid, r in reports.items() if r["status"] != "pass"]
    ok = exact and same and code == 0 and elapsed < 3600.0
    verdict(10, ok, f"round trip {exact}, reruns identical {same}, suite exit {code} in {elapsed:.0f}s "
                    f"(failing: {failing or 'none'})")
