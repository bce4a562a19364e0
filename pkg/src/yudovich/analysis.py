"""Scenario constructions and the bound checks run against them.

Fields are described by ``FieldSpec`` records (JSON-friendly) and sampled on
demand.  Every kind except ``vortices`` is defined through a stream function
psi, with u = (d2 psi, -d1 psi) and omega = -Delta psi, so u, omega and psi are
all evaluated from closed forms.

The checks turn the asymptotic inequalities into pass/fail statements with
constants that are calibrated once on a designated scenario and then frozen
(see ``calibrate``).  Each check returns a ``BoundCheckReport``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .biot_savart import velocity_from_vorticity
from .fields import CutoffProfile, Grid2D, ScalarField2D, VectorField2D, make_cutoff
from .kernels import SYM3, gamma_lambda, low_pass
from .morrey import MorreyParams, morrey_norm, radius_ladder
from .pressure import _contract, sym_product
from .solver import SimulationRun, SolverConfig, simulate

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
DYADIC_RADIUS = 0.35


class CapacityError(ValueError):
    """The requested construction does not fit on the grid."""


# --------------------------------------------------------------------------
# radial building blocks: value, first and second derivative in r
# --------------------------------------------------------------------------


def _disc_bump(r, a: float, power: int = 7):
    """(1 - r^2/a^2)^p on r < a."""
    r = np.asarray(r, dtype=np.float64)
    s = np.clip(1.0 - (r / a) ** 2, 0.0, None)
    p = power
    f = s ** p
    f1 = -2.0 * p * r / a**2 * s ** (p - 1)
    f2 = 4.0 * p * (p - 1) * r**2 / a**4 * s ** (p - 2) - 2.0 * p / a**2 * s ** (p - 1)
    inside = r < a
    return f, np.where(inside, f1, 0.0), np.where(inside, f2, 0.0)


@dataclass
class Stream:
    """psi with its gradient and Laplacian on a set of points."""

    psi: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    lap: np.ndarray

    def __add__(self, other: "Stream") -> "Stream":
        return Stream(self.psi + other.psi, self.d1 + other.d1, self.d2 + other.d2, self.lap + other.lap)


def _radial_stream(x1, x2, c, scale, amp, prof):
    """amp * prof(|x - c| / scale) and its derivatives."""
    y1, y2 = x1 - c[0], x2 - c[1]
    r = np.hypot(y1, y2)
    f, f1, f2 = prof(r / scale)
    safe = np.where(r > 0, r, 1.0)
    g = amp * f1 / scale
    lap_r = np.where(r > 0, f1 / np.where(r > 0, r / scale, 1.0), f2)
    return Stream(amp * f, g * y1 / safe, g * y2 / safe, amp * (f2 + lap_r) / scale**2)


# --------------------------------------------------------------------------
# field specifications
# --------------------------------------------------------------------------

KINDS = ("dyadic_bump", "power_rotation", "galileo_shift", "truncated", "random_yudovich", "vortices")

# (required, optional) parameter names per kind
PARAM_KEYS = {
    "dyadic_bump": ({"gamma", "k_max"}, {"e", "k_min", "power", "radius"}),
    "power_rotation": ({"alpha"}, set()),
    "galileo_shift": ({"base", "g", "V"}, {"freq"}),
    "truncated": ({"base", "n"}, {"chi"}),
    "random_yudovich": ({"seed"}, {"count", "a_range", "region", "amp"}),
    "vortices": ({"items"}, {"power"}),
}


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}; expected one of {KINDS}")
        required, optional = PARAM_KEYS[self.kind]
        unknown = sorted(set(self.params) - required - optional)
        if unknown:
            raise ValueError(f"unknown parameter(s) for {self.kind}: {', '.join(unknown)}")
        missing = sorted(required - set(self.params))
        if missing:
            raise ValueError(f"missing parameter(s) for {self.kind}: {', '.join(missing)}")

    def to_dict(self) -> dict:
        p = dict(self.params)
        if "base" in p and isinstance(p["base"], FieldSpec):
            p["base"] = p["base"].to_dict()
        return {"kind": self.kind, "params": p}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        p = dict(d.get("params", {}))
        if isinstance(p.get("base"), dict):
            p["base"] = cls.from_dict(p["base"])
        return cls(d["kind"], p)

    @property
    def base(self) -> "FieldSpec | None":
        return self.params.get("base")


def dyadic_bump(gamma: float, k_max: int, e=(1.0, 0.0), k_min: int = 0, power: int = 8,
                radius: float = DYADIC_RADIUS) -> FieldSpec:
    """psi = sum_k 2^(2 k gamma) phi((x - 2^k e) / 2^(k gamma)) with phi a disc bump.

    The discs (radius ``radius * 2^(k gamma)`` about 2^k e) are pairwise
    disjoint when radius * (1 + 2^gamma) < 1.
    """
    if radius * (1.0 + 2.0**gamma) >= 1.0:
        raise ValueError("dyadic discs overlap; lower the radius or gamma")
    return FieldSpec("dyadic_bump", {"gamma": gamma, "k_max": k_max, "e": list(e), "k_min": k_min,
                                     "power": power, "radius": radius})


def power_rotation(alpha: float) -> FieldSpec:
    return FieldSpec("power_rotation", {"alpha": alpha})


def galileo_shift(base: FieldSpec, g_kind: str = "linear", V=(1.0, 0.0), freq: float = 1.0) -> FieldSpec:
    return FieldSpec("galileo_shift", {"base": base, "g": g_kind, "V": list(V), "freq": freq})


def truncated(base: FieldSpec, n: float, chi=(1.0, 2.0)) -> FieldSpec:
    return FieldSpec("truncated", {"base": base, "n": n, "chi": list(chi)})


def random_yudovich(seed: int, count: int = 6, a_range=(0.6, 1.4), region: float = 3.0,
                    amp: float = 1.0) -> FieldSpec:
    return FieldSpec("random_yudovich", {"seed": seed, "count": count, "a_range": list(a_range),
                                         "region": region, "amp": amp})


def vortices(items, power: int = 7) -> FieldSpec:
    """Compactly supported vorticity bumps (x1, x2, radius, peak)."""
    return FieldSpec("vortices", {"items": [list(map(float, v)) for v in items], "power": power})


def shift_of(g_kind: str, V, freq: float, t: float):
    """(g(t), G(t)) with G(t) = int_0^t g."""
    V = np.asarray(V, dtype=np.float64)
    if g_kind == "const":
        return V.copy(), V * t
    if g_kind == "linear":
        return V * t, V * t * t / 2.0
    if g_kind == "sine":
        return V * math.sin(freq * t), V * (1.0 - math.cos(freq * t)) / freq
    raise ValueError(f"unknown g kind {g_kind!r}")


def _random_items(p: dict):
    rng = np.random.default_rng(int(p["seed"]))
    items = []
    lo, hi = p.get("a_range", (0.6, 1.4))
    for _ in range(int(p.get("count", 6))):
        rad = p.get("region", 3.0) * math.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * math.pi)
        a = rng.uniform(lo, hi)
        s = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0) * p.get("amp", 1.0)
        items.append((rad * math.cos(ang), rad * math.sin(ang), a, s))
    return items


def stream(spec: FieldSpec, x1, x2, t: float = 0.0) -> Stream:
    """Closed-form psi, grad psi and Laplacian of psi (kinds with a stream function)."""
    p = spec.params
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    zero = np.zeros(np.broadcast(x1, x2).shape)
    if spec.kind == "dyadic_bump":
        gam = p["gamma"]
        e = p.get("e", [1.0, 0.0])
        power = int(p.get("power", 8))
        out = Stream(zero.copy(), zero.copy(), zero.copy(), zero.copy())
        for k in range(int(p.get("k_min", 0)), int(p["k_max"]) + 1):
            sc = 2.0 ** (k * gam) * p.get("radius", DYADIC_RADIUS)
            c = (2.0**k * e[0], 2.0**k * e[1])
            # 1 / (4 p) normalises the peak vorticity to 1
            out = out + _radial_stream(x1, x2, c, sc, sc * sc / (4.0 * power), lambda r: _disc_bump(r, 1.0, power))
        return out
    if spec.kind == "power_rotation":
        s = 1.0 + p["alpha"]
        q = 1.0 + x1 * x1 + x2 * x2
        psi = q ** (s / 2.0)
        g = s * q ** (s / 2.0 - 1.0)
        lap = 2.0 * s * q ** (s / 2.0 - 1.0) + s * (s - 2.0) * (q - 1.0) * q ** (s / 2.0 - 2.0)
        return Stream(psi, g * x1, g * x2, lap)
    if spec.kind == "random_yudovich":
        out = Stream(zero.copy(), zero.copy(), zero.copy(), zero.copy())
        for c1, c2, a, s in _random_items(p):
            out = out + _radial_stream(x1, x2, (c1, c2), a, s * a * a / 28.0, lambda r: _disc_bump(r, 1.0, 7))
        return out
    if spec.kind == "galileo_shift":
        gv, G = shift_of(p["g"], p["V"], p.get("freq", 1.0), t)
        b = stream(spec.base, x1 - G[0], x2 - G[1], t)
        # the constant g adds -g2 x1 + g1 x2 to psi
        return Stream(b.psi - gv[1] * x1 + gv[0] * x2, b.d1 - gv[1], b.d2 + gv[0], b.lap)
    if spec.kind == "truncated":
        b = stream(spec.base, x1, x2, t)
        n = p["n"]
        chi = make_cutoff(*p.get("chi", [1.0, 2.0])).scaled(n)
        r = np.hypot(x1, x2)
        c0, c1, c2 = chi.derivatives(r, 2)
        safe = np.where(r > 0, r, 1.0)
        e1, e2 = np.where(r > 0, x1 / safe, 0.0), np.where(r > 0, x2 / safe, 0.0)
        radial_d = b.d1 * e1 + b.d2 * e2
        lapchi = np.where(r > 0, c2 + c1 / safe, 2.0 * c2)
        return Stream(
            c0 * b.psi,
            c0 * b.d1 + b.psi * c1 * e1,
            c0 * b.d2 + b.psi * c1 * e2,
            c0 * b.lap + 2.0 * c1 * radial_d + b.psi * lapchi,
        )
    raise ValueError(f"kind {spec.kind!r} has no closed-form stream function")


@dataclass
class BuiltField:
    spec: FieldSpec
    u: VectorField2D
    omega: ScalarField2D
    psi: ScalarField2D | None
    meta: dict


def _vortex_velocity(items, power, x1, x2):
    u1 = np.zeros_like(x1)
    u2 = np.zeros_like(x1)
    w = np.zeros_like(x1)
    p = power
    for c1, c2, a, s in items:
        y1, y2 = x1 - c1, x2 - c2
        r = np.hypot(y1, y2)
        sq = np.clip(1.0 - (r / a) ** 2, 0.0, None)
        w += s * sq**p
        # circulation inside r: 2 pi s a^2 (1 - sq^(p+1)) / (2 (p + 1))
        circ = math.pi * s * a * a * (1.0 - sq ** (p + 1)) / (p + 1)
        safe = np.where(r > 0, r, 1.0)
        speed = circ / (2.0 * math.pi * safe * safe)
        u1 += -speed * y2
        u2 += speed * y1
    return u1, u2, w


def analytic_vorticity_sup(spec: FieldSpec) -> float | None:
    p = spec.params
    if spec.kind == "power_rotation":
        return 2.0 * (1.0 + p["alpha"])
    if spec.kind == "dyadic_bump":
        return 1.0
    if spec.kind == "vortices":
        return max(abs(v[3]) for v in p["items"])
    if spec.kind == "galileo_shift":
        return analytic_vorticity_sup(spec.base)
    return None


def capacity_check(spec: FieldSpec, grid: Grid2D) -> None:
    p = spec.params
    if spec.kind == "dyadic_bump" and 2.0 ** (int(p["k_max"]) + 1) > grid.L / 2.0:
        raise CapacityError(f"dyadic bump with k_max={p['k_max']} needs 2^(k_max+1) <= L/2 = {grid.L / 2:g}")
    if spec.kind == "truncated":
        outer = p["n"] * p.get("chi", [1.0, 2.0])[1]
        if outer > 0.8 * grid.L:
            raise CapacityError(f"truncation support radius {outer:g} exceeds 0.8 L = {0.8 * grid.L:g}")
        capacity_check(spec.base, Grid2D(grid.n, max(grid.L, 4 * outer)))
    if spec.kind == "galileo_shift":
        capacity_check(spec.base, grid)


def build_field(spec: FieldSpec, grid: Grid2D, t: float = 0.0) -> BuiltField:
    """Sample u, omega (and psi when defined) of ``spec`` at time t."""
    capacity_check(spec, grid)
    x1, x2 = grid.mesh()
    meta = {"kind": spec.kind, "omega_sup": analytic_vorticity_sup(spec), "t": t}
    if spec.kind == "vortices":
        u1, u2, w = _vortex_velocity(spec.params["items"], int(spec.params.get("power", 7)), x1, x2)
        return BuiltField(spec, VectorField2D(grid, u1, u2), ScalarField2D(grid, w), None, meta)
    if spec.kind == "dyadic_bump":
        meta["growth_exponent"] = spec.params["gamma"]
        meta["morrey_alpha"] = 2.0 * spec.params["gamma"] - 1.0
    if spec.kind == "power_rotation":
        meta["growth_exponent"] = spec.params["alpha"]
    s = stream(spec, x1, x2, t)
    return BuiltField(
        spec,
        VectorField2D(grid, s.d2, -s.d1),
        ScalarField2D(grid, -s.lap),
        ScalarField2D(grid, s.psi),
        meta,
    )


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class BoundCheckReport:
    claim_id: str
    status: str
    abscissa: list
    lhs: list
    rhs: list
    constant: float | None = None
    abscissa_name: str = "t"
    details: dict = field(default_factory=dict)
    trust: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "status": self.status,
            "abscissa_name": self.abscissa_name,
            "abscissa": list(self.abscissa),
            "lhs": list(self.lhs),
            "rhs": list(self.rhs),
            "constant": self.constant,
            "details": self.details,
            "trust": self.trust,
        }

    def csv_rows(self) -> list[list]:
        rows = []
        for x, a, b in zip(self.abscissa, self.lhs, self.rhs):
            rows.append([self.claim_id, repr(float(x)), repr(float(a)), repr(float(b)), str(bool(a <= b)).lower()])
        return rows


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["claim_id", "t_or_lambda", "lhs", "rhs", "pass"])
    for rep in reports:
        for row in rep.csv_rows():
            w.writerow(row)
    return buf.getvalue()


def _loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


# --------------------------------------------------------------------------
# Morrey time series
# --------------------------------------------------------------------------


@dataclass
class NormSeries:
    """||u(t)||_{L^2_alpha(R)} on a radius ladder at a list of times."""

    alpha: float
    times: list
    radii: list
    tails: list  # one list per time, aligned with radii
    omega_sup: list
    trusted_radius: float

    def norm(self, k: int) -> float:
        return self.tails[k][0]

    def tail_monotone(self) -> bool:
        return all(all(b <= a for a, b in zip(tl, tl[1:])) for tl in self.tails)


def norm_series(fields_at, alpha: float, trusted_radius: float | None = None) -> NormSeries:
    """Build a series from (t, u, omega_sup) triples."""
    times, tails, sups = [], [], []
    radii = None
    tr = None
    for t, u, wsup in fields_at:
        tr = 0.75 * u.grid.L if trusted_radius is None else trusted_radius
        rep = morrey_norm(u, MorreyParams(2.0, alpha), radius_ladder(u.grid, tr), trusted_radius=tr)
        radii = rep.radii
        times.append(float(t))
        tails.append([rep.tail_norms[r] for r in rep.radii])
        sups.append(float(wsup))
    return NormSeries(alpha, times, radii or [], tails, sups, tr or 0.0)


def run_series(run: SimulationRun, alpha: float, trusted_radius: float | None = None) -> NormSeries:
    def gen():
        for k, (t, w) in enumerate(run.snapshots):
            yield t, run.velocity(k), float(np.max(np.abs(w.data)))

    return norm_series(gen(), alpha, trusted_radius)


def spec_series(spec: FieldSpec, grid: Grid2D, times, alpha: float, trusted_radius: float | None = None) -> NormSeries:
    """Series of an analytic (time-dependent) field without a PDE solve."""
    def gen():
        for t in times:
            b = build_field(spec, grid, t)
            tr = 0.75 * grid.L if trusted_radius is None else trusted_radius
            m = grid.radius() <= tr
            yield t, b.u, float(np.max(np.abs(b.omega.data[m])))

    return norm_series(gen(), alpha, trusted_radius)


# --------------------------------------------------------------------------
# energy distribution and growth
# --------------------------------------------------------------------------


def radius_lower_bound(K: float, t: float, omega_sup: float, u0_norm: float, alpha: float) -> float:
    kt = K * t
    return ((kt + kt * kt * omega_sup) * u0_norm) ** (1.0 / (1.0 - alpha))


def energy_distribution_check(series: NormSeries, alpha: float, K: float, claim_id: str = "energy_bound",
                              factor: float = 2.0) -> BoundCheckReport:
    """||u(t)||_{L^2_alpha(R)} <= 2 ||u_0||_{L^2_alpha} for every ladder R >= max(R_min(t), 1)."""
    if not 0 <= alpha < 0.5:
        raise ValueError("alpha must lie in [0, 1/2)")
    n0 = series.norm(0)
    w0 = series.omega_sup[0]
    ts, lhs, rhs, rmins = [], [], [], []
    for k, t in enumerate(series.times):
        rmin = max(radius_lower_bound(K, t, w0, n0, alpha), 1.0)
        adm = [j for j, r in enumerate(series.radii) if r >= rmin - 1e-12]
        if not adm:
            continue
        ts.append(t)
        rmins.append(rmin)
        lhs.append(max(series.tails[k][j] for j in adm))
        rhs.append(factor * n0)
    if not ts:
        status = INCONCLUSIVE
    else:
        status = PASS if all(a <= b for a, b in zip(lhs, rhs)) else FAIL
    mono = series.tail_monotone()
    if not mono:
        status = FAIL
    return BoundCheckReport(
        claim_id, status, ts, lhs, rhs, K,
        details={"R_min": rmins, "u0_norm": n0, "omega0_sup": w0, "tail_monotone": mono, "alpha": alpha},
        trust={"trusted_radius": series.trusted_radius, "skipped_times": len(series.times) - len(ts)},
    )


def growth_envelope(t: float, n0: float, w0: float, alpha: float) -> float:
    e = (1.0 + alpha) / (1.0 - alpha)
    b = 2.0 / (1.0 - alpha)
    return n0 + t**e * n0**b + t ** (2 * e) * w0**e * n0**b


def growth_bound_check(series: NormSeries, alpha: float, C: float, claim_id: str = "growth_bound",
                       min_times: int = 8) -> BoundCheckReport:
    """||u(t)||_{L^2_alpha} <= C (||u_0|| + t^e ||u_0||^b + t^2e ||omega_0||^e ||u_0||^b)."""
    n0 = series.norm(0)
    w0 = series.omega_sup[0]
    ts = list(series.times)
    lhs = [series.norm(k) for k in range(len(ts))]
    rhs = [C * growth_envelope(t, n0, w0, alpha) for t in ts]
    details = {"u0_norm": n0, "omega0_sup": w0, "alpha": alpha,
               "envelope_exponent": 2.0 * (1.0 + alpha) / (1.0 - alpha)}
    if len(ts) < min_times:
        return BoundCheckReport(claim_id, INCONCLUSIVE, ts, lhs, rhs, C, details=details)
    half = [k for k in range(len(ts)) if ts[k] >= 0.5 * ts[-1] and ts[k] > 0]
    details["growth_exponent"] = _loglog_slope([ts[k] for k in half], [lhs[k] for k in half])
    status = PASS if all(a <= b for a, b in zip(lhs, rhs)) else FAIL
    return BoundCheckReport(claim_id, status, ts, lhs, rhs, C, details=details,
                            trust={"trusted_radius": series.trusted_radius})


# --------------------------------------------------------------------------
# Hoelder stability
# --------------------------------------------------------------------------


@dataclass
class StabilityData:
    deltas: list
    times: list
    w_norms: dict  # delta -> list of ||w(t)|| over times
    K: list  # K(t) per probe time
    slopes: list
    deterministic: bool


def stability_data(omega_base: ScalarField2D, perturbation: ScalarField2D, config: SolverConfig, t_probe,
                   alpha: float, gamma: float, deltas=(1e-1, 1e-2, 1e-3),
                   trusted_radius: float | None = None) -> StabilityData:
    """Runs the base flow and one perturbed flow per delta, recording ||u_2 - u_1||_{L^2_gamma}."""
    if not alpha < gamma < 1.0 - alpha:
        raise ValueError("need alpha < gamma < 1 - alpha")
    probes = sorted(float(t) for t in t_probe)
    cfg = SolverConfig(**{**config.to_dict(), "t_end": probes[-1], "diag_every": 0,
                          "ball_radii": tuple(config.ball_radii) or (1.0,)})
    grid = omega_base.grid
    tr = 0.75 * grid.L if trusted_radius is None else trusted_radius

    def probe_fields(w0):
        run = simulate(w0, cfg, record_times=probes)
        if run.contaminated:
            raise RuntimeError(f"stability run contaminated: {run.message}")
        got = {round(t, 12): k for k, (t, _) in enumerate(run.snapshots)}
        out = []
        for t in probes:
            k = got.get(round(t, 12))
            if k is None:
                raise RuntimeError(f"probe time {t} was not recorded")
            out.append((run.velocity(k), run.snapshots[k][1]))
        return out, run

    base, run_b = probe_fields(omega_base)
    again, _ = probe_fields(omega_base)
    deterministic = all(np.array_equal(a[1].data, b[1].data) for a, b in zip(base, again))
    y_base = [_y_norm(u, w, alpha, tr) for u, w in base]
    y0_base = _y_norm(run_b.velocity(0), omega_base, alpha, tr)
    w_norms = {}
    K = [0.0] * len(probes)
    for d in deltas:
        w0 = ScalarField2D(grid, omega_base.data + d * perturbation.data)
        pert, run_p = probe_fields(w0)
        norms = []
        y0 = _y_norm(run_p.velocity(0), w0, alpha, tr)
        run_k = y0 + y0_base
        for j, ((u1, _), (u2, w2)) in enumerate(zip(base, pert)):
            diff = VectorField2D(grid, u2.u1 - u1.u1, u2.u2 - u1.u2)
            norms.append(_morrey2(diff, gamma, tr))
            run_k = max(run_k, y_base[j] + _y_norm(u2, w2, alpha, tr))
            K[j] = max(K[j], run_k)
        w_norms[d] = norms
    slopes = [_loglog_slope(list(deltas), [w_norms[d][j] for d in deltas]) for j in range(len(probes))]
    return StabilityData(list(deltas), probes, w_norms, K, slopes, deterministic)


def _morrey2(u: VectorField2D, a: float, tr: float) -> float:
    return morrey_norm(u, MorreyParams(2.0, a), radius_ladder(u.grid, tr), trusted_radius=tr).norm


def _y_norm(u: VectorField2D, w: ScalarField2D, alpha: float, tr: float) -> float:
    return _morrey2(u, alpha, tr) + float(np.max(np.abs(w.data)))


def stability_check(data: StabilityData, C_hat: float, claim_id: str = "holder_stability",
                    upper: float = 1.05, mono_tol: float = 0.05) -> BoundCheckReport:
    """exp(-t C_hat K(t)) <= s(t) <= upper at each probe, and s non-increasing within mono_tol."""
    lower = [math.exp(-t * C_hat * k) for t, k in zip(data.times, data.K)]
    ok_lower = all(s >= lo for s, lo in zip(data.slopes, lower))
    ok_upper = all(s <= upper for s in data.slopes)
    ok_mono = all(b <= a + mono_tol for a, b in zip(data.slopes, data.slopes[1:]))
    status = PASS if (ok_lower and ok_upper and ok_mono and data.deterministic) else FAIL
    # lhs <= rhs form: the lower bound against the slope
    return BoundCheckReport(
        claim_id, status, data.times, lower, data.slopes, C_hat,
        details={"upper": upper, "K": data.K, "deltas": data.deltas,
                 "w_norms": {repr(d): v for d, v in data.w_norms.items()},
                 "lower_ok": ok_lower, "upper_ok": ok_upper, "monotone_ok": ok_mono,
                 "deterministic": data.deterministic},
    )


# --------------------------------------------------------------------------
# far field
# --------------------------------------------------------------------------


def velocity_criterion(u_t: VectorField2D, u_0: VectorField2D, lambda_list, radius: float | None = None) -> list:
    """sup over B_radius (default L/4) of |low_pass(u_t - u_0, lambda)| for each lambda."""
    grid = u_t.grid
    radius = grid.L / 4.0 if radius is None else radius
    m = grid.radius() <= radius
    d = u_t - u_0
    out = []
    for lam in lambda_list:
        f = low_pass(d, lam)
        out.append(float(np.max(np.hypot(f.u1, f.u2)[m])))
    return out


def shift_vorticity(omega: ScalarField2D, G) -> ScalarField2D:
    """omega(x - G) by a Fourier phase shift on the zero-padded doubled box."""
    grid = omega.grid
    n, h = grid.n, grid.h
    M = 2 * n
    k1 = 2.0 * math.pi * np.fft.fftfreq(M, d=h)
    k2 = 2.0 * math.pi * np.fft.rfftfreq(M, d=h)
    ph = np.exp(-1j * (k1[:, None] * G[0] + k2[None, :] * G[1]))
    out = np.fft.irfft2(np.fft.rfft2(omega.data, s=(M, M)) * ph, s=(M, M))[:n, :n]
    return ScalarField2D(grid, out)


def galileo_counterpart(omega_t: ScalarField2D, g_kind: str, V, freq: float, t: float) -> tuple[VectorField2D, float]:
    """v(t) = u(t, x - G(t)) + g(t) from a vorticity snapshot, and |g(t)|."""
    g, G = shift_of(g_kind, V, freq, t)
    u = velocity_from_vorticity(shift_vorticity(omega_t, G), check_support=False)
    return VectorField2D(u.grid, u.u1 + g[0], u.u2 + g[1]), float(np.hypot(*g))


@dataclass
class SphDecay:
    lambdas: list
    I1_sup: list
    I2_ball: list
    I2_weighted: list
    slope_I1: float
    slope_I2: float
    slope_I2_weighted: float
    ball_radius: float


def sph_decay(u: VectorField2D, lambda_list, alpha: float, ball_radius: float = 1.0, stride: int = 4,
              gamma_pad: int = 4, trusted_radius: float | None = None, split: float = 3.0) -> SphDecay:
    """Split Gamma_lambda * (u (x) u) into the parts from |y| >= 3|x| (I1) and |y| < 3|x| (I2).

    I2 is summed directly over the sources with |y| < 3|x|; I1 is the full
    fast convolution minus I2.  sup |I1| is taken over a stride-subsampled
    trusted disc, |I2| over the small ball |x| <= ball_radius (every sample)
    and, for reference, its L^inf_{2 alpha} norm over the same targets as I1.
    """
    grid = u.grid
    n, h = grid.n, grid.h
    tr = 0.75 * grid.L if trusted_radius is None else trusted_radius
    F = sym_product(u, u)
    r = grid.radius()
    # sources sorted by radius
    mag = np.abs(F["11"]) + np.abs(F["12"]) + np.abs(F["22"])
    src = np.nonzero(mag > 0)
    order = np.argsort(r[src], kind="stable")
    si, sj = src[0][order], src[1][order]
    sr = r[si, sj]
    Fs = np.stack([F["11"][si, sj], F["12"][si, sj], F["22"][si, sj]]) * h * h
    # targets: subsampled trusted disc plus every sample of the small ball
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    sub = (ii % stride == stride // 2) & (jj % stride == stride // 2) & (r <= tr)
    ball = r <= ball_radius
    tmask = sub | ball
    ti, tj = np.nonzero(tmask)
    trad = r[ti, tj]
    counts = np.searchsorted(sr, split * trad, side="left")
    in_ball = ball[ti, tj]
    in_sub = sub[ti, tj]
    I1s, I2b, I2w = [], [], []
    for lam in lambda_list:
        G = gamma_lambda(grid, lam, pad=gamma_pad)
        spec = {k: G.spectrum(k) for k in SYM3}
        t1, t2 = _contract(spec, F, n, h)
        I2 = _accel.partial_convolution(ti, tj, counts, si, sj, G.stack(SYM3), Fs)
        I1 = np.stack([t1[ti, tj], t2[ti, tj]]) - I2
        a1 = np.hypot(I1[0], I1[1])
        a2 = np.hypot(I2[0], I2[1])
        I1s.append(float(np.max(a1[in_sub])))
        I2b.append(float(np.max(a2[in_ball])))
        wr = np.maximum(trad[in_sub], 1.0) ** (-2.0 * alpha)
        I2w.append(float(np.max(a2[in_sub] * wr)))
        del G, spec
    lam = list(lambda_list)
    return SphDecay(lam, I1s, I2b, I2w, _loglog_slope(lam, I1s), _loglog_slope(lam, I2b),
                    _loglog_slope(lam, I2w), ball_radius)


def sph_decay_check(dec: SphDecay, alpha: float, tol_I1: float = 0.15, tol_I2: float = 0.2,
                    claim_id: str = "sph_decay") -> BoundCheckReport:
    """Fitted slopes: I1 <= -(1 - 2 alpha) + tol_I1 and I2 <= -3 + tol_I2."""
    if len(dec.lambdas) < 3:
        return BoundCheckReport(claim_id, INCONCLUSIVE, dec.lambdas, dec.I1_sup, dec.I2_ball, abscissa_name="lambda")
    b1 = -(1.0 - 2.0 * alpha) + tol_I1
    b2 = -3.0 + tol_I2
    ok = dec.slope_I1 <= b1 and dec.slope_I2 <= b2
    return BoundCheckReport(
        claim_id, PASS if ok else FAIL, [0.0, 1.0], [dec.slope_I1, dec.slope_I2], [b1, b2],
        abscissa_name="slope_index",
        details={"lambdas": dec.lambdas, "I1_sup": dec.I1_sup, "I2_ball": dec.I2_ball,
                 "I2_weighted": dec.I2_weighted, "slope_I2_weighted": dec.slope_I2_weighted,
                 "ball_radius": dec.ball_radius},
    )


@dataclass
class FarFieldTable:
    lambdas: list
    velocity: list
    pressure: SphDecay | None = None

    def decays(self, factor: float = 0.1) -> bool:
        return self.velocity[-1] <= factor * self.velocity[0]


def farfield_diagnostic(u_t: VectorField2D, u_0: VectorField2D, lambda_list, alpha: float = 0.25,
                        pressure: bool = False, **kw) -> FarFieldTable:
    """Velocity criterion over the lambda ladder, plus the pressure split if requested."""
    lam = list(lambda_list)
    if len(lam) < 3:
        raise ValueError("need at least 3 lambda values")
    grid = u_t.grid
    if lam[0] < 1.0 or lam[-1] > grid.L / 8.0:
        raise ValueError(f"lambda values must lie in [1, L/8] = [1, {grid.L / 8:g}]")
    vel = velocity_criterion(u_t, u_0, lam)
    pres = sph_decay(u_t, lam, alpha, **kw) if pressure else None
    return FarFieldTable(lam, vel, pres)


def dichotomy_check(yudovich: list, galilean: list, claim_id: str = "farfield_dichotomy",
                    decay: float = 0.1, rel: float = 0.05) -> BoundCheckReport:
    """Every Yudovich run decays by ``decay``; every shifted run ends within rel of |g|.

    ``yudovich`` holds FarFieldTables; ``galilean`` holds (FarFieldTable, |g|) pairs.
    """
    if not yudovich or not galilean:
        return BoundCheckReport(claim_id, INCONCLUSIVE, [], [], [])
    xs, lhs, rhs = [], [], []
    ok = True
    for i, tab in enumerate(yudovich):
        xs.append(float(i))
        lhs.append(tab.velocity[-1])
        rhs.append(decay * tab.velocity[0])
        ok &= tab.decays(decay)
    for i, (tab, g) in enumerate(galilean):
        xs.append(float(len(yudovich) + i))
        lhs.append(abs(tab.velocity[-1] - g))
        rhs.append(rel * g)
        ok &= abs(tab.velocity[-1] - g) <= rel * g and g > 0
    return BoundCheckReport(
        claim_id, PASS if ok else FAIL, xs, lhs, rhs, abscissa_name="case",
        details={"yudovich": [t.velocity for t in yudovich],
                 "galilean": [[t.velocity, g] for t, g in galilean],
                 "lambdas": yudovich[0].lambdas},
    )


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

CAL_GRID = tuple(10.0 ** (k / 4.0) for k in range(-16, 17))


def calibrate(check, grid=CAL_GRID) -> float:
    """Smallest value on the log grid for which ``check(value)`` passes.

    Every check used with this is monotone in its constant, so the result is
    the tightest constant the calibration scenario admits.
    """
    for c in grid:
        if check(c).passed:
            return float(c)
    raise RuntimeError("no constant on the calibration grid passes")


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, FieldSpec):
        return o.to_dict()
    if isinstance(o, CutoffProfile):
        return [o.r0, o.r1]
    raise TypeError(f"not serialisable: {type(o).__name__}")


# --------------------------------------------------------------------------
# suite manifests
# --------------------------------------------------------------------------

MANIFEST_VERSION = 1
CHECK_KINDS = ("energy", "growth", "stability", "farfield", "sph_decay")


class ManifestError(ValueError):
    """The suite manifest is malformed or references something missing."""


def default_manifest_path():
    from importlib.resources import files

    return files("yudovich").joinpath("data/default_suite.json")


def load_manifest(path=None) -> dict:
    if path is None:
        text = default_manifest_path().read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    m = json.loads(text)
    validate_manifest(m)
    return m


def validate_manifest(m: dict) -> None:
    if m.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version {m.get('version')!r}")
    scen = m.get("scenarios", {})
    consts = m.get("constants", {})
    for sc_name, sc in scen.items():
        if sc.get("mode") not in ("analytic", "simulate"):
            raise ManifestError(f"scenario {sc_name}: mode must be 'analytic' or 'simulate'")
        FieldSpec.from_dict(sc["spec"])
    for chk in m.get("checks", []):
        cid = chk.get("claim_id", "?")
        if chk.get("kind") not in CHECK_KINDS:
            raise ManifestError(f"check {cid}: unknown kind {chk.get('kind')!r}")
        for ref in _scenario_refs(chk):
            if ref not in scen:
                raise ManifestError(f"check {cid}: unknown scenario {ref!r}")
        c = chk.get("constant")
        if c is not None and c not in consts:
            raise ManifestError(f"check {cid}: constant {c!r} is not frozen in the manifest")


def _scenario_refs(chk: dict) -> list:
    refs = []
    for key in ("scenario", "calibration_scenario"):
        if key in chk:
            refs.append(chk[key])
    refs.extend(chk.get("yudovich", []))
    return refs


def scenario_grid(sc: dict) -> Grid2D:
    return Grid2D(int(sc["grid"]["n"]), float(sc["grid"]["L"]))


def scenario_times(sc: dict) -> list:
    return [float(t) for t in np.linspace(0.0, float(sc["t_end"]), int(sc.get("samples", 17)))]


def scenario_config(sc: dict) -> SolverConfig:
    opts = dict(sc.get("solver", {}))
    opts.setdefault("dt", 0.25)
    opts["t_end"] = float(sc["t_end"])
    opts.setdefault("diag_every", 0)
    return SolverConfig(**opts)


class Contaminated(RuntimeError):
    pass


def scenario_run(sc: dict) -> SimulationRun:
    grid = scenario_grid(sc)
    spec = FieldSpec.from_dict(sc["spec"])
    run = simulate(build_field(spec, grid).omega, scenario_config(sc), record_times=scenario_times(sc)[1:])
    if run.contaminated:
        raise Contaminated(run.message)
    return run


def scenario_series(sc: dict, alpha: float) -> NormSeries:
    spec = FieldSpec.from_dict(sc["spec"])
    grid = scenario_grid(sc)
    tr = sc.get("trusted_radius")
    if sc["mode"] == "analytic":
        return spec_series(spec, grid, scenario_times(sc), alpha, tr)
    return run_series(scenario_run(sc), alpha, tr)


def _failed(cid: str, why: str, abscissa_name: str = "t") -> BoundCheckReport:
    return BoundCheckReport(cid, FAIL, [], [], [], abscissa_name=abscissa_name, details={"error": why})


def _run_energy_like(chk, m, cache):
    sc = m["scenarios"][chk["scenario"]]
    alpha = float(chk.get("alpha", 0.25))
    key = (chk["scenario"], alpha)
    if key not in cache:
        cache[key] = scenario_series(sc, alpha)
    series = cache[key]
    const = float(m["constants"][chk["constant"]])
    tol = chk.get("tolerances", {})
    if chk["kind"] == "energy":
        rep = energy_distribution_check(series, alpha, const, chk["claim_id"], float(tol.get("factor", 2.0)))
    else:
        rep = growth_bound_check(series, alpha, const, chk["claim_id"], int(tol.get("min_times", 8)))
        cap = tol.get("exponent_slack")
        if cap is not None and rep.status == PASS:
            limit = rep.details["envelope_exponent"] + float(cap)
            rep.details["exponent_limit"] = limit
            if not rep.details["growth_exponent"] <= limit:
                rep.status = FAIL
    rep.details["scenario"] = chk["scenario"]
    return rep


def _run_stability(chk, m):
    sc = m["scenarios"][chk["scenario"]]
    grid = scenario_grid(sc)
    base = build_field(FieldSpec.from_dict(sc["spec"]), grid).omega
    pert = build_field(FieldSpec.from_dict(chk["perturbation"]), grid).omega
    tol = chk.get("tolerances", {})
    data = stability_data(base, pert, scenario_config(sc), chk["t_probe"], float(chk.get("alpha", 0.25)),
                          float(chk["gamma"]), tuple(chk.get("deltas", (1e-1, 1e-2, 1e-3))),
                          sc.get("trusted_radius"))
    rep = stability_check(data, float(m["constants"][chk["constant"]]), chk["claim_id"],
                          float(tol.get("upper", 1.05)), float(tol.get("monotone", 0.05)))
    rep.details["scenario"] = chk["scenario"]
    return rep


def _run_farfield(chk, m):
    tol = chk.get("tolerances", {})
    lam = [float(x) for x in chk["lambdas"]]
    yud, gal = [], []
    for name in chk["yudovich"]:
        run = scenario_run(m["scenarios"][name])
        u0, ut = run.velocity(0), run.velocity(-1)
        yud.append(farfield_diagnostic(ut, u0, lam))
        for g in chk.get("galileo", []):
            v, gnorm = galileo_counterpart(run.final(), g["g"], g["V"], float(g.get("freq", 1.0)), run.times()[-1])
            gal.append((farfield_diagnostic(v, u0, lam), gnorm))
    return dichotomy_check(yud, gal, chk["claim_id"], float(tol.get("decay", 0.1)), float(tol.get("rel", 0.05)))


def _run_sph(chk, m):
    sc = m["scenarios"][chk["scenario"]]
    tol = chk.get("tolerances", {})
    alpha = float(chk.get("alpha", 0.25))
    b = build_field(FieldSpec.from_dict(sc["spec"]), scenario_grid(sc))
    dec = sph_decay(b.u, [float(x) for x in chk["lambdas"]], alpha, float(chk.get("ball_radius", 1.0)))
    return sph_decay_check(dec, alpha, float(tol.get("I1", 0.15)), float(tol.get("I2", 0.2)), chk["claim_id"])


def run_check(chk: dict, m: dict, cache: dict | None = None) -> BoundCheckReport:
    cache = {} if cache is None else cache
    try:
        if chk["kind"] in ("energy", "growth"):
            return _run_energy_like(chk, m, cache)
        if chk["kind"] == "stability":
            return _run_stability(chk, m)
        if chk["kind"] == "farfield":
            return _run_farfield(chk, m)
        return _run_sph(chk, m)
    except (Contaminated, RuntimeError) as exc:
        return _failed(chk["claim_id"], str(exc))


def _run_group(args):
    checks, m = args
    cache = {}
    return [run_check(c, m, cache) for c in checks]


def job_groups(m: dict) -> list[list[dict]]:
    """Checks that share a scenario series run in the same job."""
    groups: dict = {}
    for i, chk in enumerate(m.get("checks", [])):
        if chk["kind"] in ("energy", "growth"):
            key = ("series", chk["scenario"], float(chk.get("alpha", 0.25)))
        else:
            key = ("single", i)
        groups.setdefault(key, []).append(chk)
    return list(groups.values())


def run_suite(m: dict, jobs: int = 1, only=None) -> list[BoundCheckReport]:
    """Run every check of a manifest; reports come back in manifest order."""
    validate_manifest(m)
    if only is not None:
        m = {**m, "checks": [c for c in m["checks"] if c["claim_id"] in set(only)]}
    groups = job_groups(m)
    if jobs > 1 and len(groups) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_group, [(g, m) for g in groups]))
    else:
        results = [_run_group((g, m)) for g in groups]
    by_id = {r.claim_id: r for res in results for r in res}
    return [by_id[c["claim_id"]] for c in m["checks"]]


def calibrate_suite(m: dict) -> dict:
    """Recompute each frozen constant on its calibration check."""
    out = {}
    for name, cal in m.get("calibration", {}).items():
        chk = dict(cal["check"])
        chk.setdefault("claim_id", f"calibrate_{name}")
        chk["constant"] = name
        cache: dict = {}

        def trial(c):
            trial_m = {**m, "constants": {**m["constants"], name: c}}
            return run_check(chk, trial_m, cache)

        if chk["kind"] == "stability":
            # one set of runs serves every trial constant
            sc = m["scenarios"][chk["scenario"]]
            grid = scenario_grid(sc)
            data = stability_data(build_field(FieldSpec.from_dict(sc["spec"]), grid).omega,
                                  build_field(FieldSpec.from_dict(chk["perturbation"]), grid).omega,
                                  scenario_config(sc), chk["t_probe"], float(chk.get("alpha", 0.25)),
                                  float(chk["gamma"]), tuple(chk.get("deltas", (1e-1, 1e-2, 1e-3))))
            tol = chk.get("tolerances", {})
            out[name] = calibrate(lambda c: stability_check(data, c, upper=float(tol.get("upper", 1.05)),
                                                            mono_tol=float(tol.get("monotone", 0.05))))
        else:
            out[name] = calibrate(trial)
    return out
