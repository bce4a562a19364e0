"""Semi-Lagrangian vorticity transport on truncated data.

One step freezes the velocity of the current vorticity, traces the
characteristic through each grid point back over dt with the midpoint rule,
and samples the old vorticity at the departure point:

    X* = x - (dt/2) u(x),   X = x - dt u(X*),   omega'(x) = omega(X).

u(X*) uses the plain tensor cubic interpolant; omega(X) uses the cubic
interpolant clipped to the four surrounding samples, so every new value lies
between the old values next to the departure point.  In particular
max |omega| never increases, bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _accel
from .biot_savart import velocity_from_vorticity
from .fields import Grid2D, ScalarField2D, VectorField2D, make_cutoff
from .morrey import BallIntegrator, MorreyParams, morrey_norm, radius_ladder


class SupportOverflow(RuntimeError):
    """The vorticity reached the outer buffer of the domain."""


class OrderRegression(AssertionError):
    """Measured convergence order fell below the hard floor."""


@dataclass
class SolverConfig:
    dt: float
    t_end: float
    cfl_max: float = 0.5
    interpolation: str = "bicubic_clipped"
    velocity_interpolation: str = "bicubic"
    buffer: float = 0.2
    support_tol: float = 1e-12
    snapshot_every: int = 0
    diag_every: int = 1
    alpha: float = 0.25
    ball_radii: tuple = ()
    poisson: str = "cell_average"
    conserve_circulation: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0:
            raise ValueError("dt must be positive and t_end non-negative")
        if not 0 < self.cfl_max <= 1.0:
            raise ValueError("cfl_max must lie in (0, 1]")
        if self.interpolation not in _accel.MODES or self.velocity_interpolation not in _accel.MODES:
            raise ValueError("unknown interpolation mode")
        if not 0 <= self.buffer < 0.5:
            raise ValueError("buffer must lie in [0, 0.5)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ball_radii"] = list(self.ball_radii)
        return d


@dataclass
class SimulationRun:
    grid: Grid2D
    config: SolverConfig
    snapshots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""
    steps: int = 0
    velocity_override: bool = False

    @property
    def contaminated(self) -> bool:
        return self.status != "ok"

    def times(self) -> list[float]:
        return [t for t, _ in self.snapshots]

    def final(self) -> ScalarField2D:
        return self.snapshots[-1][1]

    def velocity(self, k: int = -1) -> VectorField2D:
        return velocity_from_vorticity(self.snapshots[k][1], check_support=False, method=self.config.poisson)


# --------------------------------------------------------------------------
# stepping
# --------------------------------------------------------------------------


def support_box(omega: np.ndarray, tol: float) -> tuple[int, int, int, int] | None:
    """Index bounds (i0, i1, j0, j1) of the cells with |omega| > tol * max|omega|."""
    a = np.abs(omega)
    top = float(np.max(a))
    if top == 0.0:
        return None
    m = a > tol * top
    rows = np.nonzero(m.any(axis=1))[0]
    cols = np.nonzero(m.any(axis=0))[0]
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


def support_radius(omega: ScalarField2D, tol: float = 1e-12) -> float:
    """Largest |x| over the numerical support (0 for the zero field)."""
    a = np.abs(omega.data)
    top = float(np.max(a))
    if top == 0.0:
        return 0.0
    return float(np.max(omega.grid.radius()[a > tol * top]))


def check_buffer(omega: ScalarField2D, buffer: float, tol: float) -> None:
    box = support_box(omega.data, tol)
    if box is None or buffer == 0:
        return
    n = omega.grid.n
    k = int(math.ceil(buffer * n / 2.0))
    i0, i1, j0, j1 = box
    if i0 < k or j0 < k or i1 > n - 1 - k or j1 > n - 1 - k:
        raise SupportOverflow(
            f"vorticity support reaches index box [{i0},{i1}]x[{j0},{j1}], buffer is {k} cells"
        )


def max_speed(u: VectorField2D) -> float:
    return float(np.max(np.hypot(u.u1, u.u2)))


def departure_points(u: VectorField2D, dt: float, mode: str = "bicubic") -> tuple[np.ndarray, np.ndarray]:
    """Fractional indices of X = x - dt u(x - dt/2 u(x)) for every grid point."""
    n, h = u.grid.n, u.grid.h
    idx = np.arange(n, dtype=np.float64)
    I, J = np.meshgrid(idx, idx, indexing="ij")
    pm = I - 0.5 * dt * u.u1 / h
    qm = J - 0.5 * dt * u.u2 / h
    um1 = _accel.interpolate(u.u1, pm, qm, mode)
    um2 = _accel.interpolate(u.u2, pm, qm, mode)
    return I - dt * um1 / h, J - dt * um2 / h


def step(omega: ScalarField2D, config: SolverConfig, dt: float | None = None,
         velocity: VectorField2D | None = None) -> ScalarField2D:
    """Advance one step of length dt (config.dt by default) with frozen velocity."""
    dt = config.dt if dt is None else dt
    u = velocity if velocity is not None else velocity_from_vorticity(omega, check_support=False, method=config.poisson)
    p, q = departure_points(u, dt, config.velocity_interpolation)
    new = _accel.interpolate(omega.data, p, q, config.interpolation)
    if config.conserve_circulation:
        restore_circulation(new, float(np.sum(omega.data)))
    return ScalarField2D(omega.grid, new)


def restore_circulation(w: np.ndarray, target: float) -> None:
    """Rescale one signed part of w in place so that sum(w) equals target.

    Only a factor in [0, 1] is ever applied, so no sample grows in magnitude
    and the maximum principle survives the correction.
    """
    pos = w > 0
    neg = w < 0
    P = float(np.sum(w[pos]))
    N = -float(np.sum(w[neg]))
    excess = P - N - target
    if excess > 0 and P > 0:
        f = (target + N) / P
        if 0.0 <= f <= 1.0:
            w[pos] *= f
    elif excess < 0 and N > 0:
        f = (P - target) / N
        if 0.0 <= f <= 1.0:
            w[neg] *= f


def stable_dt(u: VectorField2D, config: SolverConfig) -> float:
    s = max_speed(u)
    if s == 0.0:
        return config.dt
    return min(config.dt, config.cfl_max * u.grid.h / s)


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def _diag_row(omega: ScalarField2D, u: VectorField2D, t: float, config: SolverConfig, radii) -> dict:
    h2 = omega.grid.h ** 2
    row = {
        "t": t,
        "sup_vort": float(np.max(np.abs(omega.data))),
        "circulation": float(np.sum(omega.data) * h2),
        "l1_vort": float(np.sum(np.abs(omega.data)) * h2),
    }
    if radii:
        integ = BallIntegrator(omega.grid, u.u1 ** 2 + u.u2 ** 2)
        for R in radii:
            row[f"energy_B{R:g}"] = integ.integral(R)
        rep = morrey_norm(u, MorreyParams(2.0, config.alpha), radius_ladder(omega.grid, max(radii)),
                          trusted_radius=max(radii))
        for R in radii:
            row[f"morrey_R{R:g}"] = rep.tail(R)
    return row


def default_radii(grid: Grid2D) -> tuple:
    top = 0.75 * grid.L
    out = []
    R = 1.0
    while R <= top:
        out.append(R)
        R *= 2.0
    return tuple(out)


def simulate(omega0: ScalarField2D, config: SolverConfig, velocity: VectorField2D | None = None,
             on_step=None, record_times=()) -> SimulationRun:
    """Run to config.t_end.  Support overflow ends the run with status 'contaminated'.

    ``velocity`` overrides the Biot-Savart velocity with a fixed field (passive
    transport).  ``on_step(k, t, omega)`` is called after every accepted step.
    Steps are shortened so that the run lands exactly on each of
    ``record_times``, where snapshots are stored.
    """
    marks = sorted(float(x) for x in record_times if 0.0 < x < config.t_end)
    grid = omega0.grid
    radii = tuple(config.ball_radii) or default_radii(grid)
    run = SimulationRun(grid, config, velocity_override=velocity is not None)
    omega = omega0
    t = 0.0
    k = 0
    diags: list[dict] = []
    run.snapshots.append((0.0, omega0))
    top0 = float(np.max(np.abs(omega0.data)))
    try:
        check_buffer(omega0, config.buffer, config.support_tol)
        while True:
            u = velocity if velocity is not None else velocity_from_vorticity(omega, check_support=False, method=config.poisson)
            if config.diag_every and k % config.diag_every == 0:
                diags.append(_diag_row(omega, u, t, config, radii))
            remaining = config.t_end - t
            if remaining <= 1e-12 * max(1.0, config.t_end):
                break
            dt = min(stable_dt(u, config), remaining)
            hit = False
            if marks and t + dt >= marks[0] - 1e-12 * max(1.0, marks[0]):
                dt = marks[0] - t
                hit = True
            r_before = support_radius(omega, config.support_tol)
            new = step(omega, config, dt, velocity=u)
            grow = support_radius(new, config.support_tol) - r_before
            allowed = max_speed(u) * dt + math.sqrt(2.0) * grid.h * 1.0001
            if grow > allowed:
                raise SupportOverflow(f"support grew by {grow:g} > {allowed:g} in one step")
            check_buffer(new, config.buffer, config.support_tol)
            if float(np.max(np.abs(new.data))) > top0:
                raise AssertionError("maximum principle violated")
            omega = new
            t = marks.pop(0) if hit else t + dt
            k += 1
            if on_step is not None:
                on_step(k, t, omega)
            if hit or (config.snapshot_every and k % config.snapshot_every == 0):
                run.snapshots.append((t, omega))
    except SupportOverflow as exc:
        run.status = "contaminated"
        run.message = str(exc)
    if run.snapshots[-1][1] is not omega:
        run.snapshots.append((t, omega))
    run.steps = k
    run.diagnostics = _columns(diags)
    return run


def _columns(rows: list[dict]) -> dict:
    if not rows:
        return {}
    keys = list(rows[0])
    return {key: [r.get(key, float("nan")) for r in rows] for key in keys}


def diagnostics_csv(run: SimulationRun) -> str:
    cols = run.diagnostics
    keys = list(cols)
    lines = [",".join(keys)]
    for i in range(len(cols.get("t", []))):
        lines.append(",".join(repr(float(cols[k][i])) for k in keys))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# scenario helpers
# --------------------------------------------------------------------------


def bump_profile(a: float, power: int = 7):
    """Radial C^(power-1) bump (1 - r^2/a^2)^power on r < a."""

    def f(r):
        s = np.clip(1.0 - (np.asarray(r) / a) ** 2, 0.0, None)
        return s ** power

    return f


def vortex_field(grid: Grid2D, vortices, power: int = 7) -> ScalarField2D:
    """Sum of compact bumps; each vortex is (x1, x2, radius, peak)."""
    x1, x2 = grid.mesh()
    w = np.zeros((grid.n, grid.n))
    for c1, c2, a, s in vortices:
        w += s * bump_profile(a, power)(np.hypot(x1 - c1, x2 - c2))
    return ScalarField2D(grid, w)


def smoothed_rankine(grid: Grid2D, a: float, width: float) -> ScalarField2D:
    return make_cutoff(a - 0.5 * width, a + 0.5 * width).on_grid(grid)


def gaussian_vortex(grid: Grid2D, sigma: float) -> ScalarField2D:
    return ScalarField2D(grid, np.exp(-grid.radius() ** 2 / (2.0 * sigma * sigma)))


def corotating_pair(grid: Grid2D, d: float, a: float) -> ScalarField2D:
    return vortex_field(grid, [(0.5 * d, 0.0, a, 1.0), (-0.5 * d, 0.0, a, 1.0)])


# --------------------------------------------------------------------------
# truncation family
# --------------------------------------------------------------------------


@dataclass
class FamilyResult:
    runs: dict
    cauchy: dict
    r_compare: float


def _l2_ball(a: VectorField2D, b: VectorField2D, r: float) -> float:
    integ = BallIntegrator(a.grid, (a.u1 - b.u1) ** 2 + (a.u2 - b.u2) ** 2)
    return math.sqrt(integ.integral(r))


def run_truncation_family(build_vorticity, n_list, grid: Grid2D, config: SolverConfig,
                          r_compare: float = 4.0) -> FamilyResult:
    """One run per truncation radius; build_vorticity(n, grid) gives the truncated data.

    Snapshots of every run are taken at the same step indices (config.snapshot_every),
    so Cauchy differences compare equal times when all runs share dt.
    """
    runs = {}
    for nt in n_list:
        w0 = build_vorticity(nt, grid)
        try:
            runs[nt] = simulate(w0, config)
        except (ValueError, AssertionError) as exc:
            bad = SimulationRun(grid, config, [(0.0, w0)], {}, "failed", str(exc))
            runs[nt] = bad
    cauchy = {}
    keys = sorted(runs)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            ra, rb = runs[a], runs[b]
            m = min(len(ra.snapshots), len(rb.snapshots))
            series = []
            for k in range(m):
                ta, tb = ra.snapshots[k][0], rb.snapshots[k][0]
                if abs(ta - tb) > 1e-9 * max(1.0, ta):
                    break
                series.append((ta, _l2_ball(ra.velocity(k), rb.velocity(k), r_compare)))
            cauchy[(a, b)] = series
    return FamilyResult(runs, cauchy, r_compare)


# --------------------------------------------------------------------------
# exact-solution validation
# --------------------------------------------------------------------------


def restrict(fine: np.ndarray) -> np.ndarray:
    """Fine cell-centred samples to the coarse cell centres with 4-point cubic weights."""
    w = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0

    def along(a, axis):
        a = np.moveaxis(a, axis, 0)
        pad = np.concatenate([a[:1], a, a[-1:]], axis=0)
        out = w[0] * pad[0:-3:2] + w[1] * pad[1:-2:2] + w[2] * pad[2:-1:2] + w[3] * pad[3::2]
        return np.moveaxis(out, 0, axis)

    return along(along(fine, 0), 1)


def rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    den = float(np.sum(b * b))
    return math.sqrt(float(np.sum((a - b) ** 2)) / den) if den > 0 else math.sqrt(float(np.sum((a - b) ** 2)))


EXACT_CASES = ("rankine_rotation", "gaussian_vortex_steady", "corotating_pair_reference")


@dataclass
class ValidationTable:
    case_id: str
    resolutions: list
    errors: list
    orders: list
    order: float
    steps: list
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.order >= 1.8


def _initial(case_id: str, grid: Grid2D) -> ScalarField2D:
    L = grid.L
    if case_id == "rankine_rotation":
        return smoothed_rankine(grid, 0.25 * L, 0.2 * L)
    if case_id == "gaussian_vortex_steady":
        return gaussian_vortex(grid, 0.08 * L)
    if case_id == "corotating_pair_reference":
        return corotating_pair(grid, 0.3 * L, 0.15 * L)
    raise ValueError(f"unknown case {case_id!r}; expected one of {EXACT_CASES}")


def validate_exact(case_id: str, resolution_ladder=(256, 512, 1024), L: float = 4.0,
                   steps: int = 40, cfl: float = 0.5, floor: float = 1.5) -> ValidationTable:
    """Error table against the exact steady state or by self-convergence.

    dt is fixed across the ladder (set by the CFL limit on the finest grid), so
    all resolutions take the same number of steps and the measured order is
    the spatial one.
    """
    ladder = sorted(int(n) for n in resolution_ladder)
    finest = Grid2D(ladder[-1], L)
    w_f = _initial(case_id, finest)
    u_f = velocity_from_vorticity(w_f, check_support=False)
    dt = cfl * finest.h / max_speed(u_f)
    t_end = steps * dt
    cfg = SolverConfig(dt=dt, t_end=t_end, cfl_max=1.0, diag_every=0, ball_radii=(1.0,))
    finals = {}
    for n in ladder:
        g = Grid2D(n, L)
        run = simulate(_initial(case_id, g), cfg)
        if run.contaminated:
            raise SupportOverflow(run.message)
        finals[n] = (run.snapshots[0][1].data, run.final().data, run.steps)
    errors = []
    if case_id == "corotating_pair_reference":
        used = ladder[:-1]
        for a, b in zip(ladder, ladder[1:]):
            errors.append(rel_l2(finals[a][1], restrict(finals[b][1])))
    else:
        used = ladder
        for n in ladder:
            errors.append(rel_l2(finals[n][1], finals[n][0]))
    orders = [math.log2(e0 / e1) if e1 > 0 else math.inf for e0, e1 in zip(errors, errors[1:])]
    if len(errors) >= 2:
        hs = np.log([2.0 * L / n for n in used])
        order = float(np.polyfit(hs, np.log(errors), 1)[0])
    else:
        order = math.nan
    table = ValidationTable(case_id, used, errors, orders, order, [finals[n][2] for n in ladder],
                            {"dt": dt, "t_end": t_end, "L": L})
    if order < floor:
        raise OrderRegression(f"{case_id}: measured order {order:.2f} < {floor}")
    return table
