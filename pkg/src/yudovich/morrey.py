"""Local Morrey norms on a uniform grid.

For p >= 1 and alpha >= 0 the quantity of interest is

    ||f||_{L^p_alpha(R)} = sup_{r >= R} r^{-(2/p + alpha)} ||f||_{L^p(B_r)},

with ||f||_{L^p_alpha} the case R = 1.  The sup is taken over a finite radius
ladder.  Ball integrals count every cell that lies inside the disc in full and
weight each cell cut by the circle with the fraction of a 4 x 4 sub-sample
inside it.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Grid2D, ScalarField2D, VectorField2D, curl

SUB = 4
LADDER_RATIO = 2.0 ** 0.125


class TrustedRegionError(ValueError):
    """A requested radius reaches into the truncation-contaminated buffer."""


@dataclass(frozen=True)
class MorreyParams:
    p: float = 2.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.p >= 1.0:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def weight_exponent(self) -> float:
        return (0.0 if math.isinf(self.p) else 2.0 / self.p) + self.alpha


@dataclass
class MorreyReport:
    p: float
    alpha: float
    radii: list
    ball_energy: list
    norm: float
    argmax_radius: float
    tail_norms: dict = field(default_factory=dict)
    values: list = field(default_factory=list)

    def tail(self, R: float) -> float:
        """sup over ladder radii r >= R (0 if the ladder has none)."""
        vals = [v for r, v in zip(self.radii, self.values) if r >= R - 1e-12]
        return max(vals) if vals else 0.0

    def to_dict(self) -> dict:
        p = "inf" if math.isinf(self.p) else self.p
        return {
            "p": p,
            "alpha": self.alpha,
            "radii": list(self.radii),
            "ball_energy": list(self.ball_energy),
            "norm": self.norm,
            "argmax_radius": self.argmax_radius,
            "tail_norms": {repr(float(k)): v for k, v in self.tail_norms.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["radius", "ball_energy", "weighted", "tail_norm"])
        for r, e, v in zip(self.radii, self.ball_energy, self.values):
            w.writerow([repr(r), repr(e), repr(v), repr(self.tail_norms[r])])
        return buf.getvalue()


def default_trusted_radius(grid: Grid2D) -> float:
    """Outer quarter of the half-width is treated as contaminated."""
    return 0.75 * grid.L


def radius_ladder(grid: Grid2D, r_max: float | None = None, r_min: float = 1.0,
                  ratio: float = LADDER_RATIO) -> list[float]:
    """Geometric ladder from r_min, with steps capped at 4h."""
    r_max = default_trusted_radius(grid) if r_max is None else r_max
    out = []
    r = r_min
    while r <= r_max * (1 + 1e-12):
        out.append(float(r))
        r = min(r * ratio, r + 4.0 * grid.h)
    return out


# --------------------------------------------------------------------------
# ball integration
# --------------------------------------------------------------------------


class BallIntegrator:
    """Cell-area weighted integrals of a fixed density over discs about the origin."""

    def __init__(self, grid: Grid2D, density: np.ndarray):
        self.grid = grid
        h = grid.h
        x1, x2 = grid.mesh()
        rc = np.hypot(x1, x2).ravel()
        order = np.argsort(rc, kind="stable")
        self.rc = rc[order]
        self.x1 = x1.ravel()[order]
        self.x2 = x2.ravel()[order]
        self.dens = np.asarray(density, dtype=np.float64).ravel()[order]
        self.csum = np.concatenate([[0.0], np.cumsum(self.dens)])
        self.half_diag = h / math.sqrt(2.0)
        off = (np.arange(SUB) + 0.5) / SUB - 0.5
        o1, o2 = np.meshgrid(off * h, off * h, indexing="ij")
        self.o1 = o1.ravel()
        self.o2 = o2.ravel()

    def integral(self, r: float) -> float:
        h2 = self.grid.h ** 2
        lo = int(np.searchsorted(self.rc, r - self.half_diag, side="right"))
        hi = int(np.searchsorted(self.rc, r + self.half_diag, side="left"))
        inner = self.csum[lo]
        if hi <= lo:
            return float(inner * h2)
        px = self.x1[lo:hi, None] + self.o1[None, :]
        py = self.x2[lo:hi, None] + self.o2[None, :]
        frac = np.count_nonzero(px * px + py * py <= r * r, axis=1) / float(SUB * SUB)
        return float((inner + np.dot(frac, self.dens[lo:hi])) * h2)


def ball_max(grid: Grid2D, values: np.ndarray, radii) -> list[float]:
    """max of |values| over sample points in each closed disc."""
    rc = grid.radius().ravel()
    order = np.argsort(rc, kind="stable")
    run = np.maximum.accumulate(np.abs(np.asarray(values).ravel()[order]))
    rs = rc[order]
    out = []
    for r in radii:
        k = int(np.searchsorted(rs, r, side="right"))
        out.append(float(run[k - 1]) if k > 0 else 0.0)
    return out


def _magnitude(f) -> tuple[Grid2D, np.ndarray]:
    if isinstance(f, VectorField2D):
        return f.grid, f.magnitude()
    if isinstance(f, ScalarField2D):
        return f.grid, np.abs(f.data)
    raise TypeError(f"expected a field, got {type(f).__name__}")


def morrey_norm(f, params: MorreyParams, radii=None, trusted_radius: float | None = None) -> MorreyReport:
    """Evaluate r^-(2/p + alpha) ||f||_{L^p(B_r)} on the ladder and its running sups."""
    grid, mag = _magnitude(f)
    tr = default_trusted_radius(grid) if trusted_radius is None else trusted_radius
    radii = radius_ladder(grid, tr) if radii is None else [float(r) for r in radii]
    if not radii:
        raise ValueError("empty radius ladder")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    if radii[0] < 1.0:
        raise ValueError("Morrey radii start at 1")
    if radii[-1] > tr * (1 + 1e-12):
        raise TrustedRegionError(f"radius {radii[-1]:g} exceeds the trusted radius {tr:g}")
    p, a = params.p, params.alpha
    w = params.weight_exponent
    if math.isinf(p):
        energy = ball_max(grid, mag, radii)
        vals = [r ** -w * e for r, e in zip(radii, energy)]
    else:
        top = float(np.max(mag))
        scale = top if top > 0 else 1.0
        integ = BallIntegrator(grid, (mag / scale) ** p)
        energy = [integ.integral(r) * scale ** p for r in radii]
        vals = [r ** -w * e ** (1.0 / p) for r, e in zip(radii, energy)]
    tails = {}
    run = 0.0
    for r, v in zip(reversed(radii), reversed(vals)):
        run = max(run, v)
        tails[r] = run
    tails = {r: tails[r] for r in radii}
    k = int(np.argmax(vals))
    return MorreyReport(p, a, list(radii), energy, float(tails[radii[0]]), radii[k], tails, vals)


def norm(f, p: float = 2.0, alpha: float = 0.0, R: float = 1.0, trusted_radius: float | None = None) -> float:
    """||f||_{L^p_alpha(R)} on the default ladder (shortcut)."""
    grid, _ = _magnitude(f)
    tr = default_trusted_radius(grid) if trusted_radius is None else trusted_radius
    rep = morrey_norm(f, MorreyParams(p, alpha), radius_ladder(grid, tr, r_min=R), trusted_radius=tr)
    return rep.norm


# --------------------------------------------------------------------------
# inequalities
# --------------------------------------------------------------------------


def interpolate_check(f, alpha: float, beta: float, gamma: float, trusted_radius: float | None = None):
    """(||f||_{L^2_gamma}, ||f||_{L^2_beta}^t ||f||_{L^2_alpha}^(1-t), t) with gamma = t beta + (1-t) alpha."""
    if not alpha < gamma < beta:
        raise ValueError("need alpha < gamma < beta")
    t = (gamma - alpha) / (beta - alpha)
    ng = norm(f, 2.0, gamma, trusted_radius=trusted_radius)
    nb = norm(f, 2.0, beta, trusted_radius=trusted_radius)
    na = norm(f, 2.0, alpha, trusted_radius=trusted_radius)
    return ng, nb ** t * na ** (1.0 - t), t


def vorticity_sup(u: VectorField2D, trusted_radius: float | None = None) -> float:
    tr = default_trusted_radius(u.grid) if trusted_radius is None else trusted_radius
    w = curl(u).data
    m = u.grid.radius() <= tr
    return float(np.max(np.abs(w[m]))) if m.any() else 0.0


def yudovich_norm(u: VectorField2D, alpha: float, trusted_radius: float | None = None) -> tuple[float, float]:
    """(||u||_{L^2_alpha}, ||curl u||_inf) over the trusted disc; their sum is the Y_alpha norm."""
    return norm(u, 2.0, alpha, trusted_radius=trusted_radius), vorticity_sup(u, trusted_radius)


def embedding_check(u: VectorField2D, alpha: float, R: float = 1.0, trusted_radius: float | None = None):
    """(lhs, rhs) of the sup-norm embedding: ||u||_{L^inf_{(1+a)/2}(R)} against
    ||omega||_inf^(1/2) ||u||_{L^2_a(R)}^(1/2) + R^-((1+a)/2) ||u||_{L^2_a(R)}."""
    if R < 1.0:
        raise ValueError("R must be >= 1")
    tr = default_trusted_radius(u.grid) if trusted_radius is None else trusted_radius
    b = 0.5 * (1.0 + alpha)
    lhs = norm(u, math.inf, b, R, tr)
    l2 = norm(u, 2.0, alpha, R, tr)
    rhs = math.sqrt(vorticity_sup(u, tr) * l2) + R ** -b * l2
    return lhs, rhs
