"""Grids, sampled fields, smooth radial cutoffs, dyadic partitions and snapshot I/O.

Array convention: every sampled quantity is an ``(n, n)`` float64 array whose
first axis follows ``x1`` and second axis follows ``x2`` (``indexing="ij"``).
Sample ``[i, j]`` sits at the cell centre ``(-L + (i + 1/2) h, -L + (j + 1/2) h)``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Grid2D",
    "ScalarField2D",
    "VectorField2D",
    "CutoffProfile",
    "DyadicPartition",
    "make_cutoff",
    "ramp",
    "sample_radial",
    "write_snapshot",
    "read_snapshot",
    "write_arrays",
    "read_arrays",
    "SnapshotError",
    "BadMagic",
    "VersionMismatch",
    "Truncated",
    "NonFiniteSample",
    "GridMismatch",
    "ddx",
    "curl",
    "divergence",
]


class GridMismatch(ValueError):
    """Raised when an operation combines fields living on different grids."""


class NonFiniteSample(ValueError):
    """Raised when a sampled function returns NaN or Inf."""


# --------------------------------------------------------------------------
# grids and fields
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid2D:
    """Cell-centred uniform grid on the square [-L, L]^2 with n samples per axis."""

    n: int
    L: float

    def __post_init__(self):
        n = int(self.n)
        if n < 16 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"half width must be positive, got {self.L}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    def coords(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.coords()
        return np.meshgrid(x, x, indexing="ij")

    def radius(self) -> np.ndarray:
        x1, x2 = self.mesh()
        return np.hypot(x1, x2)

    def offsets(self) -> np.ndarray:
        """Offsets ``m h`` for ``m = -n .. n-1``: the lattice of differences x_i - y_j."""
        return np.arange(-self.n, self.n) * self.h

    def refine(self) -> "Grid2D":
        return Grid2D(2 * self.n, self.L)


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(a))[0])
        raise ValueError(f"{what} contains non-finite values (first at index {bad})")


@dataclass(frozen=True)
class ScalarField2D:
    grid: Grid2D
    data: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.float64)
        if a.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"data shape {a.shape} does not match grid n={self.grid.n}")
        _check_finite(a, "scalar field")
        a.flags.writeable = False
        object.__setattr__(self, "data", a)

    def __add__(self, other: "ScalarField2D") -> "ScalarField2D":
        same_grid(self, other)
        return ScalarField2D(self.grid, self.data + other.data)

    def __sub__(self, other: "ScalarField2D") -> "ScalarField2D":
        same_grid(self, other)
        return ScalarField2D(self.grid, self.data - other.data)

    def scale(self, c: float) -> "ScalarField2D":
        return ScalarField2D(self.grid, c * self.data)


@dataclass(frozen=True)
class VectorField2D:
    grid: Grid2D
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        for name in ("u1", "u2"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if a.shape != (self.grid.n, self.grid.n):
                raise ValueError(f"{name} shape {a.shape} does not match grid n={self.grid.n}")
            _check_finite(a, f"vector component {name}")
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def components(self) -> tuple[np.ndarray, np.ndarray]:
        return self.u1, self.u2

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u1, self.u2)

    def __add__(self, other: "VectorField2D") -> "VectorField2D":
        same_grid(self, other)
        return VectorField2D(self.grid, self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other: "VectorField2D") -> "VectorField2D":
        same_grid(self, other)
        return VectorField2D(self.grid, self.u1 - other.u1, self.u2 - other.u2)

    def scale(self, c: float) -> "VectorField2D":
        return VectorField2D(self.grid, c * self.u1, c * self.u2)


def same_grid(*fields) -> Grid2D:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"grid mismatch: {g} vs {f.grid}")
    return g


# --------------------------------------------------------------------------
# smooth cutoffs
# --------------------------------------------------------------------------


def ramp(t, order: int = 0):
    """Smooth step s(t) = 0 for t <= 0, 1 for t >= 1, built from exp(-1/t).

    s(t) = f(t) / (f(t) + f(1 - t)) with f(t) = exp(-1/t), which equals
    expit(1/(1-t) - 1/t) on (0, 1).  Returns the tuple (s, s', ..., s^(order))
    when ``order > 0``; derivatives are closed-form through the logistic
    derivatives.
    """
    t = np.asarray(t, dtype=np.float64)
    inside = (t > 0.0) & (t < 1.0)
    tt = np.where(inside, t, 0.5)
    a, b = 1.0 / tt, 1.0 / (1.0 - tt)
    z = b - a
    s = expit(z)
    sm = expit(-z)
    s0 = np.where(inside, s, np.where(t >= 1.0, 1.0, 0.0))
    if order == 0:
        return s0
    d1 = s * sm
    z1 = b * b + a * a
    out = [s0, np.where(inside, d1 * z1, 0.0)]
    if order >= 2:
        d2 = d1 * (sm - s)
        z2 = 2.0 * (b**3 - a**3)
        out.append(np.where(inside, d2 * z1**2 + d1 * z2, 0.0))
    if order >= 3:
        d3 = d1 * (1.0 - 6.0 * s * sm)
        z3 = 6.0 * (b**4 + a**4)
        out.append(np.where(inside, d3 * z1**3 + 3.0 * d2 * z1 * z2 + d1 * z3, 0.0))
    if order > 3:
        raise ValueError("ramp derivatives are implemented up to order 3")
    return tuple(out)


@dataclass(frozen=True)
class CutoffProfile:
    """Radial profile equal to 1 on |x| <= r0 and 0 on |x| >= r1.

    chi(r) = 1 - s((r - r0) / (r1 - r0)) with the exp(-1/t) step ``ramp``.
    """

    r0: float
    r1: float

    def __post_init__(self):
        if not (self.r0 > 0 and self.r1 > 0):
            raise ValueError(f"cutoff radii must be positive, got ({self.r0}, {self.r1})")
        if self.r0 >= self.r1:
            raise ValueError(f"cutoff needs r0 < r1, got ({self.r0}, {self.r1})")

    @property
    def width(self) -> float:
        return self.r1 - self.r0

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        return 1.0 - ramp((r - self.r0) / self.width)

    def derivatives(self, r, order: int = 3):
        """(chi, chi', ..., chi^(order)) as functions of the radius."""
        w = self.width
        s = ramp((np.asarray(r, dtype=np.float64) - self.r0) / w, order=order)
        out = [1.0 - s[0]]
        for k in range(1, order + 1):
            out.append(-s[k] / w**k)
        return tuple(out)

    def at(self, x1, x2, center=(0.0, 0.0)):
        return self(np.hypot(np.asarray(x1) - center[0], np.asarray(x2) - center[1]))

    def on_grid(self, grid: Grid2D, center=(0.0, 0.0)) -> ScalarField2D:
        x1, x2 = grid.mesh()
        return ScalarField2D(grid, self.at(x1, x2, center))

    def scaled(self, R: float) -> "CutoffProfile":
        """chi_R(x) = chi(x / R)."""
        return CutoffProfile(self.r0 * R, self.r1 * R)

    def grad_sup(self) -> float:
        """sup |chi'| (attained at the midpoint of the transition)."""
        r = np.linspace(self.r0, self.r1, 4097)
        return float(np.max(np.abs(self.derivatives(r, 1)[1])))


def make_cutoff(r0: float, r1: float) -> CutoffProfile:
    return CutoffProfile(float(r0), float(r1))


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def sample_radial(grid: Grid2D, f: Callable[[np.ndarray], np.ndarray]) -> ScalarField2D:
    """Sample a radial function f(|x|) at the cell centres."""
    x1, x2 = grid.mesh()
    r = np.hypot(x1, x2)
    vals = np.asarray(f(r), dtype=np.float64)
    if vals.shape == ():
        vals = np.full(r.shape, float(vals))
    if vals.shape != r.shape:
        raise ValueError(f"radial function returned shape {vals.shape}, expected {r.shape}")
    bad = ~np.isfinite(vals)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NonFiniteSample(
            f"non-finite sample {vals[i, j]!r} at index ({i}, {j}), "
            f"x = ({x1[i, j]:.6g}, {x2[i, j]:.6g}), |x| = {r[i, j]:.6g}"
        )
    return ScalarField2D(grid, vals)


# --------------------------------------------------------------------------
# dyadic partitions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DyadicPartition:
    """Ball B_R and annuli A_k(R) = {2^k R <= |y| < 2^(k+1) R}, k = 0 .. k_max."""

    R: float
    k_max: int

    def __post_init__(self):
        if self.R < 1.0:
            raise ValueError(f"base radius must be >= 1, got {self.R}")
        if self.k_max < 0:
            raise ValueError("k_max must be non-negative")

    @classmethod
    def covering(cls, grid: Grid2D, R: float = 1.0) -> "DyadicPartition":
        """Smallest partition whose annuli reach the domain corners."""
        rmax = math.sqrt(2.0) * grid.L
        k = max(0, math.ceil(math.log2(rmax / R)) - 1)
        while R * 2.0 ** (k + 1) <= rmax:
            k += 1
        return cls(R, k)

    def index(self, r) -> np.ndarray:
        """-1 on B_R, k on A_k(R); values beyond the last annulus get k_max + 1."""
        r = np.asarray(r, dtype=np.float64)
        with np.errstate(divide="ignore"):
            k = np.floor(np.log2(np.maximum(r, 1e-300) / self.R)).astype(np.int64)
        k = np.where(r < self.R, -1, k)
        return np.minimum(k, self.k_max + 1)

    def masks(self, grid: Grid2D) -> list[np.ndarray]:
        idx = self.index(grid.radius())
        return [idx == k for k in range(-1, self.k_max + 1)]


# --------------------------------------------------------------------------
# snapshot format
# --------------------------------------------------------------------------

MAGIC = b"YUD2"
FIELD_VERSION = 1
TABLE_VERSION = 2
_HEADER = struct.Struct("<4sIIdB")


class SnapshotError(IOError):
    pass


class BadMagic(SnapshotError):
    pass


class VersionMismatch(SnapshotError):
    pass


class Truncated(SnapshotError):
    pass


def write_arrays(path, L: float, arrays: Sequence[np.ndarray], version: int) -> None:
    arrays = [np.ascontiguousarray(a, dtype="<f8") for a in arrays]
    n = arrays[0].shape[0]
    for a in arrays:
        if a.shape != (n, n):
            raise ValueError("all components must be square arrays of the same size")
    limit = 2 if version == FIELD_VERSION else 8
    if not 1 <= len(arrays) <= limit:
        raise ValueError(f"version {version} stores 1..{limit} components, got {len(arrays)}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, n, float(L), len(arrays)))
        for a in arrays:
            fh.write(a.tobytes(order="C"))


def read_arrays(path, version: int | None = None) -> tuple[float, list[np.ndarray], int]:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise Truncated(f"{path}: header truncated ({len(raw)} bytes)")
    _, ver, n, L, ncomp = _HEADER.unpack_from(raw)
    if version is not None and ver != version:
        raise VersionMismatch(f"{path}: version {ver}, expected {version}")
    if ver not in (FIELD_VERSION, TABLE_VERSION):
        raise VersionMismatch(f"{path}: unknown version {ver}")
    need = _HEADER.size + 8 * ncomp * n * n
    if len(raw) < need:
        raise Truncated(f"{path}: payload has {len(raw) - _HEADER.size} bytes, expected {need - _HEADER.size}")
    data = np.frombuffer(raw, dtype="<f8", count=ncomp * n * n, offset=_HEADER.size)
    comps = [data[k * n * n:(k + 1) * n * n].reshape(n, n).astype(np.float64) for k in range(ncomp)]
    return L, comps, ver


def write_snapshot(f, path) -> None:
    if isinstance(f, ScalarField2D):
        comps = [f.data]
    elif isinstance(f, VectorField2D):
        comps = [f.u1, f.u2]
    else:
        raise TypeError(f"cannot snapshot {type(f).__name__}")
    write_arrays(path, f.grid.L, comps, FIELD_VERSION)


def read_snapshot(path):
    L, comps, _ = read_arrays(path, FIELD_VERSION)
    grid = Grid2D(comps[0].shape[0], L)
    if len(comps) == 1:
        return ScalarField2D(grid, comps[0])
    return VectorField2D(grid, comps[0], comps[1])


# --------------------------------------------------------------------------
# discrete calculus (second order, one-sided at the edges)
# --------------------------------------------------------------------------


def ddx(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    return np.gradient(a, h, axis=axis, edge_order=2)


def curl(u: VectorField2D) -> ScalarField2D:
    h = u.grid.h
    return ScalarField2D(u.grid, ddx(u.u2, h, 0) - ddx(u.u1, h, 1))


def divergence(u: VectorField2D) -> ScalarField2D:
    h = u.grid.h
    return ScalarField2D(u.grid, ddx(u.u1, h, 0) + ddx(u.u2, h, 1))
