"""Kernel tables, free-space convolution and spectral multipliers.

Notation
--------
E(x) = -(1/2pi) log|x|, the fundamental solution of -Delta in the plane.
For a radial cutoff theta, the split pieces are grad(theta E) (the *near*
kernel, compactly supported, |x|^-1 singular) and grad^3((1 - theta) E) (the
*far* kernel, smooth, O(|x|^-3)).

Because -Delta((1 - theta) E) = m is a smooth radial bump supported on the
transition annulus of theta with integral one, all symbols are explicit:

    FT[(1 - theta) E] = m_hat / |xi|^2,     FT[theta E] = (1 - m_hat) / |xi|^2,

and m_hat(rho) is a one-dimensional Hankel transform of m.  The same device
applied to a cutoff eta of the size of the computational box gives a smooth,
compactly supported version of the far kernel whose band-limited samples are
used by the convolution operators.

Offset tables
-------------
A kernel table for a grid with n points per axis stores samples at offsets
``m h`` for ``m = -n .. n-1`` in both directions, i.e. a ``(2n, 2n)`` array whose
origin sits at index ``[n, n]``.  These are exactly the differences x_i - y_j
that occur in a convolution over the grid, and the table is applied with a
circular convolution of size 2n against zero-padded data (Hockney's method).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import make_interp_spline
from scipy.special import j0, j1

from .fields import (
    CutoffProfile,
    Grid2D,
    ScalarField2D,
    TABLE_VERSION,
    make_cutoff,
    read_arrays,
    write_arrays,
)

TWO_PI = 2.0 * math.pi

# component labels for the symmetric tensors used throughout
VEC = ("1", "2")
SYM2 = ("11", "12", "22")
SYM3 = ("111", "112", "122", "222")

DEFAULT_CHI = (1.0, 2.0)


class UnresolvedCutoff(ValueError):
    """The cutoff transition is too thin for the grid."""


class SupportViolation(ValueError):
    """Data leaks outside the region the free-space solver can handle."""


class LambdaOutOfRange(ValueError):
    pass


# --------------------------------------------------------------------------
# radial calculus
# --------------------------------------------------------------------------


def log_kernel(r):
    return -np.log(r) / TWO_PI


def log_derivs(r):
    """E, E', E'', E''' of E(r) = -(1/2pi) log r."""
    r = np.asarray(r, dtype=np.float64)
    c = -1.0 / TWO_PI
    return c * np.log(r), c / r, -c / r**2, 2.0 * c / r**3


def log_cell_average(h: float) -> float:
    """Mean of E over the square [-h/2, h/2]^2.

    Uses int_0^1 int_0^1 log(x^2 + y^2) dx dy = log 2 - 3 + pi/2.
    """
    mean_log = math.log(h / 2.0) + 0.5 * (math.log(2.0) - 3.0 + math.pi / 2.0)
    return -mean_log / TWO_PI


def radial_gradient(d1, r, x1, x2):
    with np.errstate(invalid="ignore", divide="ignore"):
        n1 = np.where(r > 0, x1 / r, 0.0)
        n2 = np.where(r > 0, x2 / r, 0.0)
    return d1 * n1, d1 * n2


def radial_hessian(d1, d2, r, x1, x2):
    """(g_11, g_12, g_22) for a radial function with derivatives g', g''."""
    with np.errstate(invalid="ignore", divide="ignore"):
        n1 = np.where(r > 0, x1 / r, 0.0)
        n2 = np.where(r > 0, x2 / r, 0.0)
        B = np.where(r > 0, d1 / r, 0.0)
    A = d2 - B
    return A * n1 * n1 + B, A * n1 * n2, A * n2 * n2 + B


def radial_third(d1, d2, d3, r, x1, x2):
    """(g_111, g_112, g_122, g_222) for a radial function.

    d_i d_j d_k g = a n_i n_j n_k + b (delta_ij n_k + delta_ik n_j + delta_jk n_i)
    with a = g''' - 3 g''/r + 3 g'/r^2 and b = g''/r - g'/r^2.
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        rr = np.where(r > 0, r, 1.0)
        n1 = np.where(r > 0, x1 / rr, 0.0)
        n2 = np.where(r > 0, x2 / rr, 0.0)
        a = np.where(r > 0, d3 - 3.0 * d2 / rr + 3.0 * d1 / rr**2, 0.0)
        b = np.where(r > 0, d2 / rr - d1 / rr**2, 0.0)
    return (
        a * n1**3 + 3.0 * b * n1,
        a * n1 * n1 * n2 + b * n2,
        a * n1 * n2 * n2 + b * n1,
        a * n2**3 + 3.0 * b * n2,
    )


def near_radial(theta: CutoffProfile, r):
    """(theta E)' as a function of r > 0."""
    E, E1, _, _ = log_derivs(r)
    t0, t1 = theta.derivatives(r, 1)
    return t1 * E + t0 * E1


def far_radial(theta: CutoffProfile, r):
    """First three radial derivatives of g = (1 - theta) E."""
    E, E1, E2, E3 = log_derivs(r)
    t0, t1, t2, t3 = theta.derivatives(r, 3)
    u = 1.0 - t0
    g1 = -t1 * E + u * E1
    g2 = -t2 * E - 2.0 * t1 * E1 + u * E2
    g3 = -t3 * E - 3.0 * t2 * E1 - 3.0 * t1 * E2 + u * E3
    return g1, g2, g3


def m_function(theta: CutoffProfile, r):
    """m = -Delta((1 - theta) E), supported on r0 <= r <= r1, integral one."""
    r = np.asarray(r, dtype=np.float64)
    _, t1, t2 = theta.derivatives(r, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -(np.log(r) * (t2 + t1 / r) + 2.0 * t1 / r) / TWO_PI
    return np.where((r > theta.r0) & (r < theta.r1), val, 0.0)


# --------------------------------------------------------------------------
# Hankel transforms
# --------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _gl(nodes: int):
    return leggauss(nodes)


def _gl_on(a: float, b: float, nodes: int):
    x, w = _gl(nodes)
    return a + 0.5 * (b - a) * (x + 1.0), 0.5 * (b - a) * w


def mhat_direct(theta: CutoffProfile, rho, nodes: int | None = None) -> np.ndarray:
    """m_hat(rho) = 2 pi int m(r) J0(rho r) r dr by Gauss-Legendre quadrature."""
    rho = np.atleast_1d(np.asarray(rho, dtype=np.float64))
    if nodes is None:
        nodes = int(min(4000, 200 + 2.0 * float(rho.max(initial=0.0)) * theta.width))
    r, w = _gl_on(theta.r0, theta.r1, nodes)
    mw = TWO_PI * m_function(theta, r) * r * w
    out = np.empty(rho.shape)
    step = max(1, 2_000_000 // nodes)
    flat = rho.ravel()
    res = out.ravel()
    for s in range(0, flat.size, step):
        blk = flat[s:s + step]
        res[s:s + step] = j0(np.outer(blk, r)) @ mw
    return out


class RadialSpline:
    """Degree-5 interpolating spline of a radial transform, zero past ``cut``."""

    def __init__(self, xs, values, cut=np.inf, outside=0.0):
        self._spl = make_interp_spline(xs, values, k=5)
        self.xmax = xs[-1]
        self.cut = cut
        self.outside = outside

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = self._spl(np.minimum(x, self.xmax))
        return np.where(x > min(self.cut, self.xmax), self.outside, out)


@lru_cache(maxsize=32)
def mhat_spline(r0: float, r1: float, rho_max: float) -> RadialSpline:
    """Spline of m_hat for the cutoff (r0, r1) on [0, rho_max].

    m_hat decays faster than any power; past rho * (r1 - r0) = 900 it is below
    1e-15 and is replaced by zero.
    """
    theta = make_cutoff(r0, r1)
    cut = min(rho_max, 900.0 / theta.width)
    step = TWO_PI / (64.0 * r1)
    npts = int(math.ceil(cut / step)) + 6
    rho = np.linspace(0.0, cut + 5 * step, npts)
    vals = mhat_direct(theta, rho)
    return RadialSpline(rho, vals, cut=cut if cut < rho_max else np.inf)


def mhat(theta: CutoffProfile, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    rmax = float(rho.max(initial=0.0))
    # round the range up so that nearby requests share one cached spline
    rmax = 2.0 ** math.ceil(math.log2(max(rmax, 1.0)))
    return mhat_spline(float(theta.r0), float(theta.r1), rmax)(rho)


@lru_cache(maxsize=8)
def psi_splines(c0: float, c1: float, r_max: float):
    """Radial splines for psi = inverse FT of chi(|xi|) and two derivative combinations.

    Returns splines of psi(r), Q(r) = -(1/2pi) int chi rho^3 J0(rho r) drho and
    P(r) = psi'(r) / r; then psi'' = Q - P.  Frequency profile chi = CutoffProfile(c0, c1).
    """
    chi = make_cutoff(c0, c1)
    step = 0.2 / c1
    npts = int(math.ceil(r_max / step)) + 8
    r = np.linspace(0.0, r_max + 7 * step, npts)
    nodes = int(200 + 1.5 * c1 * r[-1])
    rho, w = _gl_on(0.0, c1, nodes)
    wc = chi(rho) * w / TWO_PI
    psi = np.empty_like(r)
    Q0 = np.empty_like(r)
    P1 = np.empty_like(r)
    step_blk = max(1, 2_000_000 // nodes)
    for s in range(0, r.size, step_blk):
        rr = r[s:s + step_blk]
        z = np.outer(rr, rho)
        J0 = j0(z)
        with np.errstate(invalid="ignore", divide="ignore"):
            J1z = np.where(z > 0, j1(z) / np.where(z > 0, z, 1.0), 0.5)
        psi[s:s + step_blk] = J0 @ (wc * rho)
        Q0[s:s + step_blk] = -(J0 @ (wc * rho**3))
        P1[s:s + step_blk] = -(J1z @ (wc * rho**3))
    return RadialSpline(r, psi, outside=0.0), RadialSpline(r, Q0, outside=0.0), RadialSpline(r, P1, outside=0.0)


def psi_radial(r, lam: float = 1.0, chi=DEFAULT_CHI):
    """psi_lam, and the Hessian coefficients (A, B) with d_i d_j psi_lam = A n_i n_j + B delta_ij.

    psi_lam(x) = lam^-2 psi(x / lam) where psi is the inverse Fourier transform
    of chi(|xi|).
    """
    r = np.asarray(r, dtype=np.float64)
    s = r / lam
    rmax = 2.0 ** math.ceil(math.log2(max(float(s.max(initial=1.0)), 8.0)))
    sp, sq, spp = psi_splines(float(chi[0]), float(chi[1]), rmax)
    P = spp(s)
    Q = sq(s)
    return sp(s) / lam**2, (Q - 2.0 * P) / lam**4, P / lam**4


# --------------------------------------------------------------------------
# kernel tables
# --------------------------------------------------------------------------


def offset_mesh(grid: Grid2D):
    z = grid.offsets()
    z1, z2 = np.meshgrid(z, z, indexing="ij")
    return z1, z2, np.hypot(z1, z2)


@dataclass
class KernelTable:
    """Samples of a (possibly tensor-valued) kernel on the offset lattice."""

    grid: Grid2D
    values: dict
    singular_cell_rule: str
    kind: str = ""
    meta: dict = field(default_factory=dict)
    _fft: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        shape = (2 * self.grid.n, 2 * self.grid.n)
        for k, v in self.values.items():
            v = np.ascontiguousarray(v, dtype=np.float64)
            if v.shape != shape:
                raise ValueError(f"component {k} has shape {v.shape}, expected {shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"component {k} is not finite")
            self.values[k] = v

    @property
    def components(self) -> tuple[str, ...]:
        return tuple(self.values)

    def __getitem__(self, key) -> np.ndarray:
        return self.values[key]

    def spectrum(self, key) -> np.ndarray:
        """rfft2 of the table arranged for a size-2n circular convolution."""
        if key not in self._fft:
            self._fft[key] = np.fft.rfft2(np.fft.ifftshift(self.values[key]))
        return self._fft[key]

    def convolve(self, key, data: np.ndarray) -> np.ndarray:
        return hockney(self.spectrum(key), data, self.grid.h)

    def stack(self, keys=None) -> np.ndarray:
        keys = keys or self.components
        return np.stack([self.values[k] for k in keys])

    def save(self, path) -> None:
        write_arrays(path, self.grid.L, [self.values[k] for k in self.components], TABLE_VERSION)

    @classmethod
    def load(cls, path, grid: Grid2D, components, rule="loaded", kind=""):
        L, comps, _ = read_arrays(path, TABLE_VERSION)
        if len(comps) != len(components):
            raise ValueError("component count mismatch")
        if comps[0].shape[0] != 2 * grid.n or abs(L - grid.L) > 0:
            raise ValueError("table does not belong to this grid")
        return cls(grid, dict(zip(components, comps)), rule, kind)


def hockney(kernel_spec: np.ndarray, data: np.ndarray, h: float) -> np.ndarray:
    """sum_j K(x_i - y_j) f(y_j) h^2 over the grid via a zero-padded size-2n FFT."""
    n = data.shape[0]
    fh = np.fft.rfft2(data, s=(2 * n, 2 * n))
    return np.fft.irfft2(kernel_spec * fh, s=(2 * n, 2 * n))[:n, :n] * (h * h)


def _check_theta(grid: Grid2D, theta: CutoffProfile) -> None:
    if theta.width < 4.0 * grid.h:
        raise UnresolvedCutoff(
            f"cutoff transition r1 - r0 = {theta.width:g} is below 4h = {4 * grid.h:g}"
        )
    if theta.r0 < 2.0 * grid.h:
        raise UnresolvedCutoff(f"cutoff plateau r0 = {theta.r0:g} is below 2h = {2 * grid.h:g}")


def frequency_mesh(M: int, h: float, real: bool = True):
    """Angular frequencies of an M x M grid with spacing h (rfft layout if ``real``)."""
    k1 = TWO_PI * np.fft.fftfreq(M, d=h)
    k2 = TWO_PI * (np.fft.rfftfreq(M, d=h) if real else np.fft.fftfreq(M, d=h))
    xi1, xi2 = np.meshgrid(k1, k2, indexing="ij")
    return xi1, xi2


def nyquist_mask(M: int, real: bool = True) -> np.ndarray:
    """Zero on the Nyquist lines (where odd symbols cannot be represented)."""
    m1 = np.ones(M)
    m1[M // 2] = 0.0
    m2 = np.ones(M // 2 + 1 if real else M)
    m2[M // 2] = 0.0
    return np.multiply.outer(m1, m2)


def _bl_tables(grid: Grid2D, symbols: dict, pad: int) -> dict:
    """Band-limited tables: inverse DFT of exact symbols on a box of pad * n points."""
    n, h = grid.n, grid.h
    M = pad * n
    out = {}
    for key, sym in symbols.items():
        full = np.fft.irfft2(sym, s=(M, M)) / (h * h)
        full = np.fft.fftshift(full)
        c = M // 2
        out[key] = np.ascontiguousarray(full[c - n:c + n, c - n:c + n])
    return out


def far_cutoff_for(grid: Grid2D, pad: int) -> CutoffProfile:
    """Smooth truncation eta for the far kernel: identity on every grid offset."""
    L = grid.L
    P = pad * 2.0 * L
    inner = max(2.0 * math.sqrt(2.0) * L * 1.02, 0.3 * P)
    outer = 0.49 * P
    if outer <= inner + 0.25 * L:
        raise ValueError(f"pad={pad} leaves no room for the far-kernel truncation")
    return make_cutoff(inner, outer)


def split_symbols(grid: Grid2D, theta: CutoffProfile, pad: int):
    """Exact symbols of grad(theta E) and the smoothly truncated grad^3((1-theta) E)."""
    M = pad * grid.n
    xi1, xi2 = frequency_mesh(M, grid.h)
    rho = np.hypot(xi1, xi2)
    eta = far_cutoff_for(grid, pad)
    mask = nyquist_mask(M)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(rho > 0, 1.0 / np.where(rho > 0, rho, 1.0) ** 2, 0.0)
    mt = mhat(theta, rho)
    near_r = (1.0 - mt) * inv * mask
    far_r = (mt - mhat(eta, rho)) * inv * mask
    near = {"1": 1j * xi1 * near_r, "2": 1j * xi2 * near_r}
    far = {
        "111": -1j * xi1 * xi1 * xi1 * far_r,
        "112": -1j * xi1 * xi1 * xi2 * far_r,
        "122": -1j * xi1 * xi2 * xi2 * far_r,
        "222": -1j * xi2 * xi2 * xi2 * far_r,
    }
    return near, far


def tabulate_split_kernels(grid: Grid2D, theta: CutoffProfile, rule: str = "cell_average", pad: int = 4):
    """Tables of grad(theta E) (near) and grad d_j d_k ((1 - theta) E) (far).

    ``rule="cell_average"`` samples the closed-form radial expressions at the
    lattice offsets; the origin cell gets the cell average of the kernel, which
    is zero for both pieces (grad E is odd, and the far kernel vanishes on the
    plateau).  ``rule="band_limited"`` takes the inverse DFT of the exact
    symbols on a box of ``pad * n`` points; convolving those tables with
    well-resolved data reproduces the continuous convolution to rounding.
    """
    _check_theta(grid, theta)
    if rule == "cell_average":
        z1, z2, r = offset_mesh(grid)
        rr = np.where(r > 0, r, 1.0)
        g = np.where(r > 0, near_radial(theta, rr), 0.0)
        n1, n2 = radial_gradient(g, r, z1, z2)
        near_vals = {"1": n1, "2": n2}
        d1, d2, d3 = far_radial(theta, rr)
        inside = r <= theta.r0
        comps = radial_third(d1, d2, d3, r, z1, z2)
        far_vals = {k: np.where(inside, 0.0, c) for k, c in zip(SYM3, comps)}
    elif rule == "band_limited":
        ns, fs = split_symbols(grid, theta, pad)
        near_vals = _bl_tables(grid, ns, pad)
        far_vals = _bl_tables(grid, fs, pad)
    else:
        raise ValueError(f"unknown singular cell rule {rule!r}")
    meta = {"theta": (theta.r0, theta.r1), "pad": pad}
    near = KernelTable(grid, near_vals, rule, "near", dict(meta))
    far = KernelTable(grid, far_vals, rule, "far", dict(meta))
    return near, far


# --------------------------------------------------------------------------
# free-space Poisson
# --------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _log_table_spectrum(n: int, L: float) -> np.ndarray:
    grid = Grid2D(n, L)
    _, _, r = offset_mesh(grid)
    with np.errstate(divide="ignore"):
        E = log_kernel(r)
    E[n, n] = log_cell_average(grid.h)
    return np.fft.rfft2(np.fft.ifftshift(E))


def log_table(grid: Grid2D) -> KernelTable:
    _, _, r = offset_mesh(grid)
    with np.errstate(divide="ignore"):
        E = log_kernel(r)
    E[grid.n, grid.n] = log_cell_average(grid.h)
    return KernelTable(grid, {"E": E}, "cell_average", "log")


def inner_half_leak(data: np.ndarray, grid: Grid2D) -> float:
    """Fraction of |data| mass outside the inner half [-L/2, L/2]^2."""
    x = grid.coords()
    outside = np.abs(x) > 0.5 * grid.L
    mask = outside[:, None] | outside[None, :]
    total = float(np.sum(np.abs(data)))
    if total == 0.0:
        return 0.0
    return float(np.sum(np.abs(data[mask]))) / total


def free_space_poisson(rhs: ScalarField2D, check_support: bool = True, method: str = "cell_average") -> ScalarField2D:
    """E * rhs (solution of -Delta u = rhs decaying like a logarithm)."""
    grid = rhs.grid
    if check_support:
        leak = inner_half_leak(rhs.data, grid)
        if leak > 1e-12:
            raise SupportViolation(f"{leak:.3e} of the source mass lies outside the inner half of the domain")
    if method == "cell_average":
        spec = _log_table_spectrum(grid.n, grid.L)
        return ScalarField2D(grid, hockney(spec, rhs.data, grid.h))
    if method == "spectral":
        return ScalarField2D(grid, truncated_spectral_apply(rhs.data, grid, lambda xi1, xi2, E: E))
    raise ValueError(f"unknown method {method!r}")


def truncated_log_symbol(rho, D: float):
    """FT of E restricted to the disc of radius D (smooth in rho)."""
    rho = np.asarray(rho, dtype=np.float64)
    small = rho * D < 1e-3
    rs = np.where(small, 1.0, rho)
    val = (1.0 - j0(D * rs)) / rs**2 - D * math.log(D) * j1(D * rs) / rs
    # Taylor expansion at the origin: D^2/4 (1 - 2 log D) + O(rho^2)
    zero = D * D * (1.0 - 2.0 * math.log(D)) / 4.0 - rho**2 * D**4 * (1.0 - 4.0 * math.log(D)) / 64.0
    return np.where(small, zero, val)


def truncated_spectral_apply(data: np.ndarray, grid: Grid2D, symbol_fn, pad: int = 3, ncomp_out=None):
    """Free-space convolution with the log kernel truncated at the domain diameter.

    ``symbol_fn(xi1, xi2, E_hat)`` returns the symbol (or a list of symbols) to
    apply, given the truncated log symbol E_hat.  The truncation radius
    D = 2 sqrt(2) L + 2h covers every pair of grid points and the period
    pad * 2L >= 2D makes the periodic images harmless, so the result equals the
    free-space convolution for data supported in the domain.
    """
    n, h = grid.n, grid.h
    M = pad * n
    D = 2.0 * math.sqrt(2.0) * grid.L + 2.0 * h
    if M * h < 2.0 * D:
        raise ValueError("padding too small for the truncated kernel")
    xi1, xi2 = frequency_mesh(M, h)
    Eh = truncated_log_symbol(np.hypot(xi1, xi2), D)
    fh = np.fft.rfft2(data, s=(M, M))
    sym = symbol_fn(xi1, xi2, Eh)
    mask = nyquist_mask(M)
    if isinstance(sym, (list, tuple)):
        return [np.fft.irfft2(s * mask * fh, s=(M, M))[:n, :n] for s in sym]
    return np.fft.irfft2(sym * mask * fh, s=(M, M))[:n, :n]


# --------------------------------------------------------------------------
# low-pass filter
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LowPassProfile:
    lam: float
    base: CutoffProfile = field(default_factory=lambda: make_cutoff(*DEFAULT_CHI))

    def __post_init__(self):
        if self.lam < 1.0:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")

    def symbol(self, xi1, xi2):
        return self.base(self.lam * np.hypot(xi1, xi2))


def boundary_ring_mean(a: np.ndarray) -> float:
    ring = np.concatenate([a[0, :], a[-1, :], a[1:-1, 0], a[1:-1, -1]])
    return float(np.mean(ring))


def low_pass(f, lam: float, base: CutoffProfile | None = None, boundary: str = "free"):
    """chi(lam D) applied to a scalar or vector field.

    ``boundary="free"``: the field is written as c + f0 with c the mean over
    the outermost ring of cells; f0 is filtered on the zero-padded doubled
    domain and c passes unchanged (chi(0) = 1).  ``boundary="periodic"``
    treats the samples as one period.
    """
    from .fields import VectorField2D

    prof = LowPassProfile(float(lam), base or make_cutoff(*DEFAULT_CHI))
    if isinstance(f, VectorField2D):
        a = low_pass(ScalarField2D(f.grid, f.u1), lam, prof.base, boundary)
        b = low_pass(ScalarField2D(f.grid, f.u2), lam, prof.base, boundary)
        return VectorField2D(f.grid, a.data, b.data)
    grid = f.grid
    n, h = grid.n, grid.h
    if boundary == "periodic":
        xi1, xi2 = frequency_mesh(n, h)
        return ScalarField2D(grid, np.fft.irfft2(prof.symbol(xi1, xi2) * np.fft.rfft2(f.data), s=(n, n)))
    if boundary != "free":
        raise ValueError(f"unknown boundary mode {boundary!r}")
    c = boundary_ring_mean(f.data)
    M = 2 * n
    xi1, xi2 = frequency_mesh(M, h)
    out = np.fft.irfft2(prof.symbol(xi1, xi2) * np.fft.rfft2(f.data - c, s=(M, M)), s=(M, M))[:n, :n]
    return ScalarField2D(grid, out + c)


# --------------------------------------------------------------------------
# the composite kernel Gamma_lambda
# --------------------------------------------------------------------------


def _centered_box(M: int, h: float):
    z = (np.arange(M) - M // 2) * h
    z1, z2 = np.meshgrid(z, z, indexing="ij")
    return z1, z2, np.hypot(z1, z2)


def gamma_lambda(grid: Grid2D, lam: float, theta: CutoffProfile | None = None, pad: int = 4,
                 chi=DEFAULT_CHI, check_range: bool = True) -> KernelTable:
    """Gamma_lam = grad^2 psi_lam * grad(theta E) + psi_lam * grad^3((1 - theta) E).

    Both products are fast convolutions of tabulated factors on a box of
    ``pad * n`` points: psi_lam and its Hessian are sampled from radial splines,
    the split kernels are the band-limited tables of ``tabulate_split_kernels``
    on the same box.  Returns the four distinct third-order components.
    """
    if check_range and not (1.0 <= lam <= grid.L / 8.0):
        raise LambdaOutOfRange(f"lambda={lam} outside [1, L/8] = [1, {grid.L / 8.0:g}]")
    if theta is None:
        theta = make_cutoff(1.0, 2.0).scaled(max(1.0, lam))
    _check_theta(grid, theta)
    n, h = grid.n, grid.h
    M = pad * n
    z1, z2, r = _centered_box(M, h)
    psi, A, B = psi_radial(r, lam, chi)
    with np.errstate(invalid="ignore", divide="ignore"):
        n1 = np.where(r > 0, z1 / np.where(r > 0, r, 1.0), 0.0)
        n2 = np.where(r > 0, z2 / np.where(r > 0, r, 1.0), 0.0)
    hess = {"11": A * n1 * n1 + B, "12": A * n1 * n2, "22": A * n2 * n2 + B}
    del z1, z2
    spec = lambda a: np.fft.rfft2(np.fft.ifftshift(a))
    P = spec(psi)
    H = {k: spec(v) for k, v in hess.items()}
    del psi, hess, A, B, n1, n2, r
    near_s, far_s = split_symbols(grid, theta, pad)
    # Gamma_ijk = d_i d_j psi * N_k + psi * F_ijk, symmetrised over (i, j, k)
    combos = {
        "111": [("11", "1")],
        "112": [("11", "2"), ("12", "1"), ("12", "1")],
        "122": [("22", "1"), ("12", "2"), ("12", "2")],
        "222": [("22", "2")],
    }
    vals = {}
    c = M // 2
    for key, terms in combos.items():
        acc = sum(H[a] * near_s[b] for a, b in terms) / len(terms)
        acc = acc + P * far_s[key]
        # h^2 * IDFT(DFT(psi) * DFT(K)) with DFT(K) = symbol / h^2 for the split tables
        full = np.fft.fftshift(np.fft.irfft2(acc, s=(M, M)))
        vals[key] = np.ascontiguousarray(full[c - n:c + n, c - n:c + n])
    meta = {"lambda": lam, "theta": (theta.r0, theta.r1), "pad": pad, "chi": tuple(chi)}
    return KernelTable(grid, vals, "band_limited", "gamma", meta)


def gamma_radial(z1, z2, lam: float = 1.0, chi=DEFAULT_CHI, nodes: int = 4000):
    """Independent evaluation of Gamma_lam at arbitrary points by radial quadrature.

    Gamma_1 = grad^3 G with G radial and G_hat = chi(|xi|) / |xi|^2, so
    G' = -(1/2pi) int chi J1(rho r) drho, G'' = -(1/2pi) int chi rho J1'(rho r) drho,
    G''' = -(1/2pi) int chi rho^2 J1''(rho r) drho, and
    Gamma_lam(x) = lam^-3 Gamma_1(x / lam).  No splitting is involved.
    """
    z1 = np.atleast_1d(np.asarray(z1, dtype=np.float64)) / lam
    z2 = np.atleast_1d(np.asarray(z2, dtype=np.float64)) / lam
    r = np.hypot(z1, z2)
    prof = make_cutoff(*chi)
    rho, w = _gl_on(0.0, float(chi[1]), nodes)
    wc = prof(rho) * w / TWO_PI
    z = np.outer(np.maximum(r, 1e-300), rho)
    J0, J1 = j0(z), j1(z)
    J1p = J0 - J1 / z
    J1pp = -J1p / z - (1.0 - 1.0 / z**2) * J1
    d1 = -(J1 @ wc)
    d2 = -((J1p * rho) @ wc)
    d3 = -((J1pp * rho**2) @ wc)
    comps = radial_third(d1, d2, d3, r, z1, z2)
    return {k: c / lam**3 for k, c in zip(SYM3, comps)}


def tensor_norm(table: KernelTable) -> np.ndarray:
    """Frobenius norm of a symmetric third-order table (multiplicities 1, 3, 3, 1)."""
    v = table.values
    return np.sqrt(v["111"] ** 2 + 3 * v["112"] ** 2 + 3 * v["122"] ** 2 + v["222"] ** 2)


def envelope_constant(table: KernelTable, lam: float, d: int = 2, r_max: float | None = None) -> float:
    """sup |Gamma_lam(z)| lam^(d+1) <z/lam>^(d+1) over offsets |z| <= r_max (default L).

    Offsets beyond L are excluded: there the slowly decaying tail of psi_lam
    starts to feel the truncation of the far kernel at the edge of the box.
    """
    r_max = table.grid.L if r_max is None else r_max
    _, _, r = offset_mesh(table.grid)
    weight = lam ** (d + 1) * (1.0 + (r / lam) ** 2) ** ((d + 1) / 2.0)
    return float(np.max((tensor_norm(table) * weight)[r <= r_max]))


def ring_maxima(table: KernelTable, radii) -> np.ndarray:
    """max |Gamma| over offsets with |z| in [r, r (1 + 1/16)) for each r."""
    _, _, r = offset_mesh(table.grid)
    tn = tensor_norm(table)
    out = []
    for rr in radii:
        m = (r >= rr) & (r < rr * (1.0 + 1.0 / 16.0))
        out.append(float(np.max(tn[m])) if m.any() else np.nan)
    return np.array(out)


def decay_slope(table: KernelTable, lam: float, r_max: float | None = None, samples: int = 16) -> float:
    """Fitted log-log slope of the ring maxima of |Gamma_lam| over r in [4 lam, L/2]."""
    r_max = table.grid.L / 2.0 if r_max is None else r_max
    if r_max <= 4.0 * lam:
        raise LambdaOutOfRange(f"empty fit range [4 lam, {r_max:g}] for lambda={lam}")
    rs = np.geomspace(4.0 * lam, r_max / (1.0 + 1.0 / 16.0), samples)
    env = ring_maxima(table, rs)
    return float(np.polyfit(np.log(rs), np.log(env), 1)[0])
