"""Pressure-force operators.

Three routes to grad(-Delta)^-1 d_j d_k (u_j v_k):

* ``pressure_force_split`` convolves grad(theta E) with d_j u_k d_k v_j and the
  far kernel grad d_j d_k ((1 - theta) E) with u_j v_k;
* ``pressure_force_lowpass`` applies (Id - chi(D)) spectrally and convolves
  the composite kernel Gamma_1 with u_j v_k;
* ``leray_oracle`` applies the full symbol with the truncated log kernel.

All three take velocity fields sampled on the same grid and return a
``PressureForce`` whose components are the two entries of grad Pi(u (x) v).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fields import CutoffProfile, Grid2D, VectorField2D, ddx, make_cutoff, same_grid, write_snapshot
from .kernels import (
    DEFAULT_CHI,
    SYM3,
    frequency_mesh,
    gamma_lambda,
    hockney,
    nyquist_mask,
    tabulate_split_kernels,
    truncated_spectral_apply,
)


class BoundaryDecayError(ValueError):
    """The tensor u (x) v does not decay at the edge of the domain."""


@dataclass
class PressureForce:
    grid: Grid2D
    f1: np.ndarray
    f2: np.ndarray
    provenance: dict = field(default_factory=dict)
    trusted_radius: float = 0.0
    tail_bound: float | None = None

    def as_vector(self) -> VectorField2D:
        return VectorField2D(self.grid, self.f1, self.f2)

    def trusted_mask(self) -> np.ndarray:
        return self.grid.radius() <= self.trusted_radius

    def save(self, path) -> None:
        write_snapshot(self.as_vector(), path)
        side = {
            "provenance": self.provenance,
            "trusted_radius": self.trusted_radius,
            "tail_bound": self.tail_bound,
        }
        with open(str(path) + ".json", "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)


def default_trusted_radius(grid: Grid2D) -> float:
    return 0.75 * grid.L


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def spectral_gradient(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Derivative of compactly supported samples on the zero-padded doubled domain."""
    n = a.shape[0]
    M = 2 * n
    xi1, xi2 = frequency_mesh(M, h)
    xi = xi1 if axis == 0 else xi2
    out = np.fft.irfft2(1j * xi * nyquist_mask(M) * np.fft.rfft2(a, s=(M, M)), s=(M, M))
    return out[:n, :n]


def fd4_gradient(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order centred differences, second order in the two edge layers."""
    out = ddx(a, h, axis)
    a = np.moveaxis(a, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[2:-2] = (a[:-4] - 8.0 * a[1:-3] + 8.0 * a[3:-1] - a[4:]) / (12.0 * h)
    return np.moveaxis(o, 0, axis)


GRADIENTS = {"spectral": spectral_gradient, "fd4": fd4_gradient, "fd2": lambda a, h, ax: ddx(a, h, ax)}


def velocity_gradients(u: VectorField2D, method: str = "spectral") -> dict:
    """{(j, k): d_j u_k} with indices 1, 2."""
    g = GRADIENTS[method]
    h = u.grid.h
    comps = {1: u.u1, 2: u.u2}
    return {(j, k): g(comps[k], h, j - 1) for j in (1, 2) for k in (1, 2)}


def sym_product(u: VectorField2D, v: VectorField2D) -> dict:
    """Symmetric part of u_j v_k; the third-order kernels only see this part."""
    return {
        "11": u.u1 * v.u1,
        "12": 0.5 * (u.u1 * v.u2 + u.u2 * v.u1),
        "22": u.u2 * v.u2,
    }


def _contract(kernel_spec: dict, F: dict, n: int, h: float):
    """sum_jk T_ijk * F_jk for both i, with T given by spectra of its 4 components."""
    M = 2 * n
    Fh = {k: np.fft.rfft2(v, s=(M, M)) for k, v in F.items()}
    T = kernel_spec
    s1 = T["111"] * Fh["11"] + 2.0 * T["112"] * Fh["12"] + T["122"] * Fh["22"]
    s2 = T["112"] * Fh["11"] + 2.0 * T["122"] * Fh["12"] + T["222"] * Fh["22"]
    f1 = np.fft.irfft2(s1, s=(M, M))[:n, :n] * h * h
    f2 = np.fft.irfft2(s2, s=(M, M))[:n, :n] * h * h
    return f1, f2


@lru_cache(maxsize=8)
def _split_tables(n: int, L: float, r0: float, r1: float, rule: str, pad: int):
    grid = Grid2D(n, L)
    near, far = tabulate_split_kernels(grid, make_cutoff(r0, r1), rule=rule, pad=pad)
    return (
        {k: near.spectrum(k) for k in near.components},
        {k: far.spectrum(k) for k in far.components},
    )


@lru_cache(maxsize=4)
def _gamma_spectra(n: int, L: float, chi: tuple, pad: int, r0: float, r1: float):
    grid = Grid2D(n, L)
    G = gamma_lambda(grid, 1.0, theta=make_cutoff(r0, r1), pad=pad, chi=chi, check_range=False)
    return {k: G.spectrum(k) for k in SYM3}


def tail_bound(u_norm: float, v_norm: float, alpha: float, L: float) -> float:
    """C ||u|| ||v|| L^(2 alpha - 1) / (1 - 2 alpha) with C = 1 (scale of the omitted far tail)."""
    if not 0 <= alpha < 0.5:
        raise ValueError("the tail estimate needs 0 <= alpha < 1/2")
    return u_norm * v_norm * L ** (2 * alpha - 1) / (1 - 2 * alpha)


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------


def pressure_force_split(
    u: VectorField2D,
    v: VectorField2D,
    theta: CutoffProfile,
    rule: str = "band_limited",
    gradient: str = "spectral",
    pad: int = 4,
    trusted_radius: float | None = None,
    alpha: float | None = None,
    norms: tuple[float, float] | None = None,
) -> PressureForce:
    """grad(theta E) * (d_j u_k d_k v_j) + grad d_j d_k ((1 - theta) E) * (u_j v_k)."""
    grid = same_grid(u, v)
    n, h = grid.n, grid.h
    near_s, far_s = _split_tables(n, grid.L, float(theta.r0), float(theta.r1), rule, pad)
    du = velocity_gradients(u, gradient)
    dv = velocity_gradients(v, gradient)
    q = sum(du[(j, k)] * dv[(k, j)] for j in (1, 2) for k in (1, 2))
    near1 = hockney(near_s["1"], q, h)
    near2 = hockney(near_s["2"], q, h)
    far1, far2 = _contract(far_s, sym_product(u, v), n, h)
    tr = (trusted_radius if trusted_radius is not None else default_trusted_radius(grid)) - theta.r1
    tb = None
    if alpha is not None and norms is not None:
        tb = tail_bound(norms[0], norms[1], alpha, grid.L)
    prov = {"operator": "split", "theta": [theta.r0, theta.r1], "rule": rule, "gradient": gradient}
    return PressureForce(grid, near1 + far1, near2 + far2, prov, max(tr, 0.0), tb)


def pressure_force_lowpass(
    u: VectorField2D,
    v: VectorField2D,
    chi=DEFAULT_CHI,
    theta: CutoffProfile | None = None,
    pad_high: int = 4,
    gamma_pad: int = 8,
    trusted_radius: float | None = None,
) -> PressureForce:
    """(Id - chi(D)) grad (-Delta)^-1 div div (u (x) v) + Gamma_1 * (u (x) v)."""
    grid = same_grid(u, v)
    n, h = grid.n, grid.h
    theta = theta or make_cutoff(1.0, 2.0)
    F = sym_product(u, v)
    # high frequencies: the symbol vanishes near xi = 0, so its kernel decays fast
    M = pad_high * n
    xi1, xi2 = frequency_mesh(M, h)
    rho2 = xi1 * xi1 + xi2 * xi2
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(rho2 > 0, (1.0 - make_cutoff(*chi)(np.sqrt(rho2))) / np.where(rho2 > 0, rho2, 1.0), 0.0)
    base = -1j * base * nyquist_mask(M)
    Fh = {k: np.fft.rfft2(a, s=(M, M)) for k, a in F.items()}
    hs1 = base * xi1 * (xi1 * xi1 * Fh["11"] + 2 * xi1 * xi2 * Fh["12"] + xi2 * xi2 * Fh["22"])
    hs2 = base * xi2 * (xi1 * xi1 * Fh["11"] + 2 * xi1 * xi2 * Fh["12"] + xi2 * xi2 * Fh["22"])
    high1 = np.fft.irfft2(hs1, s=(M, M))[:n, :n]
    high2 = np.fft.irfft2(hs2, s=(M, M))[:n, :n]
    del Fh, hs1, hs2, base
    G = _gamma_spectra(n, grid.L, tuple(float(c) for c in chi), gamma_pad, float(theta.r0), float(theta.r1))
    low1, low2 = _contract(G, F, n, h)
    tr = trusted_radius if trusted_radius is not None else default_trusted_radius(grid)
    prov = {"operator": "lowpass", "chi": list(chi), "theta": [theta.r0, theta.r1],
            "pad_high": pad_high, "gamma_pad": gamma_pad}
    return PressureForce(grid, high1 + low1, high2 + low2, prov, tr)


def leray_oracle(u: VectorField2D, v: VectorField2D, decay_tol: float = 1e-6, pad: int = 3) -> PressureForce:
    """Full spectral evaluation with the log kernel truncated at the domain diameter."""
    grid = same_grid(u, v)
    F = sym_product(u, v)
    scale = max(float(np.max(np.abs(a))) for a in F.values())
    if scale > 0:
        ring = max(
            float(np.max(np.abs(np.concatenate([a[0], a[-1], a[:, 0], a[:, -1]])))) for a in F.values()
        )
        if ring > decay_tol * scale:
            raise BoundaryDecayError(f"u (x) v is {ring / scale:.2e} of its maximum on the boundary ring")

    def apply(key):
        def sym(xi1, xi2, E):
            return [-1j * xi1 * (xi1 if key[0] == "1" else xi2) * (xi1 if key[1] == "1" else xi2) * E,
                    -1j * xi2 * (xi1 if key[0] == "1" else xi2) * (xi1 if key[1] == "1" else xi2) * E]
        return truncated_spectral_apply(F[key], grid, sym, pad=pad)

    a11, a12, a22 = apply("11"), apply("12"), apply("22")
    f1 = a11[0] + 2.0 * a12[0] + a22[0]
    f2 = a11[1] + 2.0 * a12[1] + a22[1]
    return PressureForce(grid, f1, f2, {"operator": "leray_oracle", "pad": pad}, default_trusted_radius(grid))


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def relative_l2(a: PressureForce, b: PressureForce, radius: float | None = None) -> float:
    r = radius if radius is not None else min(a.trusted_radius, b.trusted_radius)
    m = a.grid.radius() <= r
    num = np.sum((a.f1 - b.f1)[m] ** 2 + (a.f2 - b.f2)[m] ** 2)
    den = np.sum(b.f1[m] ** 2 + b.f2[m] ** 2)
    return float(math.sqrt(num / den)) if den > 0 else float(math.sqrt(num))


def curl_ratio(f: PressureForce, method: str = "fd2") -> float:
    """max |curl f| / max |grad f| over the trusted region.

    ``method`` picks the derivative: "fd2" centred differences (the curl of
    a sampled gradient is then O(h^2), not zero), "fd4", or "spectral".
    """
    d = GRADIENTS[method]
    h = f.grid.h
    m = f.trusted_mask()
    c = d(f.f2, h, 0) - d(f.f1, h, 1)
    g = np.sqrt(sum(d(a, h, ax) ** 2 for a in (f.f1, f.f2) for ax in (0, 1)))
    gm = float(np.max(g[m])) if m.any() else 0.0
    return float(np.max(np.abs(c[m]))) / gm if gm > 0 else 0.0
