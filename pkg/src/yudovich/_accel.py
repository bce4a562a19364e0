"""Hot loops with a numba implementation and a pure-numpy fallback.

Set ``YUD_DISABLE_NUMBA=1`` in the environment (before import) to force the
numpy path.  Both paths compute the same quantities; the tests run them
against each other.
"""
from __future__ import annotations

import os

import numpy as np

DISABLED = os.environ.get("YUD_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if DISABLED:
        raise ImportError("numba disabled by YUD_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised through the env flag
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

# interpolation modes
BILINEAR, CUBIC, CUBIC_CLIPPED = 0, 1, 2
MODES = {"bilinear": BILINEAR, "bicubic": CUBIC, "bicubic_clipped": CUBIC_CLIPPED}


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------


def _lagrange_weights(t):
    tm1, tm2, tp1 = t - 1.0, t - 2.0, t + 1.0
    return (
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    )


def _interp_numpy(f, p, q, mode):
    n0, n1 = f.shape
    p = np.clip(p, 0.0, n0 - 1.0)
    q = np.clip(q, 0.0, n1 - 1.0)
    i0 = np.minimum(np.floor(p).astype(np.int64), n0 - 2)
    j0 = np.minimum(np.floor(q).astype(np.int64), n1 - 2)
    s = p - i0
    t = q - j0
    f00 = f[i0, j0]
    f10 = f[i0 + 1, j0]
    f01 = f[i0, j0 + 1]
    f11 = f[i0 + 1, j0 + 1]
    if mode == BILINEAR:
        return (1 - s) * ((1 - t) * f00 + t * f01) + s * ((1 - t) * f10 + t * f11)
    ws = _lagrange_weights(s)
    wt = _lagrange_weights(t)
    out = np.zeros_like(p)
    for a in range(4):
        ii = np.clip(i0 + a - 1, 0, n0 - 1)
        row = np.zeros_like(p)
        for b in range(4):
            jj = np.clip(j0 + b - 1, 0, n1 - 1)
            row += wt[b] * f[ii, jj]
        out += ws[a] * row
    if mode == CUBIC_CLIPPED:
        lo = np.minimum(np.minimum(f00, f10), np.minimum(f01, f11))
        hi = np.maximum(np.maximum(f00, f10), np.maximum(f01, f11))
        out = np.minimum(np.maximum(out, lo), hi)
    return out


def _partial_sum_numpy(ti, tj, counts, si, sj, G, F, n):
    """sum over the first counts[k] sources of G(t_k - s) F(s), per target."""
    out = np.zeros((2, ti.size))
    for k in range(ti.size):
        c = counts[k]
        if c == 0:
            continue
        di = ti[k] - si[:c] + n
        dj = tj[k] - sj[:c] + n
        g0, g1, g2, g3 = (G[m][di, dj] for m in range(4))
        f11, f12, f22 = F[0, :c], F[1, :c], F[2, :c]
        out[0, k] = np.sum(g0 * f11 + 2.0 * g1 * f12 + g2 * f22)
        out[1, k] = np.sum(g1 * f11 + 2.0 * g2 * f12 + g3 * f22)
    return out


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _lw(t):
        tm1 = t - 1.0
        tm2 = t - 2.0
        tp1 = t + 1.0
        return (-t * tm1 * tm2 / 6.0, tp1 * tm1 * tm2 / 2.0, -tp1 * t * tm2 / 2.0, tp1 * t * tm1 / 6.0)

    @njit(cache=True)
    def _interp_numba(f, p, q, mode):
        n0, n1 = f.shape
        out = np.empty(p.shape)
        pf = p.ravel()
        qf = q.ravel()
        of = out.ravel()
        for k in range(pf.size):
            pp = min(max(pf[k], 0.0), n0 - 1.0)
            qq = min(max(qf[k], 0.0), n1 - 1.0)
            i0 = min(int(np.floor(pp)), n0 - 2)
            j0 = min(int(np.floor(qq)), n1 - 2)
            s = pp - i0
            t = qq - j0
            f00 = f[i0, j0]
            f10 = f[i0 + 1, j0]
            f01 = f[i0, j0 + 1]
            f11 = f[i0 + 1, j0 + 1]
            if mode == 0:
                of[k] = (1 - s) * ((1 - t) * f00 + t * f01) + s * ((1 - t) * f10 + t * f11)
                continue
            ws = _lw(s)
            wt = _lw(t)
            acc = 0.0
            for a in range(4):
                ii = min(max(i0 + a - 1, 0), n0 - 1)
                row = 0.0
                for b in range(4):
                    jj = min(max(j0 + b - 1, 0), n1 - 1)
                    row += wt[b] * f[ii, jj]
                acc += ws[a] * row
            if mode == 2:
                lo = min(min(f00, f10), min(f01, f11))
                hi = max(max(f00, f10), max(f01, f11))
                acc = min(max(acc, lo), hi)
            of[k] = acc
        return out

    @njit(cache=True)
    def _partial_sum_numba(ti, tj, counts, si, sj, G, F, n):
        m = ti.size
        out = np.zeros((2, m))
        for k in range(m):
            s0 = 0.0
            s1 = 0.0
            for q in range(counts[k]):
                di = ti[k] - si[q] + n
                dj = tj[k] - sj[q] + n
                f11 = F[0, q]
                f12 = F[1, q]
                f22 = F[2, q]
                g1 = G[1, di, dj]
                g2 = G[2, di, dj]
                s0 += G[0, di, dj] * f11 + 2.0 * g1 * f12 + g2 * f22
                s1 += g1 * f11 + 2.0 * g2 * f12 + G[3, di, dj] * f22
            out[0, k] = s0
            out[1, k] = s1
        return out


# --------------------------------------------------------------------------
# public dispatch
# --------------------------------------------------------------------------


def interpolate(f: np.ndarray, p: np.ndarray, q: np.ndarray, mode: str = "bicubic_clipped") -> np.ndarray:
    """Interpolate samples ``f`` at fractional index positions ``(p, q)``.

    Positions are clamped to the sample range.  ``bicubic_clipped`` limits the
    tensor cubic Lagrange value to the range of the four surrounding samples,
    so the result never leaves [min f, max f].
    """
    code = MODES[mode]
    f = np.ascontiguousarray(f, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    if HAVE_NUMBA:
        return _interp_numba(f, p, q, code)
    return _interp_numpy(f, p, q, code)


def partial_convolution(ti, tj, counts, si, sj, G, F) -> np.ndarray:
    """Direct sums over a prefix of a source list, one prefix length per target.

    Targets are grid indices ``(ti, tj)``; sources are grid indices
    ``(si, sj)`` with tensor values ``F`` (rows F11, F12, F22).  Target k
    receives sum_{q < counts[k]} G(t_k - s_q) : F(s_q), where ``G`` holds the
    four distinct components of a symmetric third-order kernel on the offset
    lattice (offset ``m h`` stored at index ``m + n``).  Sorting the sources
    by radius turns "all y with |y| < c |x|" into such a prefix.
    """
    n = (np.asarray(G).shape[1]) // 2
    ti = np.ascontiguousarray(ti, dtype=np.int64)
    tj = np.ascontiguousarray(tj, dtype=np.int64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    si = np.ascontiguousarray(si, dtype=np.int64)
    sj = np.ascontiguousarray(sj, dtype=np.int64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    F = np.ascontiguousarray(F, dtype=np.float64)
    if counts.size and counts.max() > si.size:
        raise ValueError("prefix length exceeds the source list")
    if HAVE_NUMBA:
        return _partial_sum_numba(ti, tj, counts, si, sj, G, F, n)
    return _partial_sum_numpy(ti, tj, counts, si, sj, G, F, n)
