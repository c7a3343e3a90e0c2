"""Hot space-time kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``WAVEPLATE_DISABLE_NUMBA`` is unset (or ``0``).  Both paths compute
the same quantities; the benchmark in ``benchmarks/bench_kernels.py`` times
them against each other and the test-suite checks they agree.
"""
import os

import numpy as np

_DISABLE = os.environ.get("WAVEPLATE_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLE:
        raise ImportError("numba disabled by WAVEPLATE_DISABLE_NUMBA")
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _pad(p):
    out = np.zeros((p.shape[0] + 2, p.shape[1] + 2), dtype=p.dtype)
    out[1:-1, 1:-1] = p
    return out


def st_operator_numpy(p, ds, hx, a_ss, a_s, a_xx):
    """a_ss*p_ss + a_s*p_s + a_xx*p_xx with zero Dirichlet closure on all sides."""
    P = _pad(p)
    c = P[1:-1, 1:-1]
    p_ss = (P[2:, 1:-1] - 2.0 * c + P[:-2, 1:-1]) / ds**2
    p_s = (P[2:, 1:-1] - P[:-2, 1:-1]) / (2.0 * ds)
    p_xx = (P[1:-1, 2:] - 2.0 * c + P[1:-1, :-2]) / hx**2
    return a_ss * p_ss + a_s * p_s + a_xx * p_xx


def node_gradients_numpy(p, ds, hx):
    """Squared edge differences averaged onto nodes: (|p_s|^2, |p_x|^2)."""
    P = _pad(p)
    es = np.abs(np.diff(P[:, 1:-1], axis=0)) ** 2 / ds**2  # (m+1, n)
    ex = np.abs(np.diff(P[1:-1, :], axis=1)) ** 2 / hx**2  # (m, n+1)
    gs = 0.5 * (es[1:, :] + es[:-1, :])
    gx = 0.5 * (ex[:, 1:] + ex[:, :-1])
    return gs, gx


def weighted_sum_numpy(logw, shift, integrand):
    return float(np.sum(np.exp(logw - shift) * integrand))


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _st_operator_nb(p, ds, hx, a_ss, a_s, a_xx):
        m, n = p.shape
        out = np.empty_like(p)
        zero = p[0, 0] * 0.0
        for j in range(m):
            for i in range(n):
                c = p[j, i]
                up = p[j + 1, i] if j + 1 < m else zero
                dn = p[j - 1, i] if j > 0 else zero
                rt = p[j, i + 1] if i + 1 < n else zero
                lt = p[j, i - 1] if i > 0 else zero
                out[j, i] = (a_ss * (up - 2.0 * c + dn) / (ds * ds)
                             + a_s * (up - dn) / (2.0 * ds)
                             + a_xx * (rt - 2.0 * c + lt) / (hx * hx))
        return out

    @numba.njit(cache=True, inline="always")
    def _abs2(z):
        return z.real * z.real + z.imag * z.imag

    @numba.njit(cache=True)
    def _node_gradients_nb(p, ds, hx):
        m, n = p.shape
        gs = np.empty((m, n))
        gx = np.empty((m, n))
        zero = p[0, 0] * 0.0
        for j in range(m):
            for i in range(n):
                c = p[j, i]
                up = p[j + 1, i] if j + 1 < m else zero
                dn = p[j - 1, i] if j > 0 else zero
                rt = p[j, i + 1] if i + 1 < n else zero
                lt = p[j, i - 1] if i > 0 else zero
                gs[j, i] = 0.5 * (_abs2(up - c) + _abs2(c - dn)) / (ds * ds)
                gx[j, i] = 0.5 * (_abs2(rt - c) + _abs2(c - lt)) / (hx * hx)
        return gs, gx

    # reassociating the reduction lets LLVM vectorise it; the result differs
    # from the sequential sum only at rounding level
    @numba.njit(cache=True, fastmath={"reassoc", "nsz", "arcp", "contract"})
    def _weighted_sum_nb(logw, shift, integrand):
        acc = 0.0
        m, n = logw.shape
        for j in range(m):
            for i in range(n):
                acc += np.exp(logw[j, i] - shift) * integrand[j, i]
        return acc


def st_operator(p, ds, hx, a_ss=0.0, a_s=0.0, a_xx=0.0, backend=None):
    """Apply ``a_ss d_ss + a_s d_s + a_xx d_xx`` to a space-time field.

    ``p`` has shape ``(m, n)`` (s index first) and holds interior samples;
    boundary values are zero.
    """
    if _use_numba(backend):
        p = np.ascontiguousarray(p, dtype=np.complex128)
        return _st_operator_nb(p, float(ds), float(hx), complex(a_ss), complex(a_s), complex(a_xx))
    return st_operator_numpy(p, ds, hx, a_ss, a_s, a_xx)


def node_gradients(p, ds, hx, backend=None):
    if _use_numba(backend):
        p = np.ascontiguousarray(p, dtype=np.complex128)
        return _node_gradients_nb(p, float(ds), float(hx))
    return node_gradients_numpy(p, ds, hx)


def weighted_sum(logw, shift, integrand, backend=None):
    """Sum of ``exp(logw - shift) * integrand`` (real arrays of equal shape).

    The default backend is numpy here: its vectorised ``exp`` beats the
    compiled loop (see the benchmark), so numba runs only when asked for.
    """
    if backend is not None and _use_numba(backend):
        return float(_weighted_sum_nb(np.ascontiguousarray(logw, dtype=np.float64), float(shift),
                                      np.ascontiguousarray(integrand, dtype=np.float64)))
    return weighted_sum_numpy(logw, shift, integrand)


def _use_numba(backend):
    if backend is None:
        return HAVE_NUMBA
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")
