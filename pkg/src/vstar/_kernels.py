"""Hot loops with a numba path and a pure-numpy fallback.

Set ``VSTAR_NO_NUMBA=1`` to force the numpy implementations. Both paths are
always importable so the benchmark can compare them side by side.
"""
from __future__ import annotations

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

# the bundled TBB is too old on common installs; workqueue is always available
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


def _env_disabled() -> bool:
    return os.environ.get("VSTAR_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def thread_cap() -> int:
    """Worker cap from VSTAR_THREADS (defaults to the CPU count)."""
    raw = os.environ.get("VSTAR_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer VSTAR_THREADS=%r", raw)
    return max(1, os.cpu_count() or 1)


if HAVE_NUMBA and USE_NUMBA:
    try:
        numba.set_num_threads(min(thread_cap(), numba.config.NUMBA_NUM_THREADS))
    except Exception:  # pragma: no cover
        pass


# --- stencil application ---------------------------------------------------
# out[r, i] = sum_k w[i, k] * f[r, idx[i, k]]

def stencil_apply_numpy(idx: np.ndarray, w: np.ndarray, f: np.ndarray) -> np.ndarray:
    return np.einsum("ik,rik->ri", w, f[:, idx])


@njit(cache=True)
def _stencil_apply_nb(idx, w, f):
    m, n = f.shape[0], idx.shape[0]
    k = idx.shape[1]
    out = np.empty((m, n))
    for r in range(m):
        for i in range(n):
            s = 0.0
            for j in range(k):
                s += w[i, j] * f[r, idx[i, j]]
            out[r, i] = s
    return out


def stencil_apply_numba(idx, w, f):
    return _stencil_apply_nb(idx, w, np.ascontiguousarray(f, dtype=np.float64))


# --- Gagliardo double sum --------------------------------------------------
# sum_{i != j} c_i c_j (F_i - F_j)^2 / |x_i - x_j|^(1 + 2 theta)

def gagliardo_sum_numpy(x, c, F, theta):
    dx = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dx, 1.0)
    dF = F[:, None] - F[None, :]
    K = dF * dF / dx ** (1.0 + 2.0 * theta)
    np.fill_diagonal(K, 0.0)
    return float(c @ K @ c)


@njit(cache=True, parallel=True)
def _gagliardo_sum_nb(x, c, F, theta):
    n = x.shape[0]
    p = 1.0 + 2.0 * theta
    rows = np.zeros(n)
    for i in prange(n):
        s = 0.0
        for j in range(n):
            if j != i:
                d = F[i] - F[j]
                s += c[j] * d * d / abs(x[i] - x[j]) ** p
        rows[i] = c[i] * s
    return rows.sum()


def gagliardo_sum_numba(x, c, F, theta):
    return float(_gagliardo_sum_nb(np.ascontiguousarray(x, dtype=np.float64),
                                   np.ascontiguousarray(c, dtype=np.float64),
                                   np.ascontiguousarray(F, dtype=np.float64), float(theta)))


if USE_NUMBA:
    stencil_apply = stencil_apply_numba
    gagliardo_sum = gagliardo_sum_numba
else:
    stencil_apply = stencil_apply_numpy
    gagliardo_sum = gagliardo_sum_numpy


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
