"""Hot loops of autoregressive generation.

A row walk starts at sufficient statistics (n0, s0) and repeatedly draws the
next outcome from a dense predictive table p[n, s]. Each generated outcome is
written back into (n, s) before the next draw.

Two backends share one signature: a numba-compiled loop and a numpy version
vectorised across rows. Set ``PSAR_NUMBA=0`` to force numpy; otherwise numba
is used when it imports.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("PSAR_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")
BACKEND = "numba" if USE_NUMBA else "numpy"


def _walk_successes_loop(tables, table_idx, n0, s0, steps, uniforms):
    rows = table_idx.shape[0]
    out = np.zeros(rows, dtype=np.int64)
    for r in range(rows):
        tab = tables[table_idx[r]]
        n = n0[r]
        s = s0[r]
        g = 0
        for j in range(steps[r]):
            if uniforms[r, j] < tab[n, s]:
                s += 1
                g += 1
            n += 1
        out[r] = g
    return out


def _walk_record_loop(tables, table_idx, n0, s0, steps, uniforms):
    rows = table_idx.shape[0]
    out = np.zeros(uniforms.shape, dtype=np.int8)
    for r in range(rows):
        tab = tables[table_idx[r]]
        n = n0[r]
        s = s0[r]
        for j in range(steps[r]):
            if uniforms[r, j] < tab[n, s]:
                out[r, j] = 1
                s += 1
            n += 1
    return out


def _walk_numpy(tables, table_idx, n0, s0, steps, uniforms, record):
    rows = table_idx.shape[0]
    n = n0.astype(np.int64).copy()
    s = s0.astype(np.int64).copy()
    g = np.zeros(rows, dtype=np.int64)
    out = np.zeros(uniforms.shape, dtype=np.int8) if record else None
    max_steps = int(steps.max()) if rows else 0
    for j in range(max_steps):
        active = steps > j
        y = (uniforms[:, j] < tables[table_idx, n, s]) & active
        s += y
        g += y
        n += active
        if record:
            out[:, j] = y
    return out if record else g


def walk_successes_numpy(tables, table_idx, n0, s0, steps, uniforms):
    return _walk_numpy(tables, table_idx, n0, s0, steps, uniforms, record=False)


def walk_record_numpy(tables, table_idx, n0, s0, steps, uniforms):
    return _walk_numpy(tables, table_idx, n0, s0, steps, uniforms, record=True)


if HAVE_NUMBA:
    walk_successes_numba = njit(cache=True)(_walk_successes_loop)
    walk_record_numba = njit(cache=True)(_walk_record_loop)
else:  # pragma: no cover
    walk_successes_numba = None
    walk_record_numba = None


def _prepare(tables, table_idx, n0, s0, steps, uniforms):
    tables = np.ascontiguousarray(tables, dtype=np.float64)
    if tables.ndim == 2:
        tables = tables[None]
    table_idx = np.ascontiguousarray(table_idx, dtype=np.int64)
    n0 = np.ascontiguousarray(n0, dtype=np.int64)
    s0 = np.ascontiguousarray(s0, dtype=np.int64)
    steps = np.ascontiguousarray(steps, dtype=np.int64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if uniforms.ndim != 2 or uniforms.shape[0] != table_idx.shape[0]:
        raise ValueError("uniforms must have one row per walk")
    if steps.size and steps.max() > uniforms.shape[1]:
        raise ValueError("not enough uniforms for the requested steps")
    if steps.size and (n0 + steps).max() - 1 >= tables.shape[1]:
        raise ValueError("predictive table too small for the requested walk")
    return tables, table_idx, n0, s0, steps, uniforms


def walk_successes(tables, table_idx, n0, s0, steps, uniforms):
    """Number of ones generated by each walk.

    ``tables`` is (K, N, N) with ``tables[k, n, s] = P(Y=1 | n, s)``; row ``r``
    uses table ``table_idx[r]``, starts at ``(n0[r], s0[r])`` and takes
    ``steps[r]`` draws using ``uniforms[r, :steps[r]]``.
    """
    args = _prepare(tables, table_idx, n0, s0, steps, uniforms)
    if USE_NUMBA:
        return walk_successes_numba(*args)
    return walk_successes_numpy(*args)


def walk_record(tables, table_idx, n0, s0, steps, uniforms):
    """Like :func:`walk_successes` but returns the (rows, max_steps) outcomes."""
    args = _prepare(tables, table_idx, n0, s0, steps, uniforms)
    if USE_NUMBA:
        return walk_record_numba(*args)
    return walk_record_numpy(*args)
