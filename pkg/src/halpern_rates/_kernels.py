"""Hot inner loops, in two interchangeable implementations.

The numba path compiles scalar loops with ``@njit``. The numpy path keeps the
same serial structure but does per-step vector work with numpy; it is the
fallback when numba is unavailable or ``HALPERN_RATES_BACKEND=numpy`` is set.

Both paths share one calling convention so callers never branch on backend.
Operators reach the kernels as a flat "program": ``codes[s]`` names the
stage kind and ``offs[s]`` points into ``params`` where its data starts.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

STAGE_IDENTITY = 0
STAGE_AFFINE = 1  # params: A (d*d, row-major), b (d)
STAGE_BALL = 2  # params: center (d), radius
STAGE_BOX = 3  # params: lo (d), hi (d)
STAGE_HALFSPACE = 4  # params: a (d), b, |a|^2

NORM_EUCLIDEAN = 0
NORM_MAX = 1
NORM_SUM = 2

MODE_HALPERN = 0
MODE_KM = 1


def _select_backend() -> str:
    wanted = os.environ.get("HALPERN_RATES_BACKEND", "").strip().lower()
    if wanted not in ("", "numba", "numpy"):
        raise ImportError(f"HALPERN_RATES_BACKEND must be 'numba' or 'numpy', got {wanted!r}")
    if wanted == "numpy" or numba is None:
        return "numpy"
    return "numba"


HAVE_NUMBA = numba is not None
BACKEND = _select_backend()


# --------------------------------------------------------------------------
# scalar loops (compiled by numba)
# --------------------------------------------------------------------------

def _norm_loop(v, norm_code):
    acc = 0.0
    if norm_code == 0:
        for i in range(v.shape[0]):
            acc += v[i] * v[i]
        return math.sqrt(acc)
    if norm_code == 1:
        for i in range(v.shape[0]):
            a = abs(v[i])
            if a > acc:
                acc = a
        return acc
    for i in range(v.shape[0]):
        acc += abs(v[i])
    return acc


def _dist_loop(u, v, work, norm_code):
    for i in range(u.shape[0]):
        work[i] = u[i] - v[i]
    return _norm_loop(work, norm_code)


def _apply_program_loop(x, out, tmp, codes, offs, params):
    d = x.shape[0]
    for i in range(d):
        out[i] = x[i]
    for s in range(codes.shape[0]):
        c = codes[s]
        p = offs[s]
        if c == 1:
            for i in range(d):
                tmp[i] = out[i]
            for i in range(d):
                acc = 0.0
                row = p + i * d
                for j in range(d):
                    acc += params[row + j] * tmp[j]
                out[i] = acc + params[p + d * d + i]
        elif c == 2:
            r = params[p + d]
            acc = 0.0
            for i in range(d):
                t = out[i] - params[p + i]
                acc += t * t
            nrm = math.sqrt(acc)
            if nrm > r:
                scale = r / nrm
                for i in range(d):
                    out[i] = params[p + i] + (out[i] - params[p + i]) * scale
        elif c == 3:
            for i in range(d):
                lo = params[p + i]
                hi = params[p + d + i]
                if out[i] < lo:
                    out[i] = lo
                elif out[i] > hi:
                    out[i] = hi
        elif c == 4:
            viol = -params[p + d]
            for i in range(d):
                viol += params[p + i] * out[i]
            if viol > 0.0:
                coef = viol / params[p + d + 1]
                for i in range(d):
                    out[i] -= coef * params[p + i]


def _prefix_sums_loop(values):
    # Neumaier-compensated running sums; out[k] = sum(values[:k])
    n = values.shape[0]
    out = np.empty(n + 1)
    out[0] = 0.0
    s = 0.0
    comp = 0.0
    for i in range(n):
        v = values[i]
        t = s + v
        if abs(s) >= abs(v):
            comp += (s - t) + v
        else:
            comp += (v - t) + s
        s = t
        out[i + 1] = s + comp
    return out


def _recurrence_loop(lam_next, b, a1):
    # a[0] = a_1; a[k] = (1 - lam_next[k-1]) * a[k-1] + b[k-1]
    n = lam_next.shape[0] + 1
    a = np.empty(n)
    a[0] = a1
    for k in range(1, n):
        a[k] = (1.0 - lam_next[k - 1]) * a[k - 1] + b[k - 1]
    return a


def _iterate_chunk_loop(anchor, x, lam, codes, offs, params, norm_code, mode,
                        residual, norm_x, norm_tx, anchor_gap, next_gap, iterates):
    """Advance ``x`` by ``lam.shape[0]`` steps in place.

    Step k records r, |x|, |Tx|, |anchor - Tx| for the current iterate and
    |x_next - x|. Returns the first step whose new iterate is non-finite,
    or -1.
    """
    d = x.shape[0]
    tx = np.empty(d)
    tmp = np.empty(d)
    work = np.empty(d)
    xn = np.empty(d)
    n_store = iterates.shape[0]
    for k in range(lam.shape[0]):
        if k < n_store:
            for i in range(d):
                iterates[k, i] = x[i]
        _apply_program_loop(x, tx, tmp, codes, offs, params)
        residual[k] = _dist_loop(x, tx, work, norm_code)
        norm_x[k] = _norm_loop(x, norm_code)
        norm_tx[k] = _norm_loop(tx, norm_code)
        anchor_gap[k] = _dist_loop(anchor, tx, work, norm_code)
        w = lam[k]
        finite = True
        if mode == 0:
            for i in range(d):
                xn[i] = w * anchor[i] + (1.0 - w) * tx[i]
        else:
            for i in range(d):
                xn[i] = (1.0 - w) * x[i] + w * tx[i]
        for i in range(d):
            if not math.isfinite(xn[i]):
                finite = False
        next_gap[k] = _dist_loop(xn, x, work, norm_code)
        for i in range(d):
            x[i] = xn[i]
        if not finite:
            return k
    return -1


if BACKEND == "numba":
    _jit = numba.njit(cache=True, nogil=True)
    _norm_loop = _jit(_norm_loop)
    _dist_loop = _jit(_dist_loop)
    _apply_program_loop = _jit(_apply_program_loop)
    _prefix_sums_loop = _jit(_prefix_sums_loop)
    _recurrence_loop = _jit(_recurrence_loop)
    _iterate_chunk_loop = _jit(_iterate_chunk_loop)


# --------------------------------------------------------------------------
# numpy reference path
# --------------------------------------------------------------------------

def _norm_np(v, norm_code):
    if norm_code == NORM_EUCLIDEAN:
        return float(np.sqrt(np.dot(v, v)))
    if norm_code == NORM_MAX:
        return float(np.max(np.abs(v))) if v.size else 0.0
    return float(np.sum(np.abs(v)))


def _apply_program_np(x, codes, offs, params):
    d = x.shape[0]
    out = x.copy()
    for c, p in zip(codes.tolist(), offs.tolist()):
        if c == STAGE_AFFINE:
            A = params[p:p + d * d].reshape(d, d)
            out = A @ out + params[p + d * d:p + d * d + d]
        elif c == STAGE_BALL:
            center = params[p:p + d]
            r = params[p + d]
            diff = out - center
            nrm = np.sqrt(np.dot(diff, diff))
            if nrm > r:
                out = center + diff * (r / nrm)
        elif c == STAGE_BOX:
            out = np.clip(out, params[p:p + d], params[p + d:p + 2 * d])
        elif c == STAGE_HALFSPACE:
            a = params[p:p + d]
            viol = np.dot(a, out) - params[p + d]
            if viol > 0.0:
                out = out - (viol / params[p + d + 1]) * a
    return out


def _apply_program_batch_np(X, codes, offs, params):
    """Apply a program to every row of ``X`` at once."""
    d = X.shape[1]
    out = np.array(X, dtype=float, copy=True)
    for c, p in zip(codes.tolist(), offs.tolist()):
        if c == STAGE_AFFINE:
            A = params[p:p + d * d].reshape(d, d)
            out = out @ A.T + params[p + d * d:p + d * d + d]
        elif c == STAGE_BALL:
            center = params[p:p + d]
            r = params[p + d]
            diff = out - center
            nrm = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            scale = np.where(nrm > r, r / np.where(nrm > 0, nrm, 1.0), 1.0)
            out = center + diff * scale[:, None]
        elif c == STAGE_BOX:
            out = np.clip(out, params[p:p + d], params[p + d:p + 2 * d])
        elif c == STAGE_HALFSPACE:
            a = params[p:p + d]
            viol = out @ a - params[p + d]
            coef = np.where(viol > 0.0, viol / params[p + d + 1], 0.0)
            out = out - coef[:, None] * a
    return out


def _prefix_sums_np(values):
    out = np.empty(values.shape[0] + 1)
    out[0] = 0.0
    s = 0.0
    comp = 0.0
    for i, v in enumerate(values.tolist(), start=1):
        t = s + v
        if abs(s) >= abs(v):
            comp += (s - t) + v
        else:
            comp += (v - t) + s
        s = t
        out[i] = s + comp
    return out


def _recurrence_np(lam_next, b, a1):
    keep = (1.0 - lam_next).tolist()
    add = b.tolist()
    a = [float(a1)]
    for k in range(len(keep)):
        a.append(keep[k] * a[-1] + add[k])
    return np.asarray(a)


def _iterate_chunk_np(anchor, x, lam, codes, offs, params, norm_code, mode,
                      residual, norm_x, norm_tx, anchor_gap, next_gap, iterates):
    n_store = iterates.shape[0]
    cur = x.copy()
    for k, w in enumerate(lam.tolist()):
        if k < n_store:
            iterates[k] = cur
        tx = _apply_program_np(cur, codes, offs, params)
        residual[k] = _norm_np(cur - tx, norm_code)
        norm_x[k] = _norm_np(cur, norm_code)
        norm_tx[k] = _norm_np(tx, norm_code)
        anchor_gap[k] = _norm_np(anchor - tx, norm_code)
        if mode == MODE_HALPERN:
            nxt = w * anchor + (1.0 - w) * tx
        else:
            nxt = (1.0 - w) * cur + w * tx
        next_gap[k] = _norm_np(nxt - cur, norm_code)
        cur = nxt
        if not np.all(np.isfinite(cur)):
            x[:] = cur
            return k
    x[:] = cur
    return -1


# --------------------------------------------------------------------------
# public dispatch
# --------------------------------------------------------------------------

def _impls(backend):
    if backend == "numba":
        if numba is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _prefix_sums_loop, _recurrence_loop, _iterate_chunk_loop
    return _prefix_sums_np, _recurrence_np, _iterate_chunk_np


def prefix_sums(values, backend=None):
    """Compensated running sums: ``out[k] == sum(values[:k])`` to ~1 ulp."""
    fn = _impls(backend or BACKEND)[0]
    return fn(np.ascontiguousarray(values, dtype=np.float64))


def recurrence(lam_next, b, a1, backend=None):
    """Equality recurrence ``a[k] = (1 - lam_next[k-1]) a[k-1] + b[k-1]``."""
    fn = _impls(backend or BACKEND)[1]
    return fn(np.ascontiguousarray(lam_next, dtype=np.float64),
              np.ascontiguousarray(b, dtype=np.float64), float(a1))


def iterate_chunk(anchor, x, lam, program, norm_code, mode, n_store=0, backend=None):
    """Run ``len(lam)`` steps from ``x`` (modified in place).

    Returns ``(scalars, iterates, bad)`` where ``scalars`` maps
    ``residual, norm_x, norm_tx, anchor_gap, next_gap`` to arrays indexed
    by step, ``iterates`` holds the first ``n_store`` iterates and ``bad``
    is the first step producing a non-finite iterate (or -1).
    """
    fn = _impls(backend or BACKEND)[2]
    codes, offs, params = program
    n = lam.shape[0]
    d = x.shape[0]
    scalars = {k: np.empty(n) for k in ("residual", "norm_x", "norm_tx", "anchor_gap", "next_gap")}
    iterates = np.empty((min(n_store, n), d))
    bad = fn(anchor, x, np.ascontiguousarray(lam, dtype=np.float64), codes, offs, params,
             int(norm_code), int(mode), scalars["residual"], scalars["norm_x"],
             scalars["norm_tx"], scalars["anchor_gap"], scalars["next_gap"], iterates)
    return scalars, iterates, int(bad)


def apply_program(x, program):
    """Apply an operator program to one point (numpy path; not hot)."""
    codes, offs, params = program
    return _apply_program_np(np.asarray(x, dtype=float), codes, offs, params)


def apply_program_batch(X, program):
    codes, offs, params = program
    return _apply_program_batch_np(np.atleast_2d(np.asarray(X, dtype=float)), codes, offs, params)
