"""Halpern and Krasnoselski-Mann iterations with residual tracking.

Halpern:  x_0 = x,  x_{n+1} = lambda_{n+1} x + (1 - lambda_{n+1}) T x_n.
KM:       x_0 = x,  x_{n+1} = (1 - mu_n) x_n + mu_n T x_n,
with the KM weights ``mu_n`` (indexed from 0) read from the schedule as
``mu_n = lambda_{n+1}``.

Each step applies T exactly once; the same ``T x_n`` feeds the residual
``r_n = ||x_n - T x_n||`` and the update. Long runs are produced as a stream
of :class:`Chunk` objects so horizons of 10^7+ steps never hold more than
one chunk of scalars in memory.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import NumericBlowupError, PreconditionError
from .exact import ceil_fraction, to_fraction
from .moduli import Schedule
from .operators import NonexpansiveOp, norm_of
from .report import VerificationReport

__all__ = [
    "Chunk",
    "Trajectory",
    "iterate_stream",
    "halpern_run",
    "km_run",
    "halpern_step",
    "first_crossing",
    "estimate_M",
    "check_halpern_inequalities",
    "InequalityChecker",
    "ResidualTracker",
    "write_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("n", "lambda_n", "residual", "step_gap", "norm_x")
DEFAULT_CHUNK = 1 << 18
MODES = {"halpern": _kernels.MODE_HALPERN, "km": _kernels.MODE_KM}


@dataclass
class Chunk:
    """Per-step scalars for n in [start, start + len).

    ``lam_next[k]`` is the weight used to go from x_n to x_{n+1}
    (lambda_{n+1} for Halpern), ``next_gap[k] = ||x_{n+1} - x_n||``.
    """

    start: int
    lam_next: np.ndarray
    residual: np.ndarray
    norm_x: np.ndarray
    norm_tx: np.ndarray
    anchor_gap: np.ndarray
    next_gap: np.ndarray
    iterates: np.ndarray
    x_after: np.ndarray

    def __len__(self) -> int:
        return self.residual.shape[0]

    @property
    def stop(self) -> int:
        return self.start + len(self)


def iterate_stream(op: NonexpansiveOp, x, schedule: Schedule, horizon: int,
                   mode: str = "halpern", chunk_size: int = DEFAULT_CHUNK,
                   memory_cap: int = 0, backend: Optional[str] = None) -> Iterator[Chunk]:
    """Yield chunks covering n = 0..horizon.

    Iterates x_n with n < ``memory_cap`` are stored in the chunks; beyond
    that only scalars are produced.
    """
    if mode not in MODES:
        raise PreconditionError(f"mode must be one of {sorted(MODES)}, got {mode!r}")
    horizon = int(horizon)
    if horizon < 1:
        raise PreconditionError(f"horizon must be >= 1, got {horizon}")
    anchor = np.array(op._check(x), dtype=np.float64)
    if not np.all(np.isfinite(anchor)):
        raise NumericBlowupError("starting point has non-finite entries")
    state = anchor.copy()
    total = horizon + 1
    n0 = 0
    while n0 < total:
        n1 = min(total, n0 + chunk_size)
        lam = schedule.lam_array(n0 + 1, n1 + 1)
        n_store = max(0, min(memory_cap, n1) - n0)
        scalars, iterates, bad = _kernels.iterate_chunk(
            anchor, state, lam, op.program, op.norm.code, MODES[mode], n_store, backend)
        if bad >= 0:
            raise NumericBlowupError(
                f"non-finite iterate x_{n0 + bad + 1} from {op.label}; "
                "the operator or its declared domain is invalid")
        yield Chunk(n0, lam, scalars["residual"], scalars["norm_x"], scalars["norm_tx"],
                    scalars["anchor_gap"], scalars["next_gap"], iterates, state.copy())
        n0 = n1


@dataclass
class Trajectory:
    """A recorded run x_0..x_N.

    ``lambdas[n]`` is the weight that produced x_n and ``step_gaps[n]`` is
    ``||x_n - x_{n-1}||``; both are NaN at n = 0. ``iterates`` holds x_0 up
    to the memory cap; ``x_next`` is x_{N+1}.
    """

    anchor: np.ndarray
    iterates: np.ndarray
    residuals: np.ndarray
    step_gaps: np.ndarray
    lambdas: np.ndarray
    norm_x: np.ndarray
    norm_tx: np.ndarray
    anchor_gap: np.ndarray
    last_gap: float
    x_next: np.ndarray
    horizon: int
    mode: str
    schedule_id: str
    operator_id: str
    op: NonexpansiveOp = field(repr=False)
    certified_radius: Optional[float] = None

    @property
    def complete(self) -> bool:
        """True when every iterate x_0..x_N is stored."""
        return self.iterates.shape[0] == self.horizon + 1

    @property
    def next_gaps(self) -> np.ndarray:
        """``||x_{n+1} - x_n||`` for n = 0..N."""
        return np.append(self.step_gaps[1:], self.last_gap)

    @property
    def lam_next(self) -> np.ndarray:
        return np.append(self.lambdas[1:], np.nan)


def _collect(chunks: Iterable[Chunk], op, anchor, horizon, mode, schedule, radius) -> Trajectory:
    parts = list(chunks)
    cat = lambda name: np.concatenate([getattr(c, name) for c in parts])
    next_gap = cat("next_gap")
    lam_next = cat("lam_next")
    d = op.dim
    iterates = np.concatenate([c.iterates for c in parts]) if parts else np.empty((0, d))
    return Trajectory(
        anchor=np.array(anchor, dtype=float),
        iterates=iterates,
        residuals=cat("residual"),
        step_gaps=np.concatenate([[np.nan], next_gap[:-1]]),
        lambdas=np.concatenate([[np.nan], lam_next[:-1]]),
        norm_x=cat("norm_x"),
        norm_tx=cat("norm_tx"),
        anchor_gap=cat("anchor_gap"),
        last_gap=float(next_gap[-1]),
        x_next=parts[-1].x_after,
        horizon=horizon,
        mode=mode,
        schedule_id=schedule.name,
        operator_id=op.label,
        op=op,
        certified_radius=radius,
    )


def _run(mode, op, x, schedule, horizon, memory_cap, backend, chunk_size):
    if memory_cap is None:
        memory_cap = horizon + 1
    stream = iterate_stream(op, x, schedule, horizon, mode, chunk_size, memory_cap, backend)
    return _collect(stream, op, x, int(horizon), mode, schedule, op.invariant_radius(x))


def halpern_run(op: NonexpansiveOp, x, schedule: Schedule, horizon: int,
                memory_cap: Optional[int] = None, backend: Optional[str] = None,
                chunk_size: int = DEFAULT_CHUNK) -> Trajectory:
    """Run the Halpern iteration anchored at ``x`` up to x_horizon.

    Scalars are kept for every step; iterates up to ``memory_cap`` (all of
    them by default). For very long horizons use :func:`iterate_stream`.
    """
    return _run("halpern", op, x, schedule, horizon, memory_cap, backend, chunk_size)


def km_run(op: NonexpansiveOp, x, schedule: Schedule, horizon: int,
           memory_cap: Optional[int] = None, backend: Optional[str] = None,
           chunk_size: int = DEFAULT_CHUNK) -> Trajectory:
    return _run("km", op, x, schedule, horizon, memory_cap, backend, chunk_size)


def halpern_step(op: NonexpansiveOp, anchor, x, lam: float, mode: str = "halpern",
                 backend: Optional[str] = None) -> np.ndarray:
    """One step of the recursion through the same kernel the runs use."""
    state = np.array(x, dtype=np.float64)
    _kernels.iterate_chunk(np.asarray(anchor, dtype=np.float64), state,
                           np.array([lam], dtype=np.float64), op.program, op.norm.code,
                           MODES[mode], 0, backend)
    return state


def first_crossing(traj: Trajectory, eps: float) -> Optional[int]:
    """Least n <= N with r_n < eps, or None."""
    hits = np.nonzero(traj.residuals < eps)[0]
    return int(hits[0]) if hits.size else None


def _ceil_positive(value: float) -> int:
    return max(1, ceil_fraction(to_fraction(float(value))))


def estimate_M(traj: Trajectory, with_source: bool = False):
    """An integer M >= ||x_n|| + ||x|| + ||Tx|| for all n.

    With a bounded invariant ball of radius R holding the anchor this is the
    a-priori ``ceil(3R)``. Otherwise it is the observed supremum over the
    recorded run, which certifies nothing beyond the horizon.
    """
    if traj.certified_radius is not None:
        M, source = _ceil_positive(3 * traj.certified_radius), "certified"
    else:
        sup = float(np.max(traj.norm_x)) + traj.norm_x[0] + traj.norm_tx[0]
        M, source = _ceil_positive(sup), "empirical"
    return (M, source) if with_source else M


class InequalityChecker:
    """Streaming check of the five step inequalities of a Halpern run.

    For n >= 1, with x the anchor and lambda the schedule:

    1. ||T x_n|| <= ||x_n|| + ||x|| + ||T x||
    2. ||T x_n - x_n|| <= ||x_{n+1} - x_n|| + lambda_{n+1} ||x - T x_n||
    3. ||x_{n+1} - x_n|| <= (1 - lambda_{n+1}) ||x_n - x_{n-1}||
                             + |lambda_{n+1} - lambda_n| ||x - T x_{n-1}||
    4. ||T x_n - x_n|| <= ||x_{n+1} - x_n|| + 2M lambda_{n+1}
    5. ||x_{n+1} - x_n|| <= (1 - lambda_{n+1}) ||x_n - x_{n-1}|| + 2M |lambda_{n+1} - lambda_n|

    Each comparison allows slack ``tol * (1 + rhs)``.
    """

    NAMES = ("norm_Tx_bound", "residual_split", "gap_recursion",
             "residual_split_M", "gap_recursion_M")

    def __init__(self, M: int, tol: float = 1e-9):
        self.M = M
        self.tol = tol
        self._head = None  # (||x||, ||Tx||)
        self._prev = None  # (lam_next, next_gap, anchor_gap) at the previous n
        self.counts = {k: 0 for k in self.NAMES}
        self.first = {k: None for k in self.NAMES}
        self.worst = {k: 0.0 for k in self.NAMES}
        self.n_checked = 0

    def _record(self, name, lhs, rhs, n_index):
        excess = lhs - rhs - self.tol * (1.0 + np.abs(rhs))
        bad = np.nonzero(excess > 0)[0]
        if bad.size:
            self.counts[name] += int(bad.size)
            if self.first[name] is None:
                self.first[name] = int(n_index[bad[0]])
            self.worst[name] = max(self.worst[name], float(np.max(excess[bad])))

    def feed(self, start, lam_next, residual, norm_x, norm_tx, anchor_gap, next_gap):
        """Consume rows n = start, start+1, ... (rows must arrive in order)."""
        if len(residual) == 0:
            return
        if self._head is None:
            if start != 0:
                raise PreconditionError("the first fed row must be n = 0")
            self._head = (float(norm_x[0]), float(norm_tx[0]))
        if self._prev is not None:
            lam_next = np.concatenate([[self._prev[0]], lam_next])
            next_gap = np.concatenate([[self._prev[1]], next_gap])
            anchor_gap = np.concatenate([[self._prev[2]], anchor_gap])
            residual = np.concatenate([[np.nan], residual])
            norm_x = np.concatenate([[np.nan], norm_x])
            norm_tx = np.concatenate([[np.nan], norm_tx])
            start -= 1
        self._prev = (float(lam_next[-1]), float(next_gap[-1]), float(anchor_gap[-1]))
        # rows with n >= 1 that have a predecessor in this buffer
        sl = slice(1, None)
        n_index = np.arange(start + 1, start + len(residual))
        lam, lam_prev = lam_next[sl], lam_next[:-1]
        gap, gap_prev = next_gap[sl], next_gap[:-1]
        r, nx, ntx = residual[sl], norm_x[sl], norm_tx[sl]
        agap, agap_prev = anchor_gap[sl], anchor_gap[:-1]
        two_m = 2.0 * self.M
        self._record("norm_Tx_bound", ntx, nx + self._head[0] + self._head[1], n_index)
        self._record("residual_split", r, gap + lam * agap, n_index)
        self._record("gap_recursion", gap, (1.0 - lam) * gap_prev + np.abs(lam - lam_prev) * agap_prev, n_index)
        self._record("residual_split_M", r, gap + two_m * lam, n_index)
        self._record("gap_recursion_M", gap, (1.0 - lam) * gap_prev + two_m * np.abs(lam - lam_prev), n_index)
        self.n_checked += len(n_index)

    def feed_chunk(self, chunk: Chunk):
        self.feed(chunk.start, chunk.lam_next, chunk.residual, chunk.norm_x, chunk.norm_tx,
                  chunk.anchor_gap, chunk.next_gap)

    def report(self, subject="halpern_inequalities") -> VerificationReport:
        rep = VerificationReport(subject)
        for name in self.NAMES:
            detail = {"violations": self.counts[name], "n_checked": self.n_checked}
            if self.counts[name]:
                detail.update(first_n=self.first[name], worst_excess=self.worst[name])
            rep.add(name, self.counts[name] == 0, **detail)
        return rep


def check_halpern_inequalities(traj: Trajectory, schedule: Schedule, M: int,
                               tol: float = 1e-9) -> VerificationReport:
    """Check the five Halpern step inequalities at every n in [1, N].

    When all iterates are stored every norm is recomputed from them with a
    fresh application of T, so a tampered iterate is caught. Otherwise the
    recorded scalars are used. Step sizes come from ``schedule``.
    """
    if traj.mode != "halpern":
        raise PreconditionError("these inequalities hold for Halpern runs only")
    N = traj.horizon
    lam_next = schedule.lam_array(1, N + 2)
    if traj.complete:
        X = np.vstack([traj.iterates, traj.x_next])
        TX = traj.op.apply_batch(traj.iterates)
        nrm = traj.op.norm.rows
        residual = nrm(traj.iterates - TX)
        norm_x = nrm(traj.iterates)
        norm_tx = nrm(TX)
        anchor_gap = nrm(traj.anchor[None, :] - TX)
        next_gap = nrm(X[1:] - X[:-1])
    else:
        residual, norm_x, norm_tx = traj.residuals, traj.norm_x, traj.norm_tx
        anchor_gap, next_gap = traj.anchor_gap, traj.next_gaps
    checker = InequalityChecker(M, tol)
    checker.feed(0, lam_next, residual, norm_x, norm_tx, anchor_gap, next_gap)
    return checker.report(f"halpern_inequalities[{traj.operator_id},{traj.schedule_id}]")


class ResidualTracker:
    """Streaming summary of residuals against a list of accuracies."""

    def __init__(self, eps_list: Sequence[float]):
        self.eps = [float(e) for e in eps_list]
        self.first_below = [None] * len(self.eps)
        self.last_at_or_above = [None] * len(self.eps)
        self.sup_norm_x = 0.0
        self.head = None
        self.max_residual = 0.0
        self.final_residual = math.nan
        self.n_seen = 0

    def feed_chunk(self, chunk: Chunk):
        if self.head is None:
            self.head = (float(chunk.norm_x[0]), float(chunk.norm_tx[0]))
        r = chunk.residual
        for i, e in enumerate(self.eps):
            below = r < e
            if self.first_below[i] is None and below.any():
                self.first_below[i] = chunk.start + int(np.argmax(below))
            above = np.nonzero(~below)[0]
            if above.size:
                self.last_at_or_above[i] = chunk.start + int(above[-1])
        self.sup_norm_x = max(self.sup_norm_x, float(np.max(chunk.norm_x)))
        self.max_residual = max(self.max_residual, float(np.max(r)))
        self.final_residual = float(r[-1])
        self.n_seen += len(chunk)

    def empirical_M(self) -> int:
        return _ceil_positive(self.sup_norm_x + self.head[0] + self.head[1])

    def below_from(self, i: int, start: int) -> bool:
        """Whether r_n < eps_i for every recorded n >= start."""
        last = self.last_at_or_above[i]
        return last is None or last < start


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(chunks: Iterable[Chunk], handle: io.TextIOBase, every: int = 1,
              consumers: Sequence = ()) -> int:
    """Write ``n,lambda_n,residual,step_gap,norm_x`` rows; returns rows written.

    ``lambda_n`` and ``step_gap`` are ``nan`` at n = 0. Every chunk is also
    passed to each consumer's ``feed_chunk``.
    """
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    prev_lam, prev_gap = math.nan, math.nan
    rows = 0
    for chunk in chunks:
        for c in consumers:
            c.feed_chunk(chunk)
        lam_n = np.concatenate([[prev_lam], chunk.lam_next[:-1]])
        gap_n = np.concatenate([[prev_gap], chunk.next_gap[:-1]])
        prev_lam, prev_gap = chunk.lam_next[-1], chunk.next_gap[-1]
        for k in range(len(chunk)):
            n = chunk.start + k
            if n % every:
                continue
            writer.writerow((n, _fmt(lam_n[k]), _fmt(chunk.residual[k]), _fmt(gap_n[k]),
                             _fmt(chunk.norm_x[k])))
            rows += 1
    return rows
