"""Nonexpansive self-maps of convex subsets of R^d.

Each operator compiles to a flat stage program that the iteration kernels
execute; :meth:`NonexpansiveOp.apply` runs the same program with numpy.
Projections are metric projections under the Euclidean norm only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import PreconditionError, ShapeError
from .report import VerificationReport

__all__ = [
    "NormSpec",
    "NonexpansiveOp",
    "norm_of",
    "apply",
    "identity",
    "ball_projection",
    "box_projection",
    "halfspace_projection",
    "rotation",
    "averaged_affine",
    "composition",
    "from_spec",
    "check_nonexpansive",
    "induced_norm",
]

_NONEXPANSIVE_SLACK = 1e-12


class NormSpec(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    MAX = "max"
    SUM = "sum"

    @property
    def code(self) -> int:
        return {"euclidean": _kernels.NORM_EUCLIDEAN, "max": _kernels.NORM_MAX,
                "sum": _kernels.NORM_SUM}[self.value]

    def __call__(self, x) -> float:
        return norm_of(x, self)

    def rows(self, X: np.ndarray) -> np.ndarray:
        """Norm of every row of a 2-d array."""
        if self is NormSpec.EUCLIDEAN:
            return np.sqrt(np.einsum("ij,ij->i", X, X))
        if self is NormSpec.MAX:
            return np.max(np.abs(X), axis=1)
        return np.sum(np.abs(X), axis=1)


def norm_of(x, spec="euclidean") -> float:
    spec = NormSpec(spec)
    x = np.asarray(x, dtype=float)
    if spec is NormSpec.EUCLIDEAN:
        return float(np.sqrt(np.dot(x, x)))
    if spec is NormSpec.MAX:
        return float(np.max(np.abs(x))) if x.size else 0.0
    return float(np.sum(np.abs(x)))


def induced_norm(A, spec="euclidean") -> float:
    """Operator norm of a matrix under the given vector norm."""
    A = np.asarray(A, dtype=float)
    spec = NormSpec(spec)
    if spec is NormSpec.EUCLIDEAN:
        return float(np.linalg.norm(A, 2))
    if spec is NormSpec.MAX:
        return float(np.max(np.sum(np.abs(A), axis=1)))
    return float(np.max(np.sum(np.abs(A), axis=0)))


@dataclass(frozen=True, eq=False)
class NonexpansiveOp:
    """A map T on R^d given by a sequence of closed-form stages.

    ``min_radius`` is a certified R0 such that T maps the closed ball
    B(0, R) of the operator's norm into itself for every R >= R0 (``None``
    when no such certificate is known). ``radius``, when set, is a declared
    invariant radius; it is trusted and only checked by sampling.
    ``linear`` marks maps x -> Ax with no translation or projection.
    """

    kind: str
    dim: int
    norm: NormSpec
    stages: tuple
    params: dict = field(default_factory=dict)
    linear: bool = False
    min_radius: Optional[float] = None
    radius: Optional[float] = None
    parts: tuple = ()

    def __post_init__(self):
        codes = np.array([c for c, _ in self.stages], dtype=np.int64)
        chunks = [np.asarray(p, dtype=np.float64).ravel() for _, p in self.stages]
        offs = np.zeros(len(chunks), dtype=np.int64)
        if chunks:
            offs[1:] = np.cumsum([c.size for c in chunks])[:-1]
        flat = np.concatenate(chunks) if chunks else np.zeros(0)
        flat.setflags(write=False)
        object.__setattr__(self, "program", (codes, offs, flat))

    @property
    def label(self) -> str:
        if self.kind == "composition":
            return "composition(" + ",".join(p.label for p in self.parts) + ")"
        return self.kind

    @property
    def matrix(self) -> np.ndarray:
        """The matrix of a linear operator."""
        if not self.linear:
            raise PreconditionError(f"{self.label} is not linear")
        return self.apply_batch(np.eye(self.dim)).T

    def invariant_radius(self, anchor=None) -> Optional[float]:
        """Radius R of a ball B(0, R) that T maps into itself and that holds ``anchor``.

        Uses the declared radius if there is one, otherwise the certified
        ``min_radius`` enlarged to reach the anchor. ``None`` if neither exists.
        """
        if self.radius is not None:
            return float(self.radius)
        if self.min_radius is None:
            return None
        r = float(self.min_radius)
        if anchor is not None:
            r = max(r, norm_of(anchor, self.norm))
        return r

    def with_radius(self, radius: float) -> "NonexpansiveOp":
        if radius < 0:
            raise PreconditionError(f"invariant radius must be >= 0, got {radius}")
        if self.min_radius is not None and radius < self.min_radius - 1e-12:
            raise PreconditionError(
                f"declared radius {radius} is below the certified minimum {self.min_radius}")
        return NonexpansiveOp(self.kind, self.dim, self.norm, self.stages, self.params,
                              self.linear, self.min_radius, float(radius), self.parts)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise ShapeError(f"{self.label} acts on R^{self.dim}, got shape {x.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        return _kernels.apply_program(self._check(x), self.program)

    __call__ = apply

    def apply_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ShapeError(f"{self.label} acts on R^{self.dim}, got rows of length {X.shape[1]}")
        return _kernels.apply_program_batch(X, self.program)

    def __repr__(self) -> str:
        return f"NonexpansiveOp({self.label}, dim={self.dim}, norm={self.norm.value})"


def apply(op: NonexpansiveOp, x) -> np.ndarray:
    return op.apply(x)


def _vec(v, name) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise PreconditionError(f"{name} has non-finite entries")
    return v


def _fixed_origin_or(contains_origin: bool, range_radius: float) -> float:
    # a projection onto a set holding 0 fixes 0, so |Px| = |Px - P0| <= |x|
    return 0.0 if contains_origin else range_radius


def _euclidean_only(norm, kind):
    norm = NormSpec(norm)
    if norm is not NormSpec.EUCLIDEAN:
        raise PreconditionError(f"{kind} is a metric projection only under the Euclidean norm")
    return norm


def identity(dim: int, norm="euclidean") -> NonexpansiveOp:
    return NonexpansiveOp("identity", int(dim), NormSpec(norm), (), {"dim": int(dim)},
                          linear=True, min_radius=0.0)


def ball_projection(center, radius: float, norm="euclidean") -> NonexpansiveOp:
    center = _vec(center, "center")
    if not radius >= 0:
        raise PreconditionError(f"ball radius must be >= 0, got {radius}")
    norm = _euclidean_only(norm, "ball_projection")
    stage = (_kernels.STAGE_BALL, np.append(center, float(radius)))
    return NonexpansiveOp("ball_projection", center.size, norm, (stage,),
                          {"center": center.tolist(), "radius": float(radius)},
                          min_radius=_fixed_origin_or(norm_of(center) <= radius,
                                                      norm_of(center) + float(radius)))


def box_projection(lo, hi, norm="euclidean") -> NonexpansiveOp:
    lo, hi = _vec(lo, "lo"), _vec(hi, "hi")
    if lo.shape != hi.shape or np.any(lo > hi):
        raise PreconditionError("box needs lo <= hi componentwise with matching shapes")
    norm = _euclidean_only(norm, "box_projection")
    corner = np.maximum(np.abs(lo), np.abs(hi))
    r0 = _fixed_origin_or(bool(np.all(lo <= 0) and np.all(hi >= 0)), norm_of(corner))
    return NonexpansiveOp("box_projection", lo.size, norm,
                          ((_kernels.STAGE_BOX, np.concatenate([lo, hi])),),
                          {"lo": lo.tolist(), "hi": hi.tolist()}, min_radius=r0)


def halfspace_projection(a, b: float, norm="euclidean") -> NonexpansiveOp:
    """Projection onto {y : <a, y> <= b}."""
    a = _vec(a, "a")
    sq = float(np.dot(a, a))
    if sq == 0.0:
        raise PreconditionError("halfspace normal must be non-zero")
    norm = _euclidean_only(norm, "halfspace_projection")
    stage = (_kernels.STAGE_HALFSPACE, np.concatenate([a, [float(b), sq]]))
    return NonexpansiveOp("halfspace_projection", a.size, norm, (stage,),
                          {"a": a.tolist(), "b": float(b)},
                          min_radius=0.0 if b >= 0 else None)


def _affine_min_radius(A, b, norm) -> Optional[float]:
    k = induced_norm(A, norm)
    nb = norm_of(b, norm)
    if k > 1.0 + _NONEXPANSIVE_SLACK:
        return None
    if nb == 0.0:
        return 0.0
    if k < 1.0:
        return nb / (1.0 - k)
    return None


def averaged_affine(A, b=None, norm="euclidean") -> NonexpansiveOp:
    """x -> A x + b. Nonexpansive iff the induced norm of A is <= 1 (not enforced)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"A must be square, got shape {A.shape}")
    d = A.shape[0]
    b = np.zeros(d) if b is None else _vec(b, "b")
    if b.size != d:
        raise ShapeError("b must match A")
    norm = NormSpec(norm)
    stage = (_kernels.STAGE_AFFINE, np.concatenate([A.ravel(), b]))
    return NonexpansiveOp("averaged_affine", d, norm, (stage,),
                          {"A": A.tolist(), "b": b.tolist()},
                          linear=not np.any(b), min_radius=_affine_min_radius(A, b, norm))


def _cos_sin(degrees: float) -> tuple[float, float]:
    quarter = degrees / 90.0
    if quarter == round(quarter):
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(round(quarter)) % 4]
    t = math.radians(degrees)
    return math.cos(t), math.sin(t)


def rotation(dim: int, planes: Sequence, norm="euclidean") -> NonexpansiveOp:
    """Product of plane rotations ``(i, j, degrees)`` with 0-based axes, applied in order.

    ``(0, 1, 90)`` sends e_0 to e_1. Multiples of 90 degrees use exact
    cosines so the matrix is a signed permutation.
    """
    dim = int(dim)
    R = np.eye(dim)
    clean = []
    for plane in planes:
        i, j, deg = int(plane[0]), int(plane[1]), float(plane[2])
        if not (0 <= i < dim and 0 <= j < dim and i != j):
            raise ShapeError(f"rotation plane ({i}, {j}) invalid in R^{dim}")
        c, s = _cos_sin(deg)
        G = np.eye(dim)
        G[i, i], G[j, j], G[j, i], G[i, j] = c, c, s, -s
        R = G @ R
        clean.append([i, j, deg])
    op = averaged_affine(R, None, norm)
    return NonexpansiveOp("rotation", dim, op.norm, op.stages, {"dim": dim, "planes": clean},
                          linear=True, min_radius=op.min_radius)


def composition(ops: Sequence[NonexpansiveOp]) -> NonexpansiveOp:
    """Apply ``ops[0]`` first, then ``ops[1]``, and so on."""
    ops = list(ops)
    if not ops:
        raise PreconditionError("composition needs at least one operator")
    dim, norm = ops[0].dim, ops[0].norm
    for op in ops[1:]:
        if op.dim != dim or op.norm is not norm:
            raise ShapeError("composed operators must share dimension and norm")
    radii = [op.min_radius for op in ops]
    r0 = None if any(r is None for r in radii) else max(radii)
    stages = tuple(s for op in ops for s in op.stages)
    return NonexpansiveOp("composition", dim, norm, stages, {},
                          linear=all(op.linear for op in ops), min_radius=r0, parts=tuple(ops))


def from_spec(spec: dict) -> NonexpansiveOp:
    """Build an operator from a ``{"kind": ..., **params}`` mapping."""
    spec = dict(spec)
    kind = spec.pop("kind")
    radius = spec.pop("radius", None)
    norm = spec.pop("norm", "euclidean")
    if kind == "identity":
        op = identity(spec.pop("dim"), norm)
    elif kind == "ball_projection":
        op = ball_projection(spec.pop("center"), spec.pop("r"), norm)
    elif kind == "box_projection":
        op = box_projection(spec.pop("lo"), spec.pop("hi"), norm)
    elif kind == "halfspace_projection":
        op = halfspace_projection(spec.pop("a"), spec.pop("b"), norm)
    elif kind == "rotation":
        op = rotation(spec.pop("dim"), spec.pop("planes"), norm)
    elif kind == "averaged_affine":
        op = averaged_affine(spec.pop("A"), spec.pop("b", None), norm)
    elif kind == "composition":
        parts = [from_spec({"norm": norm, **p}) for p in spec.pop("stages")]
        op = composition(parts)
    else:
        raise PreconditionError(f"unknown operator kind {kind!r}")
    if spec:
        raise PreconditionError(f"unexpected parameters for {kind}: {sorted(spec)}")
    if radius is not None:
        op = op.with_radius(float(radius))
    return op


def _into_ball(X, R, norm: NormSpec) -> np.ndarray:
    nrm = norm.rows(X)
    scale = np.where(nrm > R, R / np.where(nrm > 0, nrm, 1.0), 1.0)
    return X * scale[:, None]


def _sample_ball(rng, n, dim, R, norm: NormSpec) -> np.ndarray:
    X = rng.uniform(-R, R, size=(n, dim))
    nrm = norm.rows(X)
    scale = np.where(nrm > R, R / np.where(nrm > 0, nrm, 1.0), 1.0)
    return X * scale[:, None]


def check_nonexpansive(op: NonexpansiveOp, trials: int = 1000, seed: int = 0,
                       tol: float = 1e-12) -> VerificationReport:
    """Sample point pairs from the invariant ball and test ||Tx - Ty|| <= ||x - y||.

    Half the pairs are independent, half are close pairs (||x - y|| ~ 1e-3 R)
    which probe local expansion. If the operator has an invariant radius, the
    sampled images must stay inside that ball as well.
    """
    report = VerificationReport(f"nonexpansive[{op.label}]")
    trials = int(trials)
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    R = op.invariant_radius()
    if R is not None and op.radius is None:
        R = max(R, 1.0)  # any R >= min_radius is invariant; avoid the degenerate ball
    sample_R = R if R is not None and R > 0 else 1.0
    X = _sample_ball(rng, trials, op.dim, sample_R, op.norm)
    far = _sample_ball(rng, trials, op.dim, sample_R, op.norm)
    near = _into_ball(X + rng.normal(scale=1e-3 * sample_R, size=X.shape), sample_R, op.norm)
    Y = np.where((np.arange(trials) % 2 == 0)[:, None], far, near)
    TX, TY = op.apply_batch(X), op.apply_batch(Y)
    dxy = op.norm.rows(X - Y)
    dT = op.norm.rows(TX - TY)
    excess = dT - (dxy + tol * (1.0 + dxy))
    bad = np.nonzero(excess > 0)[0]
    detail = {"trials": trials, "seed": seed, "tol": tol, "n_violations": int(bad.size),
              "max_ratio": float(np.max(np.where(dxy > 0, dT / np.where(dxy > 0, dxy, 1.0), 0.0)))}
    if bad.size:
        k = int(bad[np.argmax(excess[bad])])
        detail.update(witness_x=X[k].tolist(), witness_y=Y[k].tolist(),
                      dist_xy=float(dxy[k]), dist_Txy=float(dT[k]))
    report.add("lipschitz_1", bad.size == 0, **detail)
    if R is not None:
        nT = np.concatenate([op.norm.rows(TX), op.norm.rows(TY)])
        outside = int(np.sum(nT > R + tol * (1.0 + R)))
        report.add("maps_ball_into_itself", outside == 0, radius=R,
                   n_outside=outside, max_image_norm=float(np.max(nT)))
    return report
