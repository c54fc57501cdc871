import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from halpern_rates import operators as ops
from halpern_rates.errors import PreconditionError, ShapeError


def test_identity_apply():
    x = np.array([0.3, -2.0, 7.5])
    assert np.array_equal(ops.identity(3)(x), x)


def test_ball_projection_apply():
    P = ops.ball_projection([0.0, 0.0], 1.0)
    assert np.allclose(P([2.0, 0.0]), [1.0, 0.0])
    assert np.array_equal(P([0.5, 0.25]), [0.5, 0.25])


def test_rotation_90_apply():
    R = ops.rotation(2, [(0, 1, 90.0)])
    assert np.array_equal(R([1.0, 0.0]), [0.0, 1.0])
    assert np.array_equal(R.matrix, [[0.0, -1.0], [1.0, 0.0]])


@pytest.mark.parametrize("spec, value", [("euclidean", 5.0), ("max", 4.0), ("sum", 7.0)])
def test_norms(spec, value):
    assert ops.norm_of([3.0, -4.0] if spec != "euclidean" else [3.0, 4.0], spec) == value


def test_induced_norms():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert ops.induced_norm(A, "max") == 3.0
    assert ops.induced_norm(A, "sum") == 3.0
    assert ops.induced_norm(np.eye(3) * 0.5) == pytest.approx(0.5)


def test_box_and_halfspace():
    B = ops.box_projection([-1.0, 0.0], [1.0, 2.0])
    assert np.array_equal(B([3.0, -1.0]), [1.0, 0.0])
    H = ops.halfspace_projection([1.0, 0.0], 1.0)
    assert np.allclose(H([3.0, 5.0]), [1.0, 5.0])
    assert np.array_equal(H([0.5, 5.0]), [0.5, 5.0])


def test_shape_error():
    with pytest.raises(ShapeError):
        ops.identity(2)([1.0, 2.0, 3.0])
    with pytest.raises(ShapeError):
        ops.identity(2).apply_batch(np.zeros((4, 3)))


def test_projection_norm_guard():
    with pytest.raises(PreconditionError):
        ops.ball_projection([0.0], 1.0, norm="max")


_pts = arrays(np.float64, 3, elements=st.floats(-10, 10))


@settings(max_examples=100, deadline=None)
@given(_pts)
def test_projections_are_idempotent(x):
    for P in (ops.ball_projection([0.5, 0.0, -1.0], 2.0),
              ops.box_projection([-1, -1, -1], [1, 2, 3]),
              ops.halfspace_projection([1.0, -2.0, 0.5], 0.3)):
        y = P(x)
        assert np.allclose(P(y), y, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(_pts, st.floats(-360, 360))
def test_rotation_is_isometry(x, deg):
    R = ops.rotation(3, [(0, 2, deg), (1, 2, 30.0)])
    assert ops.norm_of(R(x)) == pytest.approx(ops.norm_of(x), rel=1e-12, abs=1e-12)


def test_composition_order():
    R = ops.rotation(2, [(0, 1, 90.0)])
    B = ops.box_projection([0.0, 0.0], [1.0, 1.0])
    # rotate (1, 0) to (0, 1), already in the box
    assert np.array_equal(ops.composition([R, B])([1.0, 0.0]), [0.0, 1.0])
    # box first keeps (1, 0), then rotate
    assert np.array_equal(ops.composition([B, R])([1.0, 0.0]), [0.0, 1.0])
    assert np.array_equal(ops.composition([B, R])([-1.0, 0.0]), [0.0, 0.0])
    assert ops.composition([R, B]).label == "composition(rotation,box_projection)"


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    op = ops.composition([ops.rotation(3, [(0, 1, 37.0)]), ops.ball_projection([0.0, 0.0, 1.0], 1.5)])
    X = rng.normal(size=(50, 3)) * 3
    TX = op.apply_batch(X)
    for x, tx in zip(X, TX):
        assert np.allclose(op(x), tx, rtol=0, atol=1e-14)


@pytest.mark.parametrize("op", [
    ops.identity(3),
    ops.ball_projection([0.0, 0.0], 1.0),
    ops.ball_projection([3.0, 0.0], 1.0),
    ops.box_projection([-1.0, -1.0], [1.0, 1.0]),
    ops.halfspace_projection([1.0, 1.0], 0.5),
    ops.rotation(2, [(0, 1, 90.0)]),
    ops.averaged_affine(0.5 * np.eye(2), [1.0, 0.0]),
    ops.composition([ops.rotation(2, [(0, 1, 60.0)]), ops.box_projection([-1, -1], [1, 1])]),
], ids=lambda o: o.label)
def test_check_nonexpansive_passes(op):
    rep = ops.check_nonexpansive(op, trials=1000, seed=7, tol=1e-12)
    assert rep.passed, rep.failures


def test_check_nonexpansive_identity_zero_tol():
    assert ops.check_nonexpansive(ops.identity(2), trials=10, seed=0, tol=0).passed


def test_check_nonexpansive_catches_doubling():
    rep = ops.check_nonexpansive(ops.averaged_affine(2 * np.eye(2)), trials=10, seed=7, tol=1e-12)
    lip = [c for c in rep.checks if c.name == "lipschitz_1"][0]
    assert not lip.passed
    assert lip.detail["n_violations"] > 0
    assert lip.detail["max_ratio"] == pytest.approx(2.0)


def test_declared_radius_too_small_is_caught():
    op = ops.ball_projection([3.0, 0.0], 1.0)
    with pytest.raises(PreconditionError):
        op.with_radius(1.0)


def test_invariant_radius_covers_anchor():
    R = ops.rotation(2, [(0, 1, 90.0)])
    assert R.invariant_radius([3.0, 4.0]) == 5.0
    assert R.with_radius(1.0).invariant_radius([3.0, 4.0]) == 1.0
    assert ops.averaged_affine(2 * np.eye(2)).invariant_radius() is None


def test_from_spec_round_trip():
    op = ops.from_spec({"kind": "composition", "stages": [
        {"kind": "rotation", "dim": 2, "planes": [[0, 1, 90.0]]},
        {"kind": "ball_projection", "center": [0.0, 0.0], "r": 1.0}], "radius": 1.0})
    assert op.radius == 1.0
    assert np.allclose(op([2.0, 0.0]), [0.0, 1.0])
    with pytest.raises(PreconditionError):
        ops.from_spec({"kind": "identity", "dim": 2, "bogus": 1})
