import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isonorm.bodies import (BodyError, Cube, Ellipsoid, EuclideanBall, LinearImage, PBall, Polar,
                            Polytope, Scaled, body_from_dict, body_from_json, cross_polytope,
                            named_body, normalize_volume, polar, random_polytope)

# -- spec examples ---------------------------------------------------------


def test_gauge_examples():
    assert EuclideanBall(3).gauge([3, 4, 0]) == pytest.approx(5.0)
    assert Cube(2).gauge([0.5, 0.25]) == pytest.approx(1.0)
    assert PBall(2, 1).gauge([0.3, 0.3]) == pytest.approx(0.6)


def test_support_examples():
    y = np.array([0.3, -1.2, 2.0])
    assert EuclideanBall(3).support(y) == pytest.approx(np.linalg.norm(y))
    assert Cube(2).support([1, 1]) == pytest.approx(1.0)
    assert cross_polytope(2).support([2, 1]) == pytest.approx(2.0)


def test_polar_gauge_examples():
    y = np.array([1.0, 2.0])
    assert EuclideanBall(2).polar_gauge(y) == pytest.approx(np.linalg.norm(y))
    assert Cube(3).polar_gauge([1, 0, 0]) == pytest.approx(0.5)
    assert PBall(2, 1).polar_gauge([1, 1]) == pytest.approx(1.0)


def test_volume_examples():
    assert Cube(3).volume() == pytest.approx(1.0)
    assert EuclideanBall(2).volume() == pytest.approx(math.pi)
    assert PBall(3, 1).volume() == pytest.approx(4 / 3)
    assert Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4)).volume() is None
    M = np.diag([4.0, 9.0])
    assert Ellipsoid(M).volume() == pytest.approx(math.pi / 6)
    assert Scaled(2.0, Cube(3)).volume() == pytest.approx(8.0)


def test_normalize_volume_examples():
    c = Cube(3)
    assert normalize_volume(c) is c
    d = normalize_volume(EuclideanBall(2))
    assert isinstance(d, Scaled) and d.factor == pytest.approx(math.pi ** -0.5)
    assert d.volume() == pytest.approx(1.0)
    T = np.diag([2.0, 2.0, 2.0])
    e = normalize_volume(LinearImage(T, Cube(3)))
    assert e.factor == pytest.approx(0.5)
    with pytest.raises(BodyError):
        normalize_volume(cross_polytope(3))


def test_pball_volume_and_limits():
    assert PBall(2, math.inf).volume() == pytest.approx(4.0)
    assert PBall(2, 2).volume() == pytest.approx(math.pi)
    assert PBall(4, 1).volume() == pytest.approx(2 ** 4 / 24)


def test_errors():
    with pytest.raises(BodyError):
        EuclideanBall(3).gauge([1.0, 2.0])
    with pytest.raises(BodyError):
        Cube(2).gauge([np.nan, 0.0])
    with pytest.raises(BodyError):  # rows not closed under negation
        Polytope(np.array([[1.0, 0], [0, 1], [-1, 0]]), np.ones(3))
    with pytest.raises(BodyError):  # origin not interior
        Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.array([1.0, 1, 0, 1]))
    with pytest.raises(BodyError):  # unbounded
        Polytope(np.array([[1.0, 0], [-1.0, 0]]), np.ones(2))


def test_polytope_cross_polytope_matches_pball():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((500, 4))
    np.testing.assert_allclose(cross_polytope(4).gauge(x), PBall(4, 1).gauge(x), rtol=1e-12)
    np.testing.assert_allclose(cross_polytope(4).support(x), PBall(4, 1).support(x), rtol=1e-9)


def test_polytope_high_dimension_support_by_lp():
    P = cross_polytope(9)
    y = np.linspace(-1, 1, 9)
    assert P.support(y) == pytest.approx(np.abs(y).max(), rel=1e-7)
    assert P.circumradius_ub >= 1.0


def test_polar_closed_forms():
    assert isinstance(polar(Cube(3)), PBall)
    assert polar(PBall(3, 1)).p == math.inf
    assert polar(PBall(3, 3)).p == pytest.approx(1.5)
    x = np.random.default_rng(1).standard_normal((100, 3))
    np.testing.assert_allclose(polar(Cube(3)).gauge(x), Cube(3).support(x), rtol=1e-12)


def test_named_bodies():
    assert named_body("ballp3", 2).p == 3.0
    assert named_body("crosspoly", 3).dim == 3
    assert named_body("randpoly", 3).dim == 3
    with pytest.raises(BodyError):
        named_body("dodecahedron", 3)


def test_isotropic_flags():
    assert Cube(3).isotropic
    assert not Cube(3, 1.0).isotropic
    assert not EuclideanBall(3).isotropic


# -- properties --------------------------------------------------------------

def make_body(kind: int, n: int, seed: int):
    rng = np.random.default_rng(seed)
    if kind == 0:
        return EuclideanBall(n, float(rng.uniform(0.5, 2)))
    if kind == 1:
        return PBall(n, float(rng.choice([1.0, 1.5, 3.0, math.inf])), float(rng.uniform(0.5, 2)))
    if kind == 2:
        return Cube(n, float(rng.uniform(0.2, 2)))
    if kind == 3:
        return random_polytope(n, n + int(rng.integers(0, 4)), rng)
    if kind == 4:
        A = rng.standard_normal((n, n))
        return Ellipsoid(A @ A.T + 0.5 * np.eye(n))
    if kind == 5:
        T = np.eye(n) + 0.3 * rng.standard_normal((n, n))
        return LinearImage(T, PBall(n, 1.0))
    if kind == 6:
        return Scaled(float(rng.uniform(0.5, 2)), Cube(n))
    return Polar(random_polytope(n, n + 1, rng))


bodies = st.builds(make_body, st.integers(0, 7), st.integers(1, 4), st.integers(0, 10_000))
SETTINGS = settings(max_examples=40, deadline=None)


def _points(body, seed, m=200):
    return np.random.default_rng(seed).standard_normal((m, body.dim)) * 2


@SETTINGS
@given(bodies, st.integers(0, 1000), st.floats(-50, 50).filter(lambda v: abs(v) > 1e-6))
def test_homogeneity_and_evenness(body, seed, lam):
    x = _points(body, seed)
    g = body.gauge(x)
    np.testing.assert_allclose(body.gauge(lam * x), abs(lam) * g, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(body.gauge(-x), g, rtol=1e-12)


@SETTINGS
@given(bodies, st.integers(0, 1000))
def test_membership_consistency(body, seed):
    x = _points(body, seed, 1000)
    np.testing.assert_array_equal(body.contains(x), body.gauge(x) <= 1 + 1e-12)


@SETTINGS
@given(bodies, st.integers(0, 1000))
def test_radii_sandwich(body, seed):
    x = _points(body, seed, 1000)
    g, r = body.gauge(x), np.linalg.norm(x, axis=1)
    assert np.all(r / body.circumradius_ub <= g * (1 + 1e-9))
    assert np.all(g <= r / body.inradius_lb * (1 + 1e-9))


@SETTINGS
@given(bodies, st.integers(0, 1000))
def test_gauge_support_duality(body, seed):
    x, y = _points(body, seed), _points(body, seed + 1)
    lhs = np.einsum("ij,ij->i", x, y)
    assert np.all(lhs <= body.gauge(x) * body.support(y) * (1 + 1e-7) + 1e-12)


@SETTINGS
@given(bodies, st.integers(0, 1000))
def test_support_sublinear(body, seed):
    y, z = _points(body, seed), _points(body, seed + 7)
    assert np.all(body.support(y + z) <= (body.support(y) + body.support(z)) * (1 + 1e-7))


def test_duality_equality_for_smooth_body():
    E = Ellipsoid(np.diag([1.0, 4.0, 9.0]))
    x = np.array([0.3, -0.2, 0.1])
    y = E.M @ x  # gradient direction of the quadratic gauge
    assert x @ y == pytest.approx(E.gauge(x) * E.support(y), rel=1e-9)


@SETTINGS
@given(st.integers(1, 4), st.integers(0, 1000))
def test_linear_image_composition(n, seed):
    rng = np.random.default_rng(seed)
    T = np.eye(n) + 0.4 * rng.standard_normal((n, n))
    S = np.eye(n) + 0.4 * rng.standard_normal((n, n))
    inner = PBall(n, 1.5)
    x = rng.standard_normal((50, n))
    direct = LinearImage(T @ S, inner).gauge(x)
    nested = LinearImage(T, LinearImage(S, inner)).gauge(x)
    manual = inner.gauge(x @ np.linalg.inv(T).T @ np.linalg.inv(S).T)
    np.testing.assert_allclose(direct, manual, rtol=1e-9)
    np.testing.assert_allclose(nested, manual, rtol=1e-9)


@SETTINGS
@given(bodies, st.integers(0, 1000))
def test_json_round_trip(body, seed):
    again = body_from_json(body.to_json())
    x = _points(body, seed)
    np.testing.assert_allclose(again.gauge(x), body.gauge(x), rtol=1e-12)
    assert again.dim == body.dim
    assert json.loads(again.to_json()) == json.loads(body.to_json())


def test_json_specs():
    assert body_from_dict({"type": "cube", "dim": 3, "half_width": 0.5}).volume() == 1.0
    a = body_from_dict({"type": "random_polytope", "dim": 3, "pairs": 5, "seed": 4})
    b = body_from_dict({"type": "random_polytope", "dim": 3, "pairs": 5, "seed": 4})
    np.testing.assert_array_equal(a.A, b.A)
    with pytest.raises(BodyError):
        body_from_dict({"type": "cube"})
    with pytest.raises(BodyError):
        body_from_dict({"type": "teapot", "dim": 2})
