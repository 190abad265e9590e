import math

import numpy as np
import pytest

import oracles as o
from isonorm.bodies import Cube, EuclideanBall, PBall, Scaled, cross_polytope, random_polytope
from isonorm.functionals import (ZqGuardError, big_m, expected_gaussian_norm, gaussian_abs_moment,
                                 gaussian_mean_gauge, gaussian_polar_identity, general_bounds_check,
                                 i1, i1_zq_polar, mean_width, polar_mean_width_check,
                                 self_gauge_check, vrad, zq2_polar_crosscheck, zq_inclusion_check,
                                 zq_support)
from isonorm.rng import RngStream
from isonorm.sampling import StandardGaussian, UniformOnBody, sample_gaussian, sample_uniform
from isonorm.stats import z_score

S = RngStream(303)


def within(est, target, k=3.0):
    return abs(est.value - target) <= k * est.std_error


def test_expected_gaussian_norm():
    for n in (1, 2, 7, 50):
        assert expected_gaussian_norm(n) == pytest.approx(o.gaussian_norm_mean(n), rel=1e-12)


@pytest.mark.parametrize("n", [2, 5])
def test_m_euclidean(n):
    est = big_m(EuclideanBall(n), S.child(0, n), 1_000_000)
    assert within(est, 1.0) and est.std_error < 1e-3


def test_m_closed_forms():
    assert within(big_m(PBall(2, 1), S.child(1), 1_000_000), o.M_B1_2D)
    assert within(big_m(Cube(2), S.child(2), 1_000_000), o.M_CUBE_2D)


def test_mean_width():
    assert within(mean_width(EuclideanBall(3), S.child(3)), 1.0)
    assert within(mean_width(Cube(2), S.child(4), 1_000_000), o.W_CUBE_2D)
    assert mean_width(cross_polytope(3), S.child(5), 1000).meta["support_method"]


def test_polar_duality():
    for K in (Cube(3), PBall(3, 3), random_polytope(3, 5, np.random.default_rng(0))):
        assert polar_mean_width_check(K, S.child(6)).passed


def test_vrad():
    assert vrad(EuclideanBall(4), S.child(7)).value == pytest.approx(1.0)
    assert vrad(Cube(2), S.child(8)).value == pytest.approx(math.pi ** -0.5, rel=0.02)
    v = vrad(Cube(3), S.child(9), 400_000)
    a, b = v.meta["volume_route"]["value"], v.meta["polar_route"]["value"]
    assert abs(a / b - 1) < 0.05
    assert v.meta["route"] == "volume"
    assert not v.meta["polar_route"]["unstable"]


def test_vrad_polar_route_only():
    v = vrad(cross_polytope(3), S.child(10), 400_000)
    assert v.meta["route"] == "polar"
    assert v.value == pytest.approx(((4 / 3) / (4 * math.pi / 3)) ** (1 / 3), rel=0.02)


@pytest.mark.parametrize("K", [Cube(3), PBall(3, 1), EuclideanBall(2),
                               random_polytope(3, 4, np.random.default_rng(3))])
def test_general_bounds(K):
    assert general_bounds_check(K, S.child(11)).passed


@pytest.mark.parametrize("C", [Cube(3), PBall(2, 1), EuclideanBall(4)])
def test_i1_self_gauge(C):
    n = C.dim
    assert within(i1(UniformOnBody(C), C, S.child(12, n)), n / (n + 1))


def test_i1_interval():
    a = math.sqrt(3)
    assert within(i1(UniformOnBody(Cube(1, a)), EuclideanBall(1), S.child(13)),
                  o.MEAN_ABS_ISO_INTERVAL)


def test_i1_scaling():
    mu = UniformOnBody(Cube(2))
    a = i1(mu, PBall(2, 1), S.child(14))
    b = i1(mu, Scaled(2.0, PBall(2, 1)), S.child(15))
    assert z_score(b, a.scaled(0.5)) < 2


def test_i1_dimension_mismatch():
    with pytest.raises(ValueError):
        i1(UniformOnBody(Cube(2)), Cube(3), S)


def test_gaussian_mean_gauge():
    assert within(gaussian_mean_gauge(EuclideanBall(2), S.child(16)), o.GAUSS_NORM_2D)
    assert within(gaussian_mean_gauge(Cube(1, 1.0), S.child(17)), o.GAUSS_ABS_1D)
    assert gaussian_polar_identity(Cube(4), S.child(18)).passed


def test_self_gauge_check():
    checks = self_gauge_check(PBall(3, 1), S.child(19))
    assert all(c.passed for c in checks)


def test_zq_support():
    X = sample_uniform(Cube(3), 200_000, S.child(20))
    h2 = zq_support(X, 2.0, [1, 0, 0])
    assert abs(h2.value / o.L_CUBE - 1) < 0.02
    y = np.array([0.2, -0.4, 0.5])
    assert zq_support(X, 3.0, 2 * y).value == pytest.approx(2 * zq_support(X, 3.0, y).value,
                                                            rel=1e-12)
    h1 = zq_support(X, 1.0, y)
    h2 = zq_support(X, 2.0, y)
    assert h1.value <= h2.value + 3 * math.hypot(h1.std_error, h2.std_error)
    with pytest.raises(ZqGuardError):
        zq_support(X.points[:100], 12.0, y)


def test_zq_inclusion():
    X = sample_uniform(Cube(3), 100_000, S.child(21))
    chk = zq_inclusion_check(X, 1, 2, 32, S.child(22))
    assert chk.passed and math.isfinite(chk.details["max_ratio_c1"])
    same = zq_inclusion_check(X, 2, 2, 8, S.child(23))
    assert same.details["max_ratio_c1"] == 1.0


def test_zq_gaussian_moment_ratio():
    g = sample_gaussian(1, 1_000_000, S.child(24))
    chk = zq_inclusion_check(g, 1, 3, 4, S.child(25))
    target = gaussian_abs_moment(3) ** (1 / 3) / gaussian_abs_moment(1)
    assert chk.details["mean_moment_ratio"] == pytest.approx(target, rel=0.01)


def test_i1_zq_polar_interval():
    est = i1_zq_polar(Cube(1), 2.0, S.child(26), outer_count=2000, inner_count=20000)
    assert abs(est.value / o.ZQ2_POLAR_INTERVAL - 1) < 0.03
    assert "jackknife_correction" in est.meta


def test_zq2_cross_check():
    from isonorm.stats import Estimate
    chk = zq2_polar_crosscheck(Cube(3), S.child(27), Estimate.exact(o.L_CUBE), 1000, 10000)
    assert chk.passed


def test_i1_zq_polar_homogeneous():
    # Z_q of the unscaled body scales like K; I_1 of the pair is then degree-2 homogeneous
    a = i1_zq_polar(Cube(2), 1.0, S.child(28), 500, 5000)
    assert a.value > 0
