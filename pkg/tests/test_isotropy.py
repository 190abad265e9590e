import math

import numpy as np
import pytest

import oracles as o
from isonorm.bodies import Cube, EuclideanBall, LinearImage, PBall, cross_polytope, random_polytope
from isonorm.isotropy import (estimate_moments, estimate_volume, isotropic_constant,
                              isotropic_transform, sl_invariance_check, tau_at_direction,
                              tau_statistic, thin_shell_sigma)
from isonorm.positioning import sl_matrix
from isonorm.rng import RngStream
from isonorm.sampling import Rescaled, StandardGaussian, UniformOnBody, sample_uniform
from isonorm.stats import combined_se

S = RngStream(202)


def test_moments_cube():
    X = sample_uniform(Cube(2), 1_000_000, S.child(0)).points
    m = estimate_moments(X)
    assert np.all(np.abs(np.diag(m.cov) - 1 / 12) < 3 * np.diag(m.cov_se))
    assert abs(m.cov[0, 1]) < 3 * m.cov_se[0, 1]
    assert not m.degenerate


def test_moments_gaussian():
    m = estimate_moments(StandardGaussian(3).sample(300_000, S.child(1)))
    assert np.all(np.abs(m.cov - np.eye(3)) < 3 * m.cov_se + 1e-12)


def test_moments_degenerate():
    m = estimate_moments(np.tile([1.0, 2.0], (500, 1)))
    assert np.all(m.cov == 0) and m.degenerate


def test_volume_closed_form():
    est = estimate_volume(Cube(3), S)
    assert est.value == 1.0 and est.std_error == 0.0


def test_volume_ball_by_box():
    est = estimate_volume(EuclideanBall(3), S.child(2), 0.005, proposal="box", force_mc=True)
    assert est.meta["proposal"] == "box"
    assert abs(est.value - 4 * math.pi / 3) < 3 * est.std_error
    assert est.rel_error <= 0.005 * 1.05


def test_volume_cross_polytope():
    est = estimate_volume(cross_polytope(3), S.child(3), 0.005)
    assert abs(est.value - 4 / 3) < 3 * est.std_error


@pytest.mark.parametrize("n", [2, 4])
def test_cube_isotropic_constant(n):
    L = isotropic_constant(Cube(n, 1.3), S.child(4, n))
    assert abs(L.value / o.L_CUBE - 1) < 0.01


def test_interval_constant():
    L = isotropic_constant(Cube(1), S.child(5))
    assert abs(L.value / o.L_CUBE - 1) < 0.01


def test_disk_transform():
    C, cert = isotropic_transform(EuclideanBall(2), S.child(6))
    assert abs(cert.L.value / o.L_DISK - 1) < 0.01
    assert C.isotropic and C.volume() == pytest.approx(1.0)
    assert np.linalg.det(cert.T) > 0


def test_cube_transform_near_identity():
    C, cert = isotropic_transform(Cube(3), S.child(7))
    assert np.abs(cert.T - np.eye(3)).max() < 0.02
    assert abs(cert.L.value / o.L_CUBE - 1) < 0.01


def test_transform_idempotent():
    C, cert = isotropic_transform(random_polytope(3, 5, np.random.default_rng(1)), S.child(8))
    C2, cert2 = isotropic_transform(C, S.child(9))
    assert np.abs(cert2.T - np.eye(3)).max() < 0.03
    assert cert2.checks["cov_max_rel_dev"] < 0.05
    assert cert2.checks["barycenter_max_se"] < 4


def test_sl_invariance():
    T = sl_matrix(np.array([0.3, -0.2, 0.5, 0.1, 0.0, -0.4, 0.2, 0.3]), 3)
    chk = sl_invariance_check(Cube(3), T, S.child(10))
    assert chk.passed, chk


def test_thin_shell_interval():
    a = math.sqrt(3)
    est = thin_shell_sigma(UniformOnBody(Cube(1, a)), S.child(11), 400_000)
    assert abs(est.value - o.THIN_SHELL_INTERVAL) < 3 * est.std_error


@pytest.mark.slow
def test_thin_shell_gaussian_high_dim():
    est = thin_shell_sigma(StandardGaussian(50), S.child(12), 1_000_000)
    assert abs(est.value / (1 / math.sqrt(2)) - 1) < 0.05
    assert abs(est.value - o.chi_sd(50)) < 3 * est.std_error


def test_thin_shell_rescaling():
    mu = UniformOnBody(Cube(3))
    L = o.L_CUBE
    a = thin_shell_sigma(mu, S.child(13), 200_000)
    b = thin_shell_sigma(Rescaled(mu, 1 / L), S.child(14), 200_000)
    assert abs(b.value - a.value / L) < 2 * combined_se(b.std_error, a.std_error / L)


def test_tau_gaussian_vanishes():
    # Isserlis: E[x_i x_j <x, xi>] is a third moment of a centred Gaussian, so it is 0
    est = tau_statistic(StandardGaussian(2), S.child(15), 200_000)
    assert est.meta["bound"] == "lower"
    assert abs(est.value) < 3 * est.std_error


def test_tau_uniform_interval_vanishes():
    mu = Rescaled(UniformOnBody(Cube(1)), 1 / o.L_CUBE)
    est = tau_statistic(mu, S.child(16), 200_000)
    assert abs(est.value) < 3 * est.std_error


def test_tau_direction_invariance():
    mu = StandardGaussian(3)
    a = tau_at_direction(mu, [1, 0, 0], S.child(17), 100_000)
    b = tau_at_direction(mu, [0.3, -0.5, 0.8], S.child(18), 100_000)
    assert abs(a.value - b.value) < 3 * combined_se(a.std_error, b.std_error)


def test_tau_detects_skew():
    # a non-even law: centred exponential coordinates have E x^3 = 2
    from isonorm.sampling import MeasureSpec

    class Skewed(MeasureSpec):
        dim = 1

        def block_sampler(self):
            return lambda gen, m: gen.exponential(size=(m, 1)) - 1.0

        def sample(self, count, stream):
            from isonorm.sampling import SampleBatch
            from isonorm.rng import map_blocks
            return SampleBatch(map_blocks(self.block_sampler(), count, stream), {}, "direct",
                               stream)

    est = tau_statistic(Skewed(), S.child(19), 400_000)
    assert abs(est.value - 4.0) < 3 * est.std_error + 0.05
