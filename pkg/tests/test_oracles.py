"""The frozen reference constants agree with their independent quadrature routes."""
import math

import pytest

import oracles as o


@pytest.mark.parametrize("frozen, route", [
    (o.M_B1_2D, o.m_b1_2d),
    (o.M_CUBE_2D, o.m_cube_2d),
    (o.W_CUBE_2D, o.w_cube_2d),
    (o.INTERVAL_SUM_ABS, o.interval_sum_abs),
    (o.INTERVAL_M_B2, o.interval_m_b2),
    (o.INTERVAL_M_B2, o.interval_m_b2_closed),
    (o.THIN_SHELL_INTERVAL, o.thin_shell_interval),
    (o.GAUSS_NORM_2D, lambda: o.gaussian_norm_mean(2)),
])
def test_frozen_matches_quadrature(frozen, route):
    assert route() == pytest.approx(frozen, rel=1e-9)


def test_interval_pair_norm_from_double_integral():
    # gauge of [-1/2, 1/2] is 2|x|
    assert 2 * o.interval_weighted_abs(1.0, 1.0) == pytest.approx(o.INTERVAL_PAIR_NORM, abs=1e-7)


def test_weighted_interval_formula():
    a, b = 0.8, 0.6
    assert o.interval_weighted_abs(a, b) == pytest.approx(a / 4 + b * b / (12 * a), abs=1e-7)


def test_zq2_interval_value():
    # E|x| = 1/4 on [-1/2, 1/2] and the L_2 norm of <., x> is |x| / sqrt(12)
    assert o.ZQ2_POLAR_INTERVAL == pytest.approx(0.25 / math.sqrt(12))
    assert o.ZQ2_POLAR_INTERVAL == pytest.approx(0.07217, abs=1e-5)
