"""Scalar functionals of a body or measure: M, w, vrad, I_1 and centroid-body quantities."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .bodies import Body, EuclideanBall, ball_volume, polar
from .rng import RngStream, map_blocks, parallel_map
from .sampling import (MeasureSpec, SampleBatch, StandardGaussian, UniformOnBody, _sphere_block,
                       sample_measure_values, sample_sphere, uniform_block_sampler)
from .stats import (Check, Estimate, batch_means_se, combined_se, ks_statistic, mean_estimate,
                    product_estimate, z_score)

DEFAULT_COUNT = 200_000
VRAD_BLOCKS = 100
VRAD_SPREAD_LIMIT = 0.20


def expected_gaussian_norm(n: int) -> float:
    """E|g|_2 for a standard Gaussian vector in R^n."""
    return math.sqrt(2.0) * math.exp(gammaln((n + 1) / 2) - gammaln(n / 2))


def sphere_average(fn, dim: int, count: int, stream: RngStream, name: str = "") -> Estimate:
    """Mean of ``fn(points)`` over uniform points of the unit sphere."""
    draw = _sphere_block(dim)
    values = map_blocks(lambda gen, m: fn(draw(gen, m)), count, stream)
    return mean_estimate(values, stream, name)


def big_m(K: Body, stream: RngStream, count: int = DEFAULT_COUNT) -> Estimate:
    """Average of the gauge of K over the unit sphere."""
    return sphere_average(K._gauge, K.dim, count, stream, "M")


def mean_width(K: Body, stream: RngStream, count: int = DEFAULT_COUNT) -> Estimate:
    """Average of the support function of K over the unit sphere."""
    est = sphere_average(K._support, K.dim, count, stream, "w")
    return Estimate(est.value, est.std_error, est.count, stream, "w",
                    {"support_method": K.support_method})


def vrad(K: Body, stream: RngStream, count: int = DEFAULT_COUNT,
         blocks: int = VRAD_BLOCKS) -> Estimate:
    """Volume radius by the volume route (when a volume is known) and the polar route.

    The polar route averages gauge^{-n} over the sphere with a median of
    ``blocks`` block means, which tames its heavy upper tail.  The returned
    estimate is the authoritative route; both are in ``meta``.
    """
    n = K.dim
    vals = map_blocks(lambda gen, m: K._gauge(_sphere_block(n)(gen, m)) ** (-float(n)),
                      count, stream)
    block_means = np.array([c.mean() for c in np.array_split(vals, blocks)])
    med = float(np.median(block_means))
    # asymptotic efficiency of the median of normal block means is 2/pi
    med_se = math.sqrt(math.pi / 2) * float(np.std(block_means, ddof=1)) / math.sqrt(blocks)
    polar_value = med ** (1.0 / n)
    polar_se = polar_value * med_se / (n * med)
    per_block = block_means ** (1.0 / n)
    spread = float((per_block.max() - per_block.min()) / np.median(per_block))
    polar_route = {"value": polar_value, "se": polar_se, "block_spread": spread,
                   "unstable": spread > VRAD_SPREAD_LIMIT}

    vol = K.volume_estimate()
    volume_route = None
    if vol is not None:
        value = (vol.value / ball_volume(n)) ** (1.0 / n)
        volume_route = {"value": value, "se": value * vol.rel_error / n if vol.std_error else 0.0}
    meta = {"polar_route": polar_route, "volume_route": volume_route,
            "route": "volume" if volume_route else "polar"}
    chosen = volume_route or polar_route
    return Estimate(chosen["value"], chosen["se"], count, stream, "vrad", meta)


def i1(measure: MeasureSpec, K: Body, stream: RngStream, count: int = DEFAULT_COUNT) -> Estimate:
    """Expected gauge of K under ``measure``."""
    if measure.dim != K.dim:
        raise ValueError(f"measure dimension {measure.dim} != body dimension {K.dim}")
    values = sample_measure_values(measure, K._gauge, count, stream)
    return mean_estimate(values, stream, "I1")


def gaussian_mean_gauge(K: Body, stream: RngStream, count: int = DEFAULT_COUNT) -> Estimate:
    est = i1(StandardGaussian(K.dim), K, stream, count)
    return Estimate(est.value, est.std_error, est.count, stream, "gaussian_mean_gauge")


def gaussian_polar_identity(K: Body, stream: RngStream, count: int = DEFAULT_COUNT) -> Check:
    """E_gamma |x|_K against E|g|_2 * M(K), on independent streams."""
    lhs = gaussian_mean_gauge(K, stream.child(0), count)
    m = big_m(K, stream.child(1), count)
    rhs = m.scaled(expected_gaussian_norm(K.dim))
    return Check("gaussian_polar_identity", z_score(lhs, rhs), combined_se(lhs.std_error,
                 rhs.std_error), threshold=3.0, unit="combined SE",
                 details={"lhs": lhs.value, "lhs_se": lhs.std_error, "rhs": rhs.value,
                          "rhs_se": rhs.std_error, "E_norm_g": expected_gaussian_norm(K.dim)})


def general_bounds_check(K: Body, stream: RngStream, count: int = DEFAULT_COUNT) -> Check:
    """1/M(K) <= vrad(K) <= w(K), each side within 3 combined SE."""
    m = big_m(K, stream.child(0), count)
    w = mean_width(K, stream.child(1), count)
    v = vrad(K, stream.child(2), count)
    inv_m = Estimate(1 / m.value, m.std_error / m.value ** 2, m.count)
    lower = (inv_m.value - v.value) / max(combined_se(inv_m.std_error, v.std_error), 1e-300)
    upper = (v.value - w.value) / max(combined_se(v.std_error, w.std_error), 1e-300)
    return Check("vrad_general_bounds", max(lower, upper), threshold=3.0, unit="combined SE",
                 details={"inv_M": inv_m.value, "vrad": v.value, "w": w.value})


# -- centroid bodies -------------------------------------------------------

class ZqGuardError(ValueError):
    """q is too large for the batch to resolve the L_q tail."""


def _zq_guard(q: float, count: int):
    if q < 1:
        raise ValueError("q must be >= 1")
    if q > 2 * math.log(count):
        raise ZqGuardError(f"q={q} exceeds 2 log(count)={2 * math.log(count):.1f}; need more samples")


def zq_support(C_batch: SampleBatch | np.ndarray, q: float, y) -> Estimate:
    """(mean |<x, y>|^q)^{1/q} over the batch, error by the delta method."""
    X = C_batch.points if isinstance(C_batch, SampleBatch) else np.asarray(C_batch, float)
    _zq_guard(q, X.shape[0])
    vals = np.abs(X @ np.asarray(y, dtype=float)) ** q
    m = float(vals.mean())
    se_m = float(batch_means_se(vals))
    value = m ** (1.0 / q)
    se = value * se_m / (q * m) if m > 0 else 0.0
    stream = C_batch.stream if isinstance(C_batch, SampleBatch) else None
    return Estimate(value, se, X.shape[0], stream, f"h_Z{q:g}")


def zq_inclusion_check(C_batch: SampleBatch | np.ndarray, p: float, q: float, directions: int,
                       stream: RngStream) -> Check:
    """Asserts h_{Z_p} <= h_{Z_q} (within 3 combined SE) over random directions.

    The largest ratio h_{Z_q} / ((q/p) h_{Z_p}) is reported as an empirical
    lower estimate of the inclusion constant; it carries no verdict.
    """
    if p > q:
        raise ValueError("need p <= q")
    X = C_batch.points if isinstance(C_batch, SampleBatch) else np.asarray(C_batch, float)
    Y = sample_sphere(X.shape[1], directions, stream).points
    worst, ratios, moment_ratios = -math.inf, [], []
    for y in Y:
        hp, hq = zq_support(X, p, y), zq_support(X, q, y)
        if p == q:
            worst = max(worst, 0.0)
            ratios.append(1.0)
            moment_ratios.append(1.0)
            continue
        worst = max(worst, (hp.value - hq.value) / max(combined_se(hp.std_error, hq.std_error),
                                                       1e-300))
        ratios.append(hq.value / ((q / p) * hp.value))
        moment_ratios.append(hq.value / hp.value)
    return Check("zq_monotone_inclusion", worst, threshold=3.0, unit="combined SE",
                 details={"p": p, "q": q, "directions": directions,
                          "max_ratio_c1": float(max(ratios)),
                          "mean_moment_ratio": float(np.mean(moment_ratios))})


def gaussian_abs_moment(q: float) -> float:
    """E|g|^q for a standard normal g."""
    return math.exp(q / 2 * math.log(2) + gammaln((q + 1) / 2) - 0.5 * math.log(math.pi))


def i1_zq_polar(K_iso: Body, q: float, stream: RngStream, outer_count: int = 2000,
                inner_count: int = 20000, groups: int = 10, block: int = 32) -> Estimate:
    """Nested Monte Carlo for the mean over x in K of h_{Z_q(K)}(x).

    Each outer point gets its own inner batch; the 1/q-power bias of the
    inner estimate is removed by a ``groups``-fold jackknife.  The raw
    (uncorrected) mean and the correction are kept in ``meta``.
    """
    if not K_iso.isotropic:
        raise ValueError(f"{K_iso!r} is not flagged isotropic")
    _zq_guard(q, inner_count)
    n = K_iso.dim
    draw = uniform_block_sampler(K_iso)
    starts = list(range(0, outer_count, block))
    streams = stream.spawn(len(starts))

    def run(k):
        gen = streams[k].generator()
        m = min(block, outer_count - starts[k])
        x = draw(gen, m)
        Y = draw(gen, m * inner_count).reshape(m, inner_count, n)
        vals = np.abs(np.einsum("min,mn->mi", Y, x)) ** q
        total = vals.mean(axis=1)
        gmeans = vals.reshape(m, groups, -1).mean(axis=2)
        loo = (groups * total[:, None] - gmeans) / (groups - 1)
        raw = total ** (1.0 / q)
        jack = groups * raw - (groups - 1) * (loo ** (1.0 / q)).mean(axis=1)
        return np.stack([raw, jack], axis=1)

    if inner_count % groups:
        raise ValueError("inner_count must be a multiple of the jackknife group count")
    vals = np.concatenate(parallel_map(run, range(len(starts))))
    raw = mean_estimate(vals[:, 0])
    corrected = mean_estimate(vals[:, 1], stream, f"I1_Z{q:g}_polar")
    return Estimate(corrected.value, corrected.std_error, outer_count * inner_count, stream,
                    corrected.name, {"raw": raw.value, "raw_se": raw.std_error,
                                     "jackknife_correction": corrected.value - raw.value,
                                     "outer_count": outer_count, "inner_count": inner_count})


def zq2_polar_crosscheck(K_iso: Body, stream: RngStream, L: Estimate, outer_count: int = 2000,
                         inner_count: int = 20000, count: int = DEFAULT_COUNT) -> Check:
    """For isotropic K, the q=2 nested value must equal L_K * E|x|_2."""
    lhs = i1_zq_polar(K_iso, 2.0, stream.child(0), outer_count, inner_count)
    norm = i1(UniformOnBody(K_iso), EuclideanBall(K_iso.dim), stream.child(1), count)
    rhs = product_estimate(L, norm, "L*E|x|")
    return Check("zq2_polar_identity", z_score(lhs, rhs),
                 combined_se(lhs.std_error, rhs.std_error), threshold=3.0, unit="combined SE",
                 details={"lhs": lhs.value, "lhs_se": lhs.std_error, "rhs": rhs.value,
                          "rhs_se": rhs.std_error})


def polar_mean_width_check(K: Body, stream: RngStream, count: int = DEFAULT_COUNT) -> Check:
    """w(K) against M(K polar) on independent streams."""
    w = mean_width(K, stream.child(0), count)
    m = big_m(polar(K), stream.child(1), count)
    return Check("mean_width_polar_duality", z_score(w, m), threshold=3.0, unit="combined SE",
                 details={"w": w.value, "M_polar": m.value})


def self_gauge_check(C: Body, stream: RngStream, count: int = 100_000,
                     method: str = "rejection", ks_limit: float = 0.01) -> list[Check]:
    """For X uniform on C, gauge(C, X) has CDF u^n: KS distance and the mean n/(n+1)."""
    n = C.dim
    g = sample_measure_values(UniformOnBody(C, method), C._gauge, count, stream)
    ks = ks_statistic(g, lambda u: np.clip(u, 0.0, 1.0) ** n)
    est = mean_estimate(g, stream, "E gauge")
    target = n / (n + 1)
    return [Check("self_gauge_ks", ks, threshold=ks_limit, unit="KS distance",
                  details={"dim": n, "count": count, "method": method}),
            Check("self_gauge_mean", z_score(est, target), est.std_error, threshold=3.0,
                  unit="SE", details={"mean": est.value, "target": target})]
