"""The multi-integral norm ||t||_{C^s,K} and checks on its unit ball B_s.

``||t|| = E |t_1 X_1 + ... + t_s X_s|_K`` with ``X_j`` i.i.d. uniform on an
isotropic body C.  The norm is 1-homogeneous, so it *is* the gauge of its unit
ball B_s; no root finding is needed to evaluate that gauge.

Comparisons between several weight vectors use common random numbers: all
weight vectors in one call see the same draws ``X_1..X_s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bodies import Body, EuclideanBall
from .functionals import big_m, expected_gaussian_norm, i1
from .isotropy import IsotropicCertificate, estimate_moments, isotropic_constant, isotropic_transform
from .rng import RngStream, map_blocks, parallel_map
from .sampling import (MeasureSpec, Rescaled, WeightedSum, _check_isotropic, _sphere_block,
                       sample_haar_rotations, sample_measure_values, uniform_block_sampler)
from .stats import (Check, Estimate, batch_means_se, combined_se, mean_estimate,
                    product_estimate, z_score)

# float64 entries held at once by one evaluation block
BLOCK_FLOATS = 1 << 21
MAX_CERT_REL_DEV = 0.05


@dataclass
class MultiNormContext:
    """An isotropic volume-one C, a body K, and the isotropic constant of C."""

    C: Body
    K: Body
    L: Estimate
    method: str = "rejection"
    walk: dict = field(default_factory=dict)
    certificate: IsotropicCertificate | None = None

    def __post_init__(self):
        if self.C.dim != self.K.dim:
            raise ValueError(f"dim(C)={self.C.dim} != dim(K)={self.K.dim}")
        _check_isotropic(self.C)

    @property
    def dim(self) -> int:
        return self.C.dim

    @classmethod
    def build(cls, C: Body, K: Body, stream: RngStream, sample_budget: int | None = None,
              method: str = "rejection", use_exact_L: bool = True,
              max_cert_rel_dev: float = MAX_CERT_REL_DEV) -> "MultiNormContext":
        """Put C in isotropic position (unless already flagged) and attach L_C."""
        cert = None
        if not C.isotropic:
            C, cert = isotropic_transform(C, stream.child(0), sample_budget)
            if cert.checks["cov_max_rel_dev"] > max_cert_rel_dev:
                raise ValueError(f"isotropic certificate too loose: {cert.checks}")
        exact = C.exact_isotropic_constant if use_exact_L else None
        if exact is not None:
            L = Estimate.exact(exact, name="L")
        elif cert is not None:
            L = cert.L
        else:
            L = isotropic_constant(C, stream.child(1), sample_budget)
        return cls(C, K, L, method, {}, cert)

    def describe(self) -> dict:
        d = {"C": self.C.to_dict(), "K": self.K.to_dict(), "L": self.L.to_record(),
             "method": self.method}
        if self.certificate is not None:
            d["certificate"] = self.certificate.to_dict()
        return d


def _block_rows(s: int, n: int) -> int:
    return max(16, BLOCK_FLOATS // (s * n))


def norm_values(ctx: MultiNormContext, W, count: int, stream: RngStream) -> np.ndarray:
    """Per-draw values ``|sum_j W[i, j] X_j|_K`` as a ``(count, k)`` array.

    Rows of ``W`` share the same draws.  The block layout depends only on
    ``(s, n)``, never on the number of workers.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    k, s = W.shape
    n = ctx.dim
    draw_x = uniform_block_sampler(ctx.C, ctx.method, **ctx.walk)
    rows = _block_rows(s, n)
    chunk = max(1, BLOCK_FLOATS // (rows * n))

    def block(gen, m):
        X = draw_x(gen, m * s).reshape(m, s, n)
        out = np.empty((m, k))
        for a in range(0, k, chunk):
            Z = np.einsum("msn,ks->mkn", X, W[a:a + chunk])
            out[:, a:a + chunk] = ctx.K._gauge(Z.reshape(-1, n)).reshape(m, -1)
        return out

    return map_blocks(block, count, stream, block_size=rows)


def multi_norm_many(ctx: MultiNormContext, W, stream: RngStream, count: int) -> list[Estimate]:
    """||w||_{C^s,K} for each row of W on common random numbers.

    Rows are normalised to unit length internally and the results rescaled,
    so homogeneity holds exactly.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    norms = np.linalg.norm(W, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    vals = norm_values(ctx, W / safe[:, None], count, stream)
    se = np.atleast_1d(batch_means_se(vals))
    means = vals.mean(axis=0)
    return [Estimate(norms[i] * means[i], norms[i] * se[i], count, stream, "multi_norm")
            if norms[i] > 0 else Estimate(0.0, 0.0, count, stream, "multi_norm")
            for i in range(len(W))]


def multi_norm(ctx: MultiNormContext, t, stream: RngStream, count: int) -> Estimate:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.ndim != 1 or t.size < 1:
        raise ValueError("t must be a vector with s >= 1 entries")
    return multi_norm_many(ctx, t[None, :], stream, count)[0]


def _unit(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    norm = np.linalg.norm(t)
    if not abs(norm - 1.0) <= 1e-9:
        raise ValueError(f"t must have unit Euclidean norm, got {norm}")
    return t


def covariance_check_nu_t(ctx: MultiNormContext, t, stream: RngStream, count: int,
                          diag_tol: float = 0.02) -> list[Check]:
    """Cov(nu_t) against L^2 I: diagonal relative deviation and off-diagonals in SE units."""
    t = _unit(t)
    X = sample_measure_values(WeightedSum(ctx.C, t, ctx.method), lambda x: x, count, stream)
    mom = estimate_moments(X)
    L2 = ctx.L.value ** 2
    diag_dev = float(np.max(np.abs(np.diag(mom.cov) - L2)) / L2)
    n = ctx.dim
    off = ~np.eye(n, dtype=bool)
    off_se = float(np.max(np.abs(mom.cov[off]) / mom.cov_se[off])) if n > 1 else 0.0
    details = {"L2": L2, "diag": np.diag(mom.cov).tolist(), "s": len(t), "count": count}
    return [Check("cov_nu_t_diagonal", diag_dev, threshold=diag_tol, unit="relative",
                  details=details),
            Check("cov_nu_t_offdiagonal", off_se, threshold=3.0, unit="SE",
                  details={"max_abs": float(np.max(np.abs(mom.cov[off]))) if n > 1 else 0.0})]


def identity_check(ctx: MultiNormContext, t, stream: RngStream, count: int) -> Check:
    """||t|| (weighted sums) against L * I_1(mu_t, K) (rescaled law), independent streams."""
    t = _unit(t)
    lhs = multi_norm(ctx, t, stream.child(0), count)
    mu_t = Rescaled(WeightedSum(ctx.C, t, ctx.method), 1.0 / ctx.L.value)
    rhs = product_estimate(ctx.L, i1(mu_t, ctx.K, stream.child(1), count), "L*I1(mu_t,K)")
    return Check("basic_identity", z_score(lhs, rhs), combined_se(lhs.std_error, rhs.std_error),
                 threshold=3.0, unit="combined SE",
                 details={"t": t.tolist(), "lhs": lhs.value, "lhs_se": lhs.std_error,
                          "rhs": rhs.value, "rhs_se": rhs.std_error})


def _ball_mean(ctx: MultiNormContext, s: int, stream: RngStream, outer: int, inner: int,
               gaussian: bool) -> np.ndarray:
    """Per-direction inner means of the norm at sphere (or Gaussian) directions."""
    n = ctx.dim
    draw_x = uniform_block_sampler(ctx.C, ctx.method, **ctx.walk)
    per = max(1, BLOCK_FLOATS // (inner * s * n))
    starts = list(range(0, outer, per))
    streams = stream.spawn(len(starts))

    def run(b):
        gen = streams[b].generator()
        k = min(per, outer - starts[b])
        theta = gen.standard_normal((k, s)) if gaussian else _sphere_block(s)(gen, k)
        X = draw_x(gen, k * inner * s).reshape(k, inner, s, n)
        Z = np.einsum("kisn,ks->kin", X, theta)
        return ctx.K._gauge(Z.reshape(-1, n)).reshape(k, inner).mean(axis=1)

    return np.concatenate(parallel_map(run, range(len(starts))))


def m_of_ball(ctx: MultiNormContext, s: int, stream: RngStream, outer_count: int = 4000,
              inner_count: int = 64) -> Estimate:
    """M(B_s) by the sphere route; the Gaussian route and their z-score are in ``meta``."""
    if s == 1:
        # S^0 = {+-1} and the norm is even
        est = multi_norm(ctx, [1.0], stream.child(0), outer_count * inner_count)
        return Estimate(est.value, est.std_error, est.count, stream, "M(B_s)",
                        {"sphere": est.to_record(), "gaussian": None, "route_z": 0.0})
    sphere = mean_estimate(_ball_mean(ctx, s, stream.child(0), outer_count, inner_count, False))
    gauss_raw = mean_estimate(_ball_mean(ctx, s, stream.child(1), outer_count, inner_count, True))
    gauss = gauss_raw.scaled(1.0 / expected_gaussian_norm(s))
    meta = {"sphere": {"value": sphere.value, "se": sphere.std_error},
            "gaussian": {"value": gauss.value, "se": gauss.std_error},
            "route_z": z_score(sphere, gauss), "outer_count": outer_count,
            "inner_count": inner_count}
    return Estimate(sphere.value, sphere.std_error, outer_count * inner_count, stream,
                    "M(B_s)", meta)


def m_of_ball_route_check(ctx: MultiNormContext, s: int, stream: RngStream,
                          outer_count: int = 4000, inner_count: int = 64) -> Check:
    est = m_of_ball(ctx, s, stream, outer_count, inner_count)
    return Check(f"M_Bs_routes_s{s}", est.meta["route_z"], threshold=3.0, unit="combined SE",
                 details={"s": s, **est.meta})


def symmetry_deviation(ctx: MultiNormContext, t, perm, signs, stream: RngStream,
                       count: int) -> dict:
    """Compare ||t|| and ||eps * t o sigma|| on a shared stream."""
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(signs, dtype=float) * t[np.asarray(perm)]
    a, b = multi_norm_many(ctx, np.vstack([t, t2]), stream, count)
    diff = abs(a.value - b.value)
    se = combined_se(a.std_error, b.std_error)
    dev = 0.0 if diff == 0 else (diff / se if se > 0 else math.inf)
    return {"deviation": dev, "a": a.value, "b": b.value, "se": se}


def symmetry_check(ctx: MultiNormContext, s: int, trials: int, stream: RngStream,
                   count: int) -> Check:
    """Largest shared-stream deviation over random (t, permutation, signs)."""
    gen = stream.child(0).generator()
    worst, rows = 0.0, []
    for i in range(trials):
        t = gen.standard_normal(s)
        t /= np.linalg.norm(t)
        perm = gen.permutation(s)
        signs = gen.choice([-1.0, 1.0], size=s)
        r = symmetry_deviation(ctx, t, perm, signs, stream.child(1, i), count)
        worst = max(worst, r["deviation"])
        rows.append(r["deviation"])
    return Check("one_symmetry", worst, threshold=3.0, unit="combined SE",
                 details={"s": s, "trials": trials, "mean_deviation": float(np.mean(rows))})


def triangle_check(ctx: MultiNormContext, s: int, pairs: int, stream: RngStream,
                   count: int) -> Check:
    """max over pairs of (||t+u|| - ||t|| - ||u||) / combined SE, shared streams."""
    gen = stream.child(0).generator()
    worst = -math.inf
    for i in range(pairs):
        t, u = gen.standard_normal(s), gen.standard_normal(s)
        a, b, c = multi_norm_many(ctx, np.vstack([t + u, t, u]), stream.child(1, i), count)
        se = combined_se(a.std_error, b.std_error, c.std_error)
        excess = a.value - b.value - c.value
        worst = max(worst, excess / se if se > 0 else (0.0 if excess <= 0 else math.inf))
    return Check("triangle_inequality", worst, threshold=3.0, unit="combined SE",
                 details={"s": s, "pairs": pairs})


def rotation_average_check(measure: MeasureSpec, K: Body, rotations: int, stream: RngStream,
                           count: int) -> Check:
    """Average over Haar U of I_1(mu, U K) against M(K) * E_mu |x|_2."""
    n = K.dim
    Us = sample_haar_rotations(n, rotations, stream.child(0))
    per_rot = []
    for r, U in enumerate(Us):
        # |x|_{U K} = |U^T x|_K, i.e. the row vector x @ U
        vals = sample_measure_values(measure, lambda x, U=U: K._gauge(x @ U), count,
                                     stream.child(1, r))
        per_rot.append(vals.mean())
    per_rot = np.array(per_rot)
    lhs = Estimate(per_rot.mean(), per_rot.std(ddof=1) / math.sqrt(rotations)
                   if rotations > 1 else 0.0, rotations * count, stream, "rotation_average")
    m = big_m(K, stream.child(2), max(count * rotations // 2, 10_000))
    e_norm = i1(measure, EuclideanBall(n), stream.child(3), max(count * rotations // 2, 10_000))
    rhs = product_estimate(m, e_norm, "M(K)*E|x|")
    return Check("rotation_average_identity", z_score(lhs, rhs),
                 combined_se(lhs.std_error, rhs.std_error), threshold=3.0, unit="combined SE",
                 details={"lhs": lhs.value, "lhs_se": lhs.std_error, "rhs": rhs.value,
                          "rhs_se": rhs.std_error, "rotations": rotations})


def alpt_spectra(ctx: MultiNormContext, s: int, trials: int, stream: RngStream) -> np.ndarray:
    """Eigenvalues of (1/(s L^2)) sum_j x_j x_j^T for each trial, shape (trials, n)."""
    draw = uniform_block_sampler(ctx.C, ctx.method, **ctx.walk)
    L2 = ctx.L.value ** 2

    def one(i):
        X = draw(stream.child(i).generator(), s)
        return np.linalg.eigvalsh(X.T @ X / (s * L2)), X.T @ X / (s * L2)

    out = parallel_map(one, range(trials))
    return np.array([e for e, _ in out]), np.array([m for _, m in out])


def alpt_spectral_check(ctx: MultiNormContext, s: int, trials: int, stream: RngStream,
                        min_fraction: float = 0.95) -> Check:
    """Fraction of trials whose normalised empirical covariance has spectrum in [1/2, 3/2]."""
    eig, mats = alpt_spectra(ctx, s, trials, stream)
    inside = (eig.min(axis=1) >= 0.5) & (eig.max(axis=1) <= 1.5)
    n = ctx.dim
    mean = mats.mean(axis=0)
    se = mats.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros_like(mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(mean - np.eye(n)) / se, 0.0)
    return Check("alpt_spectral_sandwich", float(inside.mean()), threshold=min_fraction,
                 direction=">=", unit="fraction of trials",
                 details={"s": s, "trials": trials, "min_eig": float(eig.min()),
                          "max_eig": float(eig.max()), "mean_matrix_max_z": float(z.max()),
                          "deviation_scale": math.sqrt(n / s)})


def alpt_trend(ctx: MultiNormContext, s_values, trials: int, stream: RngStream) -> Check:
    """Report-only: fraction inside [1/2, 3/2] for each s."""
    fr = {}
    for i, s in enumerate(s_values):
        eig, _ = alpt_spectra(ctx, int(s), trials, stream.child(i))
        fr[int(s)] = float(((eig.min(axis=1) >= 0.5) & (eig.max(axis=1) <= 1.5)).mean())
    vals = list(fr.values())
    return Check("alpt_fraction_trend", vals[-1], details={"fractions": fr,
                 "non_decreasing": all(a <= b for a, b in zip(vals, vals[1:]))})


def scan_directions(s: int, directions: int, stream: RngStream) -> np.ndarray:
    """e_1, (1,...,1)/sqrt(s), then random unit vectors of R^s."""
    canon = np.vstack([np.eye(1, s), np.full((1, s), 1.0 / math.sqrt(s))])
    rand = _sphere_block(s)(stream.generator(), max(0, directions))
    return np.vstack([canon, rand])


def gm_lower_bound_scan(ctx: MultiNormContext, s: int, directions: int, stream: RngStream,
                        count: int, m_K: Estimate | None = None) -> list[Check]:
    """Minimum of the norm over scanned unit directions (shared stream).

    Positivity is asserted.  The empirical lower-bound constants are logged:
    ``gm_constant`` is the minimum for the volume-one homothet of K, and
    ``lower_ratio`` divides the minimum by L * E|g_n|_2 * M(K).
    """
    n = ctx.dim
    D = scan_directions(s, directions, stream.child(0))
    ests = multi_norm_many(ctx, D, stream.child(1), count)
    vals = np.array([e.value for e in ests])
    i = int(np.argmin(vals))
    m_K = m_K or big_m(ctx.K, stream.child(2))
    vol = ctx.K.volume_estimate()
    gm = vals[i] * vol.value ** (1.0 / n) if vol is not None else math.nan
    norm = ctx.L.value * expected_gaussian_norm(n) * m_K.value
    details = {"s": s, "directions": len(D), "argmin": D[i].tolist(), "min": float(vals[i]),
               "e1": float(vals[0]), "diagonal": float(vals[1])}
    return [Check("gm_min_positive", float(vals[i]), ests[i].std_error, threshold=0.0,
                  direction=">=", unit="norm value", details=details),
            Check("gm_constant", gm, details={"s": s, "vol_K": vol.value if vol else None}),
            Check("gm_lower_over_l_mk", vals[i] / norm, details={"s": s, "normalizer": norm})]


def critical_dimension_report(ctx: MultiNormContext, s: int, stream: RngStream,
                              directions: int = 512, count: int = 20_000,
                              outer_count: int = 4000, inner_count: int = 64) -> Check:
    """k = s (M(B_s) / b)^2 with b the largest norm over a finite scan (an empirical proxy)."""
    D = scan_directions(s, directions, stream.child(1))
    vals = np.array([e.value for e in multi_norm_many(ctx, D, stream.child(2), count)])
    if s == 1:
        # every unit t is +-1 and the norm is even, so M = b identically
        M = Estimate(vals[0], 0.0, count, stream, "M(B_s)")
    else:
        M = m_of_ball(ctx, s, stream.child(0), outer_count, inner_count)
    b_trace = np.maximum.accumulate(vals)
    k_trace = s * (M.value / b_trace) ** 2
    marks = sorted({min(len(D), 2 ** j) for j in range(1, 20)} | {len(D)})
    return Check("critical_dimension_proxy", float(k_trace[-1]),
                 details={"s": s, "M": M.value, "M_se": M.std_error, "b": float(b_trace[-1]),
                          "b_trace": {m: float(b_trace[m - 1]) for m in marks},
                          "k_trace": {m: float(k_trace[m - 1]) for m in marks}})
