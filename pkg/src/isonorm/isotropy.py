"""Moments, volumes, isotropic position and per-measure concentration statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .bodies import Body, BodyError, LinearImage
from .rng import RngStream
from .sampling import (AcceptanceTooLow, MeasureSpec, SampleBatch, _proposal, sample_hit_and_run,
                       sample_measure_values, sample_uniform_rejection)
from .stats import (DEFAULT_BATCHES, Check, Estimate, batch_statistic, combined_se,
                    n_batches_for, z_score)

MAX_REJECTION_DIM = 10
VOLUME_ROUND = 100_000
VOLUME_MAX_PROPOSALS = 50_000_000


class Moments(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    degenerate: bool


def default_budget(n: int) -> int:
    return max(100_000, 1000 * n * n)


def estimate_moments(batch: SampleBatch | np.ndarray, n_batches: int = DEFAULT_BATCHES) -> Moments:
    """Unbiased mean and covariance with batch-means standard errors.

    A batch whose covariance has a (numerically) zero-variance direction is
    flagged ``degenerate``; this is not an error.
    """
    X = batch.points if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a (count >= 2, dim) array of points")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    b = n_batches_for(X.shape[0], n_batches)
    chunks = np.array_split(X, b)
    means = np.array([c.mean(axis=0) for c in chunks])
    covs = np.array([np.atleast_2d(np.cov(c, rowvar=False)) for c in chunks])
    mean_se = means.std(axis=0, ddof=1) / math.sqrt(b)
    cov_se = covs.std(axis=0, ddof=1) / math.sqrt(b)
    w = np.linalg.eigvalsh(cov)
    degenerate = bool(w[0] <= 1e-12 * max(w[-1], 1e-300) or w[-1] == 0.0)
    return Moments(mean, cov, mean_se, cov_se, degenerate)


def estimate_volume(body: Body, stream: RngStream, target_rel_se: float = 0.01,
                    proposal: str = "auto", force_mc: bool = False) -> Estimate:
    """Volume by rejection: vol(proposal) * acceptance, with the binomial error.

    Closed-form volumes are returned exactly unless ``force_mc`` is set.
    """
    if body.exact_volume is not None and not force_mc:
        return Estimate.exact(body.exact_volume, name="volume", method="closed-form")
    n = body.dim
    if n > MAX_REJECTION_DIM:
        raise AcceptanceTooLow(f"rejection volume estimation is limited to n <= {MAX_REJECTION_DIM}")
    draw, vprop, kind = _proposal(body, proposal)
    hits = total = 0
    rnd = 0
    while True:
        gen = stream.child(rnd).generator()
        pts = draw(gen, VOLUME_ROUND)
        hits += int(np.count_nonzero(body._gauge(pts) <= 1.0))
        total += VOLUME_ROUND
        rnd += 1
        p = hits / total
        if total >= 1_000_000 and p < 1e-5:
            raise AcceptanceTooLow(f"acceptance {p:.1e}; dimension too high for rejection")
        se = vprop * math.sqrt(max(p * (1 - p), 1.0 / total) / total)
        if hits > 0 and (se <= target_rel_se * vprop * p or total >= VOLUME_MAX_PROPOSALS):
            break
    return Estimate(vprop * p, se, total, stream, "volume", {"method": "rejection",
                                                             "proposal": kind,
                                                             "acceptance": p})


def _uniform_points(body: Body, count: int, stream: RngStream) -> SampleBatch:
    try:
        return sample_uniform_rejection(body, count, stream)
    except AcceptanceTooLow:
        return sample_hit_and_run(body, count, stream)


def _volume_for(body: Body, stream: RngStream) -> Estimate:
    est = body.volume_estimate()
    if est is None:
        est = estimate_volume(body, stream, target_rel_se=1e-3)
    return est


def _log_det(cov: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(np.atleast_2d(cov))
    if sign <= 0:
        raise BodyError("covariance estimate is not positive definite; increase the sample budget")
    return float(logdet)


def _constant_from_points(X: np.ndarray, volume: Estimate, stream: RngStream) -> Estimate:
    """det(Cov)^{1/2n} of the volume-normalised body, with batch and volume errors."""
    n = X.shape[1]

    def stat(chunk):
        return math.exp(_log_det(np.cov(chunk, rowvar=False)) / (2 * n))

    value, se = batch_statistic(X, stat)
    scale = volume.value ** (-1.0 / n)
    rel_vol = volume.rel_error / n if volume.std_error else 0.0
    L = value * scale
    return Estimate(L, L * math.hypot(se / value, rel_vol), X.shape[0], stream, "L")


@dataclass
class IsotropicCertificate:
    T: np.ndarray
    shift: np.ndarray
    L: Estimate
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"T": self.T.tolist(), "shift": self.shift.tolist(), "L": self.L.to_record(),
                "checks": self.checks}


def isotropic_transform(body: Body, stream: RngStream,
                        sample_budget: int | None = None) -> tuple[Body, IsotropicCertificate]:
    """Volume-one linear image of ``body`` with (estimated) scalar inertia matrix.

    The barycenter estimate is recorded in the certificate but not applied:
    the bodies are centrally symmetric, so the true barycenter is the origin.
    """
    n = body.dim
    budget = sample_budget or default_budget(n)
    volume = _volume_for(body, stream.child(0))
    X = _uniform_points(body, budget, stream.child(1)).points
    mom = estimate_moments(X)
    w, V = np.linalg.eigh(mom.cov)
    if w[0] <= 0:
        raise BodyError("covariance estimate is not positive definite; increase the sample budget")
    whiten = (V * w ** -0.5) @ V.T
    det_whiten = float(np.prod(w ** -0.5))
    alpha = (det_whiten * volume.value) ** (-1.0 / n)
    T = alpha * whiten
    L = _constant_from_points(X, volume, stream.child(2))

    image = LinearImage(T, body, isotropic=True)
    if image.exact_volume is None:
        image = image.with_volume(Estimate(1.0, volume.rel_error, volume.count, volume.stream,
                                           "volume"))
    # fresh sample of the image for an honest certificate
    Y = _uniform_points(image, budget, stream.child(3)).points
    check = estimate_moments(Y)
    dev = check.cov - L.value ** 2 * np.eye(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        dev_se = np.where(check.cov_se > 0, np.abs(dev) / check.cov_se, 0.0)
        bary_se = np.where(check.mean_se > 0, np.abs(check.mean) / check.mean_se, 0.0)
    vol_est = image.volume_estimate()
    checks = {
        "cov_max_abs_dev": float(np.abs(dev).max()),
        "cov_max_dev_se": float(dev_se.max()),
        "cov_max_rel_dev": float(np.abs(dev).max() / L.value ** 2),
        "barycenter_max_abs": float(np.abs(check.mean).max()),
        "barycenter_max_se": float(bary_se.max()),
        "volume_dev": float(abs(vol_est.value - 1.0)),
        "volume_se": float(vol_est.std_error),
        "samples": int(budget),
    }
    return image, IsotropicCertificate(T, mom.mean, L, checks)


def isotropic_constant(body: Body, stream: RngStream, sample_budget: int | None = None) -> Estimate:
    """det(Cov)^{1/2n} of the volume-one homothet of ``body``."""
    n = body.dim
    budget = sample_budget or default_budget(n)
    volume = _volume_for(body, stream.child(0))
    X = _uniform_points(body, budget, stream.child(1)).points
    return _constant_from_points(X, volume, stream)


def thin_shell_sigma(measure: MeasureSpec, stream: RngStream, count: int) -> Estimate:
    """sqrt(Var |X|_2) under ``measure``."""
    r = sample_measure_values(measure, lambda x: np.linalg.norm(x, axis=1), count, stream)
    value, se = batch_statistic(r, lambda v: math.sqrt(np.var(v, ddof=1)))
    return Estimate(value, se, count, stream, "thin_shell_sigma")


# -- tau statistic ---------------------------------------------------------

def third_moment_tensor(X: np.ndarray) -> np.ndarray:
    return np.einsum("ai,aj,ak->ijk", X, X, X, optimize=True) / X.shape[0]


def _tau_value_unbiased(X: np.ndarray, xi: np.ndarray) -> float:
    """Unbiased estimate of sum_ij (E x_i x_j <x, xi>)^2 from i.i.d. rows of X."""
    N = X.shape[0]
    proj = X @ xi
    Y = (X[:, :, None] * X[:, None, :] * proj[:, None, None]).reshape(N, -1)
    mean = Y.mean(axis=0)
    var = Y.var(axis=0, ddof=1) if N > 1 else np.zeros_like(mean)
    return float(np.sum(mean ** 2 - var / N))


def tau_at_direction(measure: MeasureSpec, xi, stream: RngStream, count: int) -> Estimate:
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    X = measure.sample(count, stream).points
    value, se = batch_statistic(X, lambda c: _tau_value_unbiased(c, xi))
    return Estimate(value, se, count, stream, "tau_sq_at_direction", {"xi": xi.tolist()})


def tau_direction_search(X: np.ndarray, directions: int, gen: np.random.Generator,
                         refine_steps: int = 50) -> tuple[np.ndarray, list[float]]:
    """Best unit xi for ``||T3 xi||_F^2`` among random candidates, then power-iteration ascent."""
    n = X.shape[1]
    T3 = third_moment_tensor(X).reshape(n * n, n)
    Q = T3.T @ T3
    cand = gen.standard_normal((max(1, directions), n))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    vals = np.einsum("ki,ij,kj->k", cand, Q, cand)
    xi = cand[int(np.argmax(vals))]
    trace = [float(vals.max())]
    for _ in range(refine_steps):
        nxt = Q @ xi
        norm = np.linalg.norm(nxt)
        if norm == 0:
            break
        nxt /= norm
        val = float(nxt @ Q @ nxt)
        if val <= trace[-1] * (1 + 1e-12):
            break
        xi, trace = nxt, trace + [val]
    return xi, trace


def tau_statistic(measure: MeasureSpec, stream: RngStream, count: int,
                  directions: int = 64) -> Estimate:
    """Lower estimate of sup_xi sum_ij (E x_i x_j <x, xi>)^2.

    The direction is chosen on one half of the sample and the value is
    re-estimated without bias on the other half, so the result estimates the
    statistic at a fixed direction: a lower bound on the supremum.
    """
    half = max(2, count // 2)
    search = measure.sample(half, stream.child(0)).points
    xi, trace = tau_direction_search(search, directions, stream.child(1).generator())
    X = measure.sample(max(2, count - half), stream.child(2)).points
    value, se = batch_statistic(X, lambda c: _tau_value_unbiased(c, xi))
    return Estimate(value, se, count, stream, "tau_sq_lower_bound",
                    {"bound": "lower", "xi": xi.tolist(), "search_trace": trace})



def sl_invariance_check(body: Body, T: np.ndarray, stream: RngStream,
                        sample_budget: int | None = None) -> Check:
    """L of ``body`` against L of its image under ``T`` (det T = 1), independent streams."""
    a = isotropic_constant(body, stream.child(0), sample_budget)
    b = isotropic_constant(LinearImage(T, body), stream.child(1), sample_budget)
    return Check("sl_invariance_of_L", z_score(a, b), combined_se(a.std_error, b.std_error),
                 threshold=2.0, unit="combined SE",
                 details={"L": a.value, "L_image": b.value, "det_T": float(np.linalg.det(T))})
