"""Samplers: sphere, Gaussian, Haar rotations, uniform-in-body and weighted sums.

Uniform sampling has two routes.  *Rejection* is exact: linear images and
homothets are sampled through their inner body, cubes and balls directly, and
everything else by rejection from the circumradius ball or the bounding box
(whichever is smaller).  *Hit-and-run* is a Markov chain for bodies where the
acceptance rate collapses; chords are found by bisection on the gauge.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .bodies import (Body, BodyError, Cube, Ellipsoid, EuclideanBall, LinearImage, PBall,
                     Scaled, ball_volume, body_from_dict)
from .rng import RngStream, map_blocks, parallel_map, block_sizes

MAX_REJECTION_PROPOSALS = 10 ** 6
MIN_ACCEPTANCE = 1e-5
CHORD_TOL = 1e-12

METHOD_CODES = {"direct": 0, "rejection": 1, "hit_and_run": 2}


class AcceptanceTooLow(RuntimeError):
    """Rejection sampling is hopeless for this body; use hit-and-run."""


class ChordError(RuntimeError):
    """Hit-and-run could not bracket a chord (inconsistent body oracles)."""


@dataclass
class SampleBatch:
    points: np.ndarray
    source: dict
    method: str
    stream: RngStream
    burn_in: int = 0
    thinning: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("a batch holds at least one point as a (count, dim) array")

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def metadata(self) -> dict:
        return {"dim": self.dim, "count": self.count, "method": self.method,
                "source": self.source, "burn_in": self.burn_in, "thinning": self.thinning,
                **self.stream.to_dict(), "meta": self.meta}


# -- sphere / gaussian / Haar ---------------------------------------------

def _sphere_block(dim: int):
    def draw(gen, m):
        g = gen.standard_normal((m, dim))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        # a zero Gaussian vector has probability zero; resample defensively
        while np.any(norms == 0):
            bad = norms[:, 0] == 0
            g[bad] = gen.standard_normal((int(bad.sum()), dim))
            norms = np.linalg.norm(g, axis=1, keepdims=True)
        return g / norms
    return draw


def sample_sphere(dim: int, count: int, stream: RngStream) -> SampleBatch:
    """Uniform points on the unit sphere (normalised Gaussians)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    pts = map_blocks(_sphere_block(dim), count, stream)
    return SampleBatch(pts, {"type": "sphere", "dim": dim}, "direct", stream)


def sample_gaussian(dim: int, count: int, stream: RngStream) -> SampleBatch:
    pts = map_blocks(lambda gen, m: gen.standard_normal((m, dim)), count, stream)
    return SampleBatch(pts, {"type": "gaussian", "dim": dim}, "direct", stream)


def haar_from_gaussian(g: np.ndarray) -> np.ndarray:
    """Orthogonal factor of ``g`` with the sign convention ``diag(R) > 0``."""
    q, r = np.linalg.qr(g)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def sample_haar_rotation(dim: int, stream: RngStream) -> np.ndarray:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return haar_from_gaussian(stream.generator().standard_normal((dim, dim)))


def sample_haar_rotations(dim: int, count: int, stream: RngStream) -> np.ndarray:
    gen = stream.generator()
    return np.stack([haar_from_gaussian(gen.standard_normal((dim, dim))) for _ in range(count)])


# -- uniform in a body: exact route ---------------------------------------

def _ball_points(gen, m: int, n: int, r: float) -> np.ndarray:
    d = _sphere_block(n)(gen, m)
    return d * (r * gen.random(m) ** (1.0 / n))[:, None]


def bounding_box(body: Body) -> np.ndarray:
    """Half-widths h(e_i) of the tightest axis-parallel box around ``body``."""
    return np.asarray(body.support(np.eye(body.dim)), dtype=float)


def _proposal(body: Body, kind: str):
    """(draw(gen, m) -> points, proposal volume, name) for rejection from a ball or box."""
    n = body.dim
    if kind == "auto":
        box = bounding_box(body)
        vbox = float(np.prod(2 * box))
        vball = ball_volume(n, body.circumradius_ub)
        kind = "box" if vbox <= vball else "ball"
    if kind == "ball":
        r = body.circumradius_ub
        if not math.isfinite(r):
            raise BodyError("rejection needs a finite circumradius bound")
        return (lambda gen, m: _ball_points(gen, m, n, r)), ball_volume(n, r), "ball"
    if kind == "box":
        box = bounding_box(body)
        return (lambda gen, m: (gen.random((m, n)) * 2 - 1) * box), float(np.prod(2 * box)), "box"
    raise ValueError(f"unknown proposal {kind!r}")


def _reject(body: Body, gen, m: int, draw, chunk: int | None = None) -> tuple[np.ndarray, int]:
    out, have, proposed = [], 0, 0
    chunk = chunk or max(1024, 2 * m)
    while have < m:
        cand = draw(gen, chunk)
        proposed += chunk
        acc = cand[body._gauge(cand) <= 1.0]
        out.append(acc)
        have += len(acc)
        if proposed >= MAX_REJECTION_PROPOSALS and have < MIN_ACCEPTANCE * proposed:
            raise AcceptanceTooLow(
                f"acceptance {have / proposed:.2e} after {proposed} proposals for {body!r}")
    pts = np.concatenate(out)[:m]
    return pts, proposed if have == m else _proposals_used(proposed, have, m)


def _proposals_used(proposed: int, have: int, m: int) -> int:
    # proposals are consumed in chunks; prorate the final chunk for the acceptance record
    return int(round(proposed * m / have))


def _uniform_exact(body: Body, gen, m: int, proposal: str = "auto") -> tuple[np.ndarray, int]:
    """Exact uniform points and the number of proposals spent."""
    n = body.dim
    if proposal == "auto":
        if isinstance(body, Cube) or (isinstance(body, PBall) and math.isinf(body.p)):
            h = body.half_width if isinstance(body, Cube) else body.radius
            return (gen.random((m, n)) * 2 - 1) * h, m
        if isinstance(body, EuclideanBall) or (isinstance(body, PBall) and body.p == 2):
            return _ball_points(gen, m, n, body.radius), m
        if isinstance(body, Ellipsoid):
            w, V = np.linalg.eigh(body.M)
            return _ball_points(gen, m, n, 1.0) @ (V * w ** -0.5).T, m
        if isinstance(body, LinearImage):
            pts, used = _uniform_exact(body.inner, gen, m)
            return pts @ body.T.T, used
        if isinstance(body, Scaled):
            pts, used = _uniform_exact(body.inner, gen, m)
            return pts * body.factor, used
    draw, _, _ = _proposal(body, proposal)
    return _reject(body, gen, m, draw)


def sample_uniform_rejection(body: Body, count: int, stream: RngStream,
                             proposal: str = "auto") -> SampleBatch:
    """Exact uniform sample; records the acceptance rate in ``meta``."""
    sizes = block_sizes(count)
    streams = stream.spawn(len(sizes))
    parts = parallel_map(lambda k: _uniform_exact(body, streams[k].generator(), sizes[k], proposal),
                         range(len(sizes)))
    pts = np.concatenate([p for p, _ in parts])
    proposed = sum(u for _, u in parts)
    return SampleBatch(pts, {"type": "uniform", "body": body.to_dict()}, "rejection", stream,
                       meta={"acceptance": count / proposed, "proposals": proposed,
                             "proposal": proposal})


# -- uniform in a body: hit-and-run ---------------------------------------

def _chord_ends(body: Body, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Largest lam >= 0 with gauge(x + lam*theta) <= 1, per row, by bisection."""
    R = body.circumradius_ub
    lo = np.zeros(len(x))
    hi = np.full(len(x), 2.0 * R + 2.0 * np.linalg.norm(x, axis=1).max())
    if np.any(body._gauge(x + hi[:, None] * theta) <= 1.0):
        raise ChordError("chord end not bracketed: body oracle inconsistent with circumradius")
    iters = int(math.ceil(math.log2(hi.max() / (CHORD_TOL * max(body.inradius_lb, 1e-300))))) + 1
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = body._gauge(x + mid[:, None] * theta) <= 1.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return lo


def _hit_and_run(body: Body, gen, count: int, burn_in: int, thinning: int, chains: int,
                 x0: np.ndarray | None) -> np.ndarray:
    n = body.dim
    per_chain = -(-count // chains)
    x = np.zeros((chains, n)) if x0 is None else np.tile(np.asarray(x0, float), (chains, 1))
    if np.any(body._gauge(x) >= 1.0):
        raise ChordError("starting point must be strictly interior")
    out = np.empty((per_chain, chains, n))
    total = burn_in + per_chain * thinning
    kept = 0
    for step in range(1, total + 1):
        theta = _sphere_block(n)(gen, chains)
        both = _chord_ends(body, np.vstack([x, x]), np.vstack([theta, -theta]))
        lam_plus, lam_minus = both[:chains], both[chains:]
        lam = -lam_minus + gen.random(chains) * (lam_plus + lam_minus)
        x = x + lam[:, None] * theta
        if step > burn_in and (step - burn_in) % thinning == 0:
            out[kept] = x
            kept += 1
    # chain-major order keeps each chain contiguous for batch-means errors
    return out.transpose(1, 0, 2).reshape(-1, n)[:count]


def default_walk_params(n: int) -> tuple[int, int]:
    return 10 * n * n, n


def default_chains(count: int) -> int:
    """Parallel chains for a run of ``count`` emitted states (about 100 per chain)."""
    return int(min(1024, max(16, count // 100)))


def sample_hit_and_run(body: Body, count: int, stream: RngStream, burn_in: int | None = None,
                       thinning: int | None = None, x0=None,
                       chains: int | None = None) -> SampleBatch:
    """Hit-and-run chains started at ``x0`` (default: the origin)."""
    b0, t0 = default_walk_params(body.dim)
    burn_in = b0 if burn_in is None else int(burn_in)
    thinning = t0 if thinning is None else max(1, int(thinning))
    chains = default_chains(count) if chains is None else int(chains)
    chains = max(1, min(chains, int(count)))
    pts = _hit_and_run(body, stream.generator(), count, burn_in, thinning, chains, x0)
    return SampleBatch(pts, {"type": "uniform", "body": body.to_dict()}, "hit_and_run", stream,
                       burn_in=burn_in, thinning=thinning, meta={"chains": chains})


def sample_uniform(body: Body, count: int, stream: RngStream, method: str = "rejection",
                   **walk) -> SampleBatch:
    if method == "rejection":
        return sample_uniform_rejection(body, count, stream)
    if method == "hit_and_run":
        return sample_hit_and_run(body, count, stream, **walk)
    raise ValueError(f"unknown sampling method {method!r}")


def uniform_block_sampler(body: Body, method: str = "rejection",
                          **walk) -> Callable[[np.random.Generator, int], np.ndarray]:
    """``draw(gen, m)`` returning ``m`` uniform points of ``body``."""
    if method == "rejection":
        return lambda gen, m: _uniform_exact(body, gen, m)[0]
    if method == "hit_and_run":
        b0, t0 = default_walk_params(body.dim)
        burn_in = walk.get("burn_in", b0)
        thinning = walk.get("thinning", t0)
        chains = walk.get("chains")

        def draw(gen, m):
            k = default_chains(m) if chains is None else chains
            return _hit_and_run(body, gen, m, burn_in, thinning, max(1, min(k, m)), None)
        return draw
    raise ValueError(f"unknown sampling method {method!r}")


# -- weighted sums ---------------------------------------------------------

def _check_isotropic(body: Body):
    if not body.isotropic:
        raise ValueError(f"{body!r} is not flagged isotropic; run isotropy.isotropic_transform")
    vol = body.volume_estimate()
    if vol is not None and abs(vol.value - 1.0) > max(1e-9, 5 * vol.std_error):
        raise ValueError(f"isotropic body must have volume 1, got {vol.value}")


def weighted_sum_block(body: Body, weights: np.ndarray, method: str = "rejection", **walk):
    """``draw(gen, m)`` returning ``(m, k, n)`` sums ``sum_j W[i, j] X_j`` for each row of W.

    All ``k`` weight rows share the same uniform points ``X_1..X_s``
    (common random numbers).
    """
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    s = W.shape[1]
    draw_x = uniform_block_sampler(body, method, **walk)

    def draw(gen, m):
        X = draw_x(gen, m * s).reshape(m, s, body.dim)
        return np.einsum("msn,ks->mkn", X, W)
    return draw


def sample_nu_t(C_iso: Body, t, count: int, stream: RngStream,
                method: str = "rejection", **walk) -> SampleBatch:
    """Points ``t_1 X_1 + ... + t_s X_s`` with ``X_j`` i.i.d. uniform on ``C_iso``."""
    _check_isotropic(C_iso)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.ndim != 1 or t.size < 1 or not np.all(np.isfinite(t)):
        raise ValueError("t must be a finite vector with at least one entry")
    draw = weighted_sum_block(C_iso, t[None, :], method, **walk)
    pts = map_blocks(lambda gen, m: draw(gen, m)[:, 0, :], count, stream)
    return SampleBatch(pts, WeightedSum(C_iso, t).to_dict(), method, stream)


# -- measure specs ---------------------------------------------------------

class MeasureSpec:
    """A samplable probability law on R^n."""

    dim: int

    def sample(self, count: int, stream: RngStream) -> SampleBatch:
        raise NotImplementedError

    def block_sampler(self) -> Callable[[np.random.Generator, int], np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class UniformOnBody(MeasureSpec):
    body: Body
    method: str = "rejection"

    @property
    def dim(self):
        return self.body.dim

    def sample(self, count, stream):
        return sample_uniform(self.body, count, stream, self.method)

    def block_sampler(self):
        return uniform_block_sampler(self.body, self.method)

    def to_dict(self):
        return {"type": "uniform", "body": self.body.to_dict(), "method": self.method}


@dataclass(frozen=True)
class StandardGaussian(MeasureSpec):
    n: int

    @property
    def dim(self):
        return self.n

    def sample(self, count, stream):
        return sample_gaussian(self.n, count, stream)

    def block_sampler(self):
        return lambda gen, m: gen.standard_normal((m, self.n))

    def to_dict(self):
        return {"type": "gaussian", "dim": self.n}


@dataclass(frozen=True, eq=False)
class WeightedSum(MeasureSpec):
    body: Body
    t: tuple
    method: str = "rejection"

    def __post_init__(self):
        object.__setattr__(self, "t", tuple(float(v) for v in np.atleast_1d(self.t)))
        _check_isotropic(self.body)

    @property
    def dim(self):
        return self.body.dim

    def sample(self, count, stream):
        return sample_nu_t(self.body, self.t, count, stream, self.method)

    def block_sampler(self):
        draw = weighted_sum_block(self.body, np.array(self.t)[None, :], self.method)
        return lambda gen, m: draw(gen, m)[:, 0, :]

    def to_dict(self):
        return {"type": "weighted_sum", "body": self.body.to_dict(), "t": list(self.t),
                "method": self.method}


@dataclass(frozen=True, eq=False)
class Rescaled(MeasureSpec):
    """Law of ``factor * X`` for ``X ~ inner``."""

    inner: MeasureSpec
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("rescaling factor must be > 0")

    @property
    def dim(self):
        return self.inner.dim

    def sample(self, count, stream):
        b = self.inner.sample(count, stream)
        return SampleBatch(b.points * self.factor, self.to_dict(), b.method, stream,
                           b.burn_in, b.thinning, b.meta)

    def block_sampler(self):
        draw = self.inner.block_sampler()
        return lambda gen, m: draw(gen, m) * self.factor

    def to_dict(self):
        return {"type": "rescaled", "inner": self.inner.to_dict(), "factor": self.factor}


def measure_from_dict(d: dict) -> MeasureSpec:
    kind = d.get("type")
    if kind == "uniform":
        return UniformOnBody(body_from_dict(d["body"]), d.get("method", "rejection"))
    if kind == "gaussian":
        return StandardGaussian(int(d["dim"]))
    if kind == "weighted_sum":
        return WeightedSum(body_from_dict(d["body"]), tuple(d["t"]), d.get("method", "rejection"))
    if kind == "rescaled":
        return Rescaled(measure_from_dict(d["inner"]), float(d["factor"]))
    raise ValueError(f"unknown measure type {kind!r}")


def sample_measure_values(measure: MeasureSpec, fn: Callable[[np.ndarray], np.ndarray],
                          count: int, stream: RngStream) -> np.ndarray:
    """``fn`` evaluated on ``count`` draws of ``measure`` without storing the points."""
    draw = measure.block_sampler()
    return map_blocks(lambda gen, m: fn(draw(gen, m)), count, stream)


# -- persistence -----------------------------------------------------------

_HEADER = struct.Struct("<5Q")


def save_batch(batch: SampleBatch, path: str | Path) -> tuple[Path, Path]:
    """Write ``path`` (binary header + row-major float64) and ``path.json`` (metadata)."""
    path = Path(path)
    header = _HEADER.pack(batch.dim, batch.count, METHOD_CODES[batch.method],
                          batch.stream.seed, batch.stream.stream_id)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(batch.points, dtype="<f8").tobytes())
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(batch.metadata(), indent=2, sort_keys=True))
    return path, sidecar


def load_batch(path: str | Path) -> SampleBatch:
    path = Path(path)
    raw = path.read_bytes()
    dim, count, code, seed, sid = _HEADER.unpack_from(raw)
    pts = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if pts.size != dim * count:
        raise ValueError(f"{path}: expected {dim * count} values, found {pts.size}")
    method = {v: k for k, v in METHOD_CODES.items()}[code]
    sidecar = path.with_name(path.name + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return SampleBatch(pts.reshape(count, dim).copy(), meta.get("source", {}), method,
                       RngStream(seed, sid), meta.get("burn_in", 0), meta.get("thinning", 0),
                       meta.get("meta", {}))
