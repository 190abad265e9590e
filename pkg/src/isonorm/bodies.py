"""Centrally symmetric convex bodies and their exact oracles.

Every body exposes a gauge (Minkowski functional), a support function,
membership, an inradius lower bound and a circumradius upper bound, and a
closed-form volume when one exists.  Oracles are vectorised: they accept a
single point of shape ``(n,)`` or a stack of shape ``(m, n)``.

Bodies are immutable; flags such as ``isotropic`` are set by building a new
instance with :func:`dataclasses.replace`.
"""
from __future__ import annotations

import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection
from scipy.special import gammaln

from .stats import Estimate

# vertex enumeration is attempted up to this dimension
VERTEX_ENUM_MAX_DIM = 8


class BodyError(ValueError):
    """Invalid body description or oracle input."""


def ball_volume(n: int, r: float = 1.0) -> float:
    """vol(r B_2^n) = r^n pi^{n/2} / Gamma(n/2 + 1)."""
    return math.exp(n * math.log(r) + 0.5 * n * math.log(math.pi) - gammaln(n / 2 + 1))


def pball_volume(n: int, p: float, r: float = 1.0) -> float:
    if math.isinf(p):
        return (2 * r) ** n
    return math.exp(n * math.log(2 * r) + n * gammaln(1 + 1 / p) - gammaln(1 + n / p))


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise BodyError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise BodyError("non-finite input")
    return arr, single


def _out(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


@dataclass(frozen=True, eq=False, kw_only=True, repr=False)
class Body:
    """Base class.  Subclasses implement ``_gauge``/``_support`` on 2-D arrays."""

    isotropic: bool = False
    attached_volume: Estimate | None = None

    kind: ClassVar[str] = ""
    dim: int = field(init=False, default=0)
    inradius_lb: float = field(init=False, default=0.0)
    circumradius_ub: float = field(init=False, default=math.inf)
    exact_volume: float | None = field(init=False, default=None)

    def _set(self, **kw):
        for k, v in kw.items():
            object.__setattr__(self, k, v)

    # -- oracles -----------------------------------------------------------
    def gauge(self, x):
        pts, single = _as_points(x, self.dim)
        return _out(self._gauge(pts), single)

    def support(self, y):
        pts, single = _as_points(y, self.dim)
        return _out(self._support(pts), single)

    def polar_gauge(self, y):
        """Gauge of the polar body, which equals the support function."""
        return self.support(y)

    def contains(self, x, tol: float = 1e-12):
        g = self.gauge(x)
        return g <= 1.0 + tol

    def volume(self) -> float | None:
        return self.exact_volume

    def volume_estimate(self) -> Estimate | None:
        """Exact volume as a zero-error estimate, else the attached estimate."""
        if self.exact_volume is not None:
            return Estimate.exact(self.exact_volume, name="volume")
        return self.attached_volume

    @property
    def exact_isotropic_constant(self) -> float | None:
        return None

    @property
    def support_method(self) -> str:
        return "closed-form"

    def with_volume(self, estimate: Estimate) -> "Body":
        return dataclasses.replace(self, attached_volume=estimate)

    def marked_isotropic(self) -> "Body":
        return dataclasses.replace(self, isotropic=True)

    # -- serialisation -----------------------------------------------------
    def to_dict(self) -> dict:
        d = {"type": self.kind, "dim": self.dim}
        d.update(self._params())
        if self.isotropic:
            d["isotropic"] = True
        return d

    def _params(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def __repr__(self):
        return f"{type(self).__name__}({json.dumps(self._short())})"

    def _short(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if not isinstance(v, (list, dict))}

    def _gauge(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _support(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False, repr=False)
class EuclideanBall(Body):
    n: int
    radius: float = 1.0
    kind: ClassVar[str] = "ball2"

    def __post_init__(self):
        if self.n < 1 or not self.radius > 0:
            raise BodyError("EuclideanBall needs dim >= 1 and radius > 0")
        self._set(dim=int(self.n), inradius_lb=float(self.radius),
                  circumradius_ub=float(self.radius),
                  exact_volume=ball_volume(self.n, self.radius))

    def _gauge(self, x):
        return np.linalg.norm(x, axis=1) / self.radius

    def _support(self, y):
        return self.radius * np.linalg.norm(y, axis=1)

    @property
    def exact_isotropic_constant(self):
        n = self.dim
        return ball_volume(n) ** (-1.0 / n) / math.sqrt(n + 2)

    def _params(self):
        return {"radius": self.radius}


@dataclass(frozen=True, eq=False, repr=False)
class PBall(Body):
    """``radius * B_p^n`` for ``1 <= p <= inf``."""

    n: int
    p: float
    radius: float = 1.0
    kind: ClassVar[str] = "pball"

    def __post_init__(self):
        p = float(self.p)
        if self.n < 1 or not p >= 1 or not self.radius > 0:
            raise BodyError("PBall needs dim >= 1, p >= 1, radius > 0")
        expo = 0.5 if math.isinf(p) else 0.5 - 1.0 / p
        ratio = self.n ** expo
        self._set(dim=int(self.n), inradius_lb=self.radius * min(1.0, ratio),
                  circumradius_ub=self.radius * max(1.0, ratio),
                  exact_volume=pball_volume(self.n, p, self.radius))

    @property
    def dual_exponent(self) -> float:
        p = float(self.p)
        if p == 1:
            return math.inf
        if math.isinf(p):
            return 1.0
        return p / (p - 1)

    def _gauge(self, x):
        return np.linalg.norm(x, ord=float(self.p), axis=1) / self.radius

    def _support(self, y):
        return self.radius * np.linalg.norm(y, ord=self.dual_exponent, axis=1)

    @property
    def exact_isotropic_constant(self):
        if math.isinf(self.p):
            return 12 ** -0.5
        if self.p == 2:
            return EuclideanBall(self.dim).exact_isotropic_constant
        return None

    def _params(self):
        return {"p": "inf" if math.isinf(self.p) else self.p, "radius": self.radius}


@dataclass(frozen=True, eq=False, repr=False)
class Cube(Body):
    """``[-half_width, half_width]^n``; the default is the volume-one cube."""

    n: int
    half_width: float = 0.5
    kind: ClassVar[str] = "cube"

    def __post_init__(self):
        if self.n < 1 or not self.half_width > 0:
            raise BodyError("Cube needs dim >= 1 and half_width > 0")
        h = float(self.half_width)
        self._set(dim=int(self.n), inradius_lb=h, circumradius_ub=h * math.sqrt(self.n),
                  exact_volume=(2 * h) ** self.n)
        if h == 0.5 and not self.isotropic:
            # the unit-volume cube is isotropic as given
            self._set(isotropic=True)

    def _gauge(self, x):
        return np.abs(x).max(axis=1) / self.half_width

    def _support(self, y):
        return self.half_width * np.abs(y).sum(axis=1)

    @property
    def exact_isotropic_constant(self):
        return 12 ** -0.5

    def _params(self):
        return {"half_width": self.half_width}


@dataclass(frozen=True, eq=False, repr=False)
class Polytope(Body):
    """``{x : A x <= b}`` with rows closed under negation and ``b > 0``."""

    A: np.ndarray
    b: np.ndarray
    kind: ClassVar[str] = "polytope"
    vertices: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float).ravel()
        if A.shape[0] != b.size or A.shape[0] == 0:
            raise BodyError("A must be m x n with b of length m")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise BodyError("non-finite polytope data")
        if np.any(b <= 0):
            raise BodyError("origin must be interior: need b > 0")
        n = A.shape[1]
        if np.linalg.matrix_rank(A) < n:
            raise BodyError("polytope is unbounded (rows do not span R^n)")
        rows = A / b[:, None]
        dist = np.linalg.norm(rows[:, None, :] + rows[None, :, :], axis=2)
        scale = np.linalg.norm(rows, axis=1)
        if np.any(dist.min(axis=1) > 1e-9 * np.maximum(scale, 1.0)):
            raise BodyError("polytope is not centrally symmetric: rows must come in +/- pairs")
        A.setflags(write=False)
        b.setflags(write=False)
        self._set(A=A, b=b, _rows=rows, dim=n,
                  inradius_lb=float(np.min(b / np.linalg.norm(A, axis=1))))
        verts = self._enumerate_vertices() if n <= VERTEX_ENUM_MAX_DIM else None
        self._set(vertices=verts)
        if verts is not None:
            circ = float(np.linalg.norm(verts, axis=1).max())
        else:
            # bounding-box corner: a certified upper bound
            box = self._lp_support(np.eye(n))
            circ = float(np.linalg.norm(box))
        self._set(circumradius_ub=circ)

    def _enumerate_vertices(self) -> np.ndarray:
        n = self.dim
        if n == 1:
            r = float(np.min(self.b / np.abs(self.A[:, 0])))
            return np.array([[-r], [r]])
        hs = np.hstack([self.A, -self.b[:, None]])
        pts = HalfspaceIntersection(hs, np.zeros(n)).intersections
        return np.unique(np.round(pts, 12), axis=0)

    @property
    def support_method(self):
        return "vertices" if self.vertices is not None else "lp"

    def _gauge(self, x):
        return np.maximum((x @ self._rows.T).max(axis=1), 0.0)

    def _support(self, y):
        if self.vertices is not None:
            return (y @ self.vertices.T).max(axis=1)
        return self._lp_support(y)

    def _lp_support(self, y):
        out = np.empty(len(y))
        for i, yi in enumerate(y):
            res = linprog(-yi, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * self.dim,
                          method="highs")
            if res.status != 0:
                raise BodyError(f"support LP failed: {res.message}")
            out[i] = -res.fun
        return out

    def _params(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True, eq=False, repr=False)
class Ellipsoid(Body):
    """``{x : x^T M x <= 1}`` for symmetric positive-definite ``M``."""

    M: np.ndarray
    kind: ClassVar[str] = "ellipsoid"

    def __post_init__(self):
        M = np.array(self.M, dtype=float, ndmin=2)
        if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=1e-12, atol=1e-14):
            raise BodyError("M must be square and symmetric")
        w = np.linalg.eigvalsh(M)
        if w[0] <= 0:
            raise BodyError("M must be positive definite")
        n = M.shape[0]
        M.setflags(write=False)
        self._set(M=M, _Minv=np.linalg.inv(M), dim=n,
                  inradius_lb=float(w[-1] ** -0.5), circumradius_ub=float(w[0] ** -0.5),
                  exact_volume=float(np.prod(w) ** -0.5 * ball_volume(n)))

    def _gauge(self, x):
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", x, self.M, x), 0.0))

    def _support(self, y):
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", y, self._Minv, y), 0.0))

    @property
    def exact_isotropic_constant(self):
        return EuclideanBall(self.dim).exact_isotropic_constant

    def _params(self):
        return {"M": self.M.tolist()}


@dataclass(frozen=True, eq=False, repr=False)
class LinearImage(Body):
    """``T(inner)`` for invertible ``T``."""

    T: np.ndarray
    inner: Body
    kind: ClassVar[str] = "linear_image"

    def __post_init__(self):
        T = np.array(self.T, dtype=float, ndmin=2)
        n = self.inner.dim
        if T.shape != (n, n):
            raise BodyError(f"T must be {n} x {n}")
        sv = np.linalg.svd(T, compute_uv=False)
        if not np.all(np.isfinite(T)) or sv[-1] <= 1e-14 * sv[0]:
            raise BodyError("T must be finite and invertible")
        T.setflags(write=False)
        det = abs(float(np.linalg.det(T)))
        vol = self.inner.exact_volume
        self._set(T=T, _Tinv=np.linalg.inv(T), dim=n,
                  inradius_lb=self.inner.inradius_lb * float(sv[-1]),
                  circumradius_ub=self.inner.circumradius_ub * float(sv[0]),
                  exact_volume=None if vol is None else det * vol,
                  abs_det=det)

    def _gauge(self, x):
        return self.inner._gauge(x @ self._Tinv.T)

    def _support(self, y):
        return self.inner._support(y @ self.T)

    @property
    def support_method(self):
        return self.inner.support_method

    @property
    def exact_isotropic_constant(self):
        return self.inner.exact_isotropic_constant

    def volume_estimate(self):
        est = super().volume_estimate()
        if est is None and self.inner.volume_estimate() is not None:
            est = self.inner.volume_estimate().scaled(self.abs_det)
        return est

    def _params(self):
        return {"T": self.T.tolist(), "inner": self.inner.to_dict()}


@dataclass(frozen=True, eq=False, repr=False)
class Scaled(Body):
    """``factor * inner``."""

    factor: float
    inner: Body
    kind: ClassVar[str] = "scaled"

    def __post_init__(self):
        c = float(self.factor)
        if not (math.isfinite(c) and c > 0):
            raise BodyError("scale factor must be finite and > 0")
        n = self.inner.dim
        vol = self.inner.exact_volume
        self._set(factor=c, dim=n, inradius_lb=c * self.inner.inradius_lb,
                  circumradius_ub=c * self.inner.circumradius_ub,
                  exact_volume=None if vol is None else c ** n * vol)

    def _gauge(self, x):
        return self.inner._gauge(x) / self.factor

    def _support(self, y):
        return self.factor * self.inner._support(y)

    @property
    def support_method(self):
        return self.inner.support_method

    @property
    def exact_isotropic_constant(self):
        return self.inner.exact_isotropic_constant

    def volume_estimate(self):
        est = super().volume_estimate()
        if est is None and self.inner.volume_estimate() is not None:
            est = self.inner.volume_estimate().scaled(self.factor ** self.dim)
        return est

    def _params(self):
        return {"factor": self.factor, "inner": self.inner.to_dict()}


@dataclass(frozen=True, eq=False, repr=False)
class Polar(Body):
    """Polar body of a symmetric body: gauge and support swap roles."""

    inner: Body
    kind: ClassVar[str] = "polar"

    def __post_init__(self):
        self._set(dim=self.inner.dim, inradius_lb=1.0 / self.inner.circumradius_ub,
                  circumradius_ub=1.0 / self.inner.inradius_lb)

    def _gauge(self, x):
        return self.inner._support(x)

    def _support(self, y):
        return self.inner._gauge(y)

    @property
    def support_method(self):
        return "closed-form"

    def _params(self):
        return {"inner": self.inner.to_dict()}


def polar(body: Body) -> Body:
    """Polar body, in closed form whenever the variant allows it."""
    n = body.dim
    if isinstance(body, EuclideanBall):
        return EuclideanBall(n, 1.0 / body.radius)
    if isinstance(body, Cube):
        return PBall(n, 1.0, 1.0 / body.half_width)
    if isinstance(body, PBall):
        return PBall(n, body.dual_exponent, 1.0 / body.radius)
    if isinstance(body, Ellipsoid):
        return Ellipsoid(np.linalg.inv(body.M))
    if isinstance(body, LinearImage):
        return LinearImage(np.linalg.inv(body.T).T, polar(body.inner))
    if isinstance(body, Scaled):
        return Scaled(1.0 / body.factor, polar(body.inner))
    if isinstance(body, Polar):
        return body.inner
    return Polar(body)


def normalize_volume(body: Body) -> Body:
    """Homothetic copy of volume one (exact when the volume is closed-form)."""
    est = body.volume_estimate()
    if est is None:
        raise BodyError(f"volume unavailable for {body!r}; estimate and attach it first")
    if est.value == 1.0 and est.std_error == 0.0:
        return body
    c = est.value ** (-1.0 / body.dim)
    out = Scaled(c, body, isotropic=False)
    if out.exact_volume is None:
        # relative error of vol^{-1/n} * ... propagates to vol(out) = 1 * (1 +- rel)
        out = out.with_volume(Estimate(1.0, est.rel_error, est.count, est.stream, "volume"))
    return out


def cross_polytope(n: int, radius: float = 1.0) -> Polytope:
    """``radius * B_1^n`` as an explicit polytope (2^n facets)."""
    signs = np.array(list(itertools.product([-1.0, 1.0], repeat=n)))
    return Polytope(signs, np.full(len(signs), radius))


def random_polytope(n: int, pairs: int, rng: np.random.Generator) -> Polytope:
    """Symmetric polytope with ``pairs`` random facet pairs at unit distance."""
    if pairs < n:
        raise BodyError("need at least n facet pairs for a bounded polytope")
    G = rng.standard_normal((pairs, n))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    return Polytope(np.vstack([G, -G]), np.ones(2 * pairs))


# -- JSON ------------------------------------------------------------------

def _parse_p(p) -> float:
    return math.inf if p in ("inf", "infinity", math.inf) else float(p)


def body_from_dict(d: dict[str, Any]) -> Body:
    """Inverse of :meth:`Body.to_dict`.

    ``{"type": "random_polytope", "dim": n, "pairs": k, "seed": s}`` is also
    accepted and expanded deterministically into an explicit polytope.
    """
    if not isinstance(d, dict) or "type" not in d:
        raise BodyError(f"body spec must be an object with a 'type' key: {d!r}")
    kind = d["type"]
    iso = {"isotropic": True} if d.get("isotropic") else {}
    try:
        if kind == "ball2":
            body = EuclideanBall(int(d["dim"]), float(d.get("radius", 1.0)), **iso)
        elif kind == "pball":
            body = PBall(int(d["dim"]), _parse_p(d["p"]), float(d.get("radius", 1.0)), **iso)
        elif kind == "cube":
            body = Cube(int(d["dim"]), float(d.get("half_width", 0.5)), **iso)
        elif kind == "polytope":
            body = Polytope(np.asarray(d["A"], dtype=float), np.asarray(d["b"], dtype=float), **iso)
        elif kind == "ellipsoid":
            body = Ellipsoid(np.asarray(d["M"], dtype=float), **iso)
        elif kind == "linear_image":
            body = LinearImage(np.asarray(d["T"], dtype=float), body_from_dict(d["inner"]), **iso)
        elif kind == "scaled":
            body = Scaled(float(d["factor"]), body_from_dict(d["inner"]), **iso)
        elif kind == "polar":
            body = Polar(body_from_dict(d["inner"]), **iso)
        elif kind == "random_polytope":
            from .rng import RngStream
            rng = RngStream(int(d.get("seed", 0)), 0x506F6C79).generator()
            body = random_polytope(int(d["dim"]), int(d.get("pairs", 2 * int(d["dim"]))), rng)
        else:
            raise BodyError(f"unknown body type {kind!r}")
    except KeyError as exc:
        raise BodyError(f"body spec of type {kind!r} is missing field {exc}") from None
    if "dim" in d and int(d["dim"]) != body.dim:
        raise BodyError(f"declared dim {d['dim']} does not match body dim {body.dim}")
    return body


def body_from_json(text: str) -> Body:
    return body_from_dict(json.loads(text))


def named_body(name: str, dim: int) -> Body:
    """Short names used by the CLI: cube, ball2, ball1, ballinf, ballp<p>, crosspoly, randpoly."""
    name = name.lower()
    if name == "randpoly":
        return body_from_dict({"type": "random_polytope", "dim": dim})
    if name == "cube":
        return Cube(dim)
    if name in ("ball2", "ball", "b2"):
        return EuclideanBall(dim)
    if name in ("ball1", "b1"):
        return PBall(dim, 1.0)
    if name in ("ballinf", "binf"):
        return PBall(dim, math.inf)
    if name.startswith("ballp"):
        return PBall(dim, _parse_p(name[5:]))
    if name == "crosspoly":
        return cross_polytope(dim)
    raise BodyError(f"unknown body name {name!r}")
