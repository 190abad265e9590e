"""Registry of experiments.  Each one fills a :class:`Report` from a config and a root stream."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import functionals as fn
from .. import isotropy, multinorm as mn, positioning as pos
from ..bodies import Body, Cube, LinearImage, Scaled, body_from_dict, named_body, normalize_volume
from ..rng import RngStream
from ..sampling import Rescaled, UniformOnBody, sample_uniform
from ..stats import Check, Estimate, z_score
from .config import ExperimentConfig
from .report import Report


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    description: str
    run: Callable[[ExperimentConfig, Report, RngStream], None]


REGISTRY: dict[str, Experiment] = {}


def register(name: str, anchor: str, description: str):
    def deco(f):
        REGISTRY[name] = Experiment(name, anchor, description, f)
        return f
    return deco


def resolve_body(spec, n: int | None = None) -> Body:
    """A short name (with dimension ``n``) or a JSON body spec."""
    if isinstance(spec, str):
        if n is None:
            raise ValueError(f"body name {spec!r} needs a dimension")
        return named_body(spec, n)
    d = dict(spec)
    if n is not None and "dim" not in d and d.get("type") in ("ball2", "pball", "cube",
                                                              "random_polytope"):
        d["dim"] = n
    return body_from_dict(d)


def _body(cfg: ExperimentConfig, key: str, n: int, default: str) -> Body:
    return resolve_body(cfg.bodies.get(key, default), n)


def _unit_vector(s: int, stream: RngStream) -> np.ndarray:
    t = stream.generator().standard_normal(s)
    return t / np.linalg.norm(t)


def _context(C: Body, K: Body, stream: RngStream, cfg: ExperimentConfig) -> mn.MultiNormContext:
    return mn.MultiNormContext.build(C, K, stream, cfg.param("moment_budget"),
                                     cfg.param("method", "rejection"))


# -- identities of the weighted-sum law -------------------------------------

ANCHOR_COV = "covariance of the weighted-sum law is L_C^2 times the identity"
ANCHOR_IDENTITY = "basic identity ||t|| = L_C I_1(mu_t, K)"
ANCHOR_ROTATION = "rotation average of I_1(mu, U K) equals M(K) times E|x|_2"
ANCHOR_GAUSS = "Gaussian polar integration E|x|_K = E|g|_2 M(K)"
ANCHOR_SELF = "self-gauge law: gauge of a uniform point has CDF u^n"


@register("identity_suite", "weighted-sum law: Cov(nu_t) = L_C^2 I and ||t|| = L_C I_1(mu_t, K)",
          "covariance and basic identities, closed-form interval norm, rotation average, "
          "Gaussian polar identity, self-gauge law")
def identity_suite(cfg: ExperimentConfig, report: Report, stream: RngStream):
    count = cfg.samples
    cases = cfg.param("cases", [{"C": "cube", "K": "ball1", "n": 2, "s": 4}])
    for i, case in enumerate(cases):
        n, s = int(case["n"]), int(case["s"])
        cs = stream.child(1, i)
        ctx = _context(resolve_body(case["C"], n), resolve_body(case["K"], n), cs.child(0), cfg)
        t = _unit_vector(s, cs.child(1))
        where = {"case": i, "n": n, "s": s}
        report.checks(mn.covariance_check_nu_t(ctx, t, cs.child(2), count,
                                               cfg.tol("cov_diag_rel", 0.02)), ANCHOR_COV,
                      **where)
        report.check(mn.identity_check(ctx, t, cs.child(3), count), ANCHOR_IDENTITY, **where)
        report.check(mn.identity_check(ctx, np.eye(1, s)[0], cs.child(4), count),
                     ANCHOR_IDENTITY, **where, t="e1")
        report.estimate(ctx.L, "isotropic constant of C", **where)

    closed = cfg.param("closed_form_samples", 10_000_000)
    if closed:
        ctx = mn.MultiNormContext.build(Cube(1), Cube(1), stream.child(2))
        est = mn.multi_norm(ctx, [1.0, 1.0], stream.child(3), closed)
        report.check(Check("interval_norm_closed_form", abs(est.value - 2 / 3), est.std_error,
                           threshold=cfg.tol("closed_form_abs", 1e-3), unit="absolute",
                           details={"value": est.value, "target": 2 / 3}),
                     "closed-form norm of (1,1) for the interval pair")

    n_rot = int(cfg.param("rotation_dim", 3))
    C_rot = _body(cfg, "rotation_C", n_rot, "cube")
    K_rot = _body(cfg, "rotation_K", n_rot, "ball1")
    report.check(mn.rotation_average_check(UniformOnBody(C_rot), K_rot,
                                           int(cfg.param("rotations", 200)), stream.child(4),
                                           int(cfg.param("rotation_count", 5000))),
                 ANCHOR_ROTATION, n=n_rot)

    for j, spec in enumerate(cfg.param("gaussian_bodies", ["ball1", "cube"])):
        for n in cfg.dims:
            report.check(fn.gaussian_polar_identity(resolve_body(spec, n), stream.child(5, j, n),
                                                    count), ANCHOR_GAUSS, body=str(spec), n=n)

    for j, spec in enumerate(cfg.param("self_gauge_bodies", ["cube", "ball1", "ball2",
                                                             "randpoly"])):
        for n in cfg.dims:
            report.checks(fn.self_gauge_check(resolve_body(spec, n), stream.child(6, j, n),
                                              count, ks_limit=cfg.tol("ks", 0.01)),
                          ANCHOR_SELF, body=str(spec), n=n)


# -- single-body functionals ------------------------------------------------

KNOWN_M = {("ball1", 2): 4 / math.pi, ("cube", 2): 4 * math.sqrt(2) / math.pi}


@register("functional_suite", "functionals M, w, vrad, L_C, thin-shell and tau statistics",
          "closed-form M values, general vrad bounds, mean-width duality, isotropic constants, "
          "per-measure concentration statistics")
def functional_suite(cfg: ExperimentConfig, report: Report, stream: RngStream):
    count = cfg.samples
    names = cfg.param("bodies", ["cube", "ball1", "ball2"])
    for j, name in enumerate(names):
        for n in cfg.dims:
            K = resolve_body(name, n)
            ks = stream.child(1, j, n)
            where = {"body": str(name), "n": n}
            m = report.estimate(fn.big_m(K, ks.child(0), count), "M(K): sphere average of the gauge",
                                **where)
            target = 1.0 if name == "ball2" else KNOWN_M.get((name, n))
            if target is not None:
                report.check(Check("M_closed_form", z_score(m, target), m.std_error,
                                   threshold=3.0, unit="SE",
                                   details={"M": m.value, "target": target}),
                             "M(K) against its closed form", **where)
            report.estimate(fn.mean_width(K, ks.child(1), count), "mean width", **where)
            report.estimate(fn.vrad(K, ks.child(2), count), "volume radius", **where)
            report.check(fn.general_bounds_check(K, ks.child(3), count),
                         "1/M(K) <= vrad(K) <= w(K)", **where)
            report.check(fn.polar_mean_width_check(K, ks.child(4), count),
                         "w(K) = M(K polar)", **where)
            L = report.estimate(isotropy.isotropic_constant(K, ks.child(5), cfg.param(
                "moment_budget")), "isotropic constant det(Cov)^{1/2n} at volume one", **where)
            exact = K.exact_isotropic_constant
            if exact is not None:
                report.check(Check("L_closed_form", abs(L.value / exact - 1), L.std_error / exact,
                                   threshold=cfg.tol("L_rel", 0.01), unit="relative",
                                   details={"L": L.value, "target": exact}),
                             "isotropic constant against its closed form", **where)
    for n in cfg.dims:
        T = pos.sl_matrix(0.3 * stream.child(2, n).generator().standard_normal(n * n - 1), n) \
            if n > 1 else np.eye(1)
        report.check(isotropy.sl_invariance_check(Cube(n), T, stream.child(3, n),
                                                  cfg.param("moment_budget")),
                     "isotropic constant is SL(n) invariant", n=n)
        C_iso = Cube(n)
        mu = Rescaled(UniformOnBody(C_iso), 1 / C_iso.exact_isotropic_constant)
        report.estimate(isotropy.thin_shell_sigma(mu, stream.child(4, n), count),
                        "thin-shell sigma of the isotropic cube measure", n=n)
        report.estimate(isotropy.tau_statistic(mu, stream.child(5, n), min(count, 100_000)),
                        "tau statistic (lower estimate) of the isotropic cube measure", n=n)


# -- unit ball B_s ----------------------------------------------------------

@register("bs_geometry", "unit ball B_s: 1-symmetry, triangle inequality, M(B_s) routes, "
          "lower-bound scan, critical dimension",
          "geometry of the unit ball of the multi-integral norm")
def bs_geometry(cfg: ExperimentConfig, report: Report, stream: RngStream):
    count = int(cfg.param("norm_count", 20_000))
    outer, inner = int(cfg.param("outer_count", 4000)), int(cfg.param("inner_count", 64))
    for n in cfg.dims:
        ctx = _context(_body(cfg, "C", n, "cube"), _body(cfg, "K", n, "cube"),
                       stream.child(0, n), cfg)
        m_K = fn.big_m(ctx.K, stream.child(1, n))
        for s in cfg.s_values:
            ss = stream.child(2, n, s)
            where = {"n": n, "s": s}
            report.check(mn.symmetry_check(ctx, s, int(cfg.param("symmetry_trials", 50)),
                                           ss.child(0), count), "B_s is 1-symmetric", **where)
            report.check(mn.triangle_check(ctx, s, int(cfg.param("triangle_pairs", 100)),
                                           ss.child(1), count),
                         "triangle inequality of the norm", **where)
            if s > 1:
                report.check(mn.m_of_ball_route_check(ctx, s, ss.child(2), outer, inner),
                             "M(B_s): sphere route against Gaussian-coefficient route", **where)
            report.checks(mn.gm_lower_bound_scan(ctx, s, int(cfg.param("directions", 512)),
                                                 ss.child(3), count, m_K),
                          "lower bound ||t|| >= c ||t||_2", **where)
            report.check(mn.critical_dimension_report(ctx, s, ss.child(4),
                                                      int(cfg.param("directions", 512)), count,
                                                      outer, inner),
                         "critical dimension proxy s (M/b)^2", **where)


@register("alpt", "spectral sandwich of the empirical covariance of s uniform points",
          "fraction of trials with spectrum of (1/(s L^2)) sum x x^T inside [1/2, 3/2]")
def alpt(cfg: ExperimentConfig, report: Report, stream: RngStream):
    trials = int(cfg.param("trials", 100))
    scale = cfg.tol("assert_scale", 0.16)
    for n in cfg.dims:
        ctx = _context(_body(cfg, "C", n, "cube"), _body(cfg, "C", n, "cube"),
                       stream.child(0, n), cfg)
        for s in cfg.s_values:
            chk = mn.alpt_spectral_check(ctx, s, trials, stream.child(1, n, s),
                                         cfg.tol("min_fraction", 0.95))
            if math.sqrt(n / s) > scale:
                chk = Check(chk.name, chk.value, details=chk.details)
            report.check(chk, "spectral sandwich (1/2) s L^2 <= sum <x_j, z>^2", n=n, s=s)
            z = chk.details["mean_matrix_max_z"]
            report.check(Check("alpt_mean_matrix", z, threshold=cfg.tol("mean_matrix_z", 4.0),
                               unit="SE (max over entries)"),
                         "expected normalised covariance is the identity", n=n, s=s)
        report.check(mn.alpt_trend(ctx, cfg.s_values, trials, stream.child(2, n)),
                     "spectral sandwich fraction across s", n=n)


# -- volume floor and positions -------------------------------------------

ANCHOR_MP = "volume floor: mean K-gauge over C >= n/(n+1) (vol C / vol K)^{1/n}"


@register("milman_pajor", ANCHOR_MP, "explicit-constant lower bound, with equality when C = K")
def milman_pajor(cfg: ExperimentConfig, report: Report, stream: RngStream):
    pairs = cfg.param("pairs", [["cube", "cube"], ["cube", "ball1"], ["ball2", "cube"],
                                ["ball1", "ball2"]])
    for i, (cspec, kspec) in enumerate(pairs):
        for n in cfg.dims:
            C = resolve_body(cspec, n)
            K = C if kspec == cspec else resolve_body(kspec, n)
            report.checks(pos.milman_pajor_check(C, K, stream.child(i, n), cfg.samples),
                          ANCHOR_MP, C=str(cspec), K=str(kspec), n=n)
            if C is K:
                report.checks(pos.milman_pajor_check(C, Scaled(2.0, C), stream.child(i, n, 1),
                                                     cfg.samples),
                              ANCHOR_MP, C=str(cspec), K=f"2*{cspec}", n=n)


@register("position_search", "existence of an SL(n) position T K with small mean gauge over C",
          "planted-optimum recovery and free search over SL(n)")
def position_search(cfg: ExperimentConfig, report: Report, stream: RngStream):
    restarts = int(cfg.param("restarts", 8))
    crn = int(cfg.param("crn_count", pos.CRN_COUNT))
    fresh = int(cfg.param("fresh_count", pos.FRESH_COUNT))
    budget = cfg.param("budget")
    rows = []
    for n in cfg.dims:
        C = _body(cfg, "C", n, "cube")
        K, _ = pos.planted_body(C, stream.child(0, n))
        res = pos.optimize_position(C, K, stream.child(1, n), budget, restarts, crn, fresh)
        report.checks(pos.position_checks(res, n, planted=True, slack=cfg.tol("planted", 1.10)),
                      "planted optimum: T0 K = C gives mean gauge n/(n+1)", n=n,
                      T=res.T.tolist(), restarts=res.restarts)
        rows += [[n, "planted", k, v] for k, v in enumerate(res.trace)]
        K2 = _body(cfg, "K", n, "ball1")
        res2 = pos.optimize_position(C, K2, stream.child(2, n), budget, restarts, crn, fresh)
        report.checks(pos.position_checks(res2, n), "SL(n) position search ratio", n=n,
                      T=res2.T.tolist())
        rows += [[n, "free", k, v] for k, v in enumerate(res2.trace)]
    report.table("trace", ["n", "search", "iteration", "best_objective"], rows)


# -- centroid bodies --------------------------------------------------------

@register("zq_suite", "L_q-centroid bodies: support values, monotone inclusion, I_1(K, Z_q polar)",
          "centroid-body support values and the nested estimator")
def zq_suite(cfg: ExperimentConfig, report: Report, stream: RngStream):
    for n in cfg.dims:
        K = _body(cfg, "K", n, "cube")
        ks = stream.child(0, n)
        ctx = _context(K, K, ks.child(0), cfg)
        batch = sample_uniform(ctx.C, cfg.samples, ks.child(1))
        h2 = fn.zq_support(batch, 2.0, np.eye(1, n)[0])
        report.check(Check("h_Z2_e1_equals_L", abs(h2.value / ctx.L.value - 1),
                           h2.std_error / ctx.L.value, threshold=cfg.tol("h2_rel", 0.02),
                           unit="relative", details={"h": h2.value, "L": ctx.L.value}),
                     "support of Z_2 equals L_K on isotropic K", n=n)
        for p, q in cfg.param("pq", [[1, 2], [2, 4]]):
            report.check(fn.zq_inclusion_check(batch, p, q, int(cfg.param("directions", 64)),
                                               ks.child(2, int(p), int(q))),
                         "monotone inclusion Z_p within Z_q", n=n, p=p, q=q)
        outer = int(cfg.param("outer_count", 2000))
        inner = int(cfg.param("inner_count", 20000))
        report.check(fn.zq2_polar_crosscheck(ctx.C, ks.child(3), ctx.L, outer, inner,
                                             cfg.samples),
                     "I_1(K, Z_2 polar) = L_K E|x|_2 on isotropic K", n=n)
        for q in cfg.param("qs", [1, 4]):
            est = fn.i1_zq_polar(ctx.C, float(q), ks.child(4, int(q)), outer, inner)
            report.estimate(est, "I_1(K, Z_q polar)", n=n, q=q)
            report.check(Check("zq_polar_ratio", est.value / (math.sqrt(q * n) * ctx.L.value ** 2),
                               details={"q": q, "normalizer": "sqrt(q n) L^2"}),
                         "I_1(K, Z_q polar) / (sqrt(q n) L_K^2)", n=n, q=q)


# -- report-only grids ------------------------------------------------------

@register("ratio_grids", "report-only ratios: lower-bound constant, M(B_s)/(L sqrt(n) M(K)), "
          "I_1/(sqrt(n) M(K)), critical dimension",
          "empirical constants across (n, s); no verdicts")
def ratio_grids(cfg: ExperimentConfig, report: Report, stream: RngStream):
    count = int(cfg.param("norm_count", 5000))
    directions = int(cfg.param("directions", 128))
    outer, inner = int(cfg.param("outer_count", 1000)), int(cfg.param("inner_count", 32))
    for n in cfg.dims:
        ns = stream.child(0, n)
        C = _body(cfg, "C", n, "cube")
        K = _body(cfg, "K", n, "ball1")
        ctx = _context(C, K, ns.child(0), cfg)
        self_ctx = mn.MultiNormContext(ctx.C, normalize_volume(ctx.C), ctx.L)
        m_K = fn.big_m(K, ns.child(1), cfg.samples)
        sqrt_n = math.sqrt(n)
        L = ctx.L.value
        mu = Rescaled(UniformOnBody(ctx.C), 1.0 / L)
        i1_mu = fn.i1(mu, K, ns.child(2), cfg.samples)
        r12 = i1_mu.value / (sqrt_n * m_K.value)
        report.grid_row("grid", n, 0, "i1_over_sqrt_n_mk", r12, r12 * math.hypot(i1_mu.rel_error,
                                                                             m_K.rel_error))
        report.check(Check("I1_ratio", r12, details={"normalizer": "sqrt(n) M(K)"}),
                     "I_1(mu, K) / (sqrt(n) M(K)) for isotropic mu", n=n)
        for s in cfg.s_values:
            ss = ns.child(3, s)
            where = {"n": n, "s": s}
            D = mn.scan_directions(s, directions, ss.child(0))
            vals = np.array([e.value for e in mn.multi_norm_many(ctx, D, ss.child(1), count)])
            self_vals = np.array([e.value for e in
                                  mn.multi_norm_many(self_ctx, D, ss.child(2), count)])
            M_B = mn.m_of_ball(ctx, s, ss.child(3), outer, inner)
            norm = L * sqrt_n * m_K.value
            quantities = {
                "gm_constant": (self_vals.min(), 0.0),
                "mbs_over_l_sqrt_n_mk": (M_B.value / norm, M_B.std_error / norm),
                "upper_ratio": (vals.max() / norm, 0.0),
                "lower_ratio": (vals.min() / norm, 0.0),
                "critical_dimension": (s * (M_B.value / vals.max()) ** 2, 0.0),
            }
            quantities["critical_dimension_over_s"] = (quantities["critical_dimension"][0] / s,
                                                       0.0)
            for q, (v, se) in quantities.items():
                report.grid_row("grid", n, s, q, v, se)
                report.check(Check(q, v, se), "report-only empirical constant", **where)
