"""``isonorm-lab``: run experiments, estimate single quantities, list the registry."""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

import numpy as np

from .. import functionals as fn
from .. import isotropy
from .. import multinorm as mn
from ..bodies import BodyError, body_from_json
from ..rng import RngStream
from ..sampling import Rescaled, StandardGaussian, UniformOnBody
from ..stats import Estimate
from .config import ConfigError, builtin_config_path, load_config
from .experiments import REGISTRY, resolve_body
from .report import Report, clean

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def run_experiment(config_path, out_dir=None, seed=None) -> tuple[int, Report | None]:
    """Run one config.  Returns (exit code, report); the report is written even on errors."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    if cfg.name not in REGISTRY:
        print(f"config error: unknown experiment {cfg.name!r}; see `isonorm-lab list`",
              file=sys.stderr)
        return EXIT_CONFIG, None
    if seed is not None:
        cfg.seed = int(seed)
    if out_dir is not None:
        cfg.output_dir = str(out_dir)
    report = Report(cfg)
    code = EXIT_OK
    try:
        REGISTRY[cfg.name].run(cfg, report, RngStream(cfg.seed, 0))
    except Exception as exc:  # runtime estimator errors: keep what was computed
        report.status = "error"
        report.error = f"{type(exc).__name__}: {exc}"
        traceback.print_exc(file=sys.stderr)
        code = EXIT_RUNTIME
    paths = report.write()
    if code == EXIT_OK and report.failed:
        code = EXIT_FAIL
    counts = report.verdict_counts()
    print(f"{cfg.name}: {counts['pass']} pass, {counts['fail']} fail, "
          f"{counts['report-only']} report-only -> {paths[0]}")
    return code, report


# -- estimate ---------------------------------------------------------------

def _parse_body(spec: str | None, dim: int | None, flag: str):
    if spec is None:
        raise ValueError(f"{flag} is required for this quantity")
    if spec.lstrip().startswith("{"):
        return body_from_json(spec)
    if dim is None:
        raise ValueError("--dim is required with a named body")
    return resolve_body(spec, dim)


def _parse_t(text: str | None) -> np.ndarray:
    if not text:
        raise ValueError("--t is required (comma-separated weights)")
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ValueError(f"cannot parse --t {text!r}") from None


def _measure(args, K):
    if args.measure == "gaussian":
        return StandardGaussian(K.dim)
    C = _parse_body(args.C or args.body, args.dim, "--C")
    return UniformOnBody(C, args.method)


QUANTITIES = {
    "M": "sphere average of the gauge of --body",
    "w": "mean width of --body",
    "vrad": "volume radius of --body",
    "L": "isotropic constant of --body",
    "volume": "volume of --body (closed form or rejection)",
    "I1": "expected gauge of --K under --measure (uniform on --C, or gaussian)",
    "gaussian_gauge": "expected gauge of --body under the standard Gaussian",
    "thin_shell": "sqrt Var |x|_2 for the isotropic uniform law on --body",
    "multinorm": "||t|| for --C (put in isotropic position) and --K at --t",
    "MBs": "M(B_s) of the unit ball of the norm for --C, --K and --s",
}


def estimate_quantity(args) -> Estimate:
    q = args.quantity
    stream = RngStream(args.seed, 0)
    count = args.samples
    if q in ("M", "w", "vrad", "L", "volume", "gaussian_gauge", "thin_shell"):
        body = _parse_body(args.body, args.dim, "--body")
        if q == "M":
            return fn.big_m(body, stream, count)
        if q == "w":
            return fn.mean_width(body, stream, count)
        if q == "vrad":
            return fn.vrad(body, stream, count)
        if q == "L":
            return isotropy.isotropic_constant(body, stream, count)
        if q == "volume":
            return isotropy.estimate_volume(body, stream)
        if q == "gaussian_gauge":
            return fn.gaussian_mean_gauge(body, stream, count)
        C, cert = isotropy.isotropic_transform(body, stream.child(0))
        L = C.exact_isotropic_constant or cert.L.value
        return isotropy.thin_shell_sigma(Rescaled(UniformOnBody(C), 1 / L), stream.child(1),
                                         count)
    if q == "I1":
        K = _parse_body(args.K, args.dim, "--K")
        return fn.i1(_measure(args, K), K, stream, count)
    if q in ("multinorm", "MBs"):
        C = _parse_body(args.C, args.dim, "--C")
        K = _parse_body(args.K, args.dim, "--K")
        ctx = mn.MultiNormContext.build(C, K, stream.child(0), method=args.method)
        if q == "multinorm":
            return mn.multi_norm(ctx, _parse_t(args.t), stream.child(1), count)
        if not args.s:
            raise ValueError("--s is required for MBs")
        return mn.m_of_ball(ctx, args.s, stream.child(1))
    raise ValueError(f"unknown quantity {q!r}; choose from {', '.join(QUANTITIES)}")


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isonorm-lab", description=__doc__)
    p.add_argument("--threads", type=int, help="worker cap (same as ISONORM_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config (or a built-in name)")
    r.add_argument("config", help="path to a JSON config, or the name of a built-in experiment")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="seed (overrides the config)")

    e = sub.add_parser("estimate", help="one-shot estimate of a single quantity")
    e.add_argument("quantity", help=", ".join(QUANTITIES))
    e.add_argument("--body", help="named body (cube, ball1, ball2, ballinf, ballp<p>, "
                   "crosspoly, randpoly) or a JSON body spec")
    e.add_argument("--C", help="body C (same forms as --body)")
    e.add_argument("--K", help="body K (same forms as --body)")
    e.add_argument("--dim", type=int, help="dimension for named bodies")
    e.add_argument("--t", help="comma-separated weights, e.g. 1,1")
    e.add_argument("--s", type=int, help="number of weights for MBs")
    e.add_argument("--measure", choices=["uniform", "gaussian"], default="uniform")
    e.add_argument("--method", choices=["rejection", "hit_and_run"], default="rejection")
    e.add_argument("--samples", type=int, default=200_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--json", action="store_true", help="print the JSON record as well")

    sub.add_parser("list", help="list registered experiments")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        os.environ["ISONORM_THREADS"] = str(args.threads)

    if args.command == "list":
        for name, exp in REGISTRY.items():
            print(f"{name:18s} {exp.anchor}")
        return EXIT_OK

    if args.command == "run":
        path = args.config
        if not os.path.exists(path) and args.config in REGISTRY:
            path = builtin_config_path(args.config)
        return run_experiment(path, args.out, args.seed)[0]

    try:
        est = estimate_quantity(args)
    except (ValueError, BodyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.quantity} = {est}")
    if args.json:
        print(json.dumps(clean(est.to_record()), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
