"""Command-line front end.

Exit status: 0 on success, 2 when a checked inequality fails, 1 on bad input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import configs, verify
from .annuli import annuli_from_trace, annuli_to_csv, mcr_exact, mcr_paper_partition
from .configs import ConfigError, Job, job_from_json, job_to_json
from .core import Region, make_standard_cutoff
from .energy import ExtrapolationError, renormalized_energy
from .fields import synthetic_j
from .geometry import grow, growth_family, initial_collection, trace_from_csv, trace_to_csv
from .lorentz import distribution_csv, embedding_check, lorentz_norm, lp_norm, quasi_norm, sample_field
from .render import annuli_svg, balls_svg, covering_svg

THREADS_ENV = "RENORM_THREADS"
EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are input errors; argparse would exit with 2, which is reserved for failed checks
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _job(path: str, need_region: bool = False) -> Job:
    job = job_from_json(_read(path))
    if need_region and job.region is None:
        raise InputError(f"{path}: missing field 'region'")
    return job


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"--{name} expects comma-separated numbers, got {text!r}") from exc


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise InputError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc


# -- commands ----------------------------------------------------------------


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    region = None
    if args.kind == "hex":
        cfg, region = verify.neutral_config("hex", args.n)
    elif args.kind == "square":
        cfg, region = verify.neutral_config("square", args.n)
    elif args.kind == "line":
        periods = max(1, args.n // 2)
        cfg = configs.line_lattice(periods * configs.LINE_SPACING - 1e-9)
        region = verify.line_region(periods, configs.LINE_SPACING)
        _emit(job_to_json(cfg, "line", region), args.out)
        return EXIT_OK
    else:
        if args.seed is None:
            raise InputError("--seed is required for random configurations")
        R = math.sqrt(2 * args.n)
        region = Region.ball((0.0, 0.0), R)
        cfg = configs.poisson_points(args.n, Region.ball((0.0, 0.0), R - 0.5), rng, args.min_distance)
    _emit(job_to_json(cfg, args.background, region), args.out)
    return EXIT_OK


def cmd_grow(args) -> int:
    job = _job(args.points)
    if args.eta is not None:
        trace = grow(initial_collection(job.config, args.eta), args.target)
    else:
        trace = growth_family(job.config, r=args.target, r0=args.start)
    _emit(trace_to_csv(trace), args.out)
    if args.svg:
        Path(args.svg).write_text(balls_svg(trace.collection(len(trace.events) - 1), job.config.points))
    return EXIT_OK


def cmd_annuli(args) -> int:
    trace = trace_from_csv(_read(args.trace))
    coll = annuli_from_trace(trace)
    part = mcr_exact(coll)
    _emit(annuli_to_csv(coll, part), args.out)
    if args.svg:
        Path(args.svg).write_text(annuli_svg(coll, part))
    return EXIT_OK


def cmd_mcr(args) -> int:
    trace = trace_from_csv(_read(args.trace))
    coll = annuli_from_trace(trace)
    k_exact = mcr_exact(coll).K
    k_forest = mcr_paper_partition(coll).K
    n = trace.n_initial
    ok = k_exact <= k_forest <= n
    _emit(_dump({"K_exact": k_exact, "K_construction": k_forest, "n": n, "annuli": len(coll), "bound_holds": ok}), args.out)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_energy(args) -> int:
    job = _job(args.points, need_region=True)
    chi = make_standard_cutoff(job.region)
    j = synthetic_j(job.config, job.background)
    try:
        rep = renormalized_energy(j, chi, job.config, tol=args.tol)
    except ExtrapolationError as exc:
        _emit(exc.report.to_json(), args.out)
        print(str(exc), file=sys.stderr)
        return EXIT_CHECK
    _emit(rep.to_json() + "\n", args.out)
    return EXIT_OK


def cmd_lorentz(args) -> int:
    job = _job(args.points, need_region=True)
    U = job.region
    chi = make_standard_cutoff(U)
    j = synthetic_j(job.config, job.background)
    s = verify.sample_weighted_field(j, U, chi, args.h, job.config.points)
    chk = embedding_check(s, args.p, max(U.area, s.total_area))
    rec = {
        "quasi_norm": quasi_norm(s),
        "norm": lorentz_norm(s),
        "p": args.p,
        "lp": lp_norm(s, args.p),
        "embedding_lhs": chk.lhs,
        "embedding_rhs": chk.rhs,
        "C_p": chk.C_p,
        "embedding_holds": chk.holds,
        "h": args.h,
    }
    _emit(_dump(rec), args.out)
    if args.dist_csv:
        top = max(float(s.values.max()), 1.0)
        ts = np.geomspace(top * 1e-3, top, 60)
        Path(args.dist_csv).write_text(distribution_csv(s, ts))
    return EXIT_OK if chk.holds else EXIT_CHECK


def cmd_verify(args) -> int:
    job = _job(args.points, need_region=True)
    U = job.region
    chi = make_standard_cutoff(U)
    con = verify.localized_construction(job.config, U, n_jobs=_threads(args))
    rep = verify.check_theorem_main(job.config, U, chi, beta=args.beta, background=job.background, tol=args.tol, construction=con)
    cor = verify.check_corollary(job.config, U, chi, args.p, job.background, h=args.h, W=rep.W)
    bracket = rep.n_term + rep.boundary_term + 1
    theorem_margin = verify.FITTED_C_BETA * bracket - (rep.lhs - (1 + rep.beta) * rep.W)
    margins = {
        "theorem": theorem_margin,
        "G_weak_norm": rep.G_norm_sq_bound_per_n - rep.G_norm_sq_per_n,
        "embedding_chain": cor.weak_norm - cor.chain_lhs,
    }
    out = {
        "report": json.loads(rep.to_json()),
        "corollary": json.loads(cor.to_json()),
        "fitted_C_beta": verify.FITTED_C_BETA,
        "margins": margins,
        "all_hold": all(m >= 0 for m in margins.values()),
    }
    _emit(_dump(out), args.out)
    if args.svg:
        Path(args.svg).write_text(covering_svg(con.covering.centers, con.covering.radius, [k.ball for k in con.kept], job.config.points))
    return EXIT_OK if out["all_hold"] else EXIT_CHECK


def cmd_scaling(args) -> int:
    ns = [int(v) for v in _floats(args.n, "n")]
    res = verify.scaling_study(args.kind, args.p, ns, h=args.h, tol=args.tol)
    _emit(res.to_csv(), args.out)
    summary = {"slope": res.slope, "corollary_slope": res.corollary_slope, "baseline_slope": res.baseline_slope}
    sys.stderr.write(_dump(summary))
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = verify.compare_lattices(_floats(args.R, "R"), K=args.K, tol=args.tol, n_jobs=_threads(args))
    out: dict = {"planar": rows}
    ok = all(r["hex_lower"] for r in rows)
    if args.line:
        line = verify.line_lattice_study(n_perturbations=args.perturbations, seed=args.seed, tol=args.tol)
        out["line"] = line
        ok &= line["lattice_lowest"]
    _emit(_dump(out), args.out)
    return EXIT_OK if ok else EXIT_CHECK


# -- parser ------------------------------------------------------------------


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v

    return conv


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="renorm-currents", description=__doc__)
    ap.add_argument("--threads", type=_positive(int), default=None, help=f"worker count (default ${THREADS_ENV} or 1)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a configuration file")
    g.add_argument("--kind", choices=("hex", "square", "line", "poisson"), required=True)
    g.add_argument("--n", type=_positive(int), required=True)
    g.add_argument("--background", choices=("zero", "lebesgue", "line"), default="lebesgue")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--min-distance", type=float, default=0.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    g = sub.add_parser("grow", help="ball growth trace as CSV")
    g.add_argument("--points", required=True)
    g.add_argument("--target", type=_positive(float), required=True)
    g.add_argument("--start", type=_positive(float), default=None, help="start total radius")
    g.add_argument("--eta", type=_positive(float), default=None, help="grow from balls of this radius instead")
    g.add_argument("--out")
    g.add_argument("--svg")
    g.set_defaults(func=cmd_grow)

    g = sub.add_parser("annuli", help="growth annuli with rearrangement classes as CSV")
    g.add_argument("--trace", required=True)
    g.add_argument("--out")
    g.add_argument("--svg")
    g.set_defaults(func=cmd_annuli)

    g = sub.add_parser("mcr", help="rearrangement numbers of a trace")
    g.add_argument("--trace", required=True)
    g.add_argument("--out")
    g.set_defaults(func=cmd_mcr)

    g = sub.add_parser("energy", help="renormalized energy report as JSON")
    g.add_argument("--points", required=True)
    g.add_argument("--tol", type=_positive(float), default=1e-3)
    g.add_argument("--out")
    g.set_defaults(func=cmd_energy)

    g = sub.add_parser("lorentz", help="weak-L2 and L^p quantities of sqrt(chi) j")
    g.add_argument("--points", required=True)
    g.add_argument("--p", type=float, default=1.5)
    g.add_argument("--h", type=_positive(float), default=1 / 16)
    g.add_argument("--dist-csv")
    g.add_argument("--out")
    g.set_defaults(func=cmd_lorentz)

    g = sub.add_parser("verify", help="full localized construction and inequality checks")
    g.add_argument("--points", required=True)
    g.add_argument("--beta", type=_positive(float), default=1.0)
    g.add_argument("--p", type=float, default=1.5)
    g.add_argument("--h", type=_positive(float), default=1 / 16)
    g.add_argument("--tol", type=_positive(float), default=1e-2)
    g.add_argument("--out")
    g.add_argument("--svg")
    g.set_defaults(func=cmd_verify)

    g = sub.add_parser("scaling", help="L^p norm against n over lattice patches")
    g.add_argument("--kind", choices=("hex", "square"), default="hex")
    g.add_argument("--p", type=float, default=1.5)
    g.add_argument("--n", default=",".join(str(v) for v in configs.HEX_SHELLS))
    g.add_argument("--h", type=_positive(float), default=1 / 8)
    g.add_argument("--tol", type=_positive(float), default=1e-2)
    g.add_argument("--out")
    g.set_defaults(func=cmd_scaling)

    g = sub.add_parser("compare-lattices", help="hexagonal against square W per area, and the line lattice")
    g.add_argument("--R", default="6,9,12")
    g.add_argument("--K", type=_positive(int), default=4)
    g.add_argument("--tol", type=_positive(float), default=1e-2)
    g.add_argument("--line", action="store_true")
    g.add_argument("--perturbations", type=_positive(int), default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_compare)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors exit 1, --help exits 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
