"""Command line interface.

Subcommands:
  gen          write a perturbed-lattice particle file (CSV)
  indicators   covering radius and Voronoi deviation of a particle file
  weights      check a catalog weight / construct a polynomial weight
  convergence  run a refinement study and write its CSV + plot data
  compat-check verify the five native-vs-generalized operator identities

``convergence`` also accepts --config pointing at a JSON file whose keys
mirror the flags; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

import numpy as np

from .compat import EQUIVALENCE_NAMES, equivalence_suite
from .geometry import (ParticleSystem, RectDomain, covering_radius,
                       load_particles, perturbed_lattice, save_particles,
                       uniform_volumes, voronoi_decompose)
from .indicators import (regularity_report, voronoi_deviation_bound,
                         voronoi_deviation_exact)
from .harness import LevelCache, StudyConfig, influence_radius, run_study
from .weights import (catalog, check_admissible, check_moment_order,
                      check_smoothness_order, construct_polynomial_weight,
                      get_weight)


def _domain_from_args(args) -> RectDomain:
    lower = tuple(float(v) for v in args.lower.split(","))
    upper = tuple(float(v) for v in args.upper.split(","))
    return RectDomain(lower=lower, upper=upper, extension=args.extension)


def _add_domain_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lower", default="0,0", help="core box lower corner, comma separated")
    p.add_argument("--upper", default="1,1", help="core box upper corner")
    p.add_argument("--extension", type=float, default=0.1,
                   help="extension width around the core box")


def parse_dx_levels(text: str) -> tuple[float, ...]:
    """Parse '2^-5..2^-9' (descending dyadic range) or a comma list of floats."""
    m = re.fullmatch(r"2\^(-?\d+)\.\.2\^(-?\d+)", text.strip())
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if a <= b:
            raise ValueError("dyadic range must be decreasing, e.g. 2^-5..2^-9")
        return tuple(2.0**e for e in range(a, b - 1, -1))
    return tuple(float(v) for v in text.split(","))


def _cmd_gen(args) -> int:
    domain = _domain_from_args(args)
    pts = perturbed_lattice(args.dx, args.noise, args.seed, domain)
    vols = uniform_volumes(pts.shape[0], domain)
    ps = ParticleSystem(domain=domain, points=pts, volumes=vols,
                        h=0.5 * domain.extension)
    save_particles(args.out, ps)
    print(f"wrote {pts.shape[0]} particles to {args.out}")
    return 0


def _cmd_indicators(args) -> int:
    domain = _domain_from_args(args)
    h = args.h if args.h is not None else 0.5 * domain.extension
    ps = load_particles(args.pts, domain, h)
    diagram = voronoi_decompose(ps)
    r_n = covering_radius(diagram, ps)
    if ps.n <= args.exact_lp_cap:
        dev = voronoi_deviation_exact(ps, diagram, cap=args.exact_lp_cap)
    else:
        dev = voronoi_deviation_bound(ps, diagram)
    cols = ["level", "dx", "h", "N", "r_N", "d_N_kind", "d_N_value"]
    vals = [args.level if args.level is not None else "",
            repr(args.dx) if args.dx is not None else "",
            repr(h), str(ps.n), repr(r_n), dev.kind, repr(dev.value)]
    if args.m is not None:
        rep = regularity_report(r_n, dev.value, h, args.m)
        cols.append(f"c0_m{args.m:g}")
        vals.append(repr(rep.c0))
    print(",".join(cols))
    print(",".join(str(v) for v in vals))
    return 0


def _cmd_weights(args) -> int:
    if args.weights_cmd == "check":
        w = get_weight(args.name)
        adm = check_admissible(w)
        print(f"weight {w.name} (d={w.dim}, claimed n={w.moment_order}, "
              f"k={w.smooth_order})")
        if w.renormalized:
            print("  note: stored constant was renormalized at load")
        print(f"  support [0,1]:        {'pass' if adm.support_ok else 'FAIL'}")
        print(f"  continuity:           {'pass' if adm.continuous else 'FAIL'}")
        print(f"  unit integral:        {'pass' if adm.unit_integral else 'FAIL'}"
              f" (integral = {adm.integral:.12g})")
        mom = check_moment_order(w, w.moment_order)
        print(f"  moment order n={w.moment_order}:    "
              f"{'pass' if mom.ok else 'FAIL'} residuals={mom.residuals}")
        if w.smooth_order is not None:
            ok = check_smoothness_order(w, w.smooth_order)
            print(f"  smoothness k={w.smooth_order}:       {'pass' if ok else 'FAIL'}")
        return 0 if adm.passed and mom.ok else 1
    if args.weights_cmd == "construct":
        w = construct_polynomial_weight(args.d, args.n, args.p)
        adm = check_admissible(w)
        mom = check_moment_order(w, args.n)
        shape = [float(c) for c in w.coeffs[0]]
        print(f"constructed {w.name}: scale gamma = {w.scale!r}")
        print(f"  shape coefficients (1, a_1..a_p): {shape}")
        print(f"  monomial coefficients (scaled): {[w.scale * c for c in shape]}")
        print(f"  admissible: {'pass' if adm.passed else 'FAIL'}"
              f" (integral = {adm.integral:.12g})")
        print(f"  moment order n={args.n}: {'pass' if mom.ok else 'FAIL'}")
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(w.to_json())
            print(f"  wrote definition to {args.out}")
        return 0 if adm.passed and mom.ok else 1
    raise SystemExit("unknown weights subcommand")


def _cmd_convergence(args) -> int:
    cfg_file = {}
    if args.config:
        with open(args.config) as fh:
            cfg_file = json.load(fh)

    def pick(flag, default):
        value = getattr(args, flag)
        if value is not None:
            return value
        return cfg_file.get(flag.replace("_", "-"), cfg_file.get(flag, default))

    domain = RectDomain(
        lower=tuple(float(v) for v in str(pick("lower", "0,0")).split(",")),
        upper=tuple(float(v) for v in str(pick("upper", "1,1")).split(",")),
        extension=float(pick("extension", 0.1)))
    levels = pick("dx_levels", "2^-5..2^-7")
    if isinstance(levels, str):
        levels = parse_dx_levels(levels)
    cfg = StudyConfig(
        dx_levels=tuple(levels),
        m=float(pick("m", 3)),
        weight_name=str(pick("weight", "I1")),
        operator=str(pick("op", "interp")),
        seed=int(pick("seed", 0)),
        noise_bound=float(pick("noise", 0.25)),
        test_function=str(pick("test_function", "sin2pi-sum")),
        domain=domain)
    result = run_study(cfg, cache=LevelCache())
    out = pick("out", "study.csv")
    result.to_csv(out)
    plot_path = str(out).rsplit(".", 1)[0] + ".dat"
    result.to_plot_file(plot_path)
    sys.stdout.write(result.csv_text())
    theo = "N/A" if result.theoretical is None else f"{result.theoretical:g}"
    finest = result.finest_rate()
    print(f"# finest-pair observed rate: "
          f"{'n/a' if finest is None else format(finest, '.3f')} "
          f"(theoretical {theo}); wrote {out} and {plot_path}")
    return 0


def _cmd_compat_check(args) -> int:
    gaps = equivalence_suite(seed=args.seed, configs=args.configs, n=args.n)
    print("identity        max |native - generalized|   verdict")
    ok = True
    for name in EQUIVALENCE_NAMES:
        passed = gaps[name] <= args.tol
        ok &= passed
        print(f"{name:<15} {gaps[name]:>26.3e}   {'pass' if passed else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="particleops",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a perturbed lattice CSV")
    p.add_argument("--dx", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--out", required=True)
    _add_domain_flags(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("indicators", help="indicators of a particle CSV")
    p.add_argument("--pts", required=True)
    p.add_argument("--exact-lp-cap", type=int, default=40, dest="exact_lp_cap")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--m", type=float, default=None)
    p.add_argument("--level", default=None)
    p.add_argument("--dx", type=float, default=None)
    _add_domain_flags(p)
    p.set_defaults(func=_cmd_indicators)

    p = sub.add_parser("weights", help="weight catalog utilities")
    wsub = p.add_subparsers(dest="weights_cmd", required=True)
    pc = wsub.add_parser("check")
    pc.add_argument("--name", required=True)
    pg = wsub.add_parser("construct")
    pg.add_argument("--d", type=int, required=True)
    pg.add_argument("--n", type=int, required=True)
    pg.add_argument("--p", type=int, required=True)
    pg.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("convergence", help="run a refinement study")
    p.add_argument("--m", type=float, default=None)
    p.add_argument("--weight", default=None)
    p.add_argument("--op", default=None, choices=("interp", "grad", "lap"))
    p.add_argument("--dx-levels", default=None, dest="dx_levels",
                   help="e.g. 2^-5..2^-9 or comma-separated floats")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--test-function", default=None, dest="test_function")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None,
                   help="JSON file with keys mirroring the flags")
    p.add_argument("--lower", default=None)
    p.add_argument("--upper", default=None)
    p.add_argument("--extension", type=float, default=None)
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("compat-check", help="verify operator equivalences")
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--configs", type=int, default=100)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-13)
    p.set_defaults(func=_cmd_compat_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
