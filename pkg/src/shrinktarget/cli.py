"""Command-line front end: one verb per experiment, JSON on stdout or --out."""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import math
import os
import shlex
import sys
from fractions import Fraction

import mpmath

from . import boxcount, diophantine, measure_probe, scenarios
from .dimension_formulas import dimension_for, dimension_profile
from .errors import DomainError, ManifestError, ShrinkTargetError
from .matrix_core import log_singular_values, parse_matrix, spectral_data
from .preimage_geometry import Ball, TorusPoint, preimage_lattice, preimage_set, rasterize

SCHEMA_VERSION = 1

NAMED_THETA = {
    "golden": diophantine.QuadraticIrrational(1, 1, 5, 2),
    "sqrt2": diophantine.QuadraticIrrational(0, 1, 2, 1),
}


def parse_theta(text: str):
    """golden | sqrt2 | cat | surd:p,q,D[,r] | slope:MATRIX[:stable] | decimal."""
    t = text.strip()
    if t in NAMED_THETA:
        return NAMED_THETA[t]
    if t == "cat":
        return diophantine.eigen_slope(parse_matrix("2,1;1,1"))
    if t.startswith("surd:"):
        parts = [int(v) for v in t[5:].split(",")]
        if len(parts) not in (3, 4):
            raise DomainError("surd needs p,q,D or p,q,D,r")
        return diophantine.QuadraticIrrational(*parts)
    if t.startswith("slope:"):
        body = t[6:]
        which = "unstable"
        if body.endswith(":stable") or body.endswith(":unstable"):
            body, which = body.rsplit(":", 1)
        return diophantine.eigen_slope(parse_matrix(body), which)
    try:
        return mpmath.mpf(t)
    except (ValueError, TypeError):
        raise DomainError(f"cannot read theta {text!r}") from None


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def dump_json(payload: dict) -> str:
    return json.dumps(_jsonable({"schema_version": SCHEMA_VERSION, **payload}),
                      indent=2, sort_keys=True) + "\n"


def _write(path: str, data) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
        fh.write(data)


def _emit(args, payload: dict) -> None:
    text = dump_json(payload)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)


def _z(args, d: int) -> TorusPoint:
    return TorusPoint.zero(d) if args.z is None else TorusPoint.parse(args.z)


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise DomainError(f"--{name.replace('_', '-')} is required for this verb")


# ---------------------------------------------------------------- verbs


def cmd_spectrum(args):
    A = parse_matrix(args.matrix)
    payload = {"verb": "spectrum", "matrix": A.tolist(), "spectrum": spectral_data(A).as_dict()}
    if args.n is not None:
        payload["log_singular_values"] = list(log_singular_values(A, args.n).log_sigma)
        payload["n"] = args.n
    _emit(args, payload)


def cmd_dim(args):
    _need(args, "tau")
    A = parse_matrix(args.matrix)
    res = dimension_for(A, args.tau, upper_only=args.upper_only)
    _emit(args, {"verb": "dim", "matrix": A.tolist(), "tau": args.tau, **res.as_dict()})


def cmd_profile(args):
    A = parse_matrix(args.matrix)
    count = int(round(args.tau_max / args.step))
    grid = [round(i * args.step, 12) for i in range(count + 1)]
    prof = dimension_profile(A, grid, upper_only=args.upper_only)
    if args.csv:
        _write(args.csv, prof.to_csv())
    _emit(args, {"verb": "profile", **prof.as_dict()})


def cmd_preimage(args):
    _need(args, "n")
    A = parse_matrix(args.matrix)
    z = _z(args, A.dim)
    if args.tau is None:
        lat = preimage_lattice(A, args.n, z, cap=args.cap)
        _emit(args, {"verb": "preimage", "matrix": A.tolist(), "n": args.n,
                     "z": z.to_strings(), "count": lat.count,
                     "centers": [p.to_strings() for p in lat.points()]})
        return
    P = preimage_set(A, args.n, z, args.tau, cap=args.cap)
    _emit(args, {"verb": "preimage", **P.to_json()})


def cmd_raster(args):
    _need(args, "n", "tau", "grid")
    A = parse_matrix(args.matrix)
    z = _z(args, A.dim)
    ras = rasterize(A, args.n, z, args.tau, args.grid, args.subsamples, threads=args.threads,
                    method=args.method)
    payload = {"verb": "raster", "matrix": A.tolist(), "n": args.n, "tau": args.tau,
               "z": z.to_strings(), **ras.to_json()}
    if not args.cells:
        payload.pop("cells")
    if args.pgm:
        _write(args.pgm, ras.to_pgm())
        payload["pgm"] = args.pgm
    _emit(args, payload)


def cmd_boxcount(args):
    _need(args, "tau")
    A = parse_matrix(args.matrix)
    z = _z(args, A.dim)
    if args.k is not None:
        _need(args, "n_list")
        fit = boxcount.covering_exponent_fit(A, z, args.tau, args.k, _int_list(args.n_list),
                                             args.subsamples, threads=args.threads)
        if args.csv:
            _write(args.csv, fit.to_csv())
        _emit(args, {"verb": "boxcount", "mode": "fit", **fit.as_dict()})
        return
    _need(args, "n", "delta")
    if args.n_max is not None:
        rep = boxcount.limsup_boxdim_trend(A, args.tau, args.n, args.n_max, args.delta, z=z,
                                           subsamples=args.subsamples, threads=args.threads)
        if args.csv:
            _write(args.csv, rep.to_csv())
        _emit(args, {"verb": "boxcount", "mode": "trend", **rep.as_dict()})
        return
    rep = boxcount.covering_number(A, args.n, z, args.tau, args.delta, args.subsamples,
                                   threads=args.threads)
    _emit(args, {"verb": "boxcount", "mode": "count", **rep.as_dict()})


def cmd_three_distance(args):
    theta = parse_theta(args.theta)
    if args.scan:
        reps = diophantine.three_distance_scan(theta, args.N)
        if args.csv:
            _write(args.csv, diophantine.three_distance_csv(reps))
        ratios = [r.ratio for r in reps]
        _emit(args, {"verb": "three-distance", "theta": str(theta), "N_max": args.N,
                     "max_gap_count": max(len(r.lengths) for r in reps),
                     "max_ratio": max(ratios),
                     "N_dmax_range": [min(r.N * r.d_max for r in reps),
                                      max(r.N * r.d_max for r in reps)]})
        return
    rep = diophantine.three_distance(theta, args.N)
    _emit(args, {"verb": "three-distance", **rep.as_dict()})


def cmd_cf(args):
    theta = parse_theta(args.theta)
    if not isinstance(theta, diophantine.QuadraticIrrational):
        raise DomainError("continued fractions need a quadratic irrational (golden, sqrt2, cat, surd:, slope:)")
    cf = diophantine.continued_fraction(theta, terms=args.terms)
    payload = {"verb": "cf", "theta": str(theta), **cf.as_dict()}
    if args.liouville:
        payload["liouville"] = diophantine.liouville_gap(theta, args.liouville).as_dict()
    _emit(args, payload)


def cmd_lattice_count(args):
    _need(args, "n", "radius")
    A = parse_matrix(args.matrix)
    center = TorusPoint.parse(args.center).coords if args.center else (0, 0)
    res = diophantine.lattice_count_ellipse(A, args.n, Fraction(args.radius), center=center)
    _emit(args, {"verb": "lattice-count", "matrix": A.tolist(), **res.as_dict()})


def _sampler(args) -> measure_probe.MuSampler:
    _need(args, "n", "tau")
    A = parse_matrix(args.matrix)
    return measure_probe.MuSampler(A, args.n, args.tau, z=_z(args, A.dim), seed=args.seed,
                                   budget=args.samples, batches=args.batches, threads=args.threads)


def cmd_probe_mass(args):
    A = parse_matrix(args.matrix)
    if args.holder:
        _need(args, "n", "tau")
        fit = measure_probe.holder_slope(A, args.tau, args.n, x=args.center, z=_z(args, A.dim),
                                         seed=args.seed, budget=args.samples, batches=args.batches,
                                         threads=args.threads, method=args.method)
        if args.csv:
            _write(args.csv, fit.to_csv())
        _emit(args, {"verb": "probe-mass", "mode": "holder", **fit.as_dict()})
        return
    sm = _sampler(args)
    ball = None
    if args.center is not None:
        _need(args, "radius")
        ball = Ball(TorusPoint.parse(args.center), float(args.radius))
    rep = measure_probe.mu_n_ball(sm, ball)
    _emit(args, {"verb": "probe-mass", "mode": "ball", **rep.as_dict()})


def cmd_probe_ratio(args):
    _need(args, "n", "tau")
    A = parse_matrix(args.matrix)
    radius = 0.2 if args.radius is None else float(args.radius)
    balls = measure_probe.ball_grid(A.dim, args.balls, radius)
    rep = measure_probe.weak_convergence_ratio(A, args.tau, args.n, balls, z=_z(args, A.dim),
                                               seed=args.seed, budget=args.samples,
                                               batches=args.batches, threads=args.threads)
    _emit(args, {"verb": "probe-ratio", **rep.as_dict()})


def cmd_riesz(args):
    sm = _sampler(args)
    if args.bound:
        _emit(args, {"verb": "riesz", "mode": "bound", "params": sm.params(),
                     **measure_probe.energy_bound_check(sm, args.s)})
        return
    rep = measure_probe.riesz_energy(sm, args.s, method=args.estimator)
    _emit(args, {"verb": "riesz", "mode": "energy", **rep.as_dict()})


def _scenario_kwargs(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise DomainError(f"scenario parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def cmd_scenario(args):
    fn = scenarios.SCENARIOS.get(args.name)
    if fn is None:
        raise DomainError(f"unknown scenario {args.name!r}; choose from {sorted(scenarios.SCENARIOS)}")
    kwargs = _scenario_kwargs(args.param)
    try:
        res = fn(**kwargs)
    except TypeError as exc:
        raise DomainError(f"bad scenario parameters: {exc}") from None
    if args.artifacts:
        res.write_artifacts(args.artifacts)
    print(res.summary())
    if args.out:
        _write(args.out, res.to_json() + "\n")
    return 0 if res.passed else 1


def _manifest_entries(path: str) -> list[list[str]]:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: cannot read manifest ({exc})") from None
    if isinstance(raw, dict):
        raw = raw.get("commands", [])
    if not isinstance(raw, list):
        raise ManifestError(f"{path}: manifest must be a list or have a 'commands' list")
    entries = []
    for i, item in enumerate(raw):
        if isinstance(item, str):
            argv = shlex.split(item)
        elif isinstance(item, list):
            argv = [str(v) for v in item]
        elif isinstance(item, dict) and "verb" in item:
            argv = [str(item["verb"])]
            for k, v in item.get("args", {}).items():
                flag = "--" + k.replace("_", "-")
                if v is True:
                    argv.append(flag)
                elif v is not False and v is not None:
                    argv += [flag, str(v)]
            for extra in item.get("positional", []):
                argv.append(str(extra))
        else:
            raise ManifestError(f"{path}: entry {i} must be a string, list or object with 'verb'")
        if not argv or argv[0] == "run-manifest":
            raise ManifestError(f"{path}: entry {i} has no runnable verb")
        entries.append(argv)
    return entries


OUTPUT_FLAGS = ("--out", "--csv", "--pgm", "--artifacts")


def _outputs(argv: list[str]) -> list[str]:
    outs = []
    for i, tok in enumerate(argv):
        for flag in OUTPUT_FLAGS:
            if tok == flag and i + 1 < len(argv):
                outs.append(argv[i + 1])
            elif tok.startswith(flag + "="):
                outs.append(tok.split("=", 1)[1])
    return outs


def cmd_run_manifest(args):
    entries = _manifest_entries(args.manifest)
    seen: dict[str, int] = {}
    for i, argv in enumerate(entries):
        for o in _outputs(argv):
            key = os.path.normpath(o)
            if key in seen:
                raise ManifestError(f"{args.manifest}: entry {i} writes {o!r}, already written by entry {seen[key]}")
            seen[key] = i
    index = []
    worst = 0
    for i, argv in enumerate(entries):
        # entries without --out would interleave their JSON with the index
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = main(argv)
        worst = max(worst, code)
        index.append({"entry": i, "argv": argv, "exit_code": code, "outputs": _outputs(argv),
                      "stdout": buf.getvalue()})
    _emit(args, {"verb": "run-manifest", "manifest": args.manifest, "entries": index,
                 "count": len(index)})
    return worst


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, matrix: bool = True):
    if matrix:
        p.add_argument("--matrix", required=True, help='integer matrix, "a,b;c,d" or JSON')
    p.add_argument("--out", help="write the JSON result here instead of stdout")


def _probe_flags(p):
    p.add_argument("--n", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--z", help='target center, e.g. "1/2,0"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=10**5)
    p.add_argument("--batches", type=int, default=measure_probe.MIN_BATCHES)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shrinktarget",
                                 description="Shrinking-target experiments for toral endomorphisms.")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                    help="worker threads; results do not depend on it")
    sub = ap.add_subparsers(dest="verb", required=True, metavar="verb")

    p = sub.add_parser("spectrum", help="exponents, characteristic polynomial, singular values")
    _common(p)
    p.add_argument("--n", type=int, help="also report log singular values of A^n")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("dim", help="dimension value at one tau")
    _common(p)
    p.add_argument("--tau", type=float)
    p.add_argument("--upper-only", action="store_true")
    p.set_defaults(func=cmd_dim)

    p = sub.add_parser("profile", help="dimension over a tau grid")
    _common(p)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--tau-max", type=float, default=1.5)
    p.add_argument("--upper-only", action="store_true")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("preimage", help="preimage centers (and shape with --tau)")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--z")
    p.add_argument("--tau", type=float)
    p.add_argument("--cap", type=int, default=10**6)
    p.set_defaults(func=cmd_preimage)

    p = sub.add_parser("raster", help="grid cells marked by E_n")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--z")
    p.add_argument("--grid", type=int)
    p.add_argument("--subsamples", type=int, default=1)
    p.add_argument("--method", choices=["auto", "dense", "sparse"], default="auto")
    p.add_argument("--pgm")
    p.add_argument("--cells", action="store_true", help="include the cell list in the JSON")
    p.set_defaults(func=cmd_raster)

    p = sub.add_parser("boxcount", help="covering numbers, exponent fits, limsup trends")
    _common(p)
    p.add_argument("--n", type=int, help="stage (or first stage with --n-max)")
    p.add_argument("--tau", type=float)
    p.add_argument("--z")
    p.add_argument("--delta", type=float)
    p.add_argument("--subsamples", type=int, default=4)
    p.add_argument("--k", type=int, help="fit the slope at delta_n = e^{-(l_k + tau) n}")
    p.add_argument("--n-list", help='stages for --k, e.g. "3..7"')
    p.add_argument("--n-max", type=int, help="box counts of unions E_n .. E_{n_max}")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_boxcount)

    p = sub.add_parser("three-distance", help="gap lengths of {k theta}")
    _common(p, matrix=False)
    p.add_argument("--theta", required=True, help=parse_theta.__doc__)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--scan", action="store_true", help="every N up to --N")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_three_distance)

    p = sub.add_parser("cf", help="continued fraction of a quadratic irrational")
    _common(p, matrix=False)
    p.add_argument("--theta", required=True, help=parse_theta.__doc__)
    p.add_argument("--terms", type=int, default=20)
    p.add_argument("--liouville", type=int, metavar="Q", help="also report min q^2 |theta - p/q| up to Q")
    p.set_defaults(func=cmd_cf)

    p = sub.add_parser("lattice-count", help="integer points in the ellipse A^n B(c, r)")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--radius", help="decimal or p/q")
    p.add_argument("--center", help='e.g. "1/2,0"')
    p.set_defaults(func=cmd_lattice_count)

    p = sub.add_parser("probe-mass", help="mu_n(B), or the Hoelder slope with --holder")
    _common(p)
    _probe_flags(p)
    p.add_argument("--center")
    p.add_argument("--radius", type=float)
    p.add_argument("--holder", action="store_true")
    p.add_argument("--method", choices=["draws", "ball", "mixed"], default="draws")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_probe_mass)

    p = sub.add_parser("probe-ratio", help="mu_n(B) / Leb(B) over macroscopic balls")
    _common(p)
    _probe_flags(p)
    p.add_argument("--balls", type=int, default=20)
    p.add_argument("--radius", type=float)
    p.set_defaults(func=cmd_probe_ratio)

    p = sub.add_parser("riesz", help="s-energy of mu_n")
    _common(p)
    _probe_flags(p)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--estimator", choices=["mis", "pairs"], default="mis")
    p.add_argument("--bound", action="store_true", help="compare with the mass-exponent bound")
    p.set_defaults(func=cmd_riesz)

    p = sub.add_parser("scenario", help="run a named scenario")
    p.add_argument("name", help=", ".join(sorted(scenarios.SCENARIOS)))
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--artifacts", help="directory for CSV artifacts")
    p.add_argument("--out", help="write the scenario JSON here")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("run-manifest", help="run commands listed in a JSON manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="summary index JSON")
    p.set_defaults(func=cmd_run_manifest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code = args.func(args)
    except ShrinkTargetError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: DomainError: {exc}", file=sys.stderr)
        return 2
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
