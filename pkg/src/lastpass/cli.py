"""Command-line interface: densities, cdfs, atoms, boundaries, inversion, moments, simulation, checks.

Boundary grammar: ``shape:key=val,...`` with an optional ``kind=lower|upper`` key.

  explicit   const:a=1   line_down:a=1,b=1   sqrt:a=1,gamma=-0.5   line_up:a=1,b=1
             parabola:a=1,b=1   sqrt_root:a=0,b=0   sqrtquad:a=1,b=1   sqrt_line:a=1,b=1
             inv_parabola:a=1,b=1
  implicit   resolvent:a=1,b=1                 F = a delta_0 + delta_b
             resolvent:weights=1;2,rates=0;1   general atomic F (';' separates list items)
             density_level:zeta=2,alpha=0.3    level c = alpha q(zeta,0,0) (or c=...)
             kernel:a=1,b=1                    h(u) = a + e^{-b u} (or weights/rates)

A config file (``--boundary-config``) holds the same keys, one ``key=val`` per line,
including ``shape=...``; ``#`` starts a comment.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .numkernel import NumericalError
from .montecarlo import json_safe
from .diffusion import AtomicMeasure, make_diffusion
from .boundary import (ImplicitBoundary, exp_mixture_kernel, export_boundary_csv, implicit_from_density_level,
                       implicit_from_kernel, implicit_from_resolvent, make_explicit)

PROG = "lastpass"
COMMANDS = ("density", "cdf", "atom", "boundary", "invert", "moments", "simulate", "verify")
FAMILIES = ("bm", "bm_drift", "reflected_bm", "bessel", "bessel_drift", "radial_ou")
EXPLICIT_SHAPES = ("const", "line_down", "sqrt", "line_up", "parabola", "sqrt_root", "sqrtquad", "sqrt_line",
                   "inv_parabola")
IMPLICIT_SHAPES = ("resolvent", "density_level", "kernel")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- manifest

@dataclass
class RunManifest:
    command: str
    argv: list
    diffusion: dict | None = None
    boundary: dict | None = None
    x: float | None = None
    grid: dict | None = None
    seed: int | None = None
    tolerances: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    residual_summary: dict = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(json_safe(asdict(self)), indent=2, sort_keys=True, default=str)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, path):
        Path(path).write_text(self.to_json() + "\n")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- parsing

def _num(v):
    try:
        return float(v)
    except ValueError:
        raise UsageError(f"not a number: {v!r}") from None


def parse_kv(text: str) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise UsageError(f"expected key=val, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_boundary_spec(spec: str) -> dict:
    if ":" in spec:
        shape, rest = spec.split(":", 1)
    else:
        shape, rest = spec, ""
    d = parse_kv(rest)
    d["shape"] = _shape(shape)
    return d


def _shape(s):
    s = s.strip()
    if s not in EXPLICIT_SHAPES + IMPLICIT_SHAPES:
        raise UsageError(f"unknown boundary shape {s!r}; expected one of {', '.join(EXPLICIT_SHAPES + IMPLICIT_SHAPES)}")
    return s


def read_boundary_config(path) -> dict:
    d = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line {line!r}")
        k, v = line.split("=", 1)
        d[k.strip()] = v.strip()
    if "shape" not in d:
        raise UsageError("boundary config needs a shape= line")
    d["shape"] = _shape(d["shape"])
    return d


def parse_grid(text: str) -> dict:
    parts = text.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("lin", "log")):
        raise UsageError(f"grid must be lo:hi:n[:lin|log], got {text!r}")
    lo, hi = _num(parts[0]), _num(parts[1])
    try:
        n = int(parts[2])
    except ValueError:
        raise UsageError(f"grid count must be an integer, got {parts[2]!r}") from None
    spacing = parts[3] if len(parts) == 4 else "lin"
    if n < 1 or hi < lo or (spacing == "log" and lo <= 0):
        raise UsageError(f"invalid grid {text!r}")
    return {"lo": lo, "hi": hi, "n": n, "spacing": spacing}


def grid_values(g: dict) -> np.ndarray:
    if g["spacing"] == "log":
        return np.geomspace(g["lo"], g["hi"], g["n"])
    return np.linspace(g["lo"], g["hi"], g["n"])


def _list(v):
    return [_num(s) for s in str(v).split(";") if s.strip()]


def diffusion_from_args(args):
    p = {}
    for k in ("mu", "nu", "c", "gamma"):
        v = getattr(args, k, None)
        if v is not None:
            p[k] = v
    try:
        return make_diffusion(args.family, **p), p
    except NumericalError as exc:
        if "missing parameter" in str(exc):
            raise UsageError(str(exc)) from None
        raise


def build_boundary(spec: dict, d):
    spec = dict(spec)
    shape = spec.pop("shape")
    kind = spec.pop("kind", None)
    if kind not in (None, "lower", "upper"):
        raise UsageError(f"kind must be lower or upper, got {kind!r}")
    if shape == "resolvent":
        if "weights" in spec:
            F = AtomicMeasure(_list(spec["weights"]), _list(spec["rates"]))
        else:
            F = AtomicMeasure([_num(spec.get("a", 1.0)), 1.0], [0.0, _num(spec["b"])])
        return implicit_from_resolvent(d, F, kind or "lower")
    if shape == "density_level":
        zeta = _num(spec["zeta"])
        c = _num(spec["c"]) if "c" in spec else _num(spec["alpha"]) * float(d.q0(zeta, 0.0))
        return implicit_from_density_level(d, zeta, c)
    if shape == "kernel":
        if "weights" in spec:
            F = AtomicMeasure(_list(spec["weights"]), _list(spec["rates"]))
        else:
            F = AtomicMeasure([_num(spec.get("a", 1.0)), 1.0], [0.0, _num(spec["b"])])
        return implicit_from_kernel(d, exp_mixture_kernel(F), f"exp mixture {F.items()}")
    try:
        return make_explicit(shape, kind, **{k: _num(v) for k, v in spec.items()})
    except NumericalError as exc:
        if "missing parameter" in str(exc):
            raise UsageError(str(exc)) from None
        raise


def boundary_from_args(args, d):
    if args.boundary and args.boundary_config:
        raise UsageError("use either --boundary or --boundary-config")
    if args.boundary:
        spec = parse_boundary_spec(args.boundary)
    elif args.boundary_config:
        spec = read_boundary_config(args.boundary_config)
    else:
        raise UsageError("a boundary is required (--boundary or --boundary-config)")
    try:
        return build_boundary(spec, d), spec
    except KeyError as exc:
        raise UsageError(f"missing boundary key {exc}") from None


def build_law(d, b, x):
    """Last-passage law for (d, b, x): catalog case or the Bessel-with-drift square-root family."""
    from .laws import LastPassageLaw, make_case
    if getattr(d, "family", None) == "bessel_drift" and b.shape == "sqrtquad":
        from .transforms import SqrtQuadLaw
        return SqrtQuadLaw(d.nu, d.c, b.params["a"], b.params["b"], x)
    return LastPassageLaw(make_case(d, b), x)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{float(v):.17g}" for v in r])


def _default_out(args, ext):
    return args.out or f"{PROG}_{args.command}.{ext}"


def _residual_summary(law):
    try:
        res = float(law.total_mass() - 1.0) if hasattr(law, "total_mass") else None
    except NumericalError as exc:
        return {"normalization_residual": None, "error": str(exc)}
    return {"normalization_residual": res}


# ---------------------------------------------------------------- commands

def cmd_density(args, man):
    d, _ = diffusion_from_args(args)
    b, _ = boundary_from_args(args, d)
    law = build_law(d, b, args.x)
    grid = grid_values(man.grid)
    out = _default_out(args, "csv")
    if args.command == "density":
        dens = np.asarray(law.density(grid), dtype=float)
        _write_rows(out, ["t", "density"], zip(grid, dens))
    else:
        _write_rows(out, ["t", "cdf"], zip(grid, law.cdf_table(grid)))
    man.outputs["csv"] = out
    man.residual_summary = {**_residual_summary(law), "atom0": float(law.atom0())}
    print(out)


def cmd_atom(args, man):
    d, _ = diffusion_from_args(args)
    b, _ = boundary_from_args(args, d)
    law = build_law(d, b, args.x)
    a = float(law.atom0())
    man.outputs["atom0"] = a
    print(f"{a:.17g}")


def cmd_boundary(args, man):
    d, _ = diffusion_from_args(args)
    b, _ = boundary_from_args(args, d)
    grid = grid_values(man.grid)
    if math.isfinite(b.zeta):
        grid = grid[grid < b.zeta]
    out = _default_out(args, "csv")
    export_boundary_csv(b, grid, out)
    man.outputs["csv"] = out
    if isinstance(b, ImplicitBoundary):
        res = [abs(b.residual(float(t))) for t in grid]
        man.residual_summary = {"max_abs_residual": max(res) if res else 0.0, "points": len(res)}
    print(out)


def cmd_invert(args, man):
    from .transforms import hitting_from_lastpass
    d, _ = diffusion_from_args(args)
    b, _ = boundary_from_args(args, d)
    hit = hitting_from_lastpass(build_law(d, b, args.x))
    grid = grid_values(man.grid)
    out = _default_out(args, "csv")
    hit.export_csv(grid, out)
    man.outputs["csv"] = out
    man.outputs["dual"] = {"diffusion": hit.diffusion.describe(), "x": hit.x, "boundary": hit.boundary.describe(),
                           "never_hit": float(hit.never_hit())}
    print(out)


def cmd_moments(args, man):
    from . import transforms as tr
    d, _ = diffusion_from_args(args)
    spec = parse_boundary_spec(args.boundary) if args.boundary else read_boundary_config(args.boundary_config)
    lams = _list(args.lam)
    rows = []
    if d.family == "bm_drift" and spec["shape"] in ("sqrt_root", "const"):
        a, bb = _num(spec.get("a", 0.0)), _num(spec.get("b", 0.0))
        for lam in lams:
            rows.append({"lam": lam, "transform": "mellin",
                         "stated": tr.moment_bm_sqrt_stated(d.mu, a, bb, lam),
                         "corrected": tr.moment_bm_sqrt_corrected(d.mu, a, bb, lam)})
    elif d.family == "bessel_drift" and spec["shape"] == "sqrtquad":
        a, bb = _num(spec["a"]), _num(spec["b"])
        rt = tr.laplace_round_trip(d.nu, d.c, a, bb, tuple(lams))
        for lam in lams:
            r = rt[float(lam)]
            rows.append({"lam": lam, "transform": "laplace", "analytic": r["analytic"],
                         "numeric": r["numeric"], "rel_error": r["rel_error"]})
    else:
        raise UsageError("moments supports --family bm with sqrt_root/const, or bessel_drift with sqrtquad")
    out = _default_out(args, "json")
    Path(out).write_text(json.dumps(json_safe(rows), indent=2, sort_keys=True) + "\n")
    man.outputs["json"] = out
    print(json.dumps(json_safe(rows), indent=2, sort_keys=True))


def cmd_simulate(args, man):
    from . import montecarlo as mc
    d, _ = diffusion_from_args(args)
    b, _ = boundary_from_args(args, d)
    cfg = mc.SimConfig(n_paths=args.n, dt=args.dt, horizon=args.horizon, seed=args.seed,
                       bridge_correction=not args.no_bridge, scheme=args.scheme,
                       dt_min=args.dt_min, grade=args.grade)
    prefix = args.out or f"{PROG}_simulate"
    law = None
    try:
        law = build_law(d, b, args.x)
    except NumericalError:
        law = None
    if args.mode == "hit":
        e = mc.sample_first_hitting(d, b, args.x, cfg)
    else:
        case = getattr(law, "case", None)
        e = mc.sample_last_passage(d, b, args.x, cfg, case=case)
    samples = f"{prefix}_samples.csv"
    report_path = f"{prefix}_report.json"
    e.write_csv(samples)
    if law is not None and args.mode == "last":
        rep = mc.compare(e, law)
    else:
        rep = {"ks": None, "n": e.n, "atom_model": None,
               "atom_empirical": e.atom_fraction() if args.mode == "last" else e.never_fraction(),
               "moment_errors": [{"power": p, "empirical": e.moment(p)[0], "std_error": e.moment(p)[1]}
                                 for p in (1.0, 0.5)] if e.finite.size else [], "seed": e.seed}
    rep["simulation"] = e.meta
    mc.write_report(rep, report_path)
    man.outputs.update({"samples": samples, "report": report_path})
    man.tolerances["sim"] = asdict(cfg)
    print(samples)
    print(report_path)


def cmd_verify(args, man):
    from . import verify
    rep = verify.run(args.suite)
    out = _default_out(args, "json")
    verify.write_report(rep, out)
    man.outputs["report"] = out
    man.residual_summary = {"passed": rep["passed"], "n_checks": rep["n_checks"], "n_failed": rep["n_failed"]}
    for c in rep["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['suite']}.{c['name']} value={c['value']:.3g} tol={c['tol']:.3g}")
    return 0 if rep["passed"] else 1


HANDLERS = {"density": cmd_density, "cdf": cmd_density, "atom": cmd_atom, "boundary": cmd_boundary,
            "invert": cmd_invert, "moments": cmd_moments, "simulate": cmd_simulate, "verify": cmd_verify}


# ---------------------------------------------------------------- parser

def _add_model(p, needs_x=True, needs_grid=False):
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--mu", type=float, help="drift (bm)")
    p.add_argument("--nu", type=float, help="index (bessel, bessel_drift, radial_ou)")
    p.add_argument("--c", type=float, help="drift parameter (bessel_drift)")
    p.add_argument("--gamma", type=float, help="mean reversion (radial_ou)")
    p.add_argument("--boundary", help="shape:key=val,... (see top-level help)")
    p.add_argument("--boundary-config", help="file with shape=... and key=val lines")
    if needs_x:
        p.add_argument("--x", type=float, required=True, help="start point")
    if needs_grid:
        p.add_argument("--grid", required=True, help="lo:hi:n[:lin|log]")
    p.add_argument("--out", help="output path (prefix for simulate)")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")


def build_parser():
    ap = argparse.ArgumentParser(prog=PROG, description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--replay", help="re-run the command recorded in a manifest")
    sub = ap.add_subparsers(dest="command")
    for name, h in (("density", "density of G on a t-grid (CSV)"), ("cdf", "P(G <= t) on a t-grid (CSV)")):
        _add_model(sub.add_parser(name, help=h), needs_grid=True)
    _add_model(sub.add_parser("atom", help="P_x(G = 0)"))
    _add_model(sub.add_parser("boundary", help="tabulate a boundary (CSV) with residuals"), needs_x=False,
               needs_grid=True)
    _add_model(sub.add_parser("invert", help="dual first-hitting density under time inversion (CSV)"),
               needs_grid=True)
    p = sub.add_parser("moments", help="Mellin moments (bm, sqrt_root) or Laplace transform (bessel_drift, sqrtquad)")
    _add_model(p, needs_x=False)
    p.add_argument("--lam", default="1;1.5", help="';'-separated transform arguments")
    p = sub.add_parser("simulate", help="Monte Carlo samples (CSV) and comparison report (JSON)")
    _add_model(p)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=0.01, help="largest time step")
    p.add_argument("--dt-min", type=float, help="smallest time step (default min(dt/1e4, 1e-5))")
    p.add_argument("--grade", type=float, default=0.01, help="step h = clip(grade t, dt_min, dt)")
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--scheme", choices=("exact", "euler"), default="exact")
    p.add_argument("--mode", choices=("last", "hit"), default="last")
    p.add_argument("--no-bridge", action="store_true", help="disable the bridge crossing correction")
    p = sub.add_parser("verify", help="run check suites; exit 0 iff all pass")
    p.add_argument("--suite", default="all", help="specfun | kernels | laws | implicit | transforms | mc | all")
    p.add_argument("--out", help="report path")
    p.add_argument("--manifest", help="manifest path")
    return ap


def _manifest_for(args, argv):
    man = RunManifest(command=args.command, argv=list(argv))
    if hasattr(args, "family"):
        _, params = diffusion_from_args(args)
        man.diffusion = {"family": args.family, **params}
        if args.boundary:
            man.boundary = parse_boundary_spec(args.boundary)
        elif args.boundary_config:
            man.boundary = read_boundary_config(args.boundary_config)
    man.x = getattr(args, "x", None)
    if getattr(args, "grid", None):
        man.grid = parse_grid(args.grid)
    man.seed = getattr(args, "seed", None)
    return man


def _manifest_path(args):
    if getattr(args, "manifest", None):
        return args.manifest
    if args.command == "simulate":
        return f"{args.out or PROG + '_simulate'}_manifest.json"
    if args.command == "atom" and not args.out:
        return f"{PROG}_atom.manifest.json"
    ext = "json" if args.command in ("moments", "verify") else "csv"
    return f"{_default_out(args, ext)}.manifest.json"


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.replay:
        try:
            man = RunManifest.from_json(Path(args.replay).read_text())
        except (OSError, ValueError, TypeError) as exc:
            ap.error(f"cannot read manifest {args.replay}: {exc}")
        if args.command:
            ap.error("--replay takes no subcommand")
        return run(man.argv)
    if not args.command:
        ap.print_usage(sys.stderr)
        print(f"{PROG}: error: a subcommand is required: {', '.join(COMMANDS)}", file=sys.stderr)
        return 2
    try:
        man = _manifest_for(args, argv)
        rc = HANDLERS[args.command](args, man) or 0
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"{PROG}: numerical failure in {exc.where()}: {exc}", file=sys.stderr)
        return 1
    for k, v in list(man.outputs.items()):
        if isinstance(v, str) and Path(v).is_file():
            man.outputs[f"{k}_sha256"] = _sha256(v)
    man.write(_manifest_path(args))
    return rc


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
