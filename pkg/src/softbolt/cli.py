"""Command line entry point: ``softbolt <subcommand> [options]``.

Exit codes are 0 on success, 1 when a computation fails and 2 for usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import from_dict, parse_config
from .errors import ParseError, SoftboltError, UnknownSubcommand, ValidationError, WrongKind

log = logging.getLogger("softbolt")

SUBCOMMANDS = ("geom", "kernel", "cycles", "trace", "run", "fit", "audit")


def _vec(text):
    vals = [float(s) for s in text.replace(" ", "").split(",") if s]
    if not vals:
        raise argparse.ArgumentTypeError("expected comma separated numbers")
    return vals


def _args_hash(ns: argparse.Namespace) -> str:
    data = {k: v for k, v in vars(ns).items() if k not in ("func", "out", "verbose")}
    return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()


def _emit(payload: dict, meta: dict, out):
    if out:
        io.write_json(out, meta, payload)
    else:
        print(json.dumps({**meta, **payload}, default=io._default, sort_keys=True, indent=2))


def _load_config(args):
    if getattr(args, "config", None):
        return parse_config(args.config)
    return None


# ---------------------------------------------------------------------------
# domain options shared by geom, trace and cycles
# ---------------------------------------------------------------------------
def _add_domain_opts(p, default_kind="ball"):
    p.add_argument("--config", help="scenario file; its [domain] section overrides the options below")
    p.add_argument("--domain", default=default_kind, choices=("slab", "ball", "ellipsoid"))
    p.add_argument("--half-width", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=3, choices=(2, 3))
    p.add_argument("--semi-axes", type=_vec, default=[1.0, 1.0, 1.0])


def _domain(args):
    from .geometry import Domain

    cfg = _load_config(args)
    if cfg is not None:
        return Domain.from_config(cfg["domain"]), cfg
    spec = {"kind": args.domain, "half_width": args.half_width, "radius": args.radius, "dim": args.dim,
            "semi_axes": args.semi_axes}
    from_dict({"domain": spec})  # range checks
    return Domain.from_config(spec), None


def _point(d, text, default):
    vals = np.asarray(text if text is not None else default, dtype=float)
    return vals[: d.dim] if vals.size >= d.dim else np.pad(vals, (0, d.dim - vals.size))


def _velocity(text, default):
    v = np.zeros(3)
    vals = np.asarray(text if text is not None else default, dtype=float)[:3]
    v[: vals.size] = vals
    return v


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_geom(args):
    d, cfg = _domain(args)
    x = _point(d, args.x, [0.0])
    v = _velocity(args.v, [1.0, 0.3, 0.0])
    tb, xb = d.backward_exit_time(x, v)
    payload = {"domain": d.kind, "x": x, "v": v, "kinetic_distance": d.kinetic_distance(x, v),
               "convexity_margin": d.check_convexity(n_samples=200, seed=args.seed), "exit_time": tb}
    if xb is not None:
        payload.update(exit_point=xb, normal=d.outward_normal(xb), reflected_velocity=d.specular_reflect(xb, v))
    meta = io.metadata(cfg.hash() if cfg else _args_hash(args), args.seed)
    _emit(payload, meta, args.out)
    return 0


def cmd_trace(args):
    from .cycles import trace_specular_cycle

    d, cfg = _domain(args)
    x = _point(d, args.x, [0.0])
    v = _velocity(args.v, [1.0, 0.3, 0.0])
    trace = trace_specular_cycle(d, args.t, x, v, max_bounces=args.max_bounces)
    meta = io.metadata(cfg.hash() if cfg else _args_hash(args), args.seed, terminated_by=trace.terminated_by)
    out = args.out or "trace.ndjson"
    with io.NDJSONWriter(out, meta) as w:
        for k, t, xb, vb in trace.rows():
            w.write({"bounce": k, "t": t, "x": xb, "v": vb})
    print(f"{len(trace) - 1} bounces written to {out}")
    return 0


def cmd_cycles(args):
    from .cycles import estimate_escape_probability, estimate_weighted_cycle_integral
    from .weights import WeightParams

    d, cfg = _domain(args)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    x = _point(d, args.x, [0.0])
    v = _velocity(args.v, [0.5, 0.2, 0.1])
    p = cfg.weights if cfg else WeightParams(args.q, args.theta, args.vartheta, args.varrho).validate()
    meta = io.metadata(cfg.hash() if cfg else _args_hash(args), seed)
    out = args.out or "cycles.ndjson"
    with io.NDJSONWriter(out, meta) as w:
        for k in args.k:
            if args.variant == "escape":
                est = estimate_escape_probability(d, args.t, (x, v), k, args.samples, seed)
            else:
                from .collision.frequency import FrequencyTable

                est = estimate_weighted_cycle_integral(d, FrequencyTable(p.varrho), p, args.t, (x, v), k,
                                                       args.samples, args.variant, seed)
            rec = est.record()
            w.write(rec)
            print(json.dumps(rec, sort_keys=True))
    return 0


def _grid_and_op(cfg, need_op=True):
    from .collision.grid import VelocityGrid
    from .collision.operator import assemble_operator

    g = VelocityGrid(float(cfg["grid"]["vmax"]), int(cfg["grid"]["nv"]))
    col = cfg["collision"]
    if not need_op:
        return g, None
    op = assemble_operator(g, col["varrho"], col["b0_kind"], col["n_omega"], cache_dir=col["cache_dir"] or None,
                           interpolation=col["interpolation"])
    return g, op


def _kernel_config(args):
    cfg = _load_config(args)
    if cfg is not None:
        return cfg
    return from_dict({"grid": {"nv": args.nv, "vmax": args.vmax},
                      "collision": {"varrho": args.varrho, "n_omega": args.n_omega,
                                    "interpolation": args.interpolation,
                                    "cache_dir": args.cache_dir or ""}})


def cmd_kernel(args):
    cfg = _kernel_config(args)
    g, op = _grid_and_op(cfg)
    lam = op.spectrum[0]
    micro_gap = float(lam[5]) if lam.size > 5 else float("nan")
    payload = {"nodes": g.size, "spacing": g.spacing, "interpolation": op.interpolation, "nu_min": float(op.nu.min()), "nu_max": float(op.nu.max()),
               "raw_null_residuals": op.raw_null_residuals, "null_eigenvalues": lam[:5],
               "smallest_positive_eigenvalue": micro_gap, "largest_eigenvalue": float(lam[-1])}
    w = cfg["weights"]
    if args.split_eps:
        payload["split_norms"] = {str(e): op.weighted_split_norm(e, w["q"], w["theta"]) for e in args.split_eps}
    meta = io.metadata(cfg.hash(), cfg.seed)
    if args.csv:
        rows = [(i, *v, op.nu[i], op.nu_loss[i]) for i, v in enumerate(g.nodes)]
        io.write_csv(args.csv, meta, ["index", "v1", "v2", "v3", "nu", "nu_discrete"], rows)
    _emit(payload, meta, args.out)
    return 0


def cmd_run(args):
    from .solver import SlabSolver, initial_field, run

    cfg = parse_config(args.config)
    if cfg["domain"]["kind"] != "slab":
        raise WrongKind("the transport solver runs on the slab only")
    col, tm, init = cfg["collision"], cfg["time"], cfg["initial"]
    need_op = col["mode"] in ("linear", "exponential_euler") or col["nonlinear"]
    g, op = _grid_and_op(cfg, need_op)
    L = float(cfg["domain"]["half_width"])
    solver = SlabSolver(g, L, int(cfg["grid"]["nx"]), cfg["bc"]["kind"], float(tm["dt"]), op=op,
                        mode=col["mode"], nonlinear=col["nonlinear"], varrho=col["varrho"])
    F0 = initial_field(init["kind"], g, solver.x, L, init["amplitude"], cfg.seed, cfg.weights,
                       init["width"], init["center"], tuple(init["remove"]))
    outdir = Path(args.out or cfg["output"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    meta = io.metadata(cfg.hash(), cfg.seed)
    diag_path = outdir / cfg["output"]["diagnostics"]
    with io.NDJSONWriter(diag_path, meta) as w:
        res = run(solver, F0, int(tm["n_steps"]), int(tm["sample_every"]), cfg.weights, sink=w.write)
    if cfg["output"]["field"]:
        io.write_field(outdir / cfg["output"]["field"], meta, res.field.values, x=solver.x, time=res.field.time,
                       vmax=g.half_width, nv=g.n)
    last = res.records[-1]
    print(f"t={last['t']:.4g} l2={last['l2']:.6e} mass={last['mass']:.3e} -> {diag_path}")
    return 0


def cmd_fit(args):
    from .analysis import fit_stretched_exponential

    meta_in, recs = io.read_ndjson(args.input)
    series = [(r["t"], r[args.norm]) for r in recs if args.norm in r]
    window = tuple(args.window) if args.window else None
    fit = fit_stretched_exponential(series, window=window, norm_kind=args.norm)
    meta = io.metadata((meta_in or {}).get("config_hash", _args_hash(args)), (meta_in or {}).get("seed", 0))
    _emit(fit.report(), meta, args.out)
    return 0


def cmd_audit(args):
    from .analysis import conservation_report

    meta_in, recs = io.read_ndjson(args.input)
    thresholds = {"mass": args.tol, "energy": args.tol, "momentum2": args.tol}
    payload = {"conservation": conservation_report(recs, thresholds, args.bc)}
    if args.config:
        from .collision.frequency import collision_frequency
        from .collision.grid import VelocityGrid
        from .weights import frequency_constant, lambda0_bound, young_envelope_check

        cfg = parse_config(args.config)
        g = VelocityGrid(float(cfg["grid"]["vmax"]), int(cfg["grid"]["nv"]))
        p = cfg.weights
        nu = collision_frequency(g, p.varrho)
        lam0 = cfg["weights"]["lambda0"] or lambda0_bound(p, frequency_constant(g.speeds, nu, p.varrho))
        rep = young_envelope_check(p, g.speeds, nu, args.times, lam0, raise_on_violation=False)
        payload["envelope"] = {"lambda0": lam0, "violations": rep.violations, "worst_margin": rep.worst_margin,
                               "worst_t": rep.worst_t}
    meta = io.metadata((meta_in or {}).get("config_hash", _args_hash(args)), (meta_in or {}).get("seed", 0))
    _emit(payload, meta, args.out)
    ok = payload["conservation"]["pass"] and payload.get("envelope", {}).get("violations", 0) == 0
    return 0 if ok else 1


# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="softbolt", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("geom", help="exit time, normal and reflection for one phase point")
    _add_domain_opts(p)
    p.add_argument("--x", type=_vec)
    p.add_argument("--v", type=_vec)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_geom)

    p = sub.add_parser("trace", help="specular back-time cycle as NDJSON")
    _add_domain_opts(p)
    p.add_argument("--x", type=_vec)
    p.add_argument("--v", type=_vec)
    p.add_argument("--t", type=float, default=10.0)
    p.add_argument("--max-bounces", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("cycles", help="Monte Carlo estimates over diffuse cycles")
    _add_domain_opts(p)
    p.add_argument("--k", type=int, nargs="+", default=[4, 8, 16, 32])
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--t", type=float, default=10.0)
    p.add_argument("--x", type=_vec)
    p.add_argument("--v", type=_vec)
    p.add_argument("--variant", choices=("escape", "between_bounces", "tail_to_zero"), default="escape")
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--vartheta", type=float, default=0.5)
    p.add_argument("--varrho", type=float, default=-1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cycles)

    p = sub.add_parser("kernel", help="assemble the linearized collision operator and summarise it")
    p.add_argument("--config")
    p.add_argument("--nv", type=int, default=16)
    p.add_argument("--vmax", type=float, default=6.0)
    p.add_argument("--varrho", type=float, default=-1.0)
    p.add_argument("--n-omega", type=int, default=72)
    p.add_argument("--interpolation", default="auto", choices=("auto", "ratio", "direct"))
    p.add_argument("--cache-dir")
    p.add_argument("--split-eps", type=float, nargs="*", default=[])
    p.add_argument("--csv", help="write nu per node as CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("run", help="slab solver run from a scenario file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: [output].dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="stretched-exponential fit of a diagnostics stream")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--norm", default="l2", choices=("l2", "lnu", "winf"))
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("audit", help="conservation and envelope audit of a run")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--bc", default="specular", choices=("specular", "diffuse"))
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--config", help="scenario file; enables the envelope check")
    p.add_argument("--times", type=float, nargs="+", default=[0.1, 1.0, 10.0, 100.0])
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)
    return ap


def dispatch(argv) -> int:
    argv = list(argv)
    cmd = next((a for a in argv if not a.startswith("-")), None)
    try:
        if cmd not in SUBCOMMANDS:
            raise UnknownSubcommand(f"unknown subcommand {cmd!r}; expected one of {', '.join(SUBCOMMANDS)}")
        args = build_parser().parse_args(argv)
    except UnknownSubcommand as exc:
        print(f"softbolt: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print("softbolt: invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"softbolt: {exc}", file=sys.stderr)
        return 2
    except (SoftboltError, ValueError, OSError) as exc:
        print(f"softbolt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
