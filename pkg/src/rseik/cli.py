"""Command-line pipeline: phantom generation, solving, tracing, comparison,
and benchmarking.

Exit codes: 0 success, 2 usage or domain errors, 3 numerical failures.
Every run writes a JSON manifest next to its outputs.  Outputs themselves
are deterministic: re-running an identical invocation reproduces them
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels
from .errors import (ConvergenceError, DomainError, FormatError,
                     InstabilityError, RseikError, SellingError, StencilError)
from .geometry import ModelParams, PointPO
from .grid import Domain, SpatialGrid
from .io import (read_grid_file, read_pgm_mask, write_grid_file,
                 write_pgm_mask)
from .iterative import IterConfig, iterative_solve
from .costs import CostField, DensityField, TubeSpec, cost_from_density, synth_tube_phantom
from .sphere import build_s1, build_s2_icosphere, build_s2_latlong
from .solver import DistanceMap, SolveConfig, fast_march
from .tracing import TracingError, backtrack, detect_interest_points

ACCEPTED = 2


def _write_manifest(out_prefix: str, command: str, args: argparse.Namespace,
                    inputs: list, outputs: list, wall: float, stats: dict):
    payload = {
        "command": command,
        "parameters": {k: (v if not isinstance(v, np.ndarray) else v.tolist())
                       for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": inputs,
        "outputs": outputs,
        "wall_clock_s": wall,
        "solver_stats": stats,
    }
    path = out_prefix + ".manifest.json"
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


def _parse_state(text: str, d: int) -> PointPO:
    parts = [float(t) for t in text.split(",")]
    if d == 2:
        if len(parts) == 3:
            return PointPO.from_angle(parts[:2], parts[2])
        if len(parts) == 4:
            return PointPO(np.array(parts[:2]), np.array(parts[2:]))
    else:
        if len(parts) == 5:
            th, ph = parts[3], parts[4]
            n = np.array([math.sin(th) * math.cos(ph),
                          math.sin(th) * math.sin(ph),
                          math.cos(th)])
            return PointPO(np.array(parts[:3]), n)
        if len(parts) == 6:
            return PointPO(np.array(parts[:3]), np.array(parts[3:]))
    raise DomainError(
        f"bad state syntax {text!r}: want x,y[,z],theta[,phi] or x,y[,z],nx,ny[,nz]"
    )


def _domain_from_args(args) -> tuple[Domain, CostField, list]:
    """Resolve the grid and cost from --cost / --density / --mask / --uniform."""
    inputs = []
    sources = [s for s in ("cost", "density", "mask", "uniform")
               if getattr(args, s, None)]
    if len(sources) != 1:
        raise DomainError("exactly one of --cost, --density, --mask, --uniform is required")
    src = sources[0]
    if src in ("cost", "density"):
        path = getattr(args, src)
        inputs.append(path)
        domain, values, header = read_grid_file(path)
        xi = args.xi if args.xi is not None else float(header.get("xi", 1.0))
        if src == "cost" or header.get("quantity") == "cost":
            C = np.asarray(values)
            cost = CostField(xi * C, C, xi=xi)
        else:
            W = DensityField(values, domain)
            cost = cost_from_density(W, args.sigma, args.p_exp, xi)
        return domain, cost, inputs
    xi = args.xi if args.xi is not None else 1.0
    if src == "mask":
        inputs.append(args.mask)
        blocked = read_pgm_mask(args.mask)
        grid = SpatialGrid(blocked.shape, args.h, _origin_arg(args, 2), mask=blocked)
        domain = Domain(grid, build_s1(args.orientations))
        return domain, CostField.uniform(domain, xi), inputs
    dims = tuple(int(t) for t in args.uniform.split(","))
    if len(dims) == 2:
        domain = Domain(SpatialGrid(dims, args.h, _origin_arg(args, 2)),
                        build_s1(args.orientations))
    elif len(dims) == 3:
        if getattr(args, "angular_scheme", "tessellation") == "latlong":
            sphere = build_s2_latlong(args.lat_rows)
        else:
            sphere = build_s2_icosphere(args.sphere_level)
        domain = Domain(SpatialGrid(dims, args.h, _origin_arg(args, 3)), sphere)
    else:
        raise DomainError(f"--uniform wants 2 or 3 extents, got {args.uniform!r}")
    return domain, CostField.uniform(domain, xi), inputs


def _origin_arg(args, d):
    if args.origin is None:
        return np.zeros(d)
    parts = [float(t) for t in args.origin.split(",")]
    if len(parts) != d:
        raise DomainError(f"--origin wants {d} coordinates")
    return np.array(parts)


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    domain, cost, inputs = _domain_from_args(args)
    params = ModelParams(args.variant, args.epsilon)
    seeds = [_parse_state(s, domain.d) for s in args.seed]
    stop = [_parse_state(s, domain.d) for s in args.stop] if args.stop else None
    if args.solver == "fast_marching":
        config = SolveConfig(backend=args.backend, stop=stop, engine=args.engine)
        dmap = fast_march(domain, cost, params, seeds, config)
        stats = {k: v for k, v in dmap.stats.items() if k != "accept_order"}
    else:
        cfg = IterConfig(theta=args.theta) if args.theta else IterConfig()
        dmap = iterative_solve(domain, cost, params, seeds, cfg)
        stats = dmap.stats
    out = args.out + ".pogrid"
    values = np.where(np.isfinite(dmap.values), dmap.values, np.float32(np.inf))
    write_grid_file(out, domain, values, "distance",
                    extra={"variant": args.variant, "epsilon": args.epsilon,
                           "xi": cost.xi})
    wall = time.perf_counter() - t0
    _write_manifest(args.out, "solve", args, inputs, [out], wall, stats)
    print(f"solved {domain.n_nodes} nodes in {wall:.2f}s -> {out}")
    return 0


def _load_distance(path) -> tuple[DistanceMap, dict]:
    domain, values, header = read_grid_file(path)
    if header.get("quantity") != "distance":
        raise DomainError(f"{path} holds {header.get('quantity')!r}, not a distance map")
    params = ModelParams(header.get("variant", "symmetric"),
                         float(header.get("epsilon", 0.1)))
    states = np.where(np.isfinite(values), ACCEPTED, 0).astype(np.uint8)
    seeds = [tuple(int(i) for i in idx) for idx in np.argwhere(values == 0.0)]
    if not seeds:
        raise DomainError(f"{path} has no zero-value seed node")
    dmap = DistanceMap(values, states, domain, params,
                       float(header.get("xi", 1.0)), seeds, "file")
    return dmap, header


def cmd_trace(args) -> int:
    t0 = time.perf_counter()
    inputs = [args.dist]
    dmap, header = _load_distance(args.dist)
    domain = dmap.domain
    if args.cost:
        inputs.append(args.cost)
        _, C, cheader = read_grid_file(args.cost)
        xi = float(cheader.get("xi", dmap.xi))
        cost = CostField(xi * C, C, xi=xi)
    else:
        cost = CostField.uniform(domain, dmap.xi)
    params = dmap.params
    ends = [_parse_state(e, domain.d) for e in args.end]
    if args.all_orientations:
        fixed = []
        for e in ends:
            spatial = domain.grid.snap(e.x)
            col = dmap.values[spatial]
            j = int(np.argmin(np.where(np.isfinite(col), col, np.inf)))
            fixed.append(domain.point(spatial + (j,)))
        ends = fixed

    def trace_one(k_end):
        k, end = k_end
        if not np.isfinite(dmap.values[domain.snap_point(end)]):
            raise DomainError(f"end state {k} has infinite distance")
        path = backtrack(dmap, cost, params, end, step=args.step)
        pts = detect_interest_points(path, params, min_peak_u=args.min_keypoint_u)
        return k, path, pts

    workers = int(os.environ.get("RSEIK_THREADS", "0")) or min(8, os.cpu_count() or 1)
    items = list(enumerate(ends))
    if len(items) > 1 and workers > 1:
        # warm the shared gradient cache once before going parallel
        backtrack(dmap, cost, params, ends[0], step=args.step)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(trace_one, items))
    else:
        results = [trace_one(it) for it in items]

    outputs = []
    for k, path, pts in sorted(results):
        csv_path = f"{args.out}_{k}.csv"
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f)
            cols = (["t", "x", "y"] + (["z"] if domain.d == 3 else [])
                    + [f"n{ax}" for ax in "xyz"[: domain.d]] + ["mode", "U"])
            w.writerow(cols)
            for s in path.samples:
                w.writerow(
                    [f"{s.t:.8g}"] + [f"{v:.8g}" for v in s.point.x]
                    + [f"{v:.8g}" for v in s.point.n] + [s.mode, f"{s.u:.8g}"]
                )
        side = {
            "end_index": k,
            "length": path.length,
            "interest_points": [
                {"kind": ip.kind, "t_interval": list(ip.t_interval),
                 "location": ip.location.tolist()}
                for ip in pts
            ],
        }
        side_path = f"{args.out}_{k}.points.json"
        with open(side_path, "w") as f:
            json.dump(side, f, indent=2, sort_keys=True)
            f.write("\n")
        outputs += [csv_path, side_path]
    wall = time.perf_counter() - t0
    _write_manifest(args.out, "trace", args, inputs, outputs, wall,
                    {"n_paths": len(results)})
    print(f"traced {len(results)} path(s) in {wall:.2f}s -> {args.out}_*.csv")
    return 0


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    dom_a, a, ha = read_grid_file(args.file_a)
    dom_b, b, hb = read_grid_file(args.file_b)
    if a.shape != b.shape or dom_a.grid.dims != dom_b.grid.dims \
            or abs(dom_a.grid.h - dom_b.grid.h) > 1e-12:
        raise DomainError(
            f"grid mismatch: {a.shape}@h={dom_a.grid.h} vs {b.shape}@h={dom_b.grid.h}"
        )
    both = np.isfinite(a) & np.isfinite(b)
    one = np.isfinite(a) ^ np.isfinite(b)
    scale = np.maximum(np.maximum(np.abs(a[both]), np.abs(b[both])), dom_a.grid.h)
    rel = np.abs(a[both] - b[both]) / scale
    n_over = int(np.sum(rel > args.tol))
    report = {
        "nodes_compared": int(both.sum()),
        "finite_mismatch": int(one.sum()),
        "max_rel_diff": float(rel.max()) if rel.size else 0.0,
        "median_rel_diff": float(np.median(rel)) if rel.size else 0.0,
        "over_tolerance": n_over,
        "tolerance": args.tol,
    }
    for k, v in report.items():
        print(f"{k}: {v}")
    if args.out:
        _write_manifest(args.out, "compare", args, [args.file_a, args.file_b],
                        [], time.perf_counter() - t0, report)
    return 0


def _phantom_two_crossings(domain: Domain):
    nx, ny, nz = domain.grid.dims
    h = domain.grid.h
    o = domain.grid.origin
    span = (nx - 1) * h
    t = np.linspace(0.06, 0.94, 160) * span
    yc = o[1] + 0.375 * (ny - 1) * h
    zc = o[2] + 0.5 * (nz - 1) * h
    straight = np.stack([o[0] + t, np.full_like(t, yc), np.full_like(t, zc)], axis=1)
    cx = o[0] + 0.5 * span
    cy = o[1] + 0.75 * (ny - 1) * h
    rad = 0.44 * span
    phi = np.linspace(math.pi + 0.08, 2 * math.pi - 0.08, 200)
    arc = np.stack([cx + rad * np.cos(phi), cy + rad * np.sin(phi),
                    np.full_like(phi, zc)], axis=1)
    radius = 1.6 * h
    return [TubeSpec(straight, radius), TubeSpec(arc, radius)], {"curved": arc}


def _phantom_torsion_parallel(domain: Domain, cheap_amp: float):
    nx, ny, nz = domain.grid.dims
    h = domain.grid.h
    o = domain.grid.origin
    span = (nx - 1) * h
    t = np.linspace(0.06, 0.94, 200)
    x = o[0] + t * span
    cy = o[1] + 0.5 * (ny - 1) * h
    cz = o[2] + 0.5 * (nz - 1) * h
    amp = 0.17 * span
    twist = 1.25 * math.pi * t
    green = np.stack([x, cy + amp * np.cos(twist), cz + amp * np.sin(twist)], axis=1)
    offset = 4.0 * h
    red = np.stack([x, cy + amp * np.cos(twist) + offset * np.sin(twist),
                    cz + amp * np.sin(twist) - offset * np.cos(twist)], axis=1)
    span_y = (ny - 1) * h
    ty = o[1] + np.linspace(0.06, 0.94, 160) * span_y
    blue = np.stack([np.full_like(ty, o[0] + 0.5 * span), ty,
                     np.full_like(ty, cz + 0.3 * amp)], axis=1)
    radius = 1.6 * h
    tubes = [
        TubeSpec(green, radius),
        TubeSpec(red, radius, amplitude=cheap_amp),
        TubeSpec(blue, radius),
    ]
    return tubes, {"green": green, "red": red}


def _phantom_pompidou_mask(dims):
    nx, ny = dims
    blocked = np.zeros((nx, ny), bool)
    blocked[0, :] = blocked[-1, :] = True
    blocked[:, 0] = blocked[:, -1] = True
    # two interior walls with offset doorways
    w1, w2 = ny // 3, 2 * ny // 3
    blocked[:, w1] = True
    blocked[:, w2] = True
    d1 = slice(int(0.7 * nx), int(0.7 * nx) + max(3, nx // 12))
    d2 = slice(int(0.15 * nx), int(0.15 * nx) + max(3, nx // 12))
    blocked[d1, w1] = False
    blocked[d2, w2] = False
    # a free-standing pillar
    blocked[int(0.45 * nx): int(0.55 * nx), int(0.45 * ny): int(0.5 * ny)] = True
    return blocked


def cmd_phantom(args) -> int:
    t0 = time.perf_counter()
    outputs = []
    if args.preset == "pompidou_mask":
        dims = tuple(int(t) for t in args.dims.split(",")) if args.dims else (141, 101)
        if len(dims) != 2:
            raise DomainError("pompidou_mask is planar; --dims wants 2 extents")
        blocked = _phantom_pompidou_mask(dims)
        out = args.out + ".pgm"
        write_pgm_mask(out, blocked)
        outputs.append(out)
    elif args.preset in ("two_crossings", "torsion_parallel"):
        dims = tuple(int(t) for t in args.dims.split(",")) if args.dims else (32, 32, 32)
        if len(dims) != 3:
            raise DomainError(f"{args.preset} is volumetric; --dims wants 3 extents")
        domain = Domain(SpatialGrid(dims, args.h, _origin_arg(args, 3)),
                        build_s2_icosphere(args.sphere_level))
        if args.preset == "two_crossings":
            tubes, _ = _phantom_two_crossings(domain)
        else:
            # amplitude ratio a with sigma a^3 / (a^3 + ...) halving the cost
            sigma = args.sigma
            a = (2.0 * sigma / max(sigma - 1.0, 1e-9)) ** (1.0 / 3.0)
            tubes, _ = _phantom_torsion_parallel(domain, a)
        W = synth_tube_phantom(domain, tubes)
        out = args.out + ".pogrid"
        write_grid_file(out, domain, W.values, "density")
        outputs.append(out)
    else:
        raise DomainError(f"unknown preset {args.preset!r}")
    wall = time.perf_counter() - t0
    _write_manifest(args.out, "phantom", args, [], outputs, wall, {})
    print(f"phantom {args.preset} -> {', '.join(outputs)}")
    return 0


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    sizes = [int(eval(tok, {"__builtins__": {}})) for tok in args.sizes.split(",")]
    engines = ["compiled", "pure"] if args.engine == "both" else [args.engine]
    no = args.orientations
    rows = []
    for engine in engines:
        for n_target in sizes:
            side = max(8, int(round(math.sqrt(n_target / no))))
            dom = Domain(SpatialGrid.centered((side, side), 2.0 / side), build_s1(no))
            cost = CostField.uniform(dom)
            params = ModelParams(args.variant, args.epsilon)
            cfg = SolveConfig(engine=engine)
            t1 = time.perf_counter()
            dmap = fast_march(dom, cost, params,
                              [PointPO.from_angle([0.0, 0.0], 0.0)], cfg)
            dt = time.perf_counter() - t1
            rows.append((engine, dom.n_nodes, dt))
            print(f"{engine:9s} N={dom.n_nodes:>9d}  {dt:8.3f}s")
    out = args.out + ".csv"
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["engine", "nodes", "seconds"])
        for row in rows:
            w.writerow(row)
    stats = {}
    for engine in engines:
        pts = [(n, s) for e, n, s in rows if e == engine]
        if len(pts) >= 2:
            ln = np.log([p[0] for p in pts])
            ls = np.log([p[1] for p in pts])
            slope = float(np.polyfit(ln, ls, 1)[0])
            stats[engine + "_slope"] = slope
            print(f"{engine} log-log slope: {slope:.3f}")
    _write_manifest(args.out, "bench", args, [], [out],
                    time.perf_counter() - t0, stats)
    return 0


import re

_NEGATIVE_VALUE = re.compile(r"^-\d")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rseik",
        description="Distance maps and geodesics for car-like models on "
                    "position-orientation space (angles in radians).",
    )
    # values like "-0.75,-0.75" (origins, seeds) must not parse as flags
    ap._negative_number_matcher = _NEGATIVE_VALUE
    sub = ap.add_subparsers(dest="command", required=True)

    def add_grid_opts(p):
        p.add_argument("--h", type=float, default=1.0, help="grid scale")
        p.add_argument("--origin", default=None, help="comma-separated origin")
        p.add_argument("--orientations", type=int, default=60,
                       help="circle samples (2D)")
        p.add_argument("--sphere-level", type=int, default=2,
                       help="icosphere refinement (3D)")

    p = sub.add_parser("solve", help="compute a distance map")
    p.add_argument("--cost", help="POGRID1 cost file")
    p.add_argument("--density", help="POGRID1 density file (converted to cost)")
    p.add_argument("--mask", help="PGM/PBM wall mask (uniform cost elsewhere)")
    p.add_argument("--uniform", help="uniform-cost grid dims, e.g. 50,50")
    add_grid_opts(p)
    p.add_argument("--sigma", type=float, default=3.0, help="density-to-cost strength")
    p.add_argument("--p-exp", type=int, default=3, help="density sharpening exponent")
    p.add_argument("--variant", choices=("symmetric", "forward"), default="symmetric")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--xi", type=float, default=None,
                   help="spatial/angular cost balance (c1 = xi * c2)")
    p.add_argument("--backend", choices=("auto", "semi_lagrangian", "hamiltonian_fd"),
                   default="auto")
    p.add_argument("--angular-scheme", choices=("tessellation", "latlong"),
                   default="tessellation",
                   help="3D angular discretization for --uniform grids")
    p.add_argument("--lat-rows", type=int, default=16,
                   help="latitude rows for --angular-scheme latlong")
    p.add_argument("--solver", choices=("fast_marching", "iterative"),
                   default="fast_marching")
    p.add_argument("--theta", type=float, default=None,
                   help="iterative solver stopping tolerance")
    p.add_argument("--engine", choices=("auto", "compiled", "pure"), default="auto")
    p.add_argument("--seed", action="append", required=True,
                   help="seed state x,y[,z],theta[,phi] or x,y[,z],nx,ny[,nz]")
    p.add_argument("--stop", action="append",
                   help="stop state(s); sweep ends once all are reached")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("trace", help="backtrack geodesics from a distance map")
    p.add_argument("--dist", required=True, help="POGRID1 distance file")
    p.add_argument("--cost", help="POGRID1 cost file (else uniform)")
    p.add_argument("--end", action="append", required=True, help="end state(s)")
    p.add_argument("--step", type=float, default=0.04,
                   help="integration step in map units")
    p.add_argument("--all-orientations", action="store_true",
                   help="minimize over the end orientation first")
    p.add_argument("--min-keypoint-u", type=float, default=0.0,
                   help="drop keypoint runs whose map value stays below this")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("compare", help="compare two distance files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--out", default=None, help="optional manifest prefix")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("phantom", help="generate synthetic inputs")
    p.add_argument("--preset", required=True,
                   choices=("two_crossings", "torsion_parallel", "pompidou_mask"))
    p.add_argument("--dims", default=None, help="grid extents, comma-separated")
    add_grid_opts(p)
    p.add_argument("--sigma", type=float, default=24.0,
                   help="cost strength the cheap-bundle amplitude is tuned for")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("bench", help="wall-clock scaling over grid sizes")
    p.add_argument("--sizes", default="2**16,2**18,2**20",
                   help="node counts, comma-separated (python ints)")
    p.add_argument("--orientations", type=int, default=60)
    p.add_argument("--variant", choices=("symmetric", "forward"), default="symmetric")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--engine", choices=("compiled", "pure", "both"),
                   default="compiled" if _kernels.COMPILED else "pure")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_bench)
    for action in sub.choices.values():
        action._negative_number_matcher = _NEGATIVE_VALUE
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (DomainError, FormatError, StencilError, SellingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (InstabilityError, ConvergenceError, TracingError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
