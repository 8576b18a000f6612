"""Command-line interface and the parallel parameter-scan driver.

Exit codes: 0 on success, 2 on precondition violations (bad parameters or
configs), 1 on internal errors.  Scan outputs are byte-identical across runs
with the same config: cells are dispatched to workers but written in cell
order, every task is seeded from the config seed and the cell index, and all
serialization is deterministic.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import conefield, horseshoe, normal_orbits, output, tangency
from .dynamics import first_return, iterate_return_map, return_map
from .errors import BilliardError, PreconditionError
from .geometry import InnerState, Params, in_parameter_domain
from .tangent_map import return_map_jacobian, return_map_jacobian_fd

TASKS = ("cones", "normals", "strips", "tangency", "portrait")


@dataclass
class ScanConfig:
    """Grid scan configuration; flags override file values."""

    delta_grid: list[float]
    r_grid: list[float]
    tasks: list[str]
    seed: int = 0
    workers: int = 1
    output_dir: str = "scan-out"
    options: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path, overrides: dict) -> "ScanConfig":
        raw = json.loads(Path(path).read_text()) if path else {}
        raw.update({k: v for k, v in overrides.items() if v is not None})
        missing = {"delta_grid", "r_grid", "tasks"} - set(raw)
        if missing:
            raise PreconditionError(f"scan config missing fields: {sorted(missing)}")
        bad = set(raw["tasks"]) - set(TASKS)
        if bad:
            raise PreconditionError(f"unknown scan tasks: {sorted(bad)}")
        return cls(
            delta_grid=[float(v) for v in raw["delta_grid"]],
            r_grid=[float(v) for v in raw["r_grid"]],
            tasks=list(raw["tasks"]),
            seed=int(raw.get("seed", 0)),
            workers=int(raw.get("workers", 1)),
            output_dir=str(raw.get("output_dir", "scan-out")),
            options=dict(raw.get("options", {})),
        )


def _portrait_points(p: Params, n_orbits: int, n_iters: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(n_orbits):
        x = InnerState(rng.uniform(-math.pi, math.pi),
                       rng.uniform(-0.5 * math.pi, 0.5 * math.pi))
        try:
            for rec in iterate_return_map(x, p, n_iters):
                pts.append((rec.end.omega, rec.end.beta))
        except BilliardError:
            continue
    return np.array(pts) if pts else np.empty((0, 2))


def cmd_portrait(args) -> int:
    p = Params(args.delta, args.r)
    pts = _portrait_points(p, args.orbits, args.iters, args.seed)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"portrait_d{args.delta}_r{args.r}"
    output.write_csv(out / f"{stem}.csv", ["omega", "beta"], pts)
    output.write_scatter_svg(
        out / f"{stem}.svg", pts,
        xlim=(-math.pi, math.pi), ylim=(-0.5 * math.pi, 0.5 * math.pi),
        title=f"obstacle section delta={args.delta} r={args.r}",
    )
    print(f"wrote {stem}.csv / .svg ({len(pts)} points)")
    return 0


def cmd_orbit(args) -> int:
    p = Params(args.delta, args.r)
    x = InnerState(args.omega, args.beta)
    orbit = first_return(x, p)
    if not orbit.returned:
        print(json.dumps({"tag": orbit.tag}))
        return 0
    rows = []
    state = x
    for _ in range(args.returns):
        rec = return_map(state, p)
        rows.append((rec.start.omega, rec.start.beta, rec.m, rec.nu,
                     rec.end.omega, rec.end.beta))
        state = rec.end
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"orbit_d{args.delta}_r{args.r}.csv"
    output.write_csv(path, ["omega0", "beta0", "m", "nu", "omega1", "beta1"], rows)
    print(f"wrote {path}")
    return 0


def cmd_return_map(args) -> int:
    p = Params(args.delta, args.r)
    rec = return_map(InnerState(args.omega, args.beta), p)
    payload = {
        "start": {"omega": rec.start.omega, "beta": rec.start.beta},
        "end": {"omega": rec.end.omega, "beta": rec.end.beta},
        "m": rec.m,
        "nu": rec.nu,
        "theta": rec.theta,
        "winding": rec.winding,
    }
    print(output.dumps_json(payload), end="")
    return 0


def cmd_jacobian_check(args) -> int:
    p = Params(args.delta, args.r)
    rec = return_map(InnerState(args.omega, args.beta), p)
    terms = return_map_jacobian(rec, p)
    fd = return_map_jacobian_fd(InnerState(args.omega, args.beta), p, args.step)
    payload = {
        "analytic": terms.matrix.tolist(),
        "finite_difference": fd.tolist(),
        "det": terms.det,
        "det_expected": terms.det_expected,
        "trace": terms.trace,
        "max_rel_err": float(np.max(np.abs(fd - terms.matrix)
                                    / np.maximum(np.abs(terms.matrix), 1.0))),
    }
    print(output.dumps_json(payload), end="")
    return 0


def cmd_cones(args) -> int:
    p = Params(args.delta, args.r)
    reports = [
        conefield.zeta_bounds_check(p, args.samples, args.seed).to_dict(),
        conefield.a21_bound_check(p, max(args.samples // 10, 100), args.seed).to_dict(),
        conefield.cone_preservation_check(p, args.samples, args.seed).to_dict(),
    ]
    c1, c2 = conefield.slope_bounds(p, max(args.samples // 10, 100), args.seed)
    payload = {"reports": reports, "c1": c1, "c2": c2}
    if args.output:
        output.write_json(args.output, payload)
        print(f"wrote {args.output}")
    else:
        print(output.dumps_json(payload), end="")
    return 0 if all(r["passed"] for r in reports) else 1


def cmd_normals(args) -> int:
    family = normal_orbits.build_family(args.delta, args.m_max, n_min=args.n_min)
    payload = family.to_dict()
    if args.output:
        output.write_json(args.output, payload)
        print(f"wrote {args.output}")
    else:
        print(output.dumps_json(payload), end="")
    return 0


def cmd_strips(args) -> int:
    p = Params(args.delta, args.r)
    family = normal_orbits.build_family(args.delta, args.m_max, n_min=args.n_min)
    system = horseshoe.build_strips(family, p)
    matrix = horseshoe.crossing_matrix(system)
    payload = {
        "family": family.to_dict(),
        "crossing": matrix.to_dict(),
        "transitive": matrix.transitive(),
        "widths": [s.max_width() for s in system.stable],
    }
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    output.write_json(out / "strips.json", payload)
    rows = []
    for i, s in enumerate(system.stable):
        for w, b in s.edge_low:
            rows.append((w, b, f"stable_{i}_low"))
        for w, b in s.edge_high:
            rows.append((w, b, f"stable_{i}_high"))
    output.write_csv(out / "strips.csv", ["omega", "beta", "tag"], rows)
    print(f"wrote {out}/strips.json and strips.csv")
    return 0


def cmd_tangency(args) -> int:
    res = tangency.find_tangency_r(
        args.delta, args.anchor, (args.r_lo, args.r_hi),
        p_over_q=Fraction(args.p, args.q) if args.q else None,
    )
    payload = res.to_dict()
    if args.output:
        output.write_json(args.output, payload)
        print(f"wrote {args.output}")
    else:
        print(output.dumps_json(payload), end="")
    return 0


def cmd_gamma(args) -> int:
    curve = tangency.gamma_curve(
        Fraction(args.p, args.q), args.m, args.anchor,
        np.linspace(args.t_lo, args.t_hi, args.n),
    )
    payload = curve.to_dict()
    if args.output:
        output.write_json(args.output, payload)
        print(f"wrote {args.output}")
    else:
        print(output.dumps_json(payload), end="")
    return 0


def _scan_cell(cell) -> tuple[int, str, dict]:
    """One (delta, r, task) job; returns (index, name, payload)."""
    idx, delta, r, task, seed, options = cell
    name = f"cell_{idx:04d}_{task}"
    if not in_parameter_domain(delta, r):
        return idx, name, {"skipped": "outside parameter domain",
                           "delta": delta, "r": r, "task": task}
    try:
        p = Params(delta, r)
        if task == "cones":
            if not p.in_expansion_regime():
                return idx, name, {"skipped": "outside expansion regime",
                                   "delta": delta, "r": r, "task": task}
            rep = conefield.cone_preservation_check(
                p, int(options.get("samples", 2000)), seed)
            return idx, name, {"delta": delta, "r": r, "task": task,
                               "report": rep.to_dict()}
        if task == "normals":
            fam = normal_orbits.build_family(delta, int(options.get("m_max", 12)))
            return idx, name, {"delta": delta, "r": r, "task": task,
                               "family": fam.to_dict()}
        if task == "strips":
            fam = normal_orbits.build_family(
                delta, int(options.get("m_max", 12)),
                n_min=int(options.get("n_min", 4)))
            system = horseshoe.build_strips(fam, p, rows=int(options.get("rows", 101)))
            matrix = horseshoe.crossing_matrix(system)
            return idx, name, {"delta": delta, "r": r, "task": task,
                               "crossing": matrix.to_dict(),
                               "transitive": matrix.transitive()}
        if task == "tangency":
            res = tangency.find_tangency_r(
                delta, float(options.get("anchor", 0.0)),
                (float(options.get("r_lo", max(r / 4, 1e-4))),
                 float(options.get("r_hi", min(4 * r, 0.03)))))
            return idx, name, {"delta": delta, "r": r, "task": task,
                               "result": res.to_dict()}
        if task == "portrait":
            pts = _portrait_points(p, int(options.get("orbits", 40)),
                                   int(options.get("iters", 200)), seed)
            return idx, name, {"delta": delta, "r": r, "task": task,
                               "points": int(len(pts)),
                               "digest": hashlib.sha256(
                                   pts.tobytes()).hexdigest()}
        return idx, name, {"error": f"unknown task {task}"}
    except BilliardError as exc:
        return idx, name, {"delta": delta, "r": r, "task": task,
                           "failed": f"{type(exc).__name__}: {exc}"}


def run_scan(config: ScanConfig) -> Path:
    """Run the task matrix over the grid; one JSON per cell plus an index.

    Per-cell failures are recorded in the index and never abort the scan.
    Output bytes depend only on the config (work stealing cannot reorder
    results because cells are written by index after all futures resolve).
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    idx = 0
    for delta in config.delta_grid:
        for r in config.r_grid:
            for task in config.tasks:
                cells.append((idx, delta, r, task, config.seed + idx, config.options))
                idx += 1
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_scan_cell, cells))
    else:
        results = [_scan_cell(c) for c in cells]
    results.sort(key=lambda t: t[0])
    index = []
    for i, name, payload in results:
        output.write_json(out / f"{name}.json", payload)
        status = ("skipped" if "skipped" in payload
                  else "failed" if "failed" in payload or "error" in payload
                  else "ok")
        index.append({"cell": i, "file": f"{name}.json", "status": status,
                      "reason": payload.get("skipped") or payload.get("failed")})
    output.write_json(out / "index.json", {
        "cells": index,
        "config": {
            "delta_grid": config.delta_grid,
            "r_grid": config.r_grid,
            "tasks": config.tasks,
            "seed": config.seed,
            "workers": config.workers,
        },
    })
    return out


def scan_digest(directory) -> str:
    """SHA-256 over the scan directory contents, name-ordered."""
    h = hashlib.sha256()
    for path in sorted(Path(directory).glob("*.json")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def cmd_scan(args) -> int:
    overrides = {
        "seed": args.seed,
        "workers": args.workers,
        "output_dir": args.output_dir,
    }
    config = ScanConfig.load(args.config, overrides)
    out = run_scan(config)
    print(f"scan complete: {out} digest {scan_digest(out)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="annulus",
        description="Annular billiard maps, hyperbolicity certificates, and tangency continuation",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_params(q, r_required=True):
        q.add_argument("--delta", type=float, required=True)
        q.add_argument("--r", type=float, required=r_required)

    q = sub.add_parser("portrait", help="iterate the return map and plot the section")
    add_params(q)
    q.add_argument("--orbits", type=int, default=60)
    q.add_argument("--iters", type=int, default=400)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--output-dir", default="out")
    q.set_defaults(func=cmd_portrait)

    q = sub.add_parser("orbit", help="trace returns from one launch")
    add_params(q)
    q.add_argument("--omega", type=float, required=True)
    q.add_argument("--beta", type=float, default=0.0)
    q.add_argument("--returns", type=int, default=100)
    q.add_argument("--output-dir", default="out")
    q.set_defaults(func=cmd_orbit)

    q = sub.add_parser("return-map", help="one application of the return map")
    add_params(q)
    q.add_argument("--omega", type=float, required=True)
    q.add_argument("--beta", type=float, default=0.0)
    q.set_defaults(func=cmd_return_map)

    q = sub.add_parser("jacobian-check", help="analytic vs finite-difference tangent map")
    add_params(q)
    q.add_argument("--omega", type=float, required=True)
    q.add_argument("--beta", type=float, default=0.0)
    q.add_argument("--step", type=float, default=1e-6)
    q.set_defaults(func=cmd_jacobian_check)

    q = sub.add_parser("cones", help="cone-field hyperbolicity certificates")
    add_params(q)
    q.add_argument("--samples", type=int, default=10000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--output")
    q.set_defaults(func=cmd_cones)

    q = sub.add_parser("normals", help="normal-orbit family with spacing audit")
    q.add_argument("--delta", type=float, required=True)
    q.add_argument("--m-max", type=int, default=12)
    q.add_argument("--n-min", type=int, default=4)
    q.add_argument("--output")
    q.set_defaults(func=cmd_normals)

    q = sub.add_parser("strips", help="horseshoe strips and crossing matrix")
    add_params(q)
    q.add_argument("--m-max", type=int, default=12)
    q.add_argument("--n-min", type=int, default=5)
    q.add_argument("--output-dir", default="out")
    q.set_defaults(func=cmd_strips)

    q = sub.add_parser("tangency", help="continue a manifold-symmetry touch in the radius")
    q.add_argument("--delta", type=float, required=True)
    q.add_argument("--anchor", type=float, default=0.0)
    q.add_argument("--r-lo", type=float, required=True)
    q.add_argument("--r-hi", type=float, required=True)
    q.add_argument("--p", type=int, default=0)
    q.add_argument("--q", type=int, default=0)
    q.add_argument("--output")
    q.set_defaults(func=cmd_tangency)

    q = sub.add_parser("gamma", help="leading-order tangency parameter curve")
    q.add_argument("--p", type=int, required=True)
    q.add_argument("--q", type=int, required=True)
    q.add_argument("--m", type=int, required=True)
    q.add_argument("--anchor", type=float, default=0.0)
    q.add_argument("--t-lo", type=float, default=-0.2)
    q.add_argument("--t-hi", type=float, default=0.2)
    q.add_argument("--n", type=int, default=41)
    q.add_argument("--output")
    q.set_defaults(func=cmd_gamma)

    q = sub.add_parser("scan", help="parallel parameter scan from a JSON config")
    q.add_argument("--config", required=True)
    q.add_argument("--seed", type=int)
    q.add_argument("--workers", type=int)
    q.add_argument("--output-dir")
    q.set_defaults(func=cmd_scan)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"precondition violation: {exc}", file=sys.stderr)
        return 2
    except BilliardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
