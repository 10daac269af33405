"""Command-line front end.

Exit codes: 0 success, 1 domain or runtime failure, 2 usage or parse failure.
Outputs go to ``--out``, else ``output.dir`` from the config, else
``$CONETREE_SCRATCH/<command>``, else ``./conetree-out/<command>``.
"""
import argparse
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .errors import ConeTreeError
from .galton_watson import gw_moment_statistic
from .green import detect_bands, dos, operator_norm_bound, solve_continued
from .matrix import sphere_counts, validate_matrix
from .perturbation import SAMPLE_VERTEX_CAP, eta_sweep, radial_sweep
from .reports import MomentReport, boundedness_flag, write_csv, write_json, write_manifest
from .tree import DEFAULT_VERTEX_CAP, build_tree

SCRATCH_ENV = "CONETREE_SCRATCH"
DEFAULT_SCHEDULE = (0.1, 0.03, 0.01, 3e-3, 1e-3)


class AxiomFailure(ConeTreeError):
    pass


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _setting(args, cfg: ExperimentConfig, name, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.experiment.get(name, default)


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        out = Path(args.out)
    elif cfg.output_dir:
        out = Path(cfg.output_dir)
    elif os.environ.get(SCRATCH_ENV):
        out = Path(os.environ[SCRATCH_ENV]) / args.command
    else:
        out = Path("conetree-out") / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, cfg, out: Path, name: str, schema: str, columns, rows, params: dict):
    fmt = args.format or cfg.output_format
    if fmt == "json":
        path = write_json(out / f"{name}.json", {"schema": schema, "columns": list(columns),
                                                "rows": rows})
    else:
        path = write_csv(out / f"{name}.csv", schema, columns, rows)
    manifest = write_manifest(out / "manifest.json", args.command, cfg.path,
                              _base_params(cfg) | params, [path])
    return path, manifest


def _base_params(cfg: ExperimentConfig) -> dict:
    M = cfg.matrix
    return {"matrix": M.entries.tolist(), "labels": list(M.names), "root": M.names[cfg.root],
            "solver": asdict(cfg.solver), "seed": cfg.seed}


def _checked(cfg: ExperimentConfig):
    report = validate_matrix(cfg.matrix)
    if not report.ok:
        raise AxiomFailure("; ".join(report.lines()))
    return cfg.matrix


def _settings(args, cfg):
    eta = getattr(args, "eta", None)
    if eta is None:
        eta = cfg.experiment.get("eta")
    return cfg.solver if eta is None else cfg.solver.with_eta_floor(float(eta))


def cmd_validate(args, cfg: ExperimentConfig) -> int:
    report = validate_matrix(cfg.matrix)
    lines = list(report.lines())
    ok = report.ok
    b = cfg.branching
    if b is not None:
        if b.label_count != cfg.matrix.label_count:
            lines.append("branching label count: FAIL")
            ok = False
        b1 = b.b1()
        b2 = b.b2()
        lines.append("B1 finite moments: " + ("pass" if b1 else "FAIL"))
        lines.append("B2 no childless label: " + ("pass" if b2 else "FAIL"))
        ok = ok and b1 and b2
    print("\n".join(lines))
    print("valid" if ok else "invalid")
    return 0 if ok else 1


def cmd_build(args, cfg):
    M = _checked(cfg)
    R = int(_setting(args, cfg, "depth", 5))
    out = _out_dir(args, cfg)
    cap = args.vertex_cap or DEFAULT_VERTEX_CAP
    tree = build_tree(M, cfg.root, R, cap)
    cols = ["n"] + list(M.names) + ["total"]
    rows = []
    for n in range(R + 1):
        c = tree.census(n, M.label_count)
        if tuple(c.tolist()) != sphere_counts(M, cfg.root, n):
            raise ConeTreeError(f"sphere {n} census disagrees with M^n")
        rows.append({"n": n, **{name: int(x) for name, x in zip(M.names, c)}, "total": int(c.sum())})
    path, _ = _emit(args, cfg, out, "census", "census", cols, rows,
                    {"depth": R, "vertex_cap": cap, "vertices": len(tree)})
    if args.vertices:
        vrows = [{"index": i, "label": M.names[tree.labels[i]], "parent": int(tree.parent[i]),
                  "depth": int(tree.depth[i])} for i in range(len(tree))]
        write_csv(out / "vertices.csv", "vertices", ["index", "label", "parent", "depth"], vrows)
    print(f"{len(tree)} vertices to depth {R}; census written to {path}")
    return 0


def _window(args, cfg, M):
    w = args.window if args.window is not None else cfg.experiment.get("window")
    if w is None:
        r = operator_norm_bound(M)
        return (-r, r)
    return (float(w[0]), float(w[1]))


def cmd_bands(args, cfg):
    M = _checked(cfg)
    settings = _settings(args, cfg)
    window = _window(args, cfg, M)
    step = float(_setting(args, cfg, "grid_step", 0.01))
    bands = detect_bands(M, window, step, settings, cfg.root, args.workers)
    rows = [{"band_index": i, "a": a, "b": b} for i, (a, b) in enumerate(bands)]
    _emit(args, cfg, _out_dir(args, cfg), "bands", "bands", ["band_index", "a", "b"], rows,
          {"window": list(window), "grid_step": step, "eta_floor": settings.eta_floor,
           "indicator_threshold": settings.threshold, "endpoint_tol": settings.endpoint_tol})
    for i, (a, b) in enumerate(bands):
        print(f"band {i}: [{a!r}, {b!r}]")
    return 0


def cmd_dos(args, cfg):
    M = _checked(cfg)
    settings = _settings(args, cfg)
    lo, hi = _window(args, cfg, M)
    step = float(_setting(args, cfg, "grid_step", 0.01))
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    grid = lo + step * np.arange(n)
    curve = dos(M, cfg.root, grid, settings, args.workers)
    cum = curve.cumulative()
    rows = [{"E": float(E), "rho": float(r), "integral": float(c)}
            for E, r, c in zip(curve.energies, curve.rho, cum)]
    total = float(cum[-1])
    _emit(args, cfg, _out_dir(args, cfg), "dos", "dos", ["E", "rho", "integral"], rows,
          {"window": [lo, hi], "grid_step": step, "eta_floor": settings.eta_floor,
           "integral": total})
    print(f"integral of rho over [{lo}, {hi}]: {total!r}")
    return 0


def cmd_green(args, cfg):
    M = _checked(cfg)
    settings = _settings(args, cfg)
    E = float(_setting(args, cfg, "energy", 0.0))
    z = complex(E, settings.eta_floor)
    g = solve_continued(M, z, settings)
    rows = [{"label": M.names[j], "re": float(v.real), "im": float(v.imag)}
            for j, v in enumerate(g.values)]
    _emit(args, cfg, _out_dir(args, cfg), "green", "green", ["label", "re", "im"], rows,
          {"energy": E, "eta": settings.eta_floor, "iterations": g.iterations})
    for r in rows:
        print(f"G[{r['label']}]({E!r}+{settings.eta_floor!r}i) = {r['re']!r} + {r['im']!r}i")
    return 0


def _emit_report(args, cfg, report: MomentReport, params):
    cols = report.columns()
    return _emit(args, cfg, _out_dir(args, cfg), "moments", f"moments-{report.kind}", cols,
                 report.rows(), params | {"flag": report.flag})


def _moment_params(args, cfg):
    return {
        "samples": int(_setting(args, cfg, "samples", 100)),
        "depth": _setting(args, cfg, "depth", None),
        "p": float(_setting(args, cfg, "p", 2.0)),
        "eta_schedule": tuple(float(e) for e in _setting(args, cfg, "eta_schedule", DEFAULT_SCHEDULE)),
        "seed": int(args.seed if args.seed is not None else cfg.seed),
        "energy": float(_setting(args, cfg, "energy", 0.0)),
        "boundary": _setting(args, cfg, "boundary", "reference"),
        "vertex_cap": args.vertex_cap or SAMPLE_VERTEX_CAP,
    }


def cmd_random(args, cfg):
    M = _checked(cfg)
    cfg.require("perturbation")
    p = _moment_params(args, cfg)
    depth = None if p["depth"] is None else int(p["depth"])
    report = eta_sweep(M, cfg.root, p["energy"], cfg.perturbation, p["p"], p["eta_schedule"],
                       p["samples"], depth, p["seed"], p["boundary"], cfg.solver, args.workers,
                       p["vertex_cap"], check=not args.no_energy_check)
    model = cfg.perturbation
    _emit_report(args, cfg, report, p | {"lambda": model.lam, "model": repr(model)})
    _print_report(report)
    return 0


def cmd_radial(args, cfg):
    M = _checked(cfg)
    cfg.require("radial")
    p = _moment_params(args, cfg)
    report = radial_sweep(M, cfg.root, cfg.radial, cfg.radial_lambda, p["energy"],
                          p["eta_schedule"], p["p"], cfg.solver)
    _emit_report(args, cfg, report, {k: p[k] for k in ("p", "eta_schedule", "energy")}
                 | {"lambda": cfg.radial_lambda, "cutoff": cfg.radial.cutoff})
    _print_report(report)
    return 0


def cmd_gw(args, cfg):
    M = _checked(cfg)
    cfg.require("branching")
    p = _moment_params(args, cfg)
    depth = 10 if p["depth"] is None else int(p["depth"])
    good = int(_setting(args, cfg, "good_depth", 2))
    entries = [gw_moment_statistic(cfg.branching, M, cfg.root, complex(p["energy"], eta), p["p"],
                                   p["samples"], depth, p["seed"], p["boundary"], good, cfg.solver,
                                   args.workers, p["vertex_cap"])
               for eta in p["eta_schedule"]]
    report = MomentReport("gw", entries, boundedness_flag(entries), {"good_depth": good})
    _emit_report(args, cfg, report, p | {"depth": depth, "good_depth": good})
    _print_report(report)
    return 0


def _print_report(report: MomentReport):
    for e in report.entries:
        print(f"eta={e.eta!r} n={e.n} depth={e.depth} mean={e.mean!r} stderr={e.stderr!r}")
    print(f"flag: {report.flag}")


COMMANDS = {"validate": cmd_validate, "build": cmd_build, "bands": cmd_bands, "dos": cmd_dos,
            "green": cmd_green, "random": cmd_random, "radial": cmd_radial, "gw": cmd_gw}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conetree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="YAML experiment configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--vertex-cap", type=int, dest="vertex_cap")
        return p

    v = sub.add_parser("validate", help="check matrix and branching axioms")
    v.add_argument("config")

    b = common(sub.add_parser("build", help="build a truncated tree and write its sphere census"))
    b.add_argument("--depth", type=int)
    b.add_argument("--vertices", action="store_true", help="also write the vertex list")

    for name, text in (("bands", "detect spectral bands"), ("dos", "density of states at the root"),
                       ("green", "Green vector at one energy")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--eta", type=float, help="imaginary part (eta floor)")
        if name == "green":
            p.add_argument("--energy", type=float)
        else:
            p.add_argument("--window", type=float, nargs=2, metavar=("EMIN", "EMAX"))
            p.add_argument("--grid-step", type=float, dest="grid_step")

    for name, text in (("random", "random perturbation moments"), ("radial", "radial potential sweep"),
                       ("gw", "Galton-Watson moments")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--samples", type=int)
        p.add_argument("--depth", type=int)
        p.add_argument("--p", type=float)
        p.add_argument("--eta-schedule", type=_floats, dest="eta_schedule")
        p.add_argument("--seed", type=int)
        p.add_argument("--energy", type=float)
        p.add_argument("--boundary", choices=("reference", "free"))
        if name == "random":
            p.add_argument("--no-energy-check", action="store_true", dest="no_energy_check")
        if name == "gw":
            p.add_argument("--good-depth", type=int, dest="good_depth")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConeTreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
