"""Command-line driver: ``cradesign {mesh,design,evaluate,plot,full-run}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
All outputs land under ``--out`` (or the config's ``output``), and every
command finishes by writing ``manifest.json`` with the config hash, seed and
SHA-256 of every artifact in the directory.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from . import config as cfgmod
from . import cseval, fresnel, objective, optimizer, plotting, sensing
from .forward import ForwardModel
from .geometry import (GeometryError, Port, ReflectorMesh, build_imaging_grid,
                       build_measurement_plan, build_paraboloid_mesh, check_illumination,
                       frequency_sweep)

log = logging.getLogger("cradesign")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
TRA, RANDOM = "TRA", "random"


class NumericalFailure(RuntimeError):
    pass


class InputError(ValueError):
    pass


@dataclass
class Setup:
    doc: dict
    mesh: ReflectorMesh
    model: ForwardModel
    box: optimizer.BoxFeasibleSet
    null: np.ndarray | None


def _ports(entries):
    return [Port(p["position"], p.get("polarization", [0, 0, 1]), p.get("boresight", [-1, 0, 0]),
                 p.get("taper", 2.0)) for p in entries]


def build_mesh(doc) -> ReflectorMesh:
    g = doc["geometry"]
    return build_paraboloid_mesh(g["focal_length"], g["diameter"], g["facets"], g["thickness"],
                                 apex_position=g["apex"], axis=g["axis"])


def build_setup(doc, mesh: ReflectorMesh | None = None) -> Setup:
    mesh = mesh or build_mesh(doc)
    tx, rx = _ports(doc["ports"]["tx"]), _ports(doc["ports"]["rx"])
    check_illumination(mesh, tx + rx)
    fr = doc["frequencies"]
    gr = doc["grid"]
    grid = build_imaging_grid(gr["center"], gr["extent"][0], gr["extent"][1], gr["counts"])
    plan = build_measurement_plan(tx, rx, frequency_sweep(fr["start"], fr["stop"], fr["count"]))
    fw = doc.get("forward", {})
    model = ForwardModel(mesh, grid, tx, rx, plan, amplitude=doc["ports"].get("amplitude", 1.0),
                         eps_b=fw.get("eps_b", 1.0), order=fw.get("quadrature", 3),
                         include_direct=fw.get("include_direct", False),
                         physical_pairing=fw.get("physical_pairing", False))
    b = doc.get("bounds", {})
    box = optimizer.BoxFeasibleSet.uniform(mesh.num_facets, b.get("lower", 1.0), b.get("upper", 30.0))
    nl = doc["objective"].get("null")
    null = objective.null_mask(grid, nl["center"], nl["radius"]) if nl else None
    if null is not None and not null.any():
        raise InputError("$.objective.null: the null region contains no grid voxel")
    return Setup(doc, mesh, model, box, null)


# ---------------------------------------------------------------- file helpers

def write_eps_csv(path, eps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon"])
        for v in eps:
            w.writerow([repr(float(v))])


def read_eps_csv(path) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read design {path}: {exc.strerror}") from None
    try:
        return np.array([float(r[0]) for r in rows[1:] if r])
    except (ValueError, IndexError):
        raise InputError(f"{path}: malformed design file") from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, doc: dict, command: str) -> dict:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    man = {
        "command": command,
        "config_hash": cfgmod.config_hash(doc),
        "seed": doc["seed"],
        "profile": doc.get("profile"),
        "artifacts": {p.relative_to(out).as_posix(): _sha256(p) for p in files},
    }
    (out / "manifest.json").write_text(json.dumps(man, indent=1, sort_keys=True) + "\n")
    return man


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def cmd_mesh(doc, out: Path) -> ReflectorMesh:
    mesh = build_mesh(doc)
    mesh.save(out / "mesh.json")
    log.info("mesh: %d facets", mesh.num_facets)
    return mesh


def _objective_cfg(setup: Setup, d: dict) -> objective.ObjectiveConfig:
    M, N = setup.model.shape
    if d.get("column") == objective.NULL_STEERING and "null_weight" not in d:
        d = dict(d, null_weight=setup.doc["objective"]["null"].get("weight", -30.0))
    return objective.config_from_dict(d, M, N, null=setup.null,
                                      zeta=setup.doc["objective"].get("zeta", 1.0))


def cmd_design(setup: Setup, out: Path) -> dict:
    """Optimize every configured design from the shared random start."""
    doc = setup.doc
    ocfg = optimizer.OptimizerConfig(seed=doc["seed"], **doc.get("optimizer", {}))
    x0 = setup.box.random_point(doc["seed"])
    write_eps_csv(out / f"eps_{RANDOM}.csv", x0)
    designs = {}
    failures = []
    for d in doc["objective"]["designs"]:
        name = cfgmod.design_name(d)
        problem = objective.DesignProblem(setup.model, _objective_cfg(setup, d))
        traj = optimizer.run(problem, setup.box, ocfg, x0=x0, record_terms=True)
        log.info("design %s: %s after %d iterations, objective %.6g -> %.6g", name, traj.status,
                 traj.final.iteration, traj.initial.value, traj.final.value)
        write_eps_csv(out / f"eps_{name}.csv", traj.x)
        write_eps_csv(out / f"diff_{name}.csv", traj.x - x0)
        traj.write_jsonl(out / f"trajectory_{name}.jsonl")
        designs[name] = traj.x
        if traj.status == optimizer.LINE_SEARCH_FAILED:
            failures.append(f"{name}: {traj.message}")
    if failures:
        raise NumericalFailure("; ".join(failures))
    return designs


def _metrics(setup: Setup, eps, beta: float, epsilon: float) -> dict:
    fm_t, fm_r = setup.model.fields(eps)
    A = sensing.assemble(fm_t, fm_r, setup.doc["objective"].get("zeta", 1.0))
    cap = {"A": sensing.regularized_logdet(A, beta),
           "G_r": sum(sensing.regularized_logdet(fm_r.G[i], beta) for i in range(3)),
           "G_t": sum(sensing.regularized_logdet(fm_t.G[i], beta) for i in range(3))}
    bits = {"A": sensing.capacity(A, epsilon).capacity,
            "G_r": sum(sensing.capacity(fm_r.G[i], epsilon).capacity for i in range(3)),
            "G_t": sum(sensing.capacity(fm_t.G[i], epsilon).capacity for i in range(3))}
    eff = {"A": float(np.sum(np.abs(A.A) ** 2)),
           "G_r": float(np.sum(np.abs(fm_r.G) ** 2)),
           "G_t": float(np.sum(np.abs(fm_t.G) ** 2))}
    return {"capacity": cap, "capacity_bits": bits, "efficiency": eff}, A.A, fm_r


def _with_deltas(rows: dict) -> dict:
    """Add ``value - best`` for each metric column across designs."""
    for metric in ("capacity", "capacity_bits", "efficiency"):
        for col in ("A", "G_r", "G_t"):
            vals = [r[metric][col] for r in rows.values()]
            finite = [v for v in vals if np.isfinite(v)]
            best = max(finite) if finite else float("nan")
            for r in rows.values():
                r.setdefault("delta_" + metric, {})[col] = r[metric][col] - best
    return rows


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, float) and not np.isfinite(v):
        return None if np.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def format_report(rows: dict) -> str:
    cols = [("capacity", c) for c in ("A", "G_r", "G_t")] + [("efficiency", c) for c in ("A", "G_r", "G_t")]
    head = ["design"] + [f"{'cap' if m == 'capacity' else 'eff'} {c}" for m, c in cols]
    lines = []
    for name, r in rows.items():
        lines.append([name] + [f"{r[m][c]:.6g}" for m, c in cols])
        lines.append([""] + [f"{r['delta_' + m][c]:.6g}" for m, c in cols])
    widths = [max(len(x[i]) for x in [head] + lines) for i in range(len(head))]
    fmt = lambda row: "  ".join(s.rjust(w) for s, w in zip(row, widths)).rstrip()  # noqa: E731
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(x) for x in lines]) + "\n"


def cmd_evaluate(setup: Setup, out: Path, designs: dict) -> dict:
    doc = setup.doc
    ev = doc["evaluation"]
    P = setup.mesh.num_facets
    for name, eps in designs.items():
        if np.shape(eps) != (P,):
            raise InputError(f"design {name!r} has {np.size(eps)} values, mesh has {P} facets")
        if not setup.box.contains(eps):
            raise InputError(f"design {name!r} lies outside the feasible box")
    eps_b = doc.get("forward", {}).get("eps_b", 1.0)
    # uniform coating at the background permittivity: the smooth-reflector reference
    allx = {TRA: np.full(P, max(eps_b, setup.box.lower.min())), **designs}
    beta, epsilon = ev.get("capacity_beta", 1e-6), ev.get("capacity_epsilon", 1.0)
    rows, mats, recv = {}, {}, {}
    for name, eps in allx.items():
        rows[name], mats[name], recv[name] = _metrics(setup, eps, beta, epsilon)
        sensing.write_singular_values_csv(out / f"sv_{name}.csv", sensing.singular_values(mats[name]))
    _with_deltas(rows)
    report = {"designs": _json_safe(rows), "config_hash": cfgmod.config_hash(doc),
              "seed": doc["seed"], "shape": list(setup.model.shape)}

    levels = ev.get("sparsity", [1, 2, 3, 4, 5, 6])
    trials = ev.get("trials", 50)
    ref = mats.get(RANDOM)
    curves = {}
    for name, A in mats.items():
        runs = []
        if ev.get("noiseless", True):
            runs.append(("noiseless", None))
        if ev.get("snr_db") is not None:
            runs.append(("noisy", cseval.NoiseSpec(snr_db=ev["snr_db"], reference=ref)))
        for tag, noise in runs:
            curve = cseval.success_curve(A, levels, trials, noise, seed=doc["seed"])
            cseval.write_curve_csv(out / f"curve_{tag}_{name}.csv", curve, trials)
            curves.setdefault(tag, {})[name] = curve
    report["success"] = {tag: {n: [[S, r] for S, r in c] for n, c in d.items()}
                         for tag, d in curves.items()}
    if ref is not None and "noisy" in curves:
        report["noise_reference"] = RANDOM

    if setup.null is not None:
        energy = {}
        for name, fm_r in recv.items():
            e = cseval.energy_map(fm_r)
            cseval.write_map_csv(out / f"energy_{name}.csv", setup.model.grid, e)
            energy[name] = {"map": e.tolist(), "nulled": e[setup.null].tolist()}
        cseval.write_json(out / "energy.json", {"null_voxels": np.flatnonzero(setup.null).tolist(),
                                                "designs": energy})
    _write_json(out / "report.json", report)
    (out / "report.txt").write_text(format_report(rows))
    return report


def load_designs(out: Path, paths=None) -> dict:
    """Designs from explicit ``name=path`` pairs or every ``eps_*.csv`` in ``out``."""
    if paths:
        pairs = []
        for item in paths:
            name, sep, p = item.partition("=")
            if not sep:
                p, name = item, Path(item).stem.removeprefix("eps_")
            pairs.append((name, Path(p)))
    else:
        pairs = [(p.stem.removeprefix("eps_"), p) for p in sorted(out.glob("eps_*.csv"))]
    if not pairs:
        raise InputError(f"no designs found in {out}")
    designs = {name: read_eps_csv(p) for name, p in pairs}
    if RANDOM in designs:
        designs = {RANDOM: designs.pop(RANDOM), **designs}
    return designs


def cmd_plot(out: Path, paths=None) -> list[Path]:
    """Render SVGs for the artifacts (explicit paths or everything in ``out``)."""
    files = [Path(p) for p in paths] if paths else sorted(p for p in out.iterdir() if p.is_file())
    for p in files:
        if not p.is_file():
            raise InputError(f"missing artifact {p}")
    pdir = out / "plots"
    pdir.mkdir(exist_ok=True)
    written = []
    sv = {p.stem[3:]: sensing.read_singular_values_csv(p) for p in files
          if p.name.startswith("sv_") and p.suffix == ".csv"}
    if sv:
        fig = plotting.singular_value_figure(sv)
        plotting.save_svg(fig, pdir / "singular_values.svg")
        written.append(pdir / "singular_values.svg")
    curves = {}
    for p in files:
        if p.name.startswith("curve_") and p.suffix == ".csv":
            tag, _, name = p.stem[6:].partition("_")
            try:
                curves.setdefault(tag, {})[name] = cseval.read_curve_csv(p)
            except (KeyError, ValueError):
                raise InputError(f"{p}: corrupt success-curve file") from None
    for tag, d in curves.items():
        target = pdir / f"success_{tag}.svg"
        plotting.save_svg(plotting.success_curve_figure(d), target)
        written.append(target)
    diffs = [p for p in files if p.name.startswith("diff_") and p.suffix == ".csv"]
    if diffs:
        mesh_path = (diffs[0].parent / "mesh.json")
        if not mesh_path.is_file():
            raise InputError(f"difference maps need {mesh_path}")
        try:
            mesh = ReflectorMesh.load(mesh_path)
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{mesh_path}: corrupt mesh file ({exc})") from None
        for p in diffs:
            target = pdir / f"{p.stem}.svg"
            plotting.save_svg(plotting.eps_difference_figure(mesh, read_eps_csv(p)), target)
            written.append(target)
    for p in files:
        if p.name.startswith("energy_") and p.suffix == ".csv":
            try:
                img = cseval.read_map_csv(p)
            except ValueError:
                raise InputError(f"{p}: corrupt energy map") from None
            target = pdir / f"{p.stem}.svg"
            plotting.save_svg(plotting.energy_map_figure(img), target)
            written.append(target)
    if not written:
        raise InputError("no plottable artifacts found")
    return written


# ---------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (merged over the profile)")
    common.add_argument("--out", help="output directory (default: config 'output')")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--profile", choices=sorted(cfgmod.PROFILES), help="base profile")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="cradesign", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("mesh", parents=[common], help="build and save the reflector mesh")
    sub.add_parser("design", parents=[common], help="optimize the configured designs")
    ev = sub.add_parser("evaluate", parents=[common], help="tables, spectra, curves, maps")
    ev.add_argument("designs", nargs="*", help="NAME=PATH design CSVs (default: eps_*.csv in --out)")
    pl = sub.add_parser("plot", parents=[common], help="render SVG plots from artifacts")
    pl.add_argument("artifacts", nargs="*", help="artifact files (default: everything in --out)")
    sub.add_parser("full-run", parents=[common], help="mesh, design, evaluate and plot")
    return ap


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        doc = cfgmod.load(args.config, args.profile, args.seed, args.out)
        out = Path(doc.get("output", "out"))
        out.mkdir(parents=True, exist_ok=True)
        cmd = args.command
        if cmd == "plot":
            cmd_plot(out, args.artifacts)
            write_manifest(out, doc, cmd)
            return EXIT_OK
        _write_json(out / "config.json", doc)
        if cmd == "mesh":
            cmd_mesh(doc, out)
        else:
            mesh = cmd_mesh(doc, out) if cmd == "full-run" else None
            setup = build_setup(doc, mesh)
            if cmd == "design":
                cmd_design(setup, out)
            elif cmd == "evaluate":
                cmd_evaluate(setup, out, load_designs(out, args.designs))
            else:
                designs = cmd_design(setup, out)
                x0 = setup.box.random_point(doc["seed"])
                cmd_evaluate(setup, out, {RANDOM: x0, **designs})
                cmd_plot(out)
        write_manifest(out, doc, cmd)
        return EXIT_OK
    except (cfgmod.ConfigError, InputError, GeometryError, objective.ObjectiveError) as exc:
        print(f"cradesign: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except plotting.PlotError as exc:
        print(f"cradesign: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, fresnel.FresnelError, sensing.SensingError, linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"cradesign: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
