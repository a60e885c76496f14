"""Command-line front end: manifests, pipelines, exports and the grid cache.

Every subcommand builds a manifest (a built-in default, optionally replaced
by ``--manifest FILE`` and edited with ``--set key=JSON``) and runs it.
``crossext run FILE`` executes a manifest as is.

Exit codes: 0 success, 2 invalid manifest, 3 numerical failure. Failures
also write ``diagnostic.json`` to the output directory.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import bergman, extend
from .cross import BoundReport, CrossSpec, FactorSpec, envelope_connected
from .geometry import (BoundaryArcSet, GeometryError, PlanarDomain, ball_defining_function,
                       collar_gradient_gap, perturbed_ball, slice_domain, smoothed_collar, tangent_ball_radius)
from .harmonic import (GridConvergenceError, GridSpec, MeasureGrid, WosConfig, WosError, harmonic_measure_disk_arc,
                       harmonic_measure_grid, harmonic_measure_wos)
from .pshmeasure import ExhaustionError

log = logging.getLogger("crossext")

SCHEMA_VERSION = "1"
KINDS = ("measure", "envelope", "basis", "extend", "verify", "slice", "schedule")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (GridConvergenceError, WosError, ExhaustionError, GeometryError, bergman.BasisConditionError,
                    bergman.QuadratureError, bergman.DivergenceError, np.linalg.LinAlgError, FloatingPointError)
_UMASK = os.umask(0o022)
os.umask(_UMASK)
PLOT_LEVELS = tuple(round(0.1 * k, 1) for k in range(1, 10))


class ManifestError(ValueError):
    """The manifest is malformed or misses a required field."""


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

REQUIRED = {
    "measure": ("domain", "arcs", "method"),
    "envelope": ("cross", "resolution"),
    "basis": ("domain", "subset", "K"),
    "extend": ("cross", "function", "K"),
    "verify": ("cross", "function", "samples"),
    "slice": ("collar", "Q"),
    "schedule": ("cross", "points"),
}

_UNIT = {"kind": "disk", "center": [0.0, 0.0], "radius": 1.0}
_HALF = {"center": math.pi / 2, "length": math.pi}
_THREE_QUARTER = {"center": 0.0, "length": 1.5 * math.pi}

DEFAULTS = {
    "measure": {"domain": _UNIT, "arcs": _HALF, "method": "grid", "resolution": 256},
    "envelope": {"cross": {"factors": [{"domain": _UNIT, "plural": _THREE_QUARTER},
                                       {"domain": _UNIT, "plural": _THREE_QUARTER}]}, "resolution": 64},
    "basis": {"domain": _UNIT, "subset": {"kind": "disk", "center": [0.0, 0.0], "radius": 0.5}, "K": 40,
              "mu": "area"},
    "extend": {"cross": {"factors": [{"domain": _UNIT, "plural": {"interior": {"kind": "disk", "center": [0.0, 0.0],
                                                                               "radius": 0.5}}},
                                     {"domain": _UNIT, "plural": _THREE_QUARTER}]},
               "function": {"name": "rational-pole", "params": {"p": 2.0}}, "K": 40, "grid": [16, 32]},
    "verify": {"cross": {"factors": [{"domain": _UNIT, "plural": _THREE_QUARTER},
                                     {"domain": _UNIT, "plural": _THREE_QUARTER}]},
               "function": {"name": "exp-sum"}, "samples": 2000},
    "slice": {"collar": {"model": "perturbed", "r": 1.0, "c": 1.0, "epsilon": 0.01}, "Q": [0.0, 0.0]},
    "schedule": {"cross": {"factors": [{"domain": _UNIT, "plural": _THREE_QUARTER},
                                       {"domain": _UNIT, "plural": _THREE_QUARTER}]},
                 "points": [[[0.0, 0.0], [0.0, 0.0]]], "c": 1.0, "resolution": 128},
}


@dataclass(frozen=True)
class RunManifest:
    """Validated manifest: schema version, experiment kind and its parameters."""

    kind: str
    params: dict
    version: str = SCHEMA_VERSION
    output: str | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        if not isinstance(data, dict):
            raise ManifestError("manifest must be a JSON object")
        version = str(data.get("version", ""))
        if version != SCHEMA_VERSION:
            raise ManifestError(f"unsupported manifest version {version!r} (expected {SCHEMA_VERSION!r})")
        kind = data.get("kind")
        if kind not in KINDS:
            raise ManifestError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
        missing = [k for k in REQUIRED[kind] if k not in data]
        if kind == "measure" and data.get("method") in ("grid", "closed-form") and "resolution" not in data:
            missing.append("resolution")
        if kind == "measure" and data.get("method") == "wos" and "points" not in data:
            missing.append("points")
        if missing:
            raise ManifestError(f"manifest of kind {kind!r} is missing required field(s): {', '.join(missing)}")
        params = {k: v for k, v in data.items() if k not in ("version", "kind", "output", "seed")}
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ManifestError("seed must be an integer")
        return cls(kind, params, version, data.get("output"), seed)

    def to_dict(self) -> dict:
        out = {"version": self.version, "kind": self.kind, "seed": self.seed, **self.params}
        if self.output is not None:
            out["output"] = self.output
        return out


def load_manifest(path) -> RunManifest:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from None
    return RunManifest.from_dict(data)


def _parse_domain(d) -> PlanarDomain:
    if not isinstance(d, dict):
        raise ManifestError("domain descriptor must be an object")
    try:
        return PlanarDomain.from_json(d)
    except KeyError as exc:
        raise ManifestError(f"domain descriptor misses {exc}") from None


def _parse_arcs(a) -> BoundaryArcSet:
    if isinstance(a, dict):
        if "center" in a and "length" in a:
            return BoundaryArcSet.centered(float(a["center"]), float(a["length"]))
        raise ManifestError("arc descriptor needs 'center' and 'length'")
    if a == "full" or isinstance(a, list):
        return BoundaryArcSet.from_json(a)
    raise ManifestError(f"cannot parse arc set {a!r}")


def _parse_cross(c) -> CrossSpec:
    if not isinstance(c, dict) or "factors" not in c:
        raise ManifestError("cross descriptor needs 'factors'")
    facs = []
    for f in c["factors"]:
        dom = _parse_domain(f["domain"])
        pl = f["plural"]
        plural = _parse_domain(pl["interior"]) if isinstance(pl, dict) and "interior" in pl else _parse_arcs(pl)
        facs.append(FactorSpec(dom, plural, f.get("method", "auto"), int(f.get("resolution", 256))))
    return CrossSpec(tuple(facs))


def _parse_function(spec) -> tuple[str, Callable]:
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name")
    try:
        return name, extend.catalog_function(name, **spec.get("params", {}))
    except (ValueError, TypeError) as exc:
        raise ManifestError(str(exc)) from None


def _c(pair) -> complex:
    if isinstance(pair, (int, float)):
        return complex(pair)
    return complex(float(pair[0]), float(pair[1]))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, non-finite numbers as null."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def atomic_write(path, data) -> Path:
    """Write text or bytes to ``path`` through a temporary file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------


def grid_svg(grid: MeasureGrid, levels=PLOT_LEVELS, size: int = 512) -> str:
    """SVG of the contour lines of a measure grid."""
    import contourpy

    vals = grid.values
    if vals.size == 0 or not np.isfinite(vals).any():
        raise ValueError("grid has no finite values to contour")
    s = grid.spec
    x = s.x0 + (np.arange(s.nx) + 0.5) * s.h
    y = s.y0 + (np.arange(s.ny) + 0.5) * s.h
    gen = contourpy.contour_generator(x, y, np.ma.masked_invalid(vals), line_type="Separate")
    w, h = s.nx * s.h, s.ny * s.h
    scale = size / max(w, h)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {w * scale:.3f} {h * scale:.3f}">']
    for lev in levels:
        paths = []
        for line in gen.lines(lev):
            if len(line) < 2:
                continue
            px = (line[:, 0] - s.x0) * scale
            py = (s.y0 + h - line[:, 1]) * scale
            paths.append("M" + " L".join(f"{a:.3f},{b:.3f}" for a, b in zip(px, py)))
        if paths:
            out.append(f'<path data-level="{lev:g}" fill="none" stroke="black" stroke-width="0.8" '
                       f'd="{" ".join(paths)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_plot_data(obj, path) -> Path:
    """Contour SVG for a measure grid, residual-sorted CSV for a bound report."""
    if isinstance(obj, MeasureGrid):
        return atomic_write(path, grid_svg(obj))
    if isinstance(obj, BoundReport):
        return atomic_write(path, obj.to_csv())
    raise TypeError(f"cannot export {type(obj).__name__}")


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def cache_key(descriptor: dict) -> str:
    """sha256 of the canonical JSON form of a grid descriptor."""
    text = json.dumps(_clean(descriptor), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _save_grid(path: Path, grid: MeasureGrid):
    s = grid.spec
    import io

    buf = io.BytesIO()
    np.savez(buf, values=grid.values, spec=np.array([s.x0, s.y0, s.h, s.nx, s.ny], dtype=float),
             stats=np.array([grid.tolerance, grid.residual, grid.sweeps], dtype=float))
    atomic_write(path, buf.getvalue())


def _load_grid(path: Path) -> MeasureGrid:
    with np.load(path) as z:
        sp = z["spec"]
        st = z["stats"]
        spec = GridSpec(float(sp[0]), float(sp[1]), float(sp[2]), int(sp[3]), int(sp[4]))
        values = np.array(z["values"])
    if values.shape != spec.shape:
        raise ValueError("cached grid shape does not match its spec")
    return MeasureGrid(spec, values, float(st[0]), float(st[1]), int(st[2]))


def cache_get_or_compute(key: str, compute: Callable[[], MeasureGrid], cache_dir) -> tuple[MeasureGrid, bool]:
    """Cached grid for ``key`` or a freshly computed and stored one; returns ``(grid, hit)``.

    Unreadable entries are recomputed and overwritten with a warning.
    """
    from filelock import FileLock

    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{key}.npz"
    with FileLock(str(cache_dir / f"{key}.lock")):
        if path.exists():
            try:
                return _load_grid(path), True
            except Exception as exc:  # any unreadable entry is recomputed
                warnings.warn(f"corrupt cache entry {path.name} ({exc}); recomputing", RuntimeWarning, stacklevel=2)
        grid = compute()
        _save_grid(path, grid)
        return grid, False


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


@dataclass
class Context:
    out: Path
    seed: int = 0
    threads: int = 1
    tol: float | None = None
    cache_dir: Path | None = None
    files: dict = field(default_factory=dict)

    def emit(self, name: str, data):
        self.files[name] = data


def _run_measure(p: dict, ctx: Context) -> dict:
    dom = _parse_domain(p["domain"])
    arcs = _parse_arcs(p["arcs"])
    method = p["method"]
    summary = {"method": method, "domain": dom.to_json(), "arcs": arcs.to_json()}
    if method in ("grid", "closed-form"):
        res = int(p["resolution"])
        if res < 32:
            raise ManifestError("resolution must be at least 32")
        if method == "grid":
            tol = ctx.tol if ctx.tol is not None else float(p.get("tol", 1e-10))
            solver = p.get("solver", "sor")
            desc = {"domain": dom.to_json(), "arcs": arcs.to_json(), "method": "grid", "resolution": res,
                    "cfg": {"solver": solver, "tol": tol}, "schema": SCHEMA_VERSION}
            compute = lambda: harmonic_measure_grid(dom, arcs, res, solver=solver, tol=tol)  # noqa: E731
            if ctx.cache_dir is not None:
                t0 = time.perf_counter()
                grid, hit = cache_get_or_compute(cache_key(desc), compute, ctx.cache_dir)
                log.info("measure grid %s in %.3f s", "cache hit" if hit else "computed", time.perf_counter() - t0)
            else:
                grid = compute()
            summary.update(residual=grid.residual, sweeps=grid.sweeps, tolerance=grid.tolerance)
        else:
            if dom.kind != "disk":
                raise ManifestError("closed-form measure needs a disk domain")
            spec = GridSpec.around(dom, res)
            z = spec.centers()
            inside = dom.contains(z)
            vals = np.full(z.shape, np.nan)
            vals[inside] = harmonic_measure_disk_arc(z[inside], arcs, center=dom.center, radius=dom.radius)
            grid = MeasureGrid(spec, vals, spec.h)
        summary.update(resolution=res, min=float(np.nanmin(grid.values)), max=float(np.nanmax(grid.values)))
        ctx.emit("measure.csv", grid.to_csv())
        ctx.emit("measure.svg", grid_svg(grid))
    elif method == "wos":
        cfg = WosConfig(sample_count=int(p.get("samples", 100000)), seed=ctx.seed,
                        shell_epsilon=float(p.get("shell_epsilon", 1e-4)))
        rows = []
        for q in p["points"]:
            est = harmonic_measure_wos(_c(q), dom, arcs, cfg, workers=ctx.threads)
            rows.append({"point": [_c(q).real, _c(q).imag], **json.loads(est.to_json())})
        summary.update(samples=cfg.sample_count, seed=ctx.seed, estimates=rows)
    else:
        raise ManifestError(f"unknown measure method {method!r}")
    return summary


def _run_envelope(p: dict, ctx: Context) -> dict:
    spec = _parse_cross(p["cross"])
    res = int(p["resolution"])
    rep = envelope_connected(spec, res, p.get("method", "auto"))
    return {"connected": rep.connected, "components": rep.components, "resolution": rep.resolution,
            "cells": rep.cells}


def _run_basis(p: dict, ctx: Context) -> dict:
    D = _parse_domain(p["domain"])
    A = _parse_domain(p["subset"])
    K = int(p["K"])
    mu = p.get("mu", "area")
    basis = bergman.build_doubly_orthogonal(D, A, mu, K)
    ra, rd = basis.orthogonality_residuals()
    ctx.emit("basis.json", dumps(json.loads(basis.to_json())))
    ctx.emit("nu.csv", "k,nu\n" + "".join(f"{k},{float(v)!r}\n" for k, v in enumerate(basis.nu)))
    out = {"K": K, "measure": basis.mu, "cond_A": basis.cond_A, "orthogonality_A": ra, "orthogonality_D": rd,
           "nu_first": basis.nu[0], "nu_last": basis.nu[-1],
           "measure_note": "mu is normalized measure on A; agreement with other choices of mu is not verified"}
    if "function" in p:
        _, f = _parse_function(p["function"])
        ws = [_c(w) for w in p.get("w", [[0.5, 0.0]])]
        coeffs = bergman.coefficients(f, basis, ws)
        ctx.emit("coefficients.csv", coeffs.to_csv())
    return out


def _run_extend(p: dict, ctx: Context) -> dict:
    spec = _parse_cross(p["cross"])
    name, f = _parse_function(p["function"])
    grid = tuple(int(v) for v in p.get("grid", (16, 32)))
    tol = ctx.tol if ctx.tol is not None else float(p.get("tol", 1e-6))
    fld = extend.extend_mixed_cross(spec, f, int(p["K"]), grid, tol=tol)
    mp = extend.max_principle_check(fld)
    ctx.emit("field.csv", fld.to_csv())
    return {"function": name, **fld.summary(), "max_error_certified": fld.max_error(f),
            "max_principle": mp.to_json()}


def _run_verify(p: dict, ctx: Context) -> dict:
    spec = _parse_cross(p["cross"])
    name, f = _parse_function(p["function"])
    slack = ctx.tol if ctx.tol is not None else float(p.get("slack", 1e-9))
    rep = extend.verify_boundary_extension(spec, f, int(p["samples"]), seed=ctx.seed, slack=slack)
    ctx.emit("report.csv", rep.bound.to_csv())
    return {"function": name, **rep.to_json()}


def _run_slice(p: dict, ctx: Context) -> dict:
    c = p["collar"]
    r = float(c.get("r", 1.0))
    model = c.get("model", "perturbed")
    if model == "ball":
        rho = ball_defining_function(r)
    elif model == "perturbed":
        rho = perturbed_ball(r, float(c.get("c", 1.0)))
    else:
        raise ManifestError(f"unknown collar model {model!r}")
    collar = smoothed_collar(rho, epsilon=float(c.get("epsilon", 0.01)))
    gap, _ = collar_gradient_gap(collar)
    sl = slice_domain(collar, _c(p["Q"]), p.get("arc_radius"))
    r_t = tangent_ball_radius(sl.domain)
    return {"gradient_gap": gap, "holes": sl.hole_count, "tangent_radius": r_t,
            "trace_arcs": len(sl.arc_trace.intervals), "trace_length": sl.arc_trace.total_length,
            "domain": sl.domain.to_json()}


def _run_schedule(p: dict, ctx: Context) -> dict:
    spec = _parse_cross(p["cross"])
    pts = [tuple(_c(c) for c in q) for q in p["points"]]
    n_fold = p.get("n_fold")
    sched = extend.gluing_schedule(spec, pts, float(p.get("c", 1.0)), None if n_fold is None else int(n_fold),
                                   check=bool(p.get("check", True)), resolution=int(p.get("resolution", 128)))
    return sched.to_json()


PIPELINES = {"measure": _run_measure, "envelope": _run_envelope, "basis": _run_basis, "extend": _run_extend,
             "verify": _run_verify, "slice": _run_slice, "schedule": _run_schedule}


def _diagnostic(out: Path | None, kind: str | None, code: int, exc: BaseException) -> None:
    diag = {"status": "error", "exit_code": code, "kind": kind, "error_type": type(exc).__name__,
            "message": str(exc)}
    text = dumps(diag)
    sys.stderr.write(text)
    if out is not None:
        with contextlib.suppress(OSError):
            atomic_write(out / "diagnostic.json", text)


def execute(manifest: RunManifest, out: Path, *, threads: int = 1, tol: float | None = None,
            seed: int | None = None, cache_dir: Path | None = None) -> int:
    """Run one manifest and write its artifacts atomically; returns the exit code."""
    ctx = Context(Path(out), manifest.seed if seed is None else seed, threads, tol, cache_dir)
    try:
        with np.errstate(all="ignore"):
            summary = PIPELINES[manifest.kind](manifest.params, ctx)
    except ManifestError as exc:
        _diagnostic(ctx.out, manifest.kind, EXIT_INVALID, exc)
        return EXIT_INVALID
    except NUMERICAL_ERRORS as exc:
        _diagnostic(ctx.out, manifest.kind, EXIT_NUMERICAL, exc)
        return EXIT_NUMERICAL
    except (KeyError, TypeError, ValueError) as exc:
        _diagnostic(ctx.out, manifest.kind, EXIT_INVALID, exc)
        return EXIT_INVALID
    report = {"status": "ok", "schema": SCHEMA_VERSION, "kind": manifest.kind, "seed": ctx.seed,
              "manifest": manifest.to_dict(), "result": summary, "files": sorted(ctx.files)}
    for name, data in sorted(ctx.files.items()):
        atomic_write(ctx.out / name, data)
    atomic_write(ctx.out / "summary.json", dumps(report))
    log.info("wrote %d file(s) to %s", len(ctx.files) + 1, ctx.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _set_pair(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected KEY=JSON")
    key, val = text.split("=", 1)
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the manifest)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo runs")
    common.add_argument("--tol", type=float, default=None,
                        help="solver tolerance (measure), certification tolerance (extend), slack (verify)")
    common.add_argument("--cache-dir", type=Path, default=None, help="grid cache directory (default OUT/.cache)")
    common.add_argument("--no-cache", action="store_true", help="do not read or write the grid cache")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="crossext", parents=[common],
                                     description="Harmonic measures, cross envelopes and separately holomorphic "
                                                 "extension experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, parents=[common], help=f"run a {kind} experiment")
        sp.add_argument("--manifest", type=Path, help="manifest file (default: built-in example)")
        sp.add_argument("--set", dest="overrides", type=_set_pair, action="append", default=[],
                        metavar="KEY=JSON", help="override a manifest field")
        sp.add_argument("--print-manifest", action="store_true", help="print the manifest and exit")
    rp = sub.add_parser("run", parents=[common], help="run a manifest file")
    rp.add_argument("manifest", type=Path)
    cp = sub.add_parser("cache", parents=[common], help="inspect or clear the grid cache")
    cp.add_argument("action", choices=("stats", "clear"))
    return parser


def _cache_command(action: str, cache_dir: Path) -> int:
    entries = sorted(cache_dir.glob("*.npz")) if cache_dir.exists() else []
    if action == "clear":
        for e in entries:
            e.unlink()
        for lk in cache_dir.glob("*.lock") if cache_dir.exists() else []:
            lk.unlink()
        sys.stdout.write(dumps({"cleared": len(entries), "cache_dir": str(cache_dir)}))
    else:
        size = sum(e.stat().st_size for e in entries)
        sys.stdout.write(dumps({"entries": len(entries), "bytes": size, "cache_dir": str(cache_dir)}))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = args.out
    try:
        if args.command == "cache":
            return _cache_command(args.action, args.cache_dir or (out or Path("crossext-out")) / ".cache")
        if args.command == "run":
            manifest = load_manifest(args.manifest)
        else:
            if args.manifest is not None:
                data = json.loads(Path(args.manifest).read_text())
            else:
                data = {"version": SCHEMA_VERSION, "kind": args.command, **json.loads(json.dumps(DEFAULTS[args.command]))}
            data.setdefault("kind", args.command)
            if data.get("kind") != args.command:
                raise ManifestError(f"manifest kind {data.get('kind')!r} does not match subcommand {args.command!r}")
            for key, val in args.overrides:
                if val is None:
                    data.pop(key, None)
                else:
                    data[key] = val
            if args.print_manifest:
                sys.stdout.write(dumps(data))
                return EXIT_OK
            manifest = RunManifest.from_dict(data)
    except (ManifestError, OSError, json.JSONDecodeError) as exc:
        _diagnostic(out, getattr(args, "command", None), EXIT_INVALID, exc)
        return EXIT_INVALID
    out = Path(out or manifest.output or "crossext-out")
    cache_dir = None if args.no_cache else (args.cache_dir or out / ".cache")
    return execute(manifest, out, threads=args.threads, tol=args.tol, seed=args.seed, cache_dir=cache_dir)


if __name__ == "__main__":
    sys.exit(main())
