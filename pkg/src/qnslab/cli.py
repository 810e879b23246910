"""Command-line front end: ``qnslab <command> [options]``.

Exit codes: 0 success, 1 failed verification checks, 2 bad configuration or input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from contextlib import nullcontext
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import __version__, qnorms, solver, suites, tentspace
from .config import ConfigError, default_config, load_config
from .family import TestFamily
from .geometry import CubeFamily
from .halfspace import HalfSpaceSample
from .params import to_jsonable
from .spectral import TorusGrid, read_qnsf, write_qnsf

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
NORMS = ("q", "q_translated", "q_inverse", "bmo", "semigroup_besov", "wavelet")


class UsageError(Exception):
    """Bad command-line input; maps to exit code 2."""


# ------------------------------------------------------------------ output helpers


def _dumps(doc) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n"


class Output:
    """One run directory: deterministic reports plus a separate metadata file."""

    def __init__(self, directory: Path, formats: list[str], command: str, args: dict):
        self.dir = directory
        self.formats = formats
        self.command = command
        self.args = args
        self.files: list[str] = []
        self.started = time.time()
        self.dir.mkdir(parents=True, exist_ok=True)

    def write_text(self, name: str, text: str):
        (self.dir / name).write_text(text)
        self.files.append(name)

    def json(self, name: str, doc):
        self.write_text(name, _dumps(doc))

    def csv(self, name: str, header: list[str], rows: list[list]):
        if "csv" not in self.formats:
            return
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.write_text(name, buf.getvalue())

    def svg(self, name: str, series: dict, xlabel: str, ylabel: str, logy: bool = False):
        if "svg" not in self.formats or not series:
            return
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with matplotlib.rc_context({"svg.hashsalt": "qnslab", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for label, (x, y) in series.items():
                ax.plot(x, y, marker="o", label=label)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if logy:
                ax.set_yscale("log")
            if len(series) > 1:
                ax.legend()
            fig.tight_layout()
            fig.savefig(self.dir / name, format="svg", metadata={"Date": None})
            plt.close(fig)
        self.files.append(name)

    def finish(self, status: int):
        meta = {
            "command": self.command,
            "arguments": self.args,
            "started": datetime.fromtimestamp(self.started, timezone.utc).isoformat(),
            "seconds": round(time.time() - self.started, 3),
            "exit_code": status,
            "files": sorted(self.files),
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        (self.dir / "meta.json").write_text(_dumps(meta))


# ------------------------------------------------------------------ commands


def _family(cfg) -> TestFamily:
    fam = cfg.family
    n = cfg.grid["n"]
    return TestFamily(
        cfg.torus,
        size=fam["count"],
        seed=fam["seed"],
        bandwidth=fam["bandwidth"],
        decay=fam["spectrum_slope"],
        components=n if fam["divergence_free"] else 1,
        divergence_free=fam["divergence_free"],
    )


def cmd_gen(cfg, out: Output, args) -> int:
    rows = []
    for i, f in enumerate(_family(cfg)):
        name = f"field_{i:03d}.qnsf"
        write_qnsf(out.dir / name, f)
        out.files.append(name)
        rows.append({"file": name, "index": i, "l2_norm": f.l2_norm(), "components": f.components})
    out.json("family.json", {"config": cfg.as_dict(), "fields": rows})
    out.csv("family.csv", ["file", "index", "l2_norm", "components"], [[r["file"], r["index"], r["l2_norm"], r["components"]] for r in rows])
    print(f"wrote {len(rows)} fields to {out.dir}")
    return EXIT_OK


def _norm_report(f, which: str, cfg):
    p = cfg.frac
    cubes = CubeFamily.dyadic(f.grid)
    if which == "q":
        return qnorms.q_norm(f, p, cubes, qnorms.ACCURATE)
    if which == "q_translated":
        return qnorms.q_norm_translated(f, p, cubes)
    if which == "q_inverse":
        return qnorms.carleson_q_inverse_norm(f, p, cfg.params["T"])
    if which == "bmo":
        return qnorms.bmo_beta_norm(f, p.beta, cubes)
    if which == "semigroup_besov":
        return qnorms.semigroup_besov_norm(f, p.beta)
    return qnorms.wavelet_carleson_norm(f, qnorms.canonical_window(p.beta), p)


def cmd_norm(cfg, out: Output, args) -> int:
    if not args.field:
        raise UsageError("norm needs a field file (QNSF)")
    f = read_qnsf(args.field)
    report = _norm_report(f, args.which, cfg)
    doc = {"field": Path(args.field).name, "report": report.to_dict()}
    out.json("norm.json", doc)
    out.csv("norm.csv", ["norm", "value"], [[report.norm, report.value]])
    print(f"{report.norm} = {report.value:.12g}")
    return EXIT_OK


def cmd_solve(cfg, out: Output, args) -> int:
    n = cfg.grid["n"]
    if n < 2:
        raise UsageError("solve needs grid.n >= 2")
    s = cfg.solver
    grid = cfg.torus
    data = TestFamily(grid, 1, seed=cfg.family["seed"], bandwidth=cfg.family["bandwidth"], decay=cfg.family["spectrum_slope"], components=n, divergence_free=True).field(0)
    tg = solver.TimeGrid.spanning(cfg.params["T"], s["nodes"], s["first_node"])
    p = cfg.frac
    extra = {"amplitude": s["amplitude"]}
    if s["locate_threshold"]:
        th = solver.smallness_threshold(data, tg, p, steps=16)
        extra["threshold"] = th
        extra["amplitude_over_threshold"] = s["amplitude"] / th["threshold"]
    try:
        state = solver.picard_solve(data * s["amplitude"], tg, p, J_max=s["J_max"], tol=s["tol"])
    except solver.SolverDivergence as exc:
        out.json("manifest.json", {"error": str(exc), **extra})
        print(f"solver diverged: {exc}")
        return EXIT_OK
    res = solver.residual(state, p) if tg.size >= 3 else None
    extra["residual_max"] = res["max"] if res else None
    extra["residuals"] = res["relative"] if res else []
    out.write_text("manifest.json", solver.manifest_json(state, p, extra) + "\n")
    j = list(range(1, len(state.increments) + 1))
    out.csv("increments.csv", ["iteration", "increment_x_norm"], [[a, b] for a, b in zip(j, state.increments)])
    out.svg("ratios.svg", {"ratio": (list(range(1, len(state.ratios) + 1)), state.ratios)}, "iteration j", "contraction ratio")
    out.svg("increments.svg", {"increment": (j, state.increments)}, "iteration j", "X-norm of increment", logy=True)
    print(f"regime: {state.regime}; iterations: {state.iteration}; converged: {state.converged}")
    return EXIT_OK


def cmd_verify(cfg, out: Output, args) -> int:
    name = args.suite or cfg.suite["name"]
    if name not in suites.SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from {sorted(suites.SUITES)}")
    results = suites.run_suite(name, cfg.suite["tolerances"])
    for r in results:
        print(r.line())
        if not r.passed:
            print("    " + json.dumps(to_jsonable(r.metrics), sort_keys=True))
    doc = {"suite": name, "suite_version": suites.SUITE_VERSION, "checks": [{k: v for k, v in r.as_dict().items() if k != "seconds"} for r in results]}
    out.json("verify.json", doc)
    out.csv("verify.csv", ["criterion", "name", "passed"], [[r.criterion, r.name, r.passed] for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _load_sample(path, grid_period: float) -> HalfSpaceSample:
    try:
        with np.load(path) as z:
            values, times = z["values"], z["times"]
            period = float(z["period"]) if "period" in z else grid_period
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read half-space sample {path}: {exc}") from None
    dim = values.ndim - 1
    return HalfSpaceSample(TorusGrid(dim, values.shape[-1], period), times, values)


def _demo_sample(cfg) -> HalfSpaceSample:
    g = TorusGrid(cfg.grid["n"], cfg.grid["N"], cfg.grid["L"])
    times = np.geomspace(g.spacing / 2, g.period / 4, 12)
    rng = np.random.default_rng(cfg.family["seed"])
    mask = tentspace.tent_mask(g, times, g.center, g.period / 4)
    return HalfSpaceSample(g, times, rng.standard_normal((times.size,) + g.shape) * mask)


def cmd_decompose(cfg, out: Output, args) -> int:
    p = cfg.frac
    F = _load_sample(args.field, cfg.grid["L"]) if args.field else _demo_sample(cfg)
    if args.weight:
        omega = _load_sample(args.weight, cfg.grid["L"])
    else:
        nt = tentspace.nontangential_max(F)
        omega = F.with_values(np.broadcast_to(nt, F.values.shape[:1] + nt.shape).copy())
    dec = tentspace.atomic_decompose(F, omega, p)
    rows = dec.dump(p)
    out.json("decomposition.json", {"atoms": rows, "l1": dec.l1, "residual": dec.residual, "levels": dec.levels})
    out.csv("decomposition.csv", ["center", "radius", "lambda", "V", "margin"], [[" ".join(map(repr, r["center"])), r["radius"], r["lambda"], r["V"], r["margin"]] for r in rows])
    print(f"{len(dec)} atoms, l1 = {dec.l1:.6g}, residual = {dec.residual:.3g}")
    return EXIT_OK


def parse_setspec(spec: str, grid: TorusGrid) -> np.ndarray:
    """``cube:i,j,size`` or ``ball:x,y,r`` pieces joined by ``+``, or a ``.npy`` mask."""
    if spec.endswith(".npy"):
        try:
            E = np.load(spec).astype(bool)
        except OSError as exc:
            raise UsageError(f"cannot read set {spec}: {exc}") from None
        if E.shape != grid.shape:
            raise UsageError(f"set mask shape {E.shape} does not match grid {grid.shape}")
        return E
    E = np.zeros(grid.shape, bool)
    for piece in spec.split("+"):
        kind, _, body = piece.strip().partition(":")
        try:
            nums = [float(v) for v in body.split(",")]
        except ValueError:
            raise UsageError(f"bad set piece {piece!r}") from None
        if len(nums) != grid.dim + 1:
            raise UsageError(f"set piece {piece!r} needs {grid.dim + 1} numbers")
        if kind == "cube":
            idx = tuple(slice(int(c), int(c) + int(nums[-1])) for c in nums[:-1])
            E[idx] = True
        elif kind == "ball":
            d = grid.periodic_offset(np.asarray(nums[:-1]))
            E |= np.sum(d**2, axis=0) <= nums[-1] ** 2
        else:
            raise UsageError(f"unknown set piece kind {kind!r}; use cube or ball")
    return E


def cmd_capacity(cfg, out: Output, args) -> int:
    if not args.set:
        raise UsageError("capacity needs --set")
    grid = cfg.torus
    d = args.d if args.d is not None else tentspace.capacity_dimension(cfg.frac, grid.dim)
    E = parse_setspec(args.set, grid)
    if not E.any():
        raise UsageError("the set is empty")
    cover, lower = tentspace.hausdorff_capacity(E, grid, d, "E")
    out.json("capacity.json", {"set": args.set, "d": d, "upper": cover.value, "lower": lower, "cubes": cover.rows()})
    if "csv" in out.formats:
        out.write_text("capacity.csv", cover.to_csv())
    print(f"capacity in [{lower:.6g}, {cover.value:.6g}] with {len(cover.cubes)} cubes")
    return EXIT_OK


def cmd_report(cfg, out: Output, args) -> int:
    found = {}
    for name in ("verify.json", "manifest.json", "norm.json", "capacity.json", "decomposition.json", "family.json"):
        path = out.dir / name
        if path.exists():
            found[name] = json.loads(path.read_text())
    if not found:
        raise UsageError(f"no reports found in {out.dir}")
    summary = {"reports": sorted(found)}
    if "verify.json" in found:
        checks = found["verify.json"]["checks"]
        summary["verify"] = {"passed": sum(c["passed"] for c in checks), "total": len(checks)}
    if "manifest.json" in found and "contraction_ratios" in found["manifest.json"]:
        m = found["manifest.json"]
        summary["solve"] = {"regime": m["regime"], "iterations": m["iterations"], "max_ratio": max(m["contraction_ratios"], default=None)}
        r = m["contraction_ratios"]
        out.svg("report_ratios.svg", {"ratio": (list(range(1, len(r) + 1)), r)}, "iteration j", "contraction ratio")
    out.json("report.json", summary)
    out.csv("report.csv", ["report"], [[k] for k in sorted(found)])
    for k, v in summary.items():
        print(f"{k}: {v}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "norm": cmd_norm,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "decompose": cmd_decompose,
    "capacity": cmd_capacity,
    "report": cmd_report,
}


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qnslab", description="Fractional Navier-Stokes and Q-norm laboratory")
    ap.add_argument("--version", action="version", version=f"qnslab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="sectioned key=value configuration file")
    common.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    common.add_argument("--suite", help="suite name for verify")
    common.add_argument("--seed", type=int, help="family seed (overrides family.seed)")
    common.add_argument("--threads", type=int, help="FFT worker threads (fallback: QNSLAB_THREADS)")
    common.add_argument("--format", choices=("json", "csv", "svg"), action="append", help="extra output formats (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "norm":
            sp.add_argument("field", nargs="?", help="QNSF field file")
            sp.add_argument("--which", choices=NORMS, default="q")
        elif name == "decompose":
            sp.add_argument("field", nargs="?", help=".npz half-space sample with arrays times, values (and period)")
            sp.add_argument("--weight", help=".npz weight sample; default is the nontangential maximal function")
        elif name == "capacity":
            sp.add_argument("--set", help="cube:i,j,size / ball:x,y,r pieces joined by '+', or a .npy mask")
            sp.add_argument("--d", type=float, help="capacity dimension (default from alpha, beta)")
    return ap


def _threads(args) -> int | None:
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        return args.threads
    env = os.environ.get("QNSLAB_THREADS")
    if env:
        try:
            k = int(env)
        except ValueError:
            raise UsageError(f"QNSLAB_THREADS must be an integer, got {env!r}") from None
        if k < 1:
            raise UsageError("QNSLAB_THREADS must be positive")
        return k
    return None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise UsageError("--seed must be an unsigned 64-bit integer")
            cfg.family["seed"] = args.seed
        formats = list(dict.fromkeys(["json"] + cfg.formats + (args.format or [])))
        directory = args.out if args.out is not None else Path(cfg.output["dir"])
        threads = _threads(args)
        record = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
        out = Output(directory, formats, args.command, record)
        with sfft.set_workers(threads) if threads else nullcontext():
            status = COMMANDS[args.command](cfg, out, args)
    except (ConfigError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.finish(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
