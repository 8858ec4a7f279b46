"""Command-line front end.

Every command that produces an artifact also writes a flat key-value run
report next to it. The report lists each tuning value with the path that
produced it, the bootstrap quantile, the seed and the exact argument vector,
so ``ftsband replay REPORT`` can re-run the command and compare artifacts
byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bands import band_fixed_t, band_fixed_u
from .bootstrap import surface_constant, surface_varying
from .core import (
    DataError,
    EvalGrid,
    FtsError,
    FunctionalSeries,
    NumericalError,
    ParameterError,
    ParseError,
    TuningRecord,
    interior_design_points,
    load_csv,
    save_band_csv,
    save_series_csv,
    save_surface_csv,
)
from .lrv import LrvField, LrvParams, default_lrv_params
from .bootstrap import replicate_rng
from .simgen import ModelSpec, PipelineConfig, coverage_experiment, simulate_model
from .tuning import (
    auto_tune,
    default_window_grid,
    mgcv_curve,
    mgcv_local_curve,
    minimal_volatility_window,
    minimal_volatility_window_local,
)

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4
RNG_NAME = "numpy Philox, SeedSequence(seed, spawn_key=(stream, replicate))"
# lines that legitimately differ between otherwise identical runs
VOLATILE_KEYS = ("wall_time_s", "workers")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Report:
    """Ordered key-value lines; written once at the end of a run."""

    def __init__(self, command: str, argv: list[str]):
        self.items: list[tuple[str, str]] = []
        self.add("version", __version__)
        self.add("command", command)
        self.add("argv", json.dumps(argv))
        self.add("rng", RNG_NAME)

    def add(self, key: str, value) -> None:
        self.items.append((key, _fmt(value)))

    def tuning(self, rec: TuningRecord, sources: dict) -> None:
        for key in ("b_n", "d_n", "m_n"):
            self.add(key, getattr(rec, key))
            self.add(f"{key}_source", sources.get(key, "override"))
        self.add("m_prime", rec.m_prime)
        self.add("w", rec.w)
        self.add("tau", rec.tau)
        self.add("lrv_source", sources.get("w", "default"))

    def write(self, path: Path, started: float) -> None:
        self.add("wall_time_s", round(time.perf_counter() - started, 3))
        with Path(path).open("w") as fh:
            for k, v in self.items:
                fh.write(f"{k}={v}\n")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


# --- argument parsing -----------------------------------------------------------

def _common(p: argparse.ArgumentParser, tuning: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--report", type=Path, help="report path (default: <output>.report)")
    if tuning:
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--B", type=int, default=1000)
        p.add_argument("--width", choices=("constant", "varying"), default="constant")
        p.add_argument("--b-n", type=float)
        p.add_argument("--d-n", type=float)
        p.add_argument("--m-n", type=int)
        p.add_argument("--w", type=int)
        p.add_argument("--tau", type=float)


def _input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--domain", type=float, nargs=2, default=(0.0, 1.0), metavar=("A", "B"))
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto",
                   help="whether the first row holds the t values")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ftsband", description="Simultaneous confidence surfaces and bands")
    ap.add_argument("--version", action="version", version=f"ftsband {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("surface", help="simultaneous confidence surface over u and t")
    _input(p)
    p.add_argument("--output", type=Path, required=True)
    _common(p)

    p = sub.add_parser("band", help="band with u or t held fixed")
    _input(p)
    fix = p.add_mutually_exclusive_group(required=True)
    fix.add_argument("--fix-u", type=float)
    fix.add_argument("--fix-t", type=float)
    p.add_argument("--output", type=Path, required=True)
    _common(p)

    p = sub.add_parser("tune", help="select d_n, b_n and m_n; write criterion curves")
    _input(p)
    p.add_argument("--target", choices=("surface", "band_t", "band_u"), default="surface")
    p.add_argument("--fixed", type=float)
    p.add_argument("--output", type=Path, required=True)
    _common(p)

    p = sub.add_parser("lrv", help="long-run variance field on the design grid")
    _input(p)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--w", type=int)
    p.add_argument("--tau", type=float)
    _common(p, tuning=False)

    p = sub.add_parser("simulate", help="draw a series from model (a)-(d)")
    p.add_argument("--model", choices=("a", "b", "c", "d"), default="a")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int)
    p.add_argument("--output", type=Path, required=True)
    _common(p, tuning=False)

    p = sub.add_parser("coverage", help="Monte-Carlo coverage of a pipeline")
    p.add_argument("--model", choices=("a", "b", "c", "d"), default="a")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int)
    p.add_argument("--kind", choices=("surface", "band_t", "band_u"), default="surface")
    p.add_argument("--fixed", type=float)
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--output", type=Path, required=True, help="per-run CSV")
    _common(p)

    p = sub.add_parser("resample", help="interpolate long-format observations onto the uniform grid")
    _input(p)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("replay", help="re-run the command recorded in a report and compare artifacts")
    p.add_argument("report", type=Path)
    return ap


# --- commands -----------------------------------------------------------------

def _load(args) -> FunctionalSeries:
    header = {"auto": None, "yes": True, "no": False}[args.header]
    return load_csv(args.input, tuple(args.domain), header)


def _lrv_params(args, n: int) -> Optional[LrvParams]:
    if getattr(args, "w", None) is None and getattr(args, "tau", None) is None:
        return None
    d = default_lrv_params(n) if n >= 27 else None
    w = args.w if args.w is not None else (d.w if d else None)
    tau = args.tau if args.tau is not None else (d.tau if d else None)
    if w is None or tau is None:
        raise ParameterError("n < 27: give both --w and --tau")
    p = LrvParams(w, tau)
    p.check(n)
    return p


def _check_run_args(args) -> None:
    if not 0 < args.alpha < 1:
        raise ParameterError(f"--alpha must lie in (0, 1), got {args.alpha}")
    if args.B < 10:
        raise ParameterError(f"--B must be at least 10, got {args.B}")
    if args.workers < 1:
        raise ParameterError("--workers must be positive")


def _tune(args, series: FunctionalSeries, target: str, fixed):
    params = _lrv_params(args, series.n)
    rec = auto_tune(series, target, fixed, lrv_params=params, b_n=args.b_n, d_n=args.d_n, m_n=args.m_n)
    if params is not None:
        rec.sources["w"] = "override"
    return rec, params


def cmd_surface(args, report: Report) -> list[Path]:
    _check_run_args(args)
    series = _load(args)
    rec, params = _tune(args, series, "surface", None)
    grid = EvalGrid(interior_design_points(series.n, rec.b_n), series.t_grid)
    if args.width == "constant":
        surf = surface_constant(series, rec.b_n, rec.d_n, rec.m_n, args.alpha, args.B, grid, args.seed, args.workers)
    else:
        surf = surface_varying(series, rec.b_n, rec.d_n, rec.m_n, params, args.alpha, args.B, grid, args.seed, args.workers)
    save_surface_csv(surf, args.output)
    _describe(report, args, series, rec, surf.tuning)
    return [args.output]


def cmd_band(args, report: Report) -> list[Path]:
    _check_run_args(args)
    series = _load(args)
    if args.fix_u is not None:
        rec, params = _tune(args, series, "band_u", args.fix_u)
        band = band_fixed_u(series, args.fix_u, rec.b_n, rec.d_n, rec.m_n, args.alpha, args.B, args.width, args.seed,
                            params, args.workers)
        report.add("fixed_axis", "u")
        report.add("fixed_value", float(args.fix_u))
    else:
        k = series.t_index(args.fix_t)
        rec, params = _tune(args, series, "band_t", args.fix_t)
        band = band_fixed_t(series, k, rec.b_n, rec.d_n, rec.m_n, args.alpha, args.B, args.width, args.seed, params,
                            workers=args.workers)
        report.add("fixed_axis", "t")
        report.add("fixed_value", float(series.t_grid[k]))
        report.add("fixed_requested", float(args.fix_t))
    save_band_csv(band, args.output)
    _describe(report, args, series, rec, band.tuning)
    return [args.output]


def _describe(report: Report, args, series, rec: TuningRecord, boot: TuningRecord) -> None:
    report.add("input", args.input)
    report.add("input_sha256", _sha256(args.input))
    report.add("n", series.n)
    report.add("p", series.p)
    report.add("width", args.width)
    report.add("alpha", float(args.alpha))
    report.add("B", args.B)
    report.add("seed", args.seed)
    report.tuning(rec, rec.sources)
    report.add("quantile_value", boot.quantile_value)
    report.add("sigma_floor_hits", boot.floor_hits)
    report.add("workers", args.workers)


def cmd_tune(args, report: Report) -> list[Path]:
    series = _load(args)
    if args.target != "surface" and args.fixed is None:
        raise ParameterError(f"--target {args.target} needs --fixed")
    rec, params = _tune(args, series, args.target, args.fixed)
    data = series.column(series.t_index(args.fixed)) if args.target == "band_t" else series
    if args.target == "band_u":
        cands, crit = mgcv_local_curve(data, args.fixed)
        _, mv = minimal_volatility_window_local(data, args.fixed, rec.b_n, rec.d_n, params, return_curve=True)
    else:
        cands, crit = mgcv_curve(data)
        _, mv = minimal_volatility_window(data, rec.b_n, rec.d_n, params, return_curve=True)
    windows = default_window_grid(series.n, rec.b_n).values
    with Path(args.output).open("w", newline="") as fh:
        fh.write("criterion,candidate,value\n")
        for c, v in zip(cands, crit):
            fh.write(f"mgcv,{float(c)!r},{float(v)!r}\n")
        for m, v in zip(windows[2:-2], mv):
            fh.write(f"mv,{int(m)},{float(v)!r}\n")
    report.add("input", args.input)
    report.add("input_sha256", _sha256(args.input))
    report.add("target", args.target)
    report.add("fixed", args.fixed)
    report.tuning(rec, rec.sources)
    print(f"d_n={rec.d_n!r} b_n={rec.b_n!r} m_n={rec.m_n} m_prime={rec.m_prime}")
    return [args.output]


def cmd_lrv(args, report: Report) -> list[Path]:
    series = _load(args)
    params = _lrv_params(args, series.n) or default_lrv_params(series.n)
    field = LrvField(series, params)
    u = series.u_design
    vals = field.evaluate(u)
    with Path(args.output).open("w", newline="") as fh:
        fh.write("u,t,sigma2\n")
        for a, uu in enumerate(u):
            for k, t in enumerate(series.t_grid):
                fh.write(f"{float(uu)!r},{float(t)!r},{float(vals[a, k])!r}\n")
    report.add("input", args.input)
    report.add("input_sha256", _sha256(args.input))
    report.add("w", params.w)
    report.add("tau", params.tau)
    return [args.output]


def cmd_simulate(args, report: Report) -> list[Path]:
    spec = ModelSpec(args.model, args.n, args.p, args.seed)
    series = simulate_model(spec, replicate_rng(args.seed, 0))
    save_series_csv(series, args.output)
    report.add("model", args.model)
    report.add("n", spec.n)
    report.add("p", spec.p)
    report.add("seed", args.seed)
    return [args.output]


def cmd_coverage(args, report: Report) -> list[Path]:
    _check_run_args(args)
    if args.kind != "surface" and args.fixed is None:
        raise ParameterError(f"--kind {args.kind} needs --fixed")
    if args.w is not None or args.tau is not None:
        raise ParameterError("coverage runs use the default LRV parameters")
    spec = ModelSpec(args.model, args.n, args.p)
    cfg = PipelineConfig(args.kind, args.width, args.alpha, args.B, args.fixed, args.b_n, args.d_n, args.m_n)
    rep = coverage_experiment(spec, cfg, args.runs, args.seed, workers=args.workers)
    with Path(args.output).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "hit", "b_n", "d_n", "m_n", "quantile_value", "excess"])
        for r in rep.results:
            w.writerow([r.run, int(r.hit), repr(r.b_n), repr(r.d_n), r.m_n, repr(r.quantile_value), repr(r.excess)])
    for key, val in (("model", args.model), ("n", spec.n), ("p", spec.p), ("kind", args.kind),
                     ("width", args.width), ("fixed", args.fixed), ("alpha", float(args.alpha)),
                     ("B", args.B), ("seed", args.seed), ("runs", rep.runs), ("hits", rep.hits),
                     ("coverage", rep.coverage), ("se", rep.se), ("workers", args.workers)):
        report.add(key, val)
    print(f"coverage={rep.coverage:.4f} se={rep.se:.4f} runs={rep.runs}")
    return [args.output]


def resample_rows(rows: dict[int, list[tuple[float, float]]], t_grid: np.ndarray) -> np.ndarray:
    """Linear interpolation with constant extrapolation of each row onto t_grid."""
    out = np.empty((len(rows), t_grid.size))
    for q, key in enumerate(sorted(rows)):
        pts = sorted(rows[key])
        x = np.array([a for a, _ in pts])
        y = np.array([b for _, b in pts])
        if np.any(np.diff(x) == 0):
            raise DataError(f"row {key}: repeated x value")
        out[q] = np.interp(t_grid, x, y)
    return out


def cmd_resample(args, report: Report) -> list[Path]:
    rows: dict[int, list[tuple[float, float]]] = {}
    with Path(args.input).open(newline="") as fh:
        reader = csv.reader(fh)
        head = [h.strip() for h in next(reader, [])]
        if head != ["row", "x", "value"]:
            raise ParseError(f"expected header row,x,value, got {head}")
        for lineno, r in enumerate(reader, start=2):
            if not r:
                continue
            if len(r) != 3:
                raise ParseError(f"line {lineno}: expected 3 fields, got {len(r)}")
            try:
                key, x, v = int(r[0]), float(r[1]), float(r[2])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            if not (np.isfinite(x) and np.isfinite(v)):
                raise DataError(f"line {lineno}: non-finite value")
            rows.setdefault(key, []).append((x, v))
    if not rows:
        raise ParseError("no observations")
    a, b = args.domain
    t = a + (b - a) * np.arange(1, args.p + 1) / args.p
    series = FunctionalSeries(resample_rows(rows, t), (a, b))
    save_series_csv(series, args.output)
    report.add("input", args.input)
    report.add("input_sha256", _sha256(args.input))
    report.add("rows", series.n)
    report.add("p", series.p)
    return [args.output]


COMMANDS = {
    "surface": cmd_surface,
    "band": cmd_band,
    "tune": cmd_tune,
    "lrv": cmd_lrv,
    "simulate": cmd_simulate,
    "coverage": cmd_coverage,
    "resample": cmd_resample,
}


def cmd_replay(args) -> int:
    """Re-run the recorded argv with outputs in a scratch directory and compare hashes."""
    rec = read_report(args.report)
    argv = json.loads(rec["argv"])
    if rec.get("version") != __version__:
        print(f"warning: report written by version {rec.get('version')}, running {__version__}", file=sys.stderr)
    recorded = {k[len("artifact_sha256:"):]: v for k, v in rec.items() if k.startswith("artifact_sha256:")}
    with tempfile.TemporaryDirectory() as tmp:
        new_argv, remap = _redirect_outputs(argv, Path(tmp))
        code = main(new_argv)
        if code != 0:
            return code
        ok = True
        for original, fresh in remap.items():
            want = recorded.get(original)
            got = _sha256(fresh)
            same = want == got
            ok &= same
            print(f"{original}: {'identical' if same else 'DIFFERENT'}")
    return 0 if ok else 1


def _redirect_outputs(argv: list[str], tmp: Path):
    out, remap = list(argv), {}
    for flag in ("--output", "--report"):
        if flag in out:
            i = out.index(flag) + 1
            fresh = tmp / Path(out[i]).name
            if flag == "--output":
                remap[out[i]] = fresh
            out[i] = str(fresh)
    return out, remap


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "replay":
        return cmd_replay(args)

    started = time.perf_counter()
    report = Report(args.command, argv)
    try:
        artifacts = COMMANDS[args.command](args, report)
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ParameterError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FtsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in artifacts:
        report.add(f"artifact_sha256:{path}", _sha256(path))
    report_path = getattr(args, "report", None) or Path(str(args.output) + ".report")
    report.write(report_path, started)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
