"""Command-line entry point: ``bivlasov {run,horizon,check} --config FILE``.

Exit codes: 0 ok, 2 configuration error, 3 assumptions failed, 4 blow-up
proximity, 5 separation violation, 6 domain exit, 7 Picard non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import SimConfig, build_initial_data, dumps, parse_config, summary_from_config
from .coupling import RunResult, prepare, run, run_picard
from .diagnostics import DiagnosticFrame
from .errors import AssumptionError, ConfigError, SolverError
from .horizon import check_assumptions, compute_horizons

log = logging.getLogger("bivlasov")

FIELD_COLUMNS = ("x", "theta2", "thetaB", "alpha", "beta", "D1", "D2", "B")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _jsonable(obj):
    """Recursively replace non-finite floats and numpy scalars for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(dumps(_jsonable(obj)))


class FrameWriter:
    """Streams DiagnosticFrames to CSV as they are produced."""

    def __init__(self, path: Path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(DiagnosticFrame.columns())
        self.count = 0

    def __call__(self, frame: DiagnosticFrame) -> None:
        row = frame.row()
        self._writer.writerow([_fmt(row[c]) for c in DiagnosticFrame.columns()])
        self._fh.flush()
        self.count += 1

    def close(self) -> None:
        self._fh.close()


def write_snapshot(out_dir: Path, snap: dict) -> Path:
    path = out_dir / f"fields_t{snap['t']:.6f}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_COLUMNS)
        for i in range(len(snap["x"])):
            w.writerow([_fmt(snap[c][i]) for c in FIELD_COLUMNS])
    return path


def load_config(path: str, args) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([("--config", f"cannot read {path}: {exc.strerror}")]) from exc
    cfg = parse_config(text)
    if getattr(args, "override_certified", False):
        cfg.overrides.certified = True
    if getattr(args, "mode", None):
        cfg.solver.mode = args.mode
    return cfg


def _failure_summary(exc: SolverError, cfg: SimConfig | None, started: float) -> dict:
    return {
        "status": "failed",
        "exit_code": exc.exit_code,
        "abort": exc.to_dict(),
        "config": None if cfg is None else cfg.to_dict(),
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }


def cmd_run(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = None
    try:
        cfg = load_config(args.config, args)
        prep = prepare(cfg)
    except SolverError as exc:
        log.error("%s", exc)
        write_json(out_dir / "summary.json", _failure_summary(exc, cfg, started))
        return exc.exit_code

    writer = FrameWriter(out_dir / "frames.csv")
    try:
        if cfg.solver.mode == "picard":
            result = run_picard(cfg, on_frame=writer, prepared=prep)
        else:
            result = run(cfg, on_frame=writer, prepared=prep)
    finally:
        writer.close()
    snaps = [write_snapshot(out_dir, result.snapshots[k]).name for k in sorted(result.snapshots)]
    summary = _run_summary(result, snaps, started)
    write_json(out_dir / "summary.json", summary)
    code = summary["exit_code"]
    if code:
        log.error("run aborted: %s", result.abort)
    return code


def _run_summary(result: RunResult, snaps, started) -> dict:
    prep = result.prepared
    abort = result.abort
    final = result.final
    frames = result.frames
    within = [fr for fr in frames if fr.certified]
    out = {
        "status": "ok" if abort is None else "aborted",
        "exit_code": 0 if abort is None else abort.exit_code,
        "abort": None if abort is None else abort.to_dict(),
        "stop_reason": result.stop_reason,
        "mode": prep.cfg.solver.mode,
        "uncertified": bool(prep.uncertified or (final is not None
                                                 and final.t > prep.horizon.certified_interval_end)),
        "t_final": None if final is None else final.t,
        "steps": None if final is None else final.step,
        "dt": prep.dt,
        "frames": len(frames),
        "snapshots": snaps,
        "bounds_hold_in_certified_interval": all(fr.all_bounds_hold for fr in within),
        "violated_bounds": sorted({k for fr in within for k, v in fr.bound_flags.items() if not v}),
        "assumptions": prep.assumptions.to_dict(),
        "horizon": prep.horizon.to_dict(),
        "config": prep.cfg.to_dict(),
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }
    trace = getattr(result, "picard_trace", None)
    if trace is not None:
        out["picard"] = trace.to_dict()
    return out


def _assumption_report(cfg: SimConfig):
    s = summary_from_config(cfg)
    if s is not None:
        return s, None
    data = build_initial_data(cfg)
    rep = check_assumptions(data.grid, data.f, data.theta2, data.thetaB, data.n, P0=data.P0,
                            sup_bounds=data.sup_bounds)
    return rep.summary, rep


def cmd_horizon(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = None
    try:
        cfg = load_config(args.config, args)
        s, rep = _assumption_report(cfg)
        if not s.a2:
            raise AssumptionError("angle sum of the initial data is not below pi/2",
                                  theta0=s.theta0)
        tol = cfg.tolerances
        hor = compute_horizons(s, tol.t_max, tol.envelope_dt, tol.safety_fraction,
                               allow_a3_violation=True)
    except SolverError as exc:
        log.error("%s", exc)
        write_json(out_dir / "summary.json", _failure_summary(exc, cfg, started))
        return exc.exit_code

    ok = s.a3 and (rep is None or rep.ok)
    summary = {
        "status": "ok" if ok else "assumptions_failed",
        "exit_code": 0 if ok else AssumptionError.exit_code,
        "assumptions": rep.to_dict() if rep is not None else {
            "A2": s.a2, "A3": s.a3, "a3_margin": s.a3_margin, "summary": s.to_dict()},
        "horizon": hor.to_dict(),
        "config": cfg.to_dict(),
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }
    write_json(out_dir / "summary.json", summary)
    _print_horizon(hor)
    return summary["exit_code"]


def _print_horizon(hor) -> None:
    d = hor.to_dict()
    for key in ("t_star", "T0", "T1", "T2", "certified_interval_end"):
        print(f"{key:>24}: {d[key]}")


def cmd_check(args) -> int:
    try:
        cfg = load_config(args.config, args)
        s, rep = _assumption_report(cfg)
    except SolverError as exc:
        print(f"config: FAIL ({exc})")
        return exc.exit_code
    print("config: ok")
    if rep is None:
        print(f"A2: {'pass' if s.a2 else 'FAIL'}")
        print(f"A3: {'pass' if s.a3 else 'FAIL'}  margin arctan(1/P0) - Theta0 = {s.a3_margin:.6g}")
        ok = s.a2 and s.a3
    else:
        for msg in rep.messages:
            print(f"  {msg}")
        print(f"A1: {'pass' if rep.a1 else 'FAIL'}")
        print(f"A2: {'pass' if rep.a2 else 'FAIL'}")
        print(f"A3: {'pass' if rep.a3 else 'FAIL'}  margin arctan(1/P0) - Theta0 = {rep.a3_margin:.6g}")
        print(f"initial separation margin: {rep.separation_margin:.6g}")
        ok = rep.ok
    return 0 if ok else AssumptionError.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bivlasov",
        description="Relativistic Vlasov--Born-Infeld simulator (1 space, 2 momentum dimensions).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evolve the system and write frames, snapshots, summary")
    p_run.add_argument("--config", required=True, help="JSON configuration file")
    p_run.add_argument("--output-dir", default=".", help="directory for output files")
    p_run.add_argument("--override-certified", action="store_true",
                       help="continue past the certified interval (marks output uncertified)")
    p_run.add_argument("--mode", choices=("direct", "picard"), default=None,
                       help="solver mode (overrides the configuration)")
    p_run.set_defaults(func=cmd_run)

    p_hor = sub.add_parser("horizon", help="assumption checks and horizons only (summary.json)")
    p_hor.add_argument("--config", required=True)
    p_hor.add_argument("--output-dir", default=".")
    p_hor.set_defaults(func=cmd_horizon)

    p_chk = sub.add_parser("check", help="validate configuration and assumptions; writes nothing")
    p_chk.add_argument("--config", required=True)
    p_chk.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
