"""Command-line runner.

    geoimp run --config PATH --out DIR [--variants 1,2] [--plots] [--compare]
    geoimp so2-curves --out DIR
    geoimp validate --config PATH

Exit status: 0 success, 1 configuration error (or validation findings),
2 simulation aborted. GIC_LOG=debug|info sets verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfg
from . import gic, plot, sim
from . import liegroup as lg
from . import robot as rb
from .liegroup import Pose

log = logging.getLogger("geoimp")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2
VALIDATE_COND = 1e3
SO2_POINTS = 181


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(os.environ.get("GIC_LOG", "").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _err(msg: str) -> None:
    print(f"geoimp: {msg}", file=sys.stderr)


def _simulate(config_path: str, variant: int) -> sim.SimLog:
    scenario = cfg.load_scenario(config_path)
    return sim.run(scenario.build(variant))


def _parse_variants(text: str | None, default) -> tuple:
    if text is None:
        return tuple(default)
    try:
        out = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise cfg.ConfigError("--variants", f"expected a comma list of 1 and 2, got {text!r}") from None
    if not out or any(v not in (1, 2) for v in out):
        raise cfg.ConfigError("--variants", f"expected a comma list of 1 and 2, got {text!r}")
    return out


def cmd_run(config_path, out_dir, variants=None, emit_plots=False, compare=False) -> int:
    try:
        scenario = cfg.load_scenario(config_path)
        variants = _parse_variants(variants, scenario.variants)
        for v in variants:
            scenario.build(v)
    except (cfg.ConfigError, ValueError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _err(f"config error: out: cannot create {out}: {exc}")
        return EXIT_CONFIG

    logs, aborted = {}, []
    try:
        if compare and len(variants) > 1:
            with ProcessPoolExecutor(max_workers=len(variants)) as pool:
                futures = {v: pool.submit(_simulate, str(config_path), v) for v in variants}
                results = {v: f.result() for v, f in futures.items()}
        else:
            results = {v: sim.run(scenario.build(v)) for v in variants}
    except sim.SimulationAbort as exc:
        _err(f"simulation aborted: {exc}")
        return EXIT_ABORT
    # merged single-threaded, in variant order
    for v in variants:
        lg_ = results[v]
        logs[v] = lg_
        lg_.to_csv(out / f"gic{v}.csv")
        log.info("GIC-%d: %d steps, status %s", v, len(lg_.t), lg_.status)
        if not lg_.completed:
            aborted.append(f"GIC-{v} {lg_.status} at {lg_.message}")

    reports = {f"GIC-{v}": sim.metrics(logs[v]) for v in variants}
    text = f"scenario: {scenario.kind} ({config_path})\n" + sim.format_table(reports)
    if compare and len(variants) > 1:
        a, b = logs[variants[0]], logs[variants[1]]
        m = min(len(a.t), len(b.t))
        diff = np.abs(a.pos[:m] - b.pos[:m]).max()
        text += f"\nmax pointwise position difference GIC-{variants[0]} vs GIC-{variants[1]}: {diff:.6e} m\n"
    (out / "metrics.txt").write_text(text)

    if emit_plots:
        write_plots(out, logs)
    if aborted:
        for line in aborted:
            _err(f"simulation aborted: {line}")
        return EXIT_ABORT
    return EXIT_OK


def write_plots(out: Path, logs: dict) -> None:
    """Per-axis positions, error-function decay and a 3-D path view; data is in gic<v>.csv."""
    first = next(iter(logs.values()))
    for i, axis in enumerate("xyz"):
        series = [plot.Series(L.t, L.pos[:, i], f"GIC-{v}", dashed=(k > 0)) for k, (v, L) in enumerate(logs.items())]
        series.append(plot.Series(first.t, first.pos_d[:, i], "desired", dashed=True))
        (out / f"position_{axis}.svg").write_text(plot.line_plot(series, f"{axis}(t)", "t (s)", f"{axis} (m)"))
    series = [plot.Series(L.t, L.psi1, f"GIC-{v}", dashed=(k > 0)) for k, (v, L) in enumerate(logs.items())]
    (out / "error_function.svg").write_text(
        plot.line_plot(series, "error function Psi_SE3", "t (s)", "Psi_SE3", logy=True))
    series = []
    for k, (v, L) in enumerate(logs.items()):
        u, w = plot.projection(L.pos)
        series.append(plot.Series(u, w, f"GIC-{v}", dashed=(k > 0)))
    u, w = plot.projection(first.pos_d)
    series.append(plot.Series(u, w, "desired", dashed=True))
    (out / "trajectory_3d.svg").write_text(plot.line_plot(series, "end-effector path (oblique view)", "u (m)", "v (m)"))


def so2_table(n: int = SO2_POINTS) -> np.ndarray:
    """theta, Psi_1, Psi_2, |f_G1|, |f_G2| on a planar rotation with unit gains."""
    unit = gic.GainSet(np.eye(3), np.eye(3), np.eye(3), np.eye(3), np.eye(6))
    rows = []
    for th in np.linspace(0.0, np.pi, n):
        g = Pose(lg.exp_so3([0.0, 0.0, th]), np.zeros(3))
        e = Pose.identity()
        rows.append((th, gic.psi1(g, e), gic.psi2(g, e), np.linalg.norm(gic.elastic_force_1(g, e, unit)),
                     np.linalg.norm(gic.elastic_force_2(g, e, unit))))
    return np.array(rows)


def cmd_so2_curves(out_dir) -> int:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        table = so2_table()
        np.savetxt(out / "so2_curves.csv", table, fmt="%.12e", delimiter=",", header="theta,psi1,psi2,f1,f2",
                   comments="")
        th = table[:, 0]
        (out / "so2_error_functions.svg").write_text(plot.line_plot(
            [plot.Series(th, table[:, 1], "Psi_1"), plot.Series(th, table[:, 2], "Psi_2", dashed=True)],
            "error functions on SO(2)", "theta (rad)", "Psi"))
        (out / "so2_elastic_forces.svg").write_text(plot.line_plot(
            [plot.Series(th, table[:, 3], "|f_G1|"), plot.Series(th, table[:, 4], "|f_G2|", dashed=True)],
            "elastic forces on SO(2)", "theta (rad)", "|f_G|"))
    except OSError as exc:
        _err(f"cannot write to {out}: {exc}")
        return EXIT_CONFIG
    return EXIT_OK


def _reach(model: rb.RobotModel) -> tuple[np.ndarray, float]:
    """Base point of the first joint axis and a bound on how far the flange can get from it."""
    pts = []
    for S in model.joint_screws:
        w, v = S[3:], S[:3]
        pts.append(np.cross(w, v) if w @ w > 0.5 else pts[-1] if pts else np.zeros(3))
    pts.append(model.home_pose.pos)
    pts = np.array(pts)
    return pts[0], float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def validate(scenario: cfg.Scenario) -> list[str]:
    findings = []
    model = scenario.robot
    q0 = scenario.q0
    if model.joint_limits is not None:
        lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
        for i in np.flatnonzero((q0 < lo) | (q0 > hi)):
            findings.append(f"scenario.q0: joint {i + 1} at {q0[i]:.4f} is outside [{lo[i]:.4f}, {hi[i]:.4f}]")
    cond = rb.jacobian_condition(rb.body_jacobian(model, q0))
    if not np.isfinite(cond) or cond > VALIDATE_COND:
        findings.append(f"scenario.q0: body Jacobian condition number {cond:.3e} exceeds {VALIDATE_COND:.0e}")
    start, goal = scenario.goal()
    base, reach = _reach(model)
    dist = np.linalg.norm(goal.pos - base)
    if dist > reach:
        findings.append(f"scenario.offset: goal is {dist:.3f} m from the base, beyond the {reach:.3f} m reach")
    angle = lg.rotation_angle(goal.rot.T @ start.rot)
    if 2 in scenario.variants and angle >= np.pi - lg.PI_EPS:
        findings.append(f"scenario.eps: rotation error {angle:.9f} rad is where GIC-2 is undefined")
    if scenario.kind == "tracking" and scenario.t_traj > scenario.duration:
        findings.append("scenario.t_traj: longer than duration")
    return findings


def cmd_validate(config_path) -> int:
    try:
        scenario = cfg.load_scenario(config_path)
    except cfg.ConfigError as exc:
        print(f"finding: {exc}")
        return EXIT_CONFIG
    findings = validate(scenario)
    for f in findings:
        print(f"finding: {f}")
    if findings:
        return EXIT_CONFIG
    print(f"ok: {config_path} ({scenario.kind}, {scenario.robot.name}, variants {scenario.variants})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geoimp", description="Geometric impedance control simulations on SE(3).")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate a scenario and write CSV logs and an RMS table")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--variants", help="comma list, e.g. 1,2 (default from the config)")
    r.add_argument("--plots", action="store_true", help="also write SVG figures")
    r.add_argument("--compare", action="store_true", help="run variants in parallel and report their difference")
    s = sub.add_parser("so2-curves", help="error functions and elastic forces on a planar rotation")
    s.add_argument("--out", required=True)
    v = sub.add_parser("validate", help="check a scenario file without simulating")
    v.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.variants, args.plots, args.compare)
    if args.command == "so2-curves":
        return cmd_so2_curves(args.out)
    return cmd_validate(args.config)


if __name__ == "__main__":
    sys.exit(main())
