"""Scenario files.

INI dialect, same as robot descriptions. Sections and keys (defaults in
brackets):

    [robot]       preset [ur5e] | file (relative to the config file)
    [controller]  variants [1, 2]; hold [stage]; cond_max [1e6]
    [gains]       kp kr kb kpsi [100 100 100]; kd [50 x 6]
                  3 or 6 numbers are a diagonal, 9 or 36 a full matrix
    [scenario]    type (regulation | tracking); duration [5.0]; dt [0.001];
                  q0 [0 -pi/2 pi/2 -pi/2 -pi/2 0]; eps [0.01];
                  axis [0 0 1]; offset [0.1 0.2 0.1]; t_traj [3.0];
                  external_wrench [0 x 6]; seed [0]

The goal is placed relative to the start pose FK(q0): rotation error
pi - eps about ``axis`` and translation ``offset``. Tracking follows a cubic
path from FK(q0) to that goal over ``t_traj`` seconds.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import robot as rb
from .gic import GainSet
from .sim import (REGULATION_AXIS, REGULATION_EPS, REGULATION_OFFSET, UR5E_Q0, Regulation, ScenarioConfig,
                  Tracking, regulation_goal)

SECTIONS = {
    "robot": {"preset", "file"},
    "controller": {"variants", "hold", "cond_max"},
    "gains": {"kp", "kr", "kb", "kpsi", "kd"},
    "scenario": {"type", "duration", "dt", "q0", "eps", "axis", "offset", "t_traj", "external_wrench", "seed"},
}
SHIPPED = ("regulation", "tracking")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class Scenario:
    """A parsed scenario file; ``build(variant)`` gives the runnable config."""

    robot: rb.RobotModel
    variants: tuple
    gains: GainSet
    kind: str
    q0: np.ndarray
    duration: float
    dt: float
    eps: float
    axis: np.ndarray
    offset: np.ndarray
    t_traj: float
    external_wrench: np.ndarray
    seed: int
    hold: str
    cond_max: float
    source: str = ""

    def goal(self):
        start = rb.forward_kinematics(self.robot, self.q0)
        return start, regulation_goal(start, self.eps, self.axis, self.offset)

    def build(self, variant: int) -> ScenarioConfig:
        start, goal = self.goal()
        desired = Regulation(goal) if self.kind == "regulation" else Tracking(start, goal, self.t_traj)
        return ScenarioConfig(
            robot=self.robot, controller=variant, gains=self.gains, q0=self.q0, duration=self.duration,
            dt=self.dt, desired=desired, external_wrench=self.external_wrench, seed=self.seed, hold=self.hold,
            cond_max=self.cond_max,
        )


def shipped_config(name: str) -> str:
    return resources.files("geoimp").joinpath("configs", f"{name}.cfg").read_text()


def resolve(path) -> tuple[str, Path | None]:
    """Text of a scenario file; a missing path named like a shipped config falls back to it."""
    p = Path(path)
    if p.exists():
        return p.read_text(), p.parent
    if p.stem in SHIPPED and p.suffix in ("", ".cfg"):
        return shipped_config(p.stem), None
    raise ConfigError("config", f"no such file: {path}")


def _numbers(sec, key, counts, default=None) -> np.ndarray:
    full = f"{sec.name}.{key}"
    if key not in sec:
        if default is None:
            raise ConfigError(full, "missing")
        return np.asarray(default, dtype=float)
    try:
        vals = np.array([float(x) for x in sec[key].replace(",", " ").split()])
    except ValueError:
        raise ConfigError(full, f"expected numbers, got {sec[key]!r}") from None
    if len(vals) not in counts:
        raise ConfigError(full, f"expected {' or '.join(map(str, counts))} numbers, got {len(vals)}")
    if not np.all(np.isfinite(vals)):
        raise ConfigError(full, "non-finite value")
    return vals


def _scalar(sec, key, default, cast=float):
    full = f"{sec.name}.{key}"
    if key not in sec:
        return default
    try:
        return cast(sec[key])
    except ValueError:
        raise ConfigError(full, f"cannot parse {sec[key]!r}") from None


def _gain(sec, key, size, default) -> np.ndarray:
    vals = _numbers(sec, key, (size, size * size), [default] * size)
    K = np.diag(vals) if len(vals) == size else vals.reshape(size, size)
    return K


def parse_scenario(text: str, base_dir: Path | None = None, source: str = "") -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(name, "unknown section")
        for key in cp[name]:
            if key not in SECTIONS[name]:
                raise ConfigError(f"{name}.{key}", "unknown key")
    for name in SECTIONS:
        if not cp.has_section(name):
            cp.add_section(name)

    r = cp["robot"]
    if "file" in r and "preset" in r:
        raise ConfigError("robot.file", "give either preset or file, not both")
    try:
        if "file" in r:
            path = Path(r["file"])
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            model = rb.load_robot(path)
        else:
            model = rb.load_preset(r.get("preset", "ur5e"))
    except FileNotFoundError as exc:
        raise ConfigError("robot.file", f"cannot read {exc.filename}") from None
    except rb.RobotFileError as exc:
        raise ConfigError("robot", str(exc)) from None

    c = cp["controller"]
    try:
        variants = tuple(int(v) for v in c.get("variants", "1, 2").replace(",", " ").split())
    except ValueError:
        raise ConfigError("controller.variants", f"cannot parse {c['variants']!r}") from None
    if not variants or any(v not in (1, 2) for v in variants):
        raise ConfigError("controller.variants", "must list 1 and/or 2")
    hold = c.get("hold", "stage")
    if hold not in ("stage", "zoh"):
        raise ConfigError("controller.hold", f"expected stage or zoh, got {hold!r}")
    cond_max = _scalar(c, "cond_max", rb.COND_MAX)
    if not cond_max > 1:
        raise ConfigError("controller.cond_max", "must exceed 1")

    g = cp["gains"]
    mats = {}
    for key, size, default in (("kp", 3, 100.0), ("kr", 3, 100.0), ("kb", 3, 100.0), ("kpsi", 3, 100.0),
                               ("kd", 6, 50.0)):
        mats[key] = _gain(g, key, size, default)
    try:
        gains = GainSet(**mats)
    except ValueError as exc:
        raise ConfigError(f"gains.{str(exc).split()[0]}", str(exc)) from None

    s = cp["scenario"]
    kind = s.get("type", "regulation")
    if kind not in ("regulation", "tracking"):
        raise ConfigError("scenario.type", f"expected regulation or tracking, got {kind!r}")
    n = model.n_joints
    q0 = _numbers(s, "q0", (n,), UR5E_Q0 if n == 6 else None)
    duration = _scalar(s, "duration", 5.0)
    dt = _scalar(s, "dt", 1e-3)
    if not dt > 0:
        raise ConfigError("scenario.dt", f"must be positive, got {dt}")
    if not duration >= dt:
        raise ConfigError("scenario.duration", f"must be at least dt, got {duration}")
    eps = _scalar(s, "eps", REGULATION_EPS)
    if not 0 <= eps < np.pi:
        raise ConfigError("scenario.eps", f"must lie in [0, pi), got {eps}")
    axis = _numbers(s, "axis", (3,), REGULATION_AXIS)
    if np.linalg.norm(axis) == 0:
        raise ConfigError("scenario.axis", "must be nonzero")
    offset = _numbers(s, "offset", (3,), REGULATION_OFFSET)
    t_traj = _scalar(s, "t_traj", 3.0)
    if kind == "tracking":
        if not t_traj > 0:
            raise ConfigError("scenario.t_traj", f"must be positive, got {t_traj}")
        if t_traj > duration:
            raise ConfigError("scenario.t_traj", f"exceeds duration ({t_traj} > {duration})")
    wrench = _numbers(s, "external_wrench", (6,), np.zeros(6))
    seed = _scalar(s, "seed", 0, int)
    return Scenario(model, variants, gains, kind, q0, duration, dt, eps, axis, offset, t_traj, wrench, seed,
                    hold, cond_max, source)


def load_scenario(path) -> Scenario:
    text, base = resolve(path)
    return parse_scenario(text, base, str(path))
