"""Closed-loop simulation of a manipulator under GIC-1 or GIC-2.

Joint-space dynamics M q'' + C q' + G = T + T_e are integrated with fixed-step
RK4. By default the controller is re-evaluated at every RK4 stage
(``hold="stage"``); ``hold="zoh"`` keeps the torque computed at the start of
the step for the whole step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from . import gic
from . import liegroup as lg
from .gic import DesiredState, GainSet
from .liegroup import Pose
from .robot import (COND_MAX, JointState, RobotModel, SingularJacobianError, evaluate,
                    forward_kinematics, to_operational)

log = logging.getLogger(__name__)

REGULATION_EPS = 0.01
REGULATION_AXIS = (0.0, 0.0, 1.0)
REGULATION_OFFSET = (0.1, 0.2, 0.1)
UR5E_Q0 = (0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0)


class SimulationAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class Regulation:
    goal_pose: Pose


@dataclass(frozen=True)
class Tracking:
    start_pose: Pose
    goal_pose: Pose
    T_traj: float

    @cached_property
    def _path(self):
        return lg.log_so3(self.start_pose.rot.T @ self.goal_pose.rot), self.goal_pose.pos - self.start_pose.pos

    def sample(self, t: float, piece: float | None = None) -> "TrajectorySample":
        psi, dp = self._path
        return _cubic(self.start_pose, psi, dp, self.T_traj, t, piece)


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    g_d: Pose
    V_d: np.ndarray
    Vdot_d: np.ndarray

    def desired(self) -> DesiredState:
        return DesiredState(self.g_d, self.V_d, self.Vdot_d)


@dataclass
class ScenarioConfig:
    robot: RobotModel
    controller: int
    gains: GainSet
    q0: np.ndarray
    duration: float
    dt: float
    desired: Union[Regulation, Tracking]
    external_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))
    seed: int = 0
    qd0: np.ndarray | None = None
    hold: str = "stage"
    cond_max: float = COND_MAX

    def __post_init__(self):
        self.q0 = np.asarray(self.q0, dtype=float)
        self.external_wrench = np.asarray(self.external_wrench, dtype=float)
        n = self.robot.n_joints
        self.qd0 = np.zeros(n) if self.qd0 is None else np.asarray(self.qd0, dtype=float)
        if self.controller not in (1, 2):
            raise ValueError(f"controller must be 1 or 2, got {self.controller!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.duration >= self.dt:
            raise ValueError(f"duration must be at least dt, got {self.duration}")
        if self.q0.shape != (n,) or self.qd0.shape != (n,):
            raise ValueError(f"q0 and qd0 must have {n} entries")
        if self.external_wrench.shape != (6,):
            raise ValueError("external_wrench must have 6 entries")
        if isinstance(self.desired, Tracking):
            if not self.desired.T_traj > 0:
                raise ValueError(f"T_traj must be positive, got {self.desired.T_traj}")
            if self.desired.T_traj > self.duration:
                raise ValueError(f"T_traj ({self.desired.T_traj}) exceeds duration ({self.duration})")
        if self.hold not in ("stage", "zoh"):
            raise ValueError(f"hold must be 'stage' or 'zoh', got {self.hold!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def desired_at(self, t: float, piece: float | None = None) -> TrajectorySample:
        """Desired state at t; ``piece`` picks the smooth segment when t is a breakpoint."""
        d = self.desired
        if isinstance(d, Regulation):
            return TrajectorySample(t, d.goal_pose, np.zeros(6), np.zeros(6))
        return d.sample(t, piece)


def regulation_goal(start: Pose, eps: float = REGULATION_EPS, axis=REGULATION_AXIS,
                    offset=REGULATION_OFFSET) -> Pose:
    """Goal whose rotation error seen from ``start`` is pi - eps about ``axis``.

    ``axis`` is expressed in the goal frame (R_d^T R_0 = exp((pi - eps) axis)),
    and the start sits ``offset`` metres away from the goal in the base frame.
    """
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    R_d = start.rot @ lg.exp_so3(-(np.pi - eps) * a)
    return Pose(R_d, start.pos - np.asarray(offset, dtype=float))


def cubic_trajectory(start: Pose, goal: Pose, T: float, t: float) -> TrajectorySample:
    """Rest-to-rest cubic time scaling along the rotation geodesic and a straight line."""
    if T <= 0:
        raise ValueError(f"trajectory duration must be positive, got {T}")
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return _cubic(start, lg.log_so3(start.rot.T @ goal.rot), goal.pos - start.pos, T, t)


def _cubic(start: Pose, psi, dp, T: float, t: float, piece: float | None = None) -> TrajectorySample:
    # the acceleration jumps at T; an RK4 step must see one side only
    if (t if piece is None else piece) >= T:
        s, sd, sdd = 1.0, 0.0, 0.0
    else:
        u = min(t / T, 1.0)
        s = 3 * u**2 - 2 * u**3
        sd = (6 * u - 6 * u**2) / T
        sdd = (6 - 12 * u) / T**2
    R = start.rot @ lg.exp_so3(s * psi)
    p = start.pos + s * dp
    v = R.T @ (sd * dp)
    w = sd * psi
    V_d = np.concatenate([v, w])
    Vdot_d = np.concatenate([R.T @ (sdd * dp) - lg.hat3(w) @ v, sdd * psi])
    return TrajectorySample(t, Pose(R, p), V_d, Vdot_d)


@dataclass(frozen=True)
class _Eval:
    qdd: np.ndarray
    g: Pose
    op: object
    ctrl: gic.ControlOutput


def _evaluate(sc: ScenarioConfig, q, qd, t, torque=None, piece=None) -> _Eval:
    d = evaluate(sc.robot, q, qd)
    op = to_operational(d, sc.cond_max)
    ctrl = gic.gic_control(sc.controller, op, d.g, qd, sc.desired_at(t, piece).desired(), sc.gains)
    tau = ctrl.torque if torque is None else torque
    rhs = tau + d.Jb.T @ sc.external_wrench - d.C @ qd - d.G
    return _Eval(np.linalg.solve(d.M, rhs), d.g, op, ctrl)


def step(sc: ScenarioConfig, state: JointState, t: float, dt: float | None = None,
         first: _Eval | None = None) -> JointState:
    """One RK4 step of the closed loop.

    ``first`` may carry the evaluation at (state, t) when the caller already has it.
    """
    h = sc.dt if dt is None else dt
    if first is None:
        first = _evaluate(sc, state.q, state.qd, t, piece=t + 0.5 * h)
    held = first.ctrl.torque if sc.hold == "zoh" else None

    def f(q_, qd_, t_):
        return _evaluate(sc, q_, qd_, t_, held, piece=t + 0.5 * h).qdd

    return _rk4(f, state, t, h, first.qdd)


def _rk4(accel, state: JointState, t: float, h: float, a1=None) -> JointState:
    q, qd = state.q, state.qd
    k1q, k1v = qd, accel(q, qd, t) if a1 is None else a1
    k2q = qd + 0.5 * h * k1v
    k2v = accel(q + 0.5 * h * k1q, k2q, t + 0.5 * h)
    k3q = qd + 0.5 * h * k2v
    k3v = accel(q + 0.5 * h * k2q, k3q, t + 0.5 * h)
    k4q = qd + h * k3v
    k4v = accel(q + h * k3q, k4q, t + h)
    q_new = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
    qd_new = qd + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(qd_new))):
        raise FloatingPointError(f"non-finite state after step at t = {t:.6f}")
    return JointState(q_new, qd_new)


def passive_accel(model: RobotModel, q, qd, torque=None) -> np.ndarray:
    """Forward dynamics M^-1 (T - C qd - G)."""
    d = evaluate(model, q, qd)
    tau = np.zeros(model.n_joints) if torque is None else torque
    return np.linalg.solve(d.M, tau - d.C @ qd - d.G)


def integrate_open_loop(model: RobotModel, state: JointState, duration: float, dt: float,
                        torque=None) -> list[JointState]:
    """RK4 under a constant joint torque (zero by default); returns every state."""
    n = int(round(duration / dt))
    out = [state]
    for k in range(n):
        state = _rk4(lambda q, qd, t: passive_accel(model, q, qd, torque), state, k * dt, dt)
        out.append(state)
    return out


LOG_FIELDS = ("q", "qd", "pos", "rot", "V", "e_V", "f_G", "wrench", "psi1", "psi2", "potential", "lyap", "power")


@dataclass
class SimLog:
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    pos: np.ndarray
    rot: np.ndarray
    V: np.ndarray
    e_V: np.ndarray
    f_G: np.ndarray
    wrench: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    potential: np.ndarray
    lyap: np.ndarray
    power: np.ndarray
    pos_d: np.ndarray
    rot_d: np.ndarray
    controller: int
    status: str = "ok"
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.status == "ok"

    def pose(self, k: int) -> Pose:
        return Pose(self.rot[k], self.pos[k])

    def header(self) -> list[str]:
        n = self.q.shape[1]
        cols = ["t"] + [f"q{i + 1}" for i in range(n)] + [f"qd{i + 1}" for i in range(n)]
        cols += ["x", "y", "z", "x_d", "y_d", "z_d"]
        cols += [f"r{i}{j}" for i in range(1, 4) for j in range(1, 4)]
        for name in ("V", "e_V", "f_G", "wrench"):
            cols += [f"{name}{i}" for i in range(1, 7)]
        cols += ["psi1", "psi2", "potential", "lyap", "power"]
        return cols

    def table(self) -> np.ndarray:
        m = len(self.t)
        return np.column_stack([
            self.t, self.q, self.qd, self.pos, self.pos_d, self.rot.reshape(m, 9),
            self.V, self.e_V, self.f_G, self.wrench,
            self.psi1, self.psi2, self.potential, self.lyap, self.power,
        ])

    def to_csv(self, path) -> None:
        np.savetxt(path, self.table(), fmt="%.12e", delimiter=",", header=",".join(self.header()), comments="")


def _potential(sc: ScenarioConfig, g: Pose, g_d: Pose, xi) -> float:
    if sc.controller == 2:
        return float(0.5 * xi @ sc.gains.k_xi @ xi)
    return gic.potential1(g, g_d, sc.gains)


def lyapunov_at(sc: ScenarioConfig, state: JointState, t: float) -> float:
    """V_i = 1/2 e_V^T M~ e_V + P_i at a joint state."""
    ev = _evaluate(sc, state.q, state.qd, t)
    g_d = sc.desired_at(t).g_d
    P = _potential(sc, ev.g, g_d, gic.log_error(ev.g, g_d))
    return float(0.5 * ev.ctrl.e_V @ ev.op.M @ ev.ctrl.e_V + P)


def local_rates(sc: ScenarioConfig, state: JointState, t: float, h: float = 1e-4) -> dict:
    """Central differences over one RK4 step of +-h around (state, t).

    Returns dV/dt, the damping power -e_V^T K_d e_V, d(xi_de)/dt and
    dexp_inv(xi_de) e_V, all at the centre point.
    """
    ev = _evaluate(sc, state.q, state.qd, t, piece=t + 0.5 * h)
    fwd = step(sc, state, t, h, first=ev)
    bwd = step(sc, state, t, -h, first=_evaluate(sc, state.q, state.qd, t, piece=t - 0.5 * h))
    e_V = ev.ctrl.e_V

    def xi_of(s, tt):
        return gic.log_error(_pose_of(sc, s), sc.desired_at(tt).g_d)

    xi = gic.log_error(ev.g, sc.desired_at(t).g_d)
    return {
        "dV": (lyapunov_at(sc, fwd, t + h) - lyapunov_at(sc, bwd, t - h)) / (2 * h),
        "power": float(-e_V @ sc.gains.kd @ e_V),
        "dxi": (xi_of(fwd, t + h) - xi_of(bwd, t - h)) / (2 * h),
        "B_eV": lg.dexp_inv(xi, 24) @ e_V,
    }


def _pose_of(sc: ScenarioConfig, state: JointState) -> Pose:
    return forward_kinematics(sc.robot, state.q)


def run(sc: ScenarioConfig) -> SimLog:
    """Integrate the scenario and log every step; stops early on singularity or blow-up."""
    n_steps = sc.n_steps
    rows = []
    state = JointState(sc.q0.copy(), sc.qd0.copy())
    status, message = "ok", ""
    kd = sc.gains.kd
    for k in range(n_steps + 1):
        t = k * sc.dt
        try:
            ev = _evaluate(sc, state.q, state.qd, t, piece=t + 0.5 * sc.dt)
        except SingularJacobianError as exc:
            status, message = "singular", f"t = {t:.6f} s: {exc}"
            break
        except lg.LogDomainError as exc:
            status, message = "log-domain", f"t = {t:.6f} s: {exc}"
            break
        g_d = sc.desired_at(t).g_d
        c = ev.ctrl
        xi = gic.log_error(ev.g, g_d)
        P = _potential(sc, ev.g, g_d, xi)
        rows.append((t, state.q, state.qd, ev.g.pos, ev.g.rot, c.V, c.e_V, c.f_G, c.wrench,
                     gic.psi1(ev.g, g_d), 0.5 * xi @ xi, P, 0.5 * c.e_V @ ev.op.M @ c.e_V + P,
                     -c.e_V @ kd @ c.e_V, g_d.pos, g_d.rot))
        if k == n_steps:
            break
        try:
            state = step(sc, state, t, first=ev)
        except SingularJacobianError as exc:
            status, message = "singular", f"t = {t + sc.dt:.6f} s: {exc}"
            break
        except lg.LogDomainError as exc:
            status, message = "log-domain", f"t = {t + sc.dt:.6f} s: {exc}"
            break
        except FloatingPointError as exc:
            status, message = "diverged", str(exc)
            break
    if status != "ok":
        log.info("simulation aborted: %s", message)
    if not rows:
        raise SimulationAbort(message)
    arr = [np.array(c, dtype=float) for c in zip(*rows)]
    return SimLog(
        t=arr[0], q=arr[1], qd=arr[2], pos=arr[3], rot=arr[4], V=arr[5], e_V=arr[6], f_G=arr[7],
        wrench=arr[8], psi1=arr[9], psi2=arr[10], potential=arr[11], lyap=arr[12], power=arr[13],
        pos_d=arr[14], rot_d=arr[15], controller=sc.controller, status=status, message=message,
    )


ROW_LABELS = ("x - x_d", "y - y_d", "z - z_d", "Psi_SO3", "Psi_SE3")


@dataclass(frozen=True)
class MetricReport:
    rms: dict
    final: dict

    def rows(self):
        return [(k, self.rms[k], self.final[k]) for k in ROW_LABELS]


def error_series(pos, rot, pos_d, rot_d) -> dict:
    """Per-step Cartesian errors, Psi_SO3 = 3 - tr(R_d^T R) and Psi_SE3 = Psi_1."""
    pos, pos_d = np.asarray(pos), np.asarray(pos_d)
    d = pos - pos_d
    tr = np.einsum("kji,kji->k", np.asarray(rot_d), np.asarray(rot))
    psi_so3 = 3.0 - tr
    e_local = np.einsum("kji,kj->ki", np.asarray(rot_d), d)
    psi_se3 = psi_so3 + 0.5 * np.sum(e_local**2, axis=1)
    return dict(zip(ROW_LABELS, (d[:, 0], d[:, 1], d[:, 2], psi_so3, psi_se3)))


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x**2)))


def metrics(log_: SimLog, t_desired=None, pos_d=None, rot_d=None) -> MetricReport:
    """RMS over the whole logged horizon of the five Table-style error rows."""
    if t_desired is None:
        t_desired, pos_d, rot_d = log_.t, log_.pos_d, log_.rot_d
    t_desired = np.asarray(t_desired, dtype=float)
    if t_desired.shape != log_.t.shape or np.abs(t_desired - log_.t).max() > 1e-12:
        raise ValueError("desired series and log are on different time grids")
    series = error_series(log_.pos, log_.rot, pos_d, rot_d)
    return MetricReport({k: rms(v) for k, v in series.items()}, {k: float(v[-1]) for k, v in series.items()})


def format_table(reports: dict) -> str:
    """Plain-text RMS table, one column per controller label."""
    labels = list(reports)
    lines = ["RMS of errors over the full horizon", f"{'':<10}" + "".join(f"{l:>14}" for l in labels)]
    for row in ROW_LABELS:
        lines.append(f"{row:<10}" + "".join(f"{reports[l].rms[row]:>14.6e}" for l in labels))
    lines.append("")
    lines.append("final-time errors")
    for row in ROW_LABELS:
        lines.append(f"{row:<10}" + "".join(f"{reports[l].final[row]:>14.6e}" for l in labels))
    return "\n".join(lines) + "\n"
