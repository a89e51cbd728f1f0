"""Geometric impedance control on SE(3).

Two elastic forces are provided. GIC-1 derives from the Frobenius-norm
potential on the group,

    P1 = tr(K_R (I - R_d^T R)) + 1/2 (p - p_d)^T R_d K_p R_d^T (p - p_d),

and GIC-2 from the log-map potential P2 = 1/2 xi^T K_xi xi with
xi = log(g_d^-1 g) and K_xi = blkdiag(K_b, K_psi). Both share the velocity
error e_V = V - Ad_{g^-1 g_d} V_d and the control law

    T~ = M~ dV*_d/dt + C~ V*_d + G~ - f_G - K_d e_V.

Wrenches and twists are 6-vectors, translation on top.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import liegroup as lg
from .liegroup import LogDomainError, Pose
from .robot import OperationalDynamics


def _spd(name: str, K: np.ndarray, size: int) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.shape != (size, size):
        raise ValueError(f"{name} must be {size}x{size}, got shape {K.shape}")
    if np.abs(K - K.T).max() > 1e-12 * max(1.0, np.abs(K).max()):
        raise ValueError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(K).min()
    if eig <= 0:
        raise ValueError(f"{name} is not positive definite: smallest eigenvalue {eig:.6g}")
    return K


@dataclass(frozen=True)
class GainSet:
    kp: np.ndarray
    kr: np.ndarray
    kb: np.ndarray
    kpsi: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        for name, size in (("kp", 3), ("kr", 3), ("kb", 3), ("kpsi", 3), ("kd", 6)):
            object.__setattr__(self, name, _spd(name, getattr(self, name), size))

    @classmethod
    def uniform(cls, stiffness: float = 100.0, damping: float = 50.0) -> "GainSet":
        K = stiffness * np.eye(3)
        return cls(K, K, K, K, damping * np.eye(6))

    @property
    def k_xi(self) -> np.ndarray:
        K = np.zeros((6, 6))
        K[:3, :3] = self.kb
        K[3:, 3:] = self.kpsi
        return K


@dataclass(frozen=True)
class DesiredState:
    g_d: Pose
    V_d: np.ndarray
    Vdot_d: np.ndarray

    @classmethod
    def at_rest(cls, g_d: Pose) -> "DesiredState":
        return cls(g_d, np.zeros(6), np.zeros(6))


def config_error(g: Pose, g_d: Pose) -> Pose:
    """g_de = g_d^-1 g."""
    Rt = g_d.rot.T
    return Pose(Rt @ g.rot, Rt @ (g.pos - g_d.pos))


def psi_so3(g: Pose, g_d: Pose) -> float:
    return float(3.0 - np.trace(g_d.rot.T @ g.rot))


def psi1(g: Pose, g_d: Pose) -> float:
    e = config_error(g, g_d)
    return float(3.0 - np.trace(e.rot) + 0.5 * e.pos @ e.pos)


def log_error(g: Pose, g_d: Pose) -> np.ndarray:
    """xi_de = log(g_d^-1 g) as [b, psi]."""
    return lg.log_se3(config_error(g, g_d))


def psi2(g: Pose, g_d: Pose) -> float:
    xi = log_error(g, g_d)
    return float(0.5 * xi @ xi)


def psi_geo(g: Pose, g_d: Pose) -> float:
    psi = lg.log_so3(g_d.rot.T @ g.rot)
    dp = g.pos - g_d.pos
    return float(0.5 * psi @ psi + 0.5 * dp @ dp)


def potential1(g: Pose, g_d: Pose, gains: GainSet) -> float:
    e = config_error(g, g_d)
    return float(np.trace(gains.kr @ (np.eye(3) - e.rot)) + 0.5 * e.pos @ gains.kp @ e.pos)


def potential2(g: Pose, g_d: Pose, gains: GainSet) -> float:
    xi = log_error(g, g_d)
    return float(0.5 * xi @ gains.k_xi @ xi)


def potential2_separated(g: Pose, g_d: Pose, gains: GainSet) -> float:
    """P2 written with K_xi = blkdiag(K_b, K_psi) and b = A^-1(psi) R_d^T (p - p_d)."""
    psi = lg.log_so3(g_d.rot.T @ g.rot)
    Ainv = lg.a_inv_matrix(psi)
    dp = g.pos - g_d.pos
    W = g_d.rot @ Ainv.T @ gains.kb @ Ainv @ g_d.rot.T
    return float(0.5 * psi @ gains.kpsi @ psi + 0.5 * dp @ W @ dp)


def elastic_force_1(g: Pose, g_d: Pose, gains: GainSet) -> np.ndarray:
    e = config_error(g, g_d)
    f_p = e.rot.T @ gains.kp @ e.pos
    S = gains.kr @ e.rot - e.rot.T @ gains.kr
    f_R = np.array([S[2, 1], S[0, 2], S[1, 0]])
    return np.concatenate([f_p, f_R])


def elastic_force_2(g: Pose, g_d: Pose, gains: GainSet) -> np.ndarray:
    return gains.k_xi @ log_error(g, g_d)


def potential2_gradient(g: Pose, g_d: Pose, gains: GainSet, order: int = 24) -> np.ndarray:
    """Exact body-frame gradient of P2, B_xi^T K_xi xi.

    Differs from ``elastic_force_2`` whenever the rotational and translational
    parts of xi are not parallel; dP2/dt equals this vector dotted with e_V.
    """
    xi = log_error(g, g_d)
    return lg.dexp_inv(xi, order).T @ gains.k_xi @ xi


def velocity_error(g: Pose, V, g_d: Pose, V_d) -> np.ndarray:
    return np.asarray(V, dtype=float) - lg.adjoint_big(lg.inverse(g) @ g_d) @ np.asarray(V_d, dtype=float)


def desired_accel_feedforward(g: Pose, V, g_d: Pose, V_d, Vdot_d) -> np.ndarray:
    """d/dt (Ad_{g_ed} V_d) along the motion, with g_ed = g^-1 g_d."""
    Ad = lg.adjoint_big(lg.inverse(g) @ g_d)
    V_star = Ad @ np.asarray(V_d, dtype=float)
    e_V = np.asarray(V, dtype=float) - V_star
    return Ad @ np.asarray(Vdot_d, dtype=float) - lg.adjoint_small(e_V) @ V_star


def elastic_force(variant: int, g: Pose, g_d: Pose, gains: GainSet) -> np.ndarray:
    if variant == 1:
        return elastic_force_1(g, g_d, gains)
    if variant == 2:
        xi = log_error(g, g_d)
        angle = np.linalg.norm(xi[3:])
        if angle >= np.pi - lg.PI_EPS:
            raise LogDomainError(
                f"GIC-2 undefined at rotation error {angle:.9f} rad (within {lg.PI_EPS:g} of pi)"
            )
        return gains.k_xi @ xi
    raise ValueError(f"unknown controller variant {variant!r}; expected 1 or 2")


def potential(variant: int, g: Pose, g_d: Pose, gains: GainSet) -> float:
    if variant == 1:
        return potential1(g, g_d, gains)
    if variant == 2:
        return potential2(g, g_d, gains)
    raise ValueError(f"unknown controller variant {variant!r}; expected 1 or 2")


@dataclass(frozen=True)
class ControlOutput:
    wrench: np.ndarray
    torque: np.ndarray
    e_V: np.ndarray
    f_G: np.ndarray
    V: np.ndarray


def gic_control(variant: int, op: OperationalDynamics, g: Pose, qd, desired: DesiredState,
                gains: GainSet) -> ControlOutput:
    """Body-frame wrench and joint torque of GIC-1 or GIC-2."""
    V = op.Jb @ np.asarray(qd, dtype=float)
    Ad = lg.adjoint_big(lg.inverse(g) @ desired.g_d)
    V_star = Ad @ desired.V_d
    e_V = V - V_star
    Vdot_star = Ad @ desired.Vdot_d - lg.adjoint_small(e_V) @ V_star
    f_G = elastic_force(variant, g, desired.g_d, gains)
    wrench = op.M @ Vdot_star + op.C @ V_star + op.G - f_G - gains.kd @ e_V
    return ControlOutput(wrench, op.Jb.T @ wrench, e_V, f_G, V)


def lyapunov(variant: int, op: OperationalDynamics, g: Pose, e_V, g_d: Pose, gains: GainSet) -> float:
    return float(0.5 * e_V @ op.M @ e_V + potential(variant, g, g_d, gains))
