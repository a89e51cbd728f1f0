"""SO(3)/SE(3) group and algebra operations.

Conventions:
    - Twists and wrenches are 6-vectors with the translational part on top,
      ``V = [v, w]`` and ``F = [f, tau]``.
    - Rotations are 3x3 arrays; poses are :class:`Pose` values.
    - Small angles (below ``THETA_EPS``) use Taylor branches; rotation angles
      within ``NEAR_PI_BAND`` of pi use an axis-from-diagonal extraction in
      the log. ``PI_EPS`` bounds the domain of A^-1 and of the log-map
      controller.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import bernoulli

THETA_EPS = 1e-5
PI_EPS = 1e-7
# below sin(phi) ~ 1e-3 the (R - R^T) form loses ~eps/sin(phi) relative accuracy
NEAR_PI_BAND = 1e-3
ORTHO_TOL = 1e-9


class LogDomainError(ValueError):
    """Raised when a logarithm or A^-1 is requested outside its domain."""


@dataclass(frozen=True)
class Pose:
    """Rigid-body transform ``g = (R, p)``."""

    rot: np.ndarray
    pos: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rot", np.asarray(self.rot, dtype=float).reshape(3, 3))
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValueError("bottom row of a homogeneous transform must be [0 0 0 1]")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rot
        m[:3, 3] = self.pos
        return m

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def inverse(self) -> "Pose":
        return inverse(self)


def hat3(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def vee3(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if np.linalg.norm(S + S.T) >= 1e-8:
        raise ValueError(f"matrix is not skew-symmetric (|S + S^T| = {np.linalg.norm(S + S.T):.3e})")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def hat6(xi) -> np.ndarray:
    """4x4 se(3) matrix of a twist ``[v, w]`` (bottom row zero)."""
    xi = np.asarray(xi, dtype=float)
    m = np.zeros((4, 4))
    m[:3, :3] = hat3(xi[3:])
    m[:3, 3] = xi[:3]
    return m


def vee6(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.concatenate([m[:3, 3], vee3(m[:3, :3])])


def is_rotation(R, tol: float = 1e-10) -> bool:
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and np.abs(R.T @ R - np.eye(3)).max() < tol
        and abs(np.linalg.det(R) - 1.0) < tol
    )


def orthonormality_defect(R) -> float:
    return float(np.abs(R.T @ R - np.eye(3)).max())


def orthonormalize(R) -> np.ndarray:
    """Closest rotation in the Frobenius sense (polar factor via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def exp_so3(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    th2 = psi @ psi
    W = hat3(psi)
    if th2 < THETA_EPS**2:
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = 2.0 * np.sin(0.5 * th) ** 2 / th2
    return np.eye(3) + a * W + b * (W @ W)


def _axis_near_pi(R, cos_phi, sin_axis) -> np.ndarray:
    # symmetric part of R is cos(phi) I + (1 - cos(phi)) a a^T
    aaT = (0.5 * (R + R.T) - cos_phi * np.eye(3)) / (1.0 - cos_phi)
    k = int(np.argmax(np.diag(aaT)))
    a = aaT[:, k] / np.sqrt(max(aaT[k, k], 1e-300))
    a /= np.linalg.norm(a)
    s = a @ sin_axis
    if abs(s) > 1e-14:
        return a if s > 0 else -a
    lead = a[np.flatnonzero(np.abs(a) > 1e-12)[0]]
    return a if lead > 0 else -a


def log_so3(R) -> np.ndarray:
    """Rotation vector ``psi`` with ``|psi| <= pi`` and ``exp_so3(psi) = R``.

    At exactly pi the two antipodal answers are disambiguated by making the
    first nonzero axis component positive.
    """
    R = np.asarray(R, dtype=float)
    # 2 sin(phi) a
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    s = 0.5 * np.linalg.norm(v)
    phi = np.arctan2(s, c)
    if phi < THETA_EPS:
        return 0.5 * (1.0 + phi * phi / 6.0 + 7.0 * phi**4 / 360.0) * v
    if np.pi - phi < NEAR_PI_BAND:
        return phi * _axis_near_pi(R, c, v)
    return phi / (2.0 * np.sin(phi)) * v


def to_axis_angle(R) -> tuple[np.ndarray, float]:
    """Axis-angle form of a rotation; angle in [0, pi], axis [1,0,0] at identity."""
    psi = log_so3(R)
    angle = float(np.linalg.norm(psi))
    if angle == 0.0:
        return np.array([1.0, 0.0, 0.0]), 0.0
    return psi / angle, angle


def rotation_angle(R) -> float:
    R = np.asarray(R, dtype=float)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(0.5 * np.linalg.norm(v), 0.5 * (np.trace(R) - 1.0)))


def a_matrix(psi) -> np.ndarray:
    """Left Jacobian of SO(3): translation factor of exp_se3."""
    psi = np.asarray(psi, dtype=float)
    th2 = psi @ psi
    W = hat3(psi)
    if th2 < THETA_EPS**2:
        a = 0.5 - th2 / 24.0
        b = 1.0 / 6.0 - th2 / 120.0
    else:
        th = np.sqrt(th2)
        a = 2.0 * np.sin(0.5 * th) ** 2 / th2
        b = (th - np.sin(th)) / (th2 * th)
    return np.eye(3) + a * W + b * (W @ W)


def a_inv_matrix(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    th2 = psi @ psi
    W = hat3(psi)
    if th2 < THETA_EPS**2:
        c = 1.0 / 12.0 + th2 / 720.0
    else:
        th = np.sqrt(th2)
        if th >= 2.0 * np.pi - PI_EPS:
            raise LogDomainError(f"A^-1 undefined at |psi| = {th:.6f} (cot singularity at 2*pi)")
        alpha = 0.5 * th / np.tan(0.5 * th)
        c = (1.0 - alpha) / th2
    return np.eye(3) - 0.5 * W + c * (W @ W)


def exp_se3(xi) -> Pose:
    xi = np.asarray(xi, dtype=float)
    return Pose(exp_so3(xi[3:]), a_matrix(xi[3:]) @ xi[:3])


def log_se3(g: Pose) -> np.ndarray:
    psi = log_so3(g.rot)
    return np.concatenate([a_inv_matrix(psi) @ g.pos, psi])


def compose(g1: Pose, g2: Pose) -> Pose:
    return Pose(g1.rot @ g2.rot, g1.rot @ g2.pos + g1.pos)


def inverse(g: Pose) -> Pose:
    Rt = g.rot.T
    return Pose(Rt, -Rt @ g.pos)


def adjoint_big(g: Pose) -> np.ndarray:
    R = g.rot
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[3:, 3:] = R
    Ad[:3, 3:] = hat3(g.pos) @ R
    return Ad


def adjoint_small(V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    ad = np.zeros((6, 6))
    w_hat = hat3(V[3:])
    ad[:3, :3] = w_hat
    ad[3:, 3:] = w_hat
    ad[:3, 3:] = hat3(V[:3])
    return ad


@lru_cache(maxsize=None)
def _bernoulli_coeffs(order: int) -> np.ndarray:
    n = np.arange(order + 1)
    fact = np.cumprod(np.r_[1.0, np.arange(1, order + 1)])
    return (-1.0) ** n * bernoulli(order)[: order + 1] / fact


def dexp_inv(xi, order: int = 10) -> np.ndarray:
    """Truncated Bernoulli series ``sum_{n<=order} (-1)^n B_n / n! ad_xi^n``.

    Maps the body velocity of ``g = exp(xi)`` to ``d(xi)/dt``. The series
    converges for rotation angles below 2*pi; at angle 3 rad, order 10 leaves
    a relative remainder of roughly 3e-4 and order 24 about 1e-8.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    coeffs = _bernoulli_coeffs(order)
    ad = adjoint_small(xi)
    out = coeffs[0] * np.eye(6)
    term = np.eye(6)
    for c in coeffs[1:]:
        term = term @ ad
        out = out + c * term
    return out
