"""Serial-chain kinematics and dynamics in product-of-exponentials form.

Joint screws are stored in the space frame at q = 0. Each link carries its
frame at q = 0, a center of mass in that frame and a rotational inertia about
the center of mass. The inertia matrix is assembled from link body Jacobians,

    M(q) = sum_i J_i^T G_i J_i + diag(armature),

and the Coriolis matrix from Christoffel symbols of an analytic dM/dq, so that
Mdot - 2C is skew-symmetric by construction.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
import warnings

import numpy as np

from .liegroup import Pose, adjoint_big, hat3, inverse

COND_MAX = 1e6


class RobotFileError(ValueError):
    """Malformed or physically invalid robot description."""


class SingularJacobianError(RuntimeError):
    """The body Jacobian is singular or too ill-conditioned to invert."""

    def __init__(self, cond: float, cond_max: float = COND_MAX):
        self.cond = cond
        super().__init__(
            f"body Jacobian is ill-conditioned: condition number {cond:.3e} exceeds {cond_max:.1e}"
        )


@dataclass(frozen=True)
class LinkInertia:
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    frame: Pose

    def validate(self, name: str = "link") -> None:
        if not self.mass > 0:
            raise RobotFileError(f"{name}: mass must be positive, got {self.mass}")
        I = np.asarray(self.inertia)
        if np.abs(I - I.T).max() > 1e-12:
            raise RobotFileError(f"{name}: inertia tensor is not symmetric")
        eig = np.linalg.eigvalsh(I)
        if eig.min() <= 0:
            raise RobotFileError(f"{name}: inertia tensor is not positive definite (min eigenvalue {eig.min():.3e})")
        a, b, c = eig
        if c > a + b + 1e-12 * c:
            raise RobotFileError(f"{name}: principal moments {eig} violate the triangle inequality")


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qd: np.ndarray


@dataclass(frozen=True)
class RobotModel:
    joint_screws: np.ndarray
    home_pose: Pose
    links: tuple[LinkInertia, ...]
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    armature: np.ndarray | None = None
    joint_limits: np.ndarray | None = None
    name: str = "robot"

    def __post_init__(self):
        screws = np.atleast_2d(np.asarray(self.joint_screws, dtype=float))
        object.__setattr__(self, "joint_screws", screws)
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))
        n = screws.shape[0]
        arm = np.zeros(n) if self.armature is None else np.asarray(self.armature, dtype=float)
        object.__setattr__(self, "armature", arm)
        if screws.shape[1] != 6:
            raise RobotFileError("joint screws must be 6-vectors")
        if len(self.links) != n or arm.shape != (n,):
            raise RobotFileError(
                f"n_joints mismatch: {n} screws, {len(self.links)} links, {arm.size} armature entries"
            )
        for i, s in enumerate(screws):
            w, v = np.linalg.norm(s[3:]), np.linalg.norm(s[:3])
            if not (abs(w - 1.0) < 1e-9 or (w < 1e-12 and abs(v - 1.0) < 1e-9)):
                raise RobotFileError(f"joint{i + 1}: screw must have |w| = 1 (revolute) or w = 0, |v| = 1")
        if np.any(arm < 0):
            raise RobotFileError("armature must be non-negative")
        for i, link in enumerate(self.links):
            link.validate(f"link{i + 1}")

    @property
    def n_joints(self) -> int:
        return self.joint_screws.shape[0]

    @cached_property
    def _com_frames(self) -> np.ndarray:
        out = np.empty((self.n_joints, 4, 4))
        for i, link in enumerate(self.links):
            out[i] = link.frame.matrix()
            out[i, :3, 3] += link.frame.rot @ link.com
        return out

    @cached_property
    def _masses(self) -> np.ndarray:
        return np.array([link.mass for link in self.links])

    @cached_property
    def _inertias(self) -> np.ndarray:
        return np.array([link.inertia for link in self.links])

    @cached_property
    def _masks(self):
        n = self.n_joints
        return np.tril(np.ones((n, n)))[:, :, None], np.triu(np.ones((n, n)), 1)[:, :, None]

    @cached_property
    def _screw_terms(self):
        w, v = self.joint_screws[:, 3:], self.joint_screws[:, :3]
        W = np.array([hat3(x) for x in w])
        wxv = _cross(w, v)
        revolute = (np.einsum("ni,ni->n", w, w) > 0.5)[:, None]
        # prismatic joints translate along v
        wwv = np.where(revolute, w * np.einsum("ni,ni->n", w, v)[:, None], v)
        return W, W @ W, wxv, wwv

    def check_limits(self, q) -> None:
        if self.joint_limits is None:
            return
        lo, hi = self.joint_limits.T
        bad = np.flatnonzero((q < lo) | (q > hi))
        if bad.size:
            warnings.warn(f"joints {[int(i) + 1 for i in bad]} outside their nominal limits", stacklevel=2)


_NEG_LEVI_CIVITA = np.zeros((3, 3, 3))
_NEG_LEVI_CIVITA[0, 2, 1] = _NEG_LEVI_CIVITA[1, 0, 2] = _NEG_LEVI_CIVITA[2, 1, 0] = 1.0
_NEG_LEVI_CIVITA[0, 1, 2] = _NEG_LEVI_CIVITA[1, 2, 0] = _NEG_LEVI_CIVITA[2, 0, 1] = -1.0


def _cross(a, b):
    # np.cross spends most of its time in axis bookkeeping for these small stacks
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _space_chain(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Space Jacobian (6 x n) and the prefix products exp(S1 q1)...exp(Si qi)."""
    n = model.n_joints
    W, W2, wxv, wwv = model._screw_terms
    s, c = np.sin(q), np.cos(q)
    # Rodrigues for unit revolute screws; prismatic screws have W = 0
    E = np.zeros((n, 4, 4))
    E[:, :3, :3] = np.eye(3) + s[:, None, None] * W + (1.0 - c)[:, None, None] * W2
    E[:, :3, 3] = wxv - np.einsum("nij,nj->ni", E[:, :3, :3], wxv) + wwv * q[:, None]
    E[:, 3, 3] = 1.0
    Js = np.empty((6, n))
    prefix = np.empty((n, 4, 4))
    T = np.eye(4)
    for j in range(n):
        prefix[j] = T  # temporarily the frame before joint j
        T = T @ E[j]
    Rb, pb = prefix[:, :3, :3], prefix[:, :3, 3]
    S = model.joint_screws
    w = np.einsum("nij,nj->ni", Rb, S[:, 3:])
    Js[3:] = w.T
    Js[:3] = (np.einsum("nij,nj->ni", Rb, S[:, :3]) + (_hats(pb) @ w[:, :, None])[:, :, 0]).T
    prefix[:-1] = prefix[1:]
    prefix[-1] = T
    return Js, prefix


def _hats(x):
    """hat() of each row of x (..., 3) -> (..., 3, 3)."""
    return np.einsum("ijk,...k->...ij", _NEG_LEVI_CIVITA, x)


def _brackets(Js, upper):
    """Space-frame ad(S_j) S_k for j < k, shape (n, n, 3) per part."""
    v, w = Js[:3], Js[3:]
    Wh, Vh = _hats(w.T), _hats(v.T)
    bv = (Wh @ v + Vh @ w).transpose(0, 2, 1) * upper
    bw = (Wh @ w).transpose(0, 2, 1) * upper
    return bv, bw


@dataclass(frozen=True)
class Dynamics:
    """Kinematic and dynamic terms of one joint state."""

    g: Pose
    Jb: np.ndarray
    Jb_dot: np.ndarray
    M: np.ndarray
    C: np.ndarray
    G: np.ndarray
    dM: np.ndarray  # dM[k] = dM/dq_k


def evaluate(model: RobotModel, q, qd) -> Dynamics:
    """Everything the controller and integrator need at (q, qd).

    Link inertias are pushed to space-frame momenta H_lm = I_l^s S_m, so that
    M_jm = S_j . sum_{l>=j} H_lm, and since d(Ad_l^-1 S_j)/dq_k is the link-frame
    image of ad(S_j) S_k (j < k <= l), dM follows from the same suffix sums.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    n = model.n_joints
    Js, prefix = _space_chain(model, q)
    v, w = Js[:3].T, Js[3:].T

    Tc = prefix @ model._com_frames
    Rc, pc = Tc[:, :3, :3], Tc[:, :3, 3]
    m = model._masses
    # joint m moves link l only when m <= l
    reach, upper = model._masks
    Ph = _hats(pc)
    Is = Rc @ model._inertias @ Rc.transpose(0, 2, 1)
    Hv = m[:, None, None] * (v[None] - (Ph @ Js[3:]).transpose(0, 2, 1)) * reach
    Hw = ((Is @ Js[3:]).transpose(0, 2, 1) * reach) + (Ph @ Hv.transpose(0, 2, 1)).transpose(0, 2, 1)
    Zv = np.cumsum(Hv[::-1], axis=0)[::-1]
    Zw = np.cumsum(Hw[::-1], axis=0)[::-1]

    M = np.einsum("ja,jma->jm", v, Zv) + np.einsum("ja,jma->jm", w, Zw)
    M = 0.5 * (M + M.T) + np.diag(model.armature)

    bv, bw = _brackets(Js, upper)
    # X[j, k, m] = (ad(S_j) S_k) . sum_{l>=k} H_lm
    X = np.einsum("jka,kma->kjm", bv, Zv) + np.einsum("jka,kma->kjm", bw, Zw)
    dM = X + X.transpose(0, 2, 1)

    C = 0.5 * (
        np.einsum("kij,k->ij", dM, qd)
        + np.einsum("jik,k->ij", dM, qd)
        - np.einsum("ijk,k->ij", dM, qd)
    )

    gvec = model.gravity
    msum = np.cumsum(m[::-1])[::-1]
    mp = np.cumsum((m[:, None] * pc)[::-1], axis=0)[::-1]
    G = -(msum * (v @ gvec) - np.einsum("ja,ja->j", w, (mp @ hat3(gvec).T)))

    T = prefix[-1] @ model.home_pose.matrix()
    g = Pose(T[:3, :3], T[:3, 3])
    Jb = _ad_inv(g, Js)
    # Jdot_j = Ad_g^-1 sum_{k>j} ad(S_j) S_k qd_k
    Jdot = _ad_inv(g, np.vstack([np.einsum("jka,k->aj", bv, qd), np.einsum("jka,k->aj", bw, qd)]))
    return Dynamics(g=g, Jb=Jb, Jb_dot=Jdot, M=M, C=C, G=G, dM=dM)


def _ad_inv(g: Pose, X) -> np.ndarray:
    """Ad_{g^-1} applied to the columns of X (6 x n)."""
    Rt = g.rot.T
    return np.vstack([Rt @ (X[:3] - hat3(g.pos) @ X[3:]), Rt @ X[3:]])


def forward_kinematics(model: RobotModel, q) -> Pose:
    _, prefix = _space_chain(model, np.asarray(q, dtype=float))
    T = prefix[-1] @ model.home_pose.matrix()
    return Pose(T[:3, :3], T[:3, 3])


def body_jacobian(model: RobotModel, q) -> np.ndarray:
    Js, prefix = _space_chain(model, np.asarray(q, dtype=float))
    g = Pose.from_matrix(prefix[-1] @ model.home_pose.matrix())
    return adjoint_big(inverse(g)) @ Js


def joint_dynamics(model: RobotModel, s: JointState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = evaluate(model, s.q, s.qd)
    return d.M, d.C, d.G


def potential_energy(model: RobotModel, q) -> float:
    _, prefix = _space_chain(model, np.asarray(q, dtype=float))
    pc = (prefix @ model._com_frames)[:, :3, 3]
    return float(-np.sum(model._masses * (pc @ model.gravity)))


def kinetic_energy(model: RobotModel, s: JointState) -> float:
    M, _, _ = joint_dynamics(model, s)
    return float(0.5 * s.qd @ M @ s.qd)


@dataclass(frozen=True)
class OperationalDynamics:
    M: np.ndarray
    C: np.ndarray
    G: np.ndarray
    Jb: np.ndarray
    Jb_inv: np.ndarray
    cond: float


def jacobian_condition(Jb) -> float:
    return float(np.linalg.cond(Jb))


def to_operational(d: Dynamics, cond_max: float = COND_MAX) -> OperationalDynamics:
    if d.Jb.shape[0] != d.Jb.shape[1]:
        raise ValueError("operational-space dynamics need a square body Jacobian (n = 6)")
    cond = jacobian_condition(d.Jb)
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularJacobianError(cond, cond_max)
    Jinv = np.linalg.inv(d.Jb)
    Mt = Jinv.T @ d.M @ Jinv
    Ct = Jinv.T @ (d.C - d.M @ Jinv @ d.Jb_dot) @ Jinv
    Gt = Jinv.T @ d.G
    return OperationalDynamics(0.5 * (Mt + Mt.T), Ct, Gt, d.Jb, Jinv, cond)


def operational_dynamics(model: RobotModel, s: JointState, cond_max: float = COND_MAX):
    """Task-space (M~, C~, G~) for body-frame end-effector twists."""
    op = to_operational(evaluate(model, s.q, s.qd), cond_max)
    return op.M, op.C, op.G


def apply_wrench(model: RobotModel, q, wrench) -> np.ndarray:
    return body_jacobian(model, q).T @ np.asarray(wrench, dtype=float)


# --- robot description files -------------------------------------------------

_ROBOT_KEYS = {"name", "n_joints", "gravity", "home_pose", "convention"}
_JOINT_KEYS = {"screw", "armature", "limits"}
_LINK_KEYS = {"mass", "com", "inertia", "frame"}


def _floats(section, key, count=None) -> np.ndarray:
    raw = section[key]
    try:
        vals = np.array([float(x) for x in raw.replace(",", " ").split()])
    except ValueError as exc:
        raise RobotFileError(f"[{section.name}] {key}: not a list of numbers: {raw!r}") from exc
    if count is not None and vals.size != count:
        raise RobotFileError(f"[{section.name}] {key}: expected {count} numbers, got {vals.size}")
    return vals


def _pose12(vals) -> Pose:
    R = vals[:9].reshape(3, 3)
    if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or np.linalg.det(R) < 0:
        raise RobotFileError("pose rotation is not a proper rotation matrix")
    U, _, Vt = np.linalg.svd(R)
    return Pose(U @ Vt, vals[9:])


def _sym_from_upper(v) -> np.ndarray:
    xx, xy, xz, yy, yz, zz = v
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


def _check_keys(section, allowed):
    unknown = set(section.keys()) - allowed
    if unknown:
        raise RobotFileError(f"[{section.name}] unknown key(s): {', '.join(sorted(unknown))}")


def parse_robot(text: str) -> RobotModel:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise RobotFileError(str(exc)) from exc
    if "robot" not in cp:
        raise RobotFileError("missing [robot] section")
    head = cp["robot"]
    _check_keys(head, _ROBOT_KEYS)
    try:
        n = int(head["n_joints"])
    except (KeyError, ValueError) as exc:
        raise RobotFileError("[robot] n_joints must be an integer") from exc
    expected = {"robot"} | {f"joint{i}" for i in range(1, n + 1)} | {f"link{i}" for i in range(1, n + 1)}
    extra = set(cp.sections()) - expected
    if extra:
        raise RobotFileError(f"unknown section(s): {', '.join(sorted(extra))}")
    missing = expected - set(cp.sections())
    if missing:
        raise RobotFileError(f"missing section(s): {', '.join(sorted(missing))}")
    convention = head.get("convention", "space")
    if convention not in ("space", "body"):
        raise RobotFileError(f"[robot] convention must be 'space' or 'body', got {convention!r}")
    if "home_pose" not in head:
        raise RobotFileError("[robot] home_pose is required")
    home = _pose12(_floats(head, "home_pose", 12))
    gravity = _floats(head, "gravity", 3) if "gravity" in head else np.array([0.0, 0.0, -9.81])

    screws, armature, limits, links = [], [], [], []
    for i in range(1, n + 1):
        js = cp[f"joint{i}"]
        _check_keys(js, _JOINT_KEYS)
        if "screw" not in js:
            raise RobotFileError(f"[joint{i}] screw is required")
        screws.append(_floats(js, "screw", 6))
        armature.append(float(js.get("armature", "0")))
        limits.append(_floats(js, "limits", 2) if "limits" in js else [-np.inf, np.inf])

        ls = cp[f"link{i}"]
        _check_keys(ls, _LINK_KEYS)
        for key in _LINK_KEYS:
            if key not in ls:
                raise RobotFileError(f"[link{i}] {key} is required")
        links.append(LinkInertia(
            mass=float(ls["mass"]),
            com=_floats(ls, "com", 3),
            inertia=_sym_from_upper(_floats(ls, "inertia", 6)),
            frame=_pose12(_floats(ls, "frame", 12)),
        ))
    screws = np.array(screws)
    if convention == "body":
        screws = (adjoint_big(home) @ screws.T).T
    return RobotModel(
        joint_screws=screws,
        home_pose=home,
        links=tuple(links),
        gravity=gravity,
        armature=np.array(armature),
        joint_limits=np.array(limits, dtype=float),
        name=head.get("name", "robot"),
    )


def load_robot(path) -> RobotModel:
    return parse_robot(Path(path).read_text())


def load_preset(name: str) -> RobotModel:
    ref = resources.files("geoimp") / "presets" / f"{name}.robot"
    if not ref.is_file():
        raise RobotFileError(f"unknown robot preset {name!r}")
    return parse_robot(ref.read_text())


def _fmt(vals) -> str:
    vals = np.where(np.abs(np.ravel(vals)) < 1e-14, 0.0, np.ravel(vals)) + 0.0
    return " ".join(f"{float(v):.12g}" for v in vals)


def dump_robot(model: RobotModel, header: str = "") -> str:
    lines = [f"# {line}" for line in header.splitlines()]
    h = model.home_pose
    lines += [
        "[robot]",
        f"name = {model.name}",
        f"n_joints = {model.n_joints}",
        "convention = space",
        f"gravity = {_fmt(model.gravity)}",
        f"home_pose = {_fmt(np.r_[h.rot.ravel(), h.pos])}",
    ]
    for i, (S, link) in enumerate(zip(model.joint_screws, model.links), start=1):
        I = link.inertia
        lines += ["", f"[joint{i}]", f"screw = {_fmt(S)}", f"armature = {model.armature[i - 1]:.12g}"]
        if model.joint_limits is not None and np.all(np.isfinite(model.joint_limits[i - 1])):
            lines.append(f"limits = {_fmt(model.joint_limits[i - 1])}")
        lines += [
            "",
            f"[link{i}]",
            f"mass = {link.mass:.12g}",
            f"com = {_fmt(link.com)}",
            f"inertia = {_fmt([I[0, 0], I[0, 1], I[0, 2], I[1, 1], I[1, 2], I[2, 2]])}",
            f"frame = {_fmt(np.r_[link.frame.rot.ravel(), link.frame.pos])}",
        ]
    return "\n".join(lines) + "\n"


def model_from_dh(a, d, alpha, masses, coms, inertias, armature=None, joint_limits=None,
                  gravity=(0.0, 0.0, -9.81), name="robot") -> RobotModel:
    """Build a revolute chain from standard Denavit-Hartenberg parameters.

    Link i's frame is DH frame i; com and inertia are expressed in it.
    """
    frames = []
    T = np.eye(4)
    screws = []
    for ai, di, al in zip(a, d, alpha):
        z, o = T[:3, 2].copy(), T[:3, 3].copy()
        screws.append(np.r_[-np.cross(z, o), z])
        ca, sa = np.cos(al), np.sin(al)
        T = T @ np.array([[1, 0, 0, ai], [0, ca, -sa, 0], [0, sa, ca, di], [0, 0, 0, 1.0]])
        frames.append(Pose(T[:3, :3], T[:3, 3]))
    links = tuple(
        LinkInertia(float(m), np.asarray(c, float), np.asarray(I, float), f)
        for m, c, I, f in zip(masses, coms, inertias, frames)
    )
    return RobotModel(
        joint_screws=np.array(screws),
        home_pose=frames[-1],
        links=links,
        gravity=np.asarray(gravity, float),
        armature=armature,
        joint_limits=None if joint_limits is None else np.asarray(joint_limits, float),
        name=name,
    )
