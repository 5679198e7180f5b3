"""Sphere-based rigid-body geometry: poses, penetration depth, analytic gradients.

Every cost term downstream (packing, stacking, arm collision) bottoms out in
the two penetration primitives here, so this module is the differentiable
substrate of the whole planner. Object rotation is restricted to yaw about
the world z axis; poses are 4-DOF (x, y, z, yaw).

Penetration between two spheres is ``max(0, r_a + r_b - |c_a - c_b|)``: zero
at and beyond contact, linear inside. The subgradient at exact contact is
chosen as zero, and a coincident-center pair contributes a zero direction.
Distances are computed with a fixed association order so a scalar recount
reproduces the vectorized sums bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LINEAR = "linear"
QUADRATIC = "quadratic"
MODES = (LINEAR, QUADRATIC)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown cost mode {mode!r}, expected one of {MODES}")


def normalize_yaw(yaw):
    """Wrap angle(s) to the half-open interval (-pi, pi]."""
    arr = np.asarray(yaw, dtype=float)
    wrapped = np.remainder(arr + np.pi, 2.0 * np.pi) - np.pi  # [-pi, pi)
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.ndim(yaw) == 0:
        return float(wrapped)
    return wrapped


@dataclass
class Pose:
    """4-DOF rigid pose: world translation plus yaw about world z (radians)."""

    x: float
    y: float
    z: float
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Pose.{name} must be finite")
        self.yaw = normalize_yaw(self.yaw)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.yaw])

    @staticmethod
    def from_array(v) -> "Pose":
        v = np.asarray(v, dtype=float)
        return Pose(float(v[0]), float(v[1]), float(v[2]), float(v[3]))


@dataclass
class SphereSet:
    """Collection of spheres in a body-local frame."""

    centers: np.ndarray  # (n, 3)
    radii: np.ndarray  # (n,)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.radii = np.atleast_1d(np.asarray(self.radii, dtype=float))
        if self.centers.shape[0] == 0:
            raise ValueError("SphereSet must be nonempty")
        if self.centers.shape[1] != 3:
            raise ValueError("SphereSet centers must be (n, 3)")
        if self.radii.shape[0] != self.centers.shape[0]:
            raise ValueError("SphereSet radii length must match centers")
        if np.any(self.radii <= 0.0):
            raise ValueError("SphereSet radii must be strictly positive")

    def __len__(self) -> int:
        return self.centers.shape[0]


@dataclass
class Aabb:
    """Axis-aligned box, min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=float)
        self.max = np.asarray(self.max, dtype=float)
        if self.min.shape != self.max.shape:
            raise ValueError("Aabb min/max shape mismatch")
        if np.any(self.min > self.max):
            raise ValueError("Aabb requires min <= max componentwise")

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.min, self.max)

    def contains(self, points: np.ndarray, atol: float = 0.0) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.min - atol) & (p <= self.max + atol), axis=-1)


def rotation_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_z_dyaw(yaw: float) -> np.ndarray:
    """Derivative of rotation_z with respect to yaw."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def transform(sphere_set: SphereSet, pose: Pose) -> np.ndarray:
    """World-frame centers of a sphere set under a pose. Radii are unchanged."""
    return sphere_set.centers @ rotation_z(pose.yaw).T + pose.translation


def pen_pair(c_a, r_a, c_b, r_b) -> float:
    """Penetration depth of two spheres: max(0, r_a + r_b - |c_a - c_b|)."""
    ca = np.asarray(c_a, dtype=float)
    cb = np.asarray(c_b, dtype=float)
    dx = float(ca[0]) - float(cb[0])
    dy = float(ca[1]) - float(cb[1])
    dz = float(ca[2]) - float(cb[2])
    d = math.sqrt((dx * dx + dy * dy) + dz * dz)
    return max(0.0, (float(r_a) + float(r_b)) - d)


def _pair_distances(centers_a: np.ndarray, centers_b: np.ndarray) -> np.ndarray:
    # association order matches pen_pair: (dx^2 + dy^2) + dz^2
    diff = centers_a[:, None, :] - centers_b[None, :, :]
    return np.sqrt(
        (diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1])
        + diff[..., 2] * diff[..., 2]
    )


def pen_sets(centers_a, radii_a, centers_b, radii_b, mode: str = LINEAR) -> float:
    """Total penetration cost over all cross pairs of two world sphere sets.

    Linear mode sums raw penetrations, quadratic mode sums their squares.
    """
    _check_mode(mode)
    ca = np.atleast_2d(np.asarray(centers_a, dtype=float))
    cb = np.atleast_2d(np.asarray(centers_b, dtype=float))
    ra = np.atleast_1d(np.asarray(radii_a, dtype=float))
    rb = np.atleast_1d(np.asarray(radii_b, dtype=float))
    d = _pair_distances(ca, cb)
    pens = np.maximum(0.0, (ra[:, None] + rb[None, :]) - d)
    if mode == QUADRATIC:
        pens = pens * pens
    return float(np.sum(pens))


def pen_sets_grad(
    set_a: SphereSet,
    pose_a: Pose,
    centers_b,
    radii_b,
    mode: str = LINEAR,
) -> np.ndarray:
    """Gradient of pen_sets with respect to set A's pose (x, y, z, yaw).

    Set B is held fixed in world frame. For an active pair the center
    gradient is -(c_a - c_b)/|c_a - c_b|; inactive pairs and coincident
    centers contribute zero.
    """
    _check_mode(mode)
    cb = np.atleast_2d(np.asarray(centers_b, dtype=float))
    rb = np.atleast_1d(np.asarray(radii_b, dtype=float))
    world_a = transform(set_a, pose_a)
    diff = world_a[:, None, :] - cb[None, :, :]  # (na, nb, 3)
    d = _pair_distances(world_a, cb)
    pens = np.maximum(0.0, (set_a.radii[:, None] + rb[None, :]) - d)
    active = (pens > 0.0) & (d > 0.0)
    if not np.any(active):
        return np.zeros(4)
    weight = np.where(active, 1.0, 0.0)
    if mode == QUADRATIC:
        weight = weight * 2.0 * pens
    safe_d = np.where(d > 0.0, d, 1.0)
    # d(pen)/d(c_a) = -diff/d per active pair
    grad_centers = np.sum((-weight / safe_d)[..., None] * diff, axis=1)  # (na, 3)
    translation_grad = np.sum(grad_centers, axis=0)
    dcenters_dyaw = set_a.centers @ rotation_z_dyaw(pose_a.yaw).T
    yaw_grad = float(np.sum(grad_centers * dcenters_dyaw))
    return np.array(
        [translation_grad[0], translation_grad[1], translation_grad[2], yaw_grad]
    )
