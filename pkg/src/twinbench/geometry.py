"""Camera rig geometry.

Smallest enclosing spheres, Fibonacci sphere layouts, look-at camera
orientations, and seeded pose-set generation around a mesh.

Everything here is a pure function of its inputs. Returned objects are
treated as immutable and are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

__all__ = [
    "Sphere",
    "CameraPose",
    "PoseSet",
    "CameraRigSpec",
    "welzl_ses",
    "camera_radius",
    "fibonacci_sphere",
    "look_at",
    "generate_rig",
    "quat_multiply",
    "quat_from_axis_angle",
    "quat_to_matrix",
    "quat_from_matrix",
]

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

WORLD_UP = np.array([0.0, 0.0, 1.0])
FALLBACK_UP = np.array([1.0, 0.0, 0.0])
_UP_SINGULARITY = 1e-6  # radians between the view axis and world +/-Z

# Relative slack for "point inside sphere" tests inside Welzl's recursion.
_WELZL_EPS = 1e-10


# ---------------------------------------------------------------------------
# Quaternions, stored wxyz (scalar first). All rotations are camera-to-world.

def quat_multiply(a, b):
    """Hamilton product a*b of two wxyz quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_from_axis_angle(axis, angle_rad):
    """Unit quaternion for a rotation of angle_rad about axis."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * angle_rad
    return np.concatenate([[math.cos(half)], (math.sin(half) / n) * axis])


def quat_to_matrix(q):
    """3x3 rotation matrix for a wxyz quaternion (assumed unit)."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m):
    """wxyz quaternion from a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------
# Smallest enclosing sphere (Welzl).


@dataclass(frozen=True)
class Sphere:
    """Sphere given by center (3,) and a non-negative radius, model units."""

    center: np.ndarray
    radius: float

    def contains(self, points, tol=1e-9) -> bool:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d = np.linalg.norm(pts - self.center, axis=1)
        return bool(np.all(d <= self.radius + tol))


def _boundary_sphere(bpts):
    """Smallest sphere with every point of bpts exactly on its surface.

    The center lies in the affine hull of the points. Returns (center, r2)
    or None when the set is affinely degenerate.
    """
    b0 = bpts[0]
    if len(bpts) == 1:
        return b0.copy(), 0.0
    u = bpts[1:] - b0
    gram = u @ u.T
    rhs = 0.5 * np.einsum("ij,ij->i", u, u)
    try:
        w = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(w)):
        return None
    offset = u.T @ w
    center = b0 + offset
    r2 = float(offset @ offset)
    # Reject solutions a near-singular Gram matrix silently corrupted.
    d2 = np.einsum("ij,ij->i", bpts - center, bpts - center)
    if np.max(np.abs(d2 - r2)) > 1e-6 * max(r2, 1e-30):
        return None
    return center, r2


def _support_sphere(bpts):
    """Smallest sphere covering bpts with the points on its boundary when
    geometrically possible; falls back to boundary subsets for degenerate
    (collinear / concyclic) configurations. len(bpts) <= 4."""
    s = _boundary_sphere(bpts)
    if s is not None:
        return s
    best = None
    for size in range(len(bpts) - 1, 0, -1):
        for idx in combinations(range(len(bpts)), size):
            s = _boundary_sphere(bpts[list(idx)])
            if s is None:
                continue
            c, r2 = s
            d2 = np.einsum("ij,ij->i", bpts - c, bpts - c)
            if np.all(d2 <= r2 * (1.0 + _WELZL_EPS) + 1e-30):
                if best is None or r2 < best[1]:
                    best = (c, r2)
        if best is not None:
            return best
    raise AssertionError("unreachable: single-point boundary sphere always exists")


def _first_outside(pts, start, c, r2):
    """Index of the first point at or after `start` lying outside (c, r2),
    or -1 when all remaining points are inside."""
    if start >= len(pts):
        return -1
    d2 = np.einsum("ij,ij->i", pts[start:] - c, pts[start:] - c)
    bad = np.nonzero(d2 > r2 * (1.0 + _WELZL_EPS))[0]
    return -1 if bad.size == 0 else start + int(bad[0])


def _ses_three(pts, q1, q2, q3):
    c, r2 = _support_sphere(np.array([q1, q2, q3]))
    i = _first_outside(pts, 0, c, r2)
    while i != -1:
        c, r2 = _support_sphere(np.array([q1, q2, q3, pts[i]]))
        i = _first_outside(pts, i + 1, c, r2)
    return c, r2


def _ses_two(pts, q1, q2):
    c, r2 = _support_sphere(np.array([q1, q2]))
    i = _first_outside(pts, 0, c, r2)
    while i != -1:
        c, r2 = _ses_three(pts[:i], q1, q2, pts[i])
        i = _first_outside(pts, i + 1, c, r2)
    return c, r2


def _ses_one(pts, q1):
    c, r2 = q1.copy(), 0.0
    i = _first_outside(pts, 0, c, r2)
    while i != -1:
        c, r2 = _ses_two(pts[:i], q1, pts[i])
        i = _first_outside(pts, i + 1, c, r2)
    return c, r2


def welzl_ses(points, seed: int = 0) -> Sphere:
    """Smallest enclosing sphere of a 3D point set.

    Iterative Welzl construction over a seeded shuffle of the input.
    The smallest enclosing sphere is unique and determined by at most four
    support points, so the seed only affects the internal visiting order,
    not the result (beyond ~1e-12 floating noise).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise ValueError("expected a nonempty (n, 3) point array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    rng = np.random.default_rng(seed)
    pts = pts[rng.permutation(len(pts))]

    c, r2 = pts[0].copy(), 0.0
    i = _first_outside(pts, 1, c, r2)
    while i != -1:
        c, r2 = _ses_one(pts[:i], pts[i])
        i = _first_outside(pts, i + 1, c, r2)
    return Sphere(center=c, radius=math.sqrt(r2))


# ---------------------------------------------------------------------------
# Camera placement.


def camera_radius(r_ses: float, vertical_fov: float) -> float:
    """Distance from the rig target at which a sphere of radius r_ses spans
    the vertical field of view: r_ses / tan(vertical_fov / 2)."""
    if not 0.0 < vertical_fov < 180.0:
        raise ValueError(f"vertical_fov must be in (0, 180), got {vertical_fov}")
    if r_ses <= 0.0:
        raise ValueError("r_ses must be positive")
    return r_ses / math.tan(math.radians(vertical_fov) / 2.0)


def fibonacci_sphere(n: int) -> np.ndarray:
    """n near-uniform unit vectors from the offset Fibonacci lattice.

    z_i = 1 - 2*(i + 0.5)/n with golden-angle azimuths; the half-step offset
    keeps points away from the poles. Deterministic for a given n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(1.0 - z * z)
    az = i * GOLDEN_ANGLE
    return np.column_stack([r * np.cos(az), r * np.sin(az), z])


def look_at(eye, target, roll_deg: float = 0.0) -> np.ndarray:
    """Unit quaternion orienting a camera at `eye` toward `target`.

    The camera -Z axis points along the view direction. Before roll, camera
    +Y is the projection of world +Z onto the plane orthogonal to the view;
    when the view is within ~1e-6 rad of world +/-Z the up reference falls
    back to world +X. Roll rotates about the view axis.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    f = target - eye
    dist = np.linalg.norm(f)
    if dist == 0.0:
        raise ValueError("eye and target coincide")
    f = f / dist

    up = WORLD_UP if math.hypot(f[0], f[1]) >= _UP_SINGULARITY else FALLBACK_UP
    y = up - (up @ f) * f
    y = y / np.linalg.norm(y)
    z = -f
    x = np.cross(y, z)
    q = quat_from_matrix(np.column_stack([x, y, z]))
    if roll_deg:
        q = quat_multiply(q, quat_from_axis_angle([0.0, 0.0, -1.0], math.radians(roll_deg)))
        q = q / np.linalg.norm(q)
    return q


@dataclass(frozen=True)
class CameraPose:
    """Camera extrinsics: position and camera-to-world rotation (wxyz).

    The camera looks along its -Z axis. roll_deg records the roll already
    baked into `rotation`; it is informational for pose files.
    """

    position: np.ndarray
    rotation: np.ndarray
    roll_deg: float = 0.0

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def view_direction(self) -> np.ndarray:
        """World-space direction of the camera -Z axis."""
        return self.rotation_matrix() @ np.array([0.0, 0.0, -1.0])


@dataclass(frozen=True)
class PoseSet:
    """Ordered camera poses. The order defines pairing between ground-truth
    and estimated sets, so every consumer must preserve it."""

    poses: tuple[CameraPose, ...]

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self):
        return len(self.poses)

    def __iter__(self):
        return iter(self.poses)

    def __getitem__(self, i):
        return self.poses[i]

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.poses], dtype=np.float64)

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)


@dataclass(frozen=True)
class CameraRigSpec:
    """Parameters for pose generation around a mesh."""

    count: int = 100
    vertical_fov: float = 23.0
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 0.0 < self.vertical_fov < 180.0:
            raise ValueError("vertical_fov must be in (0, 180)")

    @property
    def theta(self) -> float:
        """Half the vertical field of view, radians."""
        return math.radians(self.vertical_fov) / 2.0


def generate_rig(mesh, spec: CameraRigSpec = CameraRigSpec()) -> PoseSet:
    """Seeded camera rig on a sphere around a mesh.

    Cameras sit at distance camera_radius(r_ses, fov) from the center of the
    mesh's smallest enclosing sphere, in Fibonacci-lattice directions, each
    aimed at that center with a uniformly random roll in [0, 360). The pose
    order is then shuffled. Fully deterministic for a fixed seed (numpy
    PCG64 stream; reproducible per implementation, not across libraries).
    """
    pts = np.asarray(getattr(mesh, "vertices", mesh), dtype=np.float64)
    ses = welzl_ses(pts, seed=spec.seed)
    if ses.radius <= 0.0:
        raise ValueError("mesh has zero spatial extent; cannot place cameras")
    r_cam = camera_radius(ses.radius, spec.vertical_fov)
    dirs = fibonacci_sphere(spec.count)

    rng = np.random.default_rng(spec.seed)
    rolls = rng.uniform(0.0, 360.0, spec.count)
    poses = []
    for d, roll in zip(dirs, rolls):
        position = ses.center + r_cam * d
        poses.append(
            CameraPose(
                position=position,
                rotation=look_at(position, ses.center, roll_deg=roll),
                roll_deg=float(roll),
            )
        )
    perm = rng.permutation(spec.count)
    return PoseSet(tuple(poses[j] for j in perm))
