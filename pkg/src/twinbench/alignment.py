"""Pose-based rough alignment and ICP refinement.

Rough alignment recovers a similarity transform between paired pose sets
in three stages: a translation factor between centroids, a scale factor
from mean centroid distances, and a Kabsch rotation on the centered paired
positions. Only camera positions participate; orientations are ignored.
The recovered transform is then applied to the reconstructed mesh and
refined with point-to-point ICP on mesh vertices.

rough_align and the Kabsch solve are pure single-threaded functions; ICP
iterations are sequential with no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PoseSet, welzl_ses
from .mesh_io import TriangleMesh

__all__ = [
    "AlignmentError",
    "DegenerateGeometryError",
    "CorrespondenceError",
    "SimilarityTransform",
    "RoughAlignment",
    "IcpParams",
    "IcpResult",
    "AlignmentReport",
    "kabsch_rotation",
    "rough_align",
    "apply_transform",
    "icp_refine",
    "align_reconstruction",
]


class AlignmentError(ValueError):
    """Alignment preconditions violated."""


class DegenerateGeometryError(AlignmentError):
    """Point configuration leaves the solution underdetermined."""


class CorrespondenceError(AlignmentError):
    """No usable ICP correspondences."""


@dataclass(frozen=True)
class SimilarityTransform:
    """Uniform scale + rotation + offset: apply(x) = scale * R @ x + translation.

    The linear part is scale * rotation with scale > 0 and rotation a
    proper orthogonal matrix, so the transform is always invertible.
    """

    scale: float
    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if not self.scale > 0.0:
            raise ValueError("scale must be positive")
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must be proper orthogonal")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(scale=1.0, rotation=np.eye(3), translation=np.zeros(3))

    @classmethod
    def from_stages(cls, pre_translation, scale, rotation, pivot) -> "SimilarityTransform":
        """Compose: translate by -pre_translation, then scale about pivot,
        then rotate about pivot."""
        pre_translation = np.asarray(pre_translation, dtype=np.float64)
        pivot = np.asarray(pivot, dtype=np.float64)
        rotation = np.asarray(rotation, dtype=np.float64)
        offset = pivot - scale * (rotation @ (pre_translation + pivot))
        return cls(scale=float(scale), rotation=rotation, translation=offset)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """self applied after inner."""
        return SimilarityTransform(
            scale=self.scale * inner.scale,
            rotation=self.rotation @ inner.rotation,
            translation=self.scale * (self.rotation @ inner.translation) + self.translation,
        )

    def inverse(self) -> "SimilarityTransform":
        inv_s = 1.0 / self.scale
        inv_r = self.rotation.T
        return SimilarityTransform(
            scale=inv_s,
            rotation=inv_r,
            translation=-inv_s * (inv_r @ self.translation),
        )

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class RoughAlignment:
    """rough_align result: the composed transform plus its three stages."""

    transform: SimilarityTransform
    translation_factor: np.ndarray  # estimated-centroid minus ground-truth-centroid
    scale_factor: float
    rotation: np.ndarray  # (3, 3)
    pivot: np.ndarray  # ground-truth centroid; scale and rotation act about it
    rms: float


@dataclass(frozen=True)
class IcpParams:
    """ICP controls. Distance-valued fields default relative to the static
    cloud's smallest-enclosing-sphere radius when left as None:
    convergence_tol 1e-6 * radius, max_correspondence_distance 0.1 * radius.
    """

    max_iterations: int = 50
    convergence_tol: Optional[float] = None
    max_correspondence_distance: Optional[float] = None
    sample_size: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.sample_size < 1:
            raise ValueError("max_iterations and sample_size must be positive")
        for v in (self.convergence_tol, self.max_correspondence_distance):
            if v is not None and v <= 0.0:
                raise ValueError("ICP tolerances must be positive")


@dataclass(frozen=True)
class IcpResult:
    transform: SimilarityTransform  # rigid: scale == 1
    rms: float
    iterations: int
    rms_history: tuple[float, ...]  # correspondence RMS per iteration


@dataclass(frozen=True)
class AlignmentReport:
    rough_rms: float
    icp_rms: Optional[float]
    icp_iterations: int
    icp_failed: bool


def _rms(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def kabsch_rotation(a_centered: np.ndarray, b_centered: np.ndarray) -> np.ndarray:
    """Rotation R minimizing sum ||R a_i - b_i||^2 over paired centered
    points, via SVD of the 3x3 cross-covariance. The sign flip on the
    smallest singular vector guarantees det(R) = +1.

    Raises DegenerateGeometryError when the points are collinear (the
    rotation about the common line is then free).
    """
    h = a_centered.T @ b_centered
    u, s, vt = np.linalg.svd(h)
    if s[0] == 0.0 or s[1] <= 1e-9 * s[0]:
        raise DegenerateGeometryError(
            "paired points are collinear; the rotation is underdetermined"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


def rough_align(est: PoseSet, gt: PoseSet) -> RoughAlignment:
    """Similarity transform sending estimated pose positions onto ground
    truth: translate by the centroid difference, scale by the ratio of mean
    centroid distances, rotate by the Kabsch optimum about the ground-truth
    centroid. Pairing is by index, so both sets must have equal length."""
    pe = est.positions
    pg = gt.positions
    if len(pe) != len(pg):
        raise AlignmentError(f"pose count mismatch: {len(pe)} estimated vs {len(pg)} ground truth")
    n = len(pe)
    if n < 3:
        raise AlignmentError("alignment needs at least 3 pose pairs")

    c_est = pe.mean(axis=0)
    c_gt = pg.mean(axis=0)
    t = c_est - c_gt
    translated = pe - t

    gt_spread = float(np.mean(np.linalg.norm(pg - c_gt, axis=1)))
    est_spread = float(np.mean(np.linalg.norm(translated - c_gt, axis=1)))
    if est_spread == 0.0:
        raise AlignmentError("estimated poses are coincident; scale is undefined")
    if gt_spread == 0.0:
        raise DegenerateGeometryError("ground-truth poses are coincident")
    s = gt_spread / est_spread

    scaled = c_gt + s * (translated - c_gt)
    r = kabsch_rotation(scaled - c_gt, pg - c_gt)

    transform = SimilarityTransform.from_stages(t, s, r, pivot=c_gt)
    return RoughAlignment(
        transform=transform,
        translation_factor=t,
        scale_factor=s,
        rotation=r,
        pivot=c_gt,
        rms=_rms(transform.apply(pe), pg),
    )


def apply_transform(mesh: TriangleMesh, transform: SimilarityTransform) -> TriangleMesh:
    """Map every vertex; connectivity, UVs and texture are unchanged."""
    return replace(mesh, vertices=transform.apply(mesh.vertices))


def icp_refine(moving, static, params: IcpParams = IcpParams()) -> IcpResult:
    """Point-to-point ICP from `moving` onto `static`.

    Each iteration matches every (subsampled) moving point to its exact
    nearest static neighbor through a k-d tree, keeps matches within the
    correspondence gate, solves the rigid Kabsch fit on the pairs, and
    applies it. Stops when the RMS improvement of an iteration falls below
    the convergence tolerance or after max_iterations. Scale is locked at 1
    since rough alignment has already fixed it.
    """
    mov = np.asarray(moving, dtype=np.float64).reshape(-1, 3)
    sta = np.asarray(static, dtype=np.float64).reshape(-1, 3)
    if len(mov) < 3 or len(sta) < 3:
        raise AlignmentError("both clouds need at least 3 points")

    tol = params.convergence_tol
    gate = params.max_correspondence_distance
    if tol is None or gate is None:
        radius = welzl_ses(sta).radius
        if radius == 0.0:
            raise DegenerateGeometryError("static cloud has zero extent")
        tol = 1e-6 * radius if tol is None else tol
        gate = 0.1 * radius if gate is None else gate

    if len(mov) > params.sample_size:
        pick = np.random.default_rng(params.seed).choice(
            len(mov), params.sample_size, replace=False
        )
        mov = mov[np.sort(pick)]

    tree = cKDTree(sta)
    rot_total = np.eye(3)
    t_total = np.zeros(3)
    cur = mov.copy()
    history: list[float] = []
    final_rms = 0.0
    iterations = 0

    for _ in range(params.max_iterations):
        dist, idx = tree.query(cur)
        accepted = dist <= gate
        if not accepted.any():
            raise CorrespondenceError(
                "clouds too far apart; run rough alignment first"
            )
        a = cur[accepted]
        b = sta[idx[accepted]]
        rms_before = float(np.sqrt(np.mean(dist[accepted] ** 2)))
        history.append(rms_before)

        ca = a.mean(axis=0)
        cb = b.mean(axis=0)
        r = kabsch_rotation(a - ca, b - cb)
        t = cb - r @ ca
        cur = cur @ r.T + t
        rot_total = r @ rot_total
        t_total = r @ t_total + t

        final_rms = _rms(cur[accepted], b)
        iterations += 1
        if abs(rms_before - final_rms) < tol:
            break

    transform = SimilarityTransform(scale=1.0, rotation=rot_total, translation=t_total)
    return IcpResult(
        transform=transform,
        rms=final_rms,
        iterations=iterations,
        rms_history=tuple(history),
    )


def align_reconstruction(
    recon_mesh: TriangleMesh,
    est_poses: PoseSet,
    gt_poses: PoseSet,
    gt_mesh: TriangleMesh,
    params: IcpParams = IcpParams(),
) -> tuple[TriangleMesh, AlignmentReport]:
    """Full alignment: rough pose-based similarity, then ICP on vertices.

    ICP failure (no correspondences, degenerate fit) downgrades to the
    rough-only mesh with icp_failed set, so the caller can still score it.
    Rough-alignment errors propagate."""
    rough = rough_align(est_poses, gt_poses)
    mesh = apply_transform(recon_mesh, rough.transform)
    try:
        icp = icp_refine(mesh.vertices, gt_mesh.vertices, params)
    except AlignmentError:
        return mesh, AlignmentReport(
            rough_rms=rough.rms, icp_rms=None, icp_iterations=0, icp_failed=True
        )
    aligned = apply_transform(mesh, icp.transform)
    return aligned, AlignmentReport(
        rough_rms=rough.rms,
        icp_rms=icp.rms,
        icp_iterations=icp.iterations,
        icp_failed=False,
    )
