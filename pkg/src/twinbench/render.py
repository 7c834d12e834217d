"""Synthetic frame rendering.

A pinhole-projection z-buffer rasterizer with perspective-correct UV
interpolation, uniform diffuse shading, and a solid background. The
background color survives rendering bit-exactly: a pixel is either the
exact background RGB or was written by a triangle fragment. No blending,
no anti-aliasing, no hidden state between frames; identical inputs give
bit-identical images. Frames are independent of each other, so callers
may render them concurrently as long as output order follows pose order.

Shading model: fragment color = base color * lighting * clamp(|n.v|, 0.2, 1)
where n is the face normal and v the camera view axis. This stands in for
an enclosing arrangement of area lights: illumination is nearly direction
independent, the |n.v| term keeps enough shading variation for structural
comparison, and the 0.2 floor avoids black silhouette edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import CameraPose, PoseSet
from .mesh_io import RasterImage, TriangleMesh

__all__ = [
    "CameraIntrinsics",
    "RenderSettings",
    "project",
    "rasterize",
    "render_rig",
]

# Camera-space near plane; triangles are clipped against z = -NEAR_EPS.
NEAR_EPS = 1e-6

SHADE_FLOOR = 0.2
UNTEXTURED_GRAY = (128, 128, 128)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: image size in pixels and vertical field of view."""

    width: int = 2560
    height: int = 1440
    vertical_fov: float = 23.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if not 0.0 < self.vertical_fov < 180.0:
            raise ValueError("vertical_fov must be in (0, 180)")

    @property
    def focal_px(self) -> float:
        return (self.height / 2.0) / math.tan(math.radians(self.vertical_fov) / 2.0)

    @property
    def horizontal_fov(self) -> float:
        """Implied horizontal field of view, degrees."""
        half = math.atan((self.width / self.height) * math.tan(math.radians(self.vertical_fov) / 2.0))
        return math.degrees(2.0 * half)


@dataclass(frozen=True)
class RenderSettings:
    """Scene settings. `background` doubles as the masking key downstream,
    so it must be an exact 8-bit RGB triple."""

    background: tuple[int, int, int] = (255, 255, 255)
    lighting: float = 1.0
    texture_filter: str = "bilinear"

    def __post_init__(self):
        bg = tuple(int(c) for c in self.background)
        if len(bg) != 3 or any(not 0 <= c <= 255 for c in bg):
            raise ValueError("background must be an RGB triple of 0..255 ints")
        object.__setattr__(self, "background", bg)
        if not 0.0 < self.lighting <= 1.0:
            raise ValueError("lighting must be in (0, 1]")
        if self.texture_filter not in ("nearest", "bilinear"):
            raise ValueError("texture_filter must be 'nearest' or 'bilinear'")


def project(point, pose: CameraPose, intr: CameraIntrinsics):
    """Project a world point to (x_px, y_px, depth), or None when the point
    is at or behind the camera plane. Depth is the positive camera-space
    distance along the view axis."""
    p = np.asarray(point, dtype=np.float64)
    pc = pose.rotation_matrix().T @ (p - pose.position)
    if pc[2] >= 0.0:
        return None
    inv = 1.0 / -pc[2]
    x = intr.width / 2.0 + intr.focal_px * (pc[0] * inv)
    y = intr.height / 2.0 - intr.focal_px * (pc[1] * inv)
    return (x, y, -pc[2])


def _clip_near(cam_pts, uvs):
    """Clip a camera-space triangle against z <= -NEAR_EPS.

    Returns a polygon (list of (point, uv)) with 0..4 vertices; UVs are
    interpolated linearly in camera space, which is exact for clipping.
    """
    out = []
    n = len(cam_pts)
    for i in range(n):
        a, ua = cam_pts[i], uvs[i]
        b, ub = cam_pts[(i + 1) % n], uvs[(i + 1) % n]
        a_in = a[2] <= -NEAR_EPS
        b_in = b[2] <= -NEAR_EPS
        if a_in:
            out.append((a, ua))
        if a_in != b_in:
            t = (-NEAR_EPS - a[2]) / (b[2] - a[2])
            out.append((a + t * (b - a), ua + t * (ub - ua)))
    return out


def _sample_texture(texture: RasterImage, u, v, mode: str):
    """Sample texture at UV arrays (OBJ convention: v up, origin bottom
    left). Coordinates are clamped to the image edge."""
    tex = texture.pixels.astype(np.float64)
    h, w = tex.shape[:2]
    if mode == "nearest":
        xi = np.clip((u * w).astype(np.int64), 0, w - 1)
        yi = np.clip(((1.0 - v) * h).astype(np.int64), 0, h - 1)
        return tex[yi, xi]
    x = np.clip(u * w - 0.5, 0.0, w - 1.0)
    y = np.clip((1.0 - v) * h - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    top = tex[y0, x0] * (1.0 - fx) + tex[y0, x1] * fx
    bot = tex[y1, x0] * (1.0 - fx) + tex[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def rasterize(mesh: TriangleMesh, pose: CameraPose, intr: CameraIntrinsics,
              settings: RenderSettings = RenderSettings()) -> RasterImage:
    """Render one frame of the mesh from the given pose.

    Z-buffered triangle fill with perspective-correct barycentric
    interpolation. Zero-area triangles are skipped; an empty mesh yields a
    pure background image. Both triangle windings are drawn (no culling).
    """
    w, h = intr.width, intr.height
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = np.asarray(settings.background, dtype=np.uint8)
    zbuf = np.full((h, w), np.inf, dtype=np.float64)
    if mesh.triangle_count == 0:
        return RasterImage(img)

    rot = pose.rotation_matrix()
    cam_all = (mesh.vertices - pose.position) @ rot  # world -> camera, row-wise
    view_axis = rot @ np.array([0.0, 0.0, -1.0])
    focal = intr.focal_px

    textured = mesh.texture is not None and mesh.uvs is not None
    if not textured:
        base = np.asarray(mesh.diffuse_color, dtype=np.float64) * 255.0 \
            if mesh.diffuse_color is not None else np.asarray(UNTEXTURED_GRAY, dtype=np.float64)

    zero_uv = np.zeros(2)
    for t in range(mesh.triangle_count):
        vi = mesh.triangles[t]
        world = mesh.vertices[vi]
        normal = np.cross(world[1] - world[0], world[2] - world[0])
        norm_len = np.linalg.norm(normal)
        if norm_len == 0.0:
            continue  # degenerate triangle
        shade = min(1.0, max(SHADE_FLOOR, abs((normal / norm_len) @ view_axis))) * settings.lighting

        cam = cam_all[vi]
        if textured:
            uv = mesh.uvs[mesh.uv_indices[t]]
        else:
            uv = (zero_uv, zero_uv, zero_uv)
        poly = _clip_near(list(cam), list(uv))
        if len(poly) < 3:
            continue
        for k in range(1, len(poly) - 1):
            tri = (poly[0], poly[k], poly[k + 1])
            _fill_triangle(img, zbuf, tri, focal, w, h, shade,
                           mesh.texture if textured else None,
                           None if textured else base,
                           settings.texture_filter)
    return RasterImage(img)


def _fill_triangle(img, zbuf, tri, focal, w, h, shade, texture, flat_base, tex_filter):
    pts = []
    for cam, uv in tri:
        inv = 1.0 / -cam[2]
        pts.append((w / 2.0 + focal * cam[0] * inv, h / 2.0 - focal * cam[1] * inv,
                    -cam[2], uv))
    (x0, y0, z0, uv0), (x1, y1, z1, uv1), (x2, y2, z2, uv2) = pts

    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if area == 0.0:
        return
    xmin = max(int(math.floor(min(x0, x1, x2) - 0.5)), 0)
    xmax = min(int(math.ceil(max(x0, x1, x2) - 0.5)), w - 1)
    ymin = max(int(math.floor(min(y0, y1, y2) - 0.5)), 0)
    ymax = min(int(math.ceil(max(y0, y1, y2) - 0.5)), h - 1)
    if xmin > xmax or ymin > ymax:
        return

    # pixel centers
    px = np.arange(xmin, xmax + 1, dtype=np.float64) + 0.5
    py = (np.arange(ymin, ymax + 1, dtype=np.float64) + 0.5)[:, None]

    e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
    e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    if area > 0.0:
        inside = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
    else:
        inside = (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0)
    if not inside.any():
        return

    l0 = e0 / area
    l1 = e1 / area
    l2 = e2 / area
    # 1/z interpolates linearly in screen space
    inv_z = l0 / z0 + l1 / z1 + l2 / z2
    with np.errstate(divide="ignore"):
        depth = 1.0 / inv_z

    zwin = zbuf[ymin:ymax + 1, xmin:xmax + 1]
    write = inside & (depth < zwin)
    if not write.any():
        return
    zwin[write] = depth[write]

    if texture is not None:
        uw = (l0 * (uv0[0] / z0) + l1 * (uv1[0] / z1) + l2 * (uv2[0] / z2))
        vw = (l0 * (uv0[1] / z0) + l1 * (uv1[1] / z1) + l2 * (uv2[1] / z2))
        u = uw[write] * depth[write]
        v = vw[write] * depth[write]
        color = _sample_texture(texture, u, v, tex_filter) * shade
    else:
        color = flat_base * shade
    color = np.clip(color + 0.5, 0.0, 255.0).astype(np.uint8)
    img[ymin:ymax + 1, xmin:xmax + 1][write] = color


def render_rig(mesh: TriangleMesh, poses: PoseSet, intr: CameraIntrinsics,
               settings: RenderSettings = RenderSettings()) -> list[RasterImage]:
    """Render one frame per pose; frame i corresponds to pose i."""
    if len(poses) == 0:
        raise ValueError("pose set is empty")
    return [rasterize(mesh, pose, intr, settings) for pose in poses]
