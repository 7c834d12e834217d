"""Procedural sample meshes for demos and self-tests.

No external assets are required anywhere in the package; these builders
cover the interesting shape classes: a textured cube (corners exactly on
its enclosing sphere), a random convex blob, and a long thin cylinder
(extreme aspect ratio).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .mesh_io import RasterImage, TriangleMesh

__all__ = ["checkerboard_texture", "unit_cube", "random_blob", "cylinder"]


def checkerboard_texture(size: int = 64, tile: int = 8,
                         color_a=(200, 60, 40), color_b=(40, 120, 200)) -> RasterImage:
    """Two-tone checkerboard. Colors deliberately avoid pure white/black so
    shaded fragments can never collide with a default background."""
    idx = np.arange(size) // tile
    board = (idx[:, None] + idx[None, :]) % 2
    px = np.where(board[:, :, None] == 0,
                  np.asarray(color_a, np.uint8), np.asarray(color_b, np.uint8))
    return RasterImage(px.astype(np.uint8))


def unit_cube(textured: bool = True) -> TriangleMesh:
    """Axis-aligned unit cube [0,1]^3, 12 triangles, optional per-face UVs
    over a checkerboard texture."""
    verts = np.array(
        [[x, y, z] for z in (0.0, 1.0) for y in (0.0, 1.0) for x in (0.0, 1.0)]
    )
    # quads as seen from outside (winding is irrelevant to the renderer)
    quads = [
        (0, 1, 3, 2),  # z = 0
        (4, 6, 7, 5),  # z = 1
        (0, 4, 5, 1),  # y = 0
        (2, 3, 7, 6),  # y = 1
        (0, 2, 6, 4),  # x = 0
        (1, 5, 7, 3),  # x = 1
    ]
    tris = []
    uv_idx = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
        uv_idx.append((0, 1, 2))
        uv_idx.append((0, 2, 3))
    if not textured:
        return TriangleMesh(vertices=verts, triangles=np.array(tris), name="unit_cube")
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return TriangleMesh(
        vertices=verts,
        triangles=np.array(tris),
        uvs=uvs,
        uv_indices=np.array(uv_idx),
        texture=checkerboard_texture(),
        name="unit_cube",
    )


def random_blob(target_triangles: int = 1000, seed: int = 0) -> TriangleMesh:
    """Lumpy star-shaped blob with exactly `target_triangles` triangles
    (rounded up to the nearest even count >= 4).

    Connectivity comes from the convex hull of near-uniform unit
    directions, which triangulates the sphere with 2n-4 faces; a seeded
    smooth radial displacement then makes the surface lumpy without
    touching the topology.
    """
    n = max(4, (target_triangles + 4 + 1) // 2)
    dirs = _fibonacci_dirs(n)
    hull = ConvexHull(dirs)  # all unit points are extreme: full vertex set survives

    rng = np.random.default_rng(seed)
    lobes = rng.normal(size=(3, 3))
    phases = rng.uniform(0.0, 2.0 * np.pi, 3)
    mod = sum(np.sin(2.0 * np.pi * (dirs @ lobes[i]) + phases[i]) for i in range(3)) / 3.0
    radii = 1.0 + 0.25 * mod
    return TriangleMesh(
        vertices=dirs * radii[:, None],
        triangles=hull.simplices,
        name="random_blob",
    )


def _fibonacci_dirs(n: int) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(1.0 - z * z)
    az = i * np.pi * (3.0 - np.sqrt(5.0))
    return np.column_stack([r * np.cos(az), r * np.sin(az), z])


def cylinder(radius: float = 0.05, height: float = 2.0, segments: int = 48) -> TriangleMesh:
    """Long thin capped cylinder along +Z, centered at the origin."""
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    bottom = np.column_stack([ring, np.full(segments, -height / 2.0)])
    top = np.column_stack([ring, np.full(segments, height / 2.0)])
    verts = np.vstack([bottom, top, [[0.0, 0.0, -height / 2.0]], [[0.0, 0.0, height / 2.0]]])
    cb, ct = 2 * segments, 2 * segments + 1

    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append((i, j, segments + j))          # side
        tris.append((i, segments + j, segments + i))
        tris.append((cb, j, i))                    # bottom cap
        tris.append((ct, segments + i, segments + j))  # top cap
    return TriangleMesh(vertices=verts, triangles=np.array(tris), name="cylinder")
