"""On-disk formats.

Three formats are supported:

* a Wavefront OBJ/MTL subset (``v``, ``vt``, ``f``, ``mtllib``, ``usemtl``;
  MTL ``newmtl``, ``Kd``, ``map_Kd``) for triangle meshes,
* binary PPM (P6, maxval 255) for textures and rendered frames,
* a line-oriented camera pose format::

      TWINPOSE 1 <n>
      <i> <px> <py> <pz> <qw> <qx> <qy> <qz> <roll_deg> <vfov_deg>
      ...

  with one record per line, space separated, ``.`` decimal point, and
  ``#`` comment lines ignored. Record order is load-bearing: it defines
  the pairing between ground-truth and estimated pose sets.

All read/write functions are pure; parsed objects are treated as immutable.
Parsers raise :class:`ParseError` on malformed input, never crash on
arbitrary bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .geometry import CameraPose, PoseSet

__all__ = [
    "ParseError",
    "RasterImage",
    "TriangleMesh",
    "Material",
    "PoseRecord",
    "PoseFile",
    "parse_obj",
    "write_obj",
    "parse_mtl",
    "load_obj",
    "save_obj",
    "read_ppm",
    "write_ppm",
    "read_pose_file",
    "write_pose_file",
]

POSE_FORMAT_MAGIC = "TWINPOSE"
POSE_FORMAT_VERSION = 1


class ParseError(ValueError):
    """Malformed input for one of the supported formats."""


# ---------------------------------------------------------------------------
# Rasters.


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB raster stored as a (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError("pixels must be a (h, w, 3) uint8 array")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image dimensions must be >= 1")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, rgb=(255, 255, 255)) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:] = np.asarray(rgb, dtype=np.uint8)
        return cls(px)


def read_ppm(data: bytes) -> RasterImage:
    """Parse a binary (P6) PPM with maxval 255.

    Header whitespace and ``#`` comments are accepted per the PPM spec;
    write_ppm always emits the canonical single-newline header, for which
    write_ppm(read_ppm(b)) == b holds byte for byte.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise ParseError("PPM input must be bytes")
    data = bytes(data)

    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl == -1 else nl + 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("unexpected end of PPM header")
        return data[start:pos]

    if token() != b"P6":
        raise ParseError("not a P6 PPM file")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise ParseError(f"bad PPM header field: {exc}") from None
    if width < 1 or height < 1:
        raise ParseError("PPM dimensions must be >= 1")
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval} (only 255)")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise ParseError(f"truncated pixel data: expected {need} bytes, got {len(raw)}")
    px = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(px.copy())


def write_ppm(image: RasterImage) -> bytes:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


# ---------------------------------------------------------------------------
# Meshes.


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle mesh with optional UVs and texture.

    vertices: (n, 3) float64, model units
    triangles: (m, 3) int32 vertex indices
    uvs / uv_indices: optional (k, 2) float64 in [0, 1]^2 and (m, 3) int32
        per-corner UV indices; both present or both None
    texture: optional RasterImage sampled through the UVs
    diffuse_color: optional (r, g, b) floats in [0, 1] used when untextured

    Triangles may be degenerate (zero area); consumers must tolerate them.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    uvs: Optional[np.ndarray] = None
    uv_indices: Optional[np.ndarray] = None
    texture: Optional[RasterImage] = None
    diffuse_color: Optional[tuple[float, float, float]] = None
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if (self.uvs is None) != (self.uv_indices is None):
            raise ValueError("uvs and uv_indices must be given together")
        if self.uvs is not None:
            uv = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
            uvi = np.asarray(self.uv_indices, dtype=np.int32).reshape(-1, 3)
            if len(uvi) != len(t):
                raise ValueError("uv_indices must have one triple per triangle")
            if uvi.size and (uvi.min() < 0 or uvi.max() >= len(uv)):
                raise ValueError("uv index out of range")
            object.__setattr__(self, "uvs", uv)
            object.__setattr__(self, "uv_indices", uvi)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)


@dataclass(frozen=True)
class Material:
    name: str
    kd: Optional[tuple[float, float, float]] = None
    map_kd: Optional[str] = None


def parse_mtl(data) -> dict[str, Material]:
    """Parse an MTL library. Only newmtl, Kd and map_Kd are consumed;
    ambient/specular fields are skipped."""
    text = data.decode("utf-8", errors="replace") if isinstance(data, (bytes, bytearray)) else data
    materials: dict[str, Material] = {}
    current: Optional[str] = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0]
        if key == "newmtl" and len(parts) >= 2:
            current = parts[1]
            materials[current] = Material(name=current)
        elif key == "Kd" and current is not None and len(parts) >= 4:
            try:
                kd = (float(parts[1]), float(parts[2]), float(parts[3]))
            except ValueError:
                continue
            materials[current] = replace(materials[current], kd=kd)
        elif key == "map_Kd" and current is not None and len(parts) >= 2:
            materials[current] = replace(materials[current], map_kd=parts[-1])
    return materials


def _parse_face_corner(token: str, n_v: int, n_vt: int, lineno: int):
    """OBJ face corner: v, v/vt, v/vt/vn or v//vn. Returns (vi, uvi | None)."""
    fields = token.split("/")
    if len(fields) > 3 or not fields[0]:
        raise ParseError(f"line {lineno}: bad face corner {token!r}")
    try:
        vi = int(fields[0])
    except ValueError:
        raise ParseError(f"line {lineno}: bad face index {fields[0]!r}") from None
    vi = vi - 1 if vi > 0 else n_v + vi
    if not 0 <= vi < n_v:
        raise ParseError(f"line {lineno}: vertex index out of range in {token!r}")
    uvi = None
    if len(fields) >= 2 and fields[1]:
        try:
            uvi = int(fields[1])
        except ValueError:
            raise ParseError(f"line {lineno}: bad uv index {fields[1]!r}") from None
        uvi = uvi - 1 if uvi > 0 else n_vt + uvi
        if not 0 <= uvi < n_vt:
            raise ParseError(f"line {lineno}: uv index out of range in {token!r}")
    return vi, uvi


def parse_obj(data, material_resolver: Optional[Callable[[str], Optional[bytes]]] = None,
              name: str = "") -> TriangleMesh:
    """Parse a Wavefront OBJ byte stream into a TriangleMesh.

    Supported directives: v, vt, f, mtllib, usemtl. Unknown directives
    (including vn) are skipped. Faces with more than three corners are
    fan-triangulated from the first corner; negative indices resolve
    against the counts at the point of use. UVs are kept only when every
    face corner carries one.

    material_resolver maps a filename referenced by ``mtllib`` or
    ``map_Kd`` to its raw bytes (or None when unavailable); textures must
    already be PPM.
    """
    text = data.decode("utf-8", errors="replace") if isinstance(data, (bytes, bytearray)) else data

    vertices: list[tuple[float, float, float]] = []
    uvs: list[tuple[float, float]] = []
    tri_v: list[tuple[int, int, int]] = []
    tri_uv: list[Optional[tuple[int, int, int]]] = []
    mtl_libs: list[str] = []
    used_materials: list[str] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0]
        if key == "v":
            if len(parts) < 4:
                raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric vertex coordinate") from None
        elif key == "vt":
            if len(parts) < 3:
                raise ParseError(f"line {lineno}: uv needs 2 coordinates")
            try:
                uvs.append((float(parts[1]), float(parts[2])))
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric uv coordinate") from None
        elif key == "f":
            corners = [_parse_face_corner(tok, len(vertices), len(uvs), lineno)
                       for tok in parts[1:]]
            if len(corners) < 3:
                raise ParseError(f"line {lineno}: face needs at least 3 corners")
            for k in range(1, len(corners) - 1):
                fan = (corners[0], corners[k], corners[k + 1])
                tri_v.append(tuple(c[0] for c in fan))
                tri_uv.append(tuple(c[1] for c in fan) if all(c[1] is not None for c in fan)
                              else None)
        elif key == "mtllib" and len(parts) >= 2:
            mtl_libs.append(parts[-1])
        elif key == "usemtl" and len(parts) >= 2:
            used_materials.append(parts[1])
        # anything else (vn, o, g, s, ...) is skipped

    if not vertices:
        raise ParseError("OBJ contains no vertices")

    uv_arr = uvi_arr = None
    if tri_uv and all(u is not None for u in tri_uv) and uvs:
        uv_arr = np.array(uvs, dtype=np.float64)
        uvi_arr = np.array(tri_uv, dtype=np.int32)

    texture = None
    diffuse = None
    if material_resolver is not None and used_materials:
        materials: dict[str, Material] = {}
        for lib in mtl_libs:
            raw = material_resolver(lib)
            if raw is not None:
                materials.update(parse_mtl(raw))
        for mat_name in used_materials:
            mat = materials.get(mat_name)
            if mat is None:
                continue
            if diffuse is None and mat.kd is not None:
                diffuse = mat.kd
            if texture is None and mat.map_kd is not None:
                tex_raw = material_resolver(mat.map_kd)
                if tex_raw is not None:
                    texture = read_ppm(tex_raw)
            if texture is not None and diffuse is not None:
                break

    return TriangleMesh(
        vertices=np.array(vertices, dtype=np.float64),
        triangles=np.array(tri_v, dtype=np.int32).reshape(-1, 3),
        uvs=uv_arr,
        uv_indices=uvi_arr,
        texture=texture,
        diffuse_color=diffuse,
        name=name,
    )


def write_obj(mesh: TriangleMesh, mtllib: Optional[str] = None,
              material: str = "default") -> str:
    """Serialize a mesh as OBJ text.

    Coordinates are written with shortest round-trip precision, so
    parse_obj(write_obj(m)) reproduces them exactly. Emits ``f a/b``
    corners when the mesh has UVs, plain ``f a`` otherwise.
    """
    lines = []
    if mesh.name:
        lines.append(f"# {mesh.name}")
    if mtllib:
        lines.append(f"mtllib {mtllib}")
        lines.append(f"usemtl {material}")
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    has_uv = mesh.uvs is not None
    if has_uv:
        for uv in mesh.uvs:
            lines.append(f"vt {float(uv[0])!r} {float(uv[1])!r}")
        for tri, uvt in zip(mesh.triangles, mesh.uv_indices):
            lines.append(
                "f " + " ".join(f"{int(v) + 1}/{int(u) + 1}" for v, u in zip(tri, uvt))
            )
    else:
        for tri in mesh.triangles:
            lines.append("f " + " ".join(str(int(v) + 1) for v in tri))
    return "\n".join(lines) + "\n"


def load_obj(path) -> TriangleMesh:
    """Load an OBJ from disk, resolving MTL and texture files relative to
    the OBJ's directory."""
    path = Path(path)
    base = path.parent

    def resolver(ref: str) -> Optional[bytes]:
        p = base / ref
        try:
            return p.read_bytes()
        except OSError:
            return None

    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return parse_obj(data, material_resolver=resolver, name=path.stem)


def save_obj(mesh: TriangleMesh, path) -> Path:
    """Write a mesh (plus MTL/PPM sidecars when it carries material data)
    next to `path`. Returns the OBJ path."""
    path = Path(path)
    if path.suffix != ".obj":
        path = path.with_suffix(".obj")
    stem = path.stem
    has_material = mesh.texture is not None or mesh.diffuse_color is not None
    if has_material:
        mtl_name = f"{stem}.mtl"
        obj_text = write_obj(mesh, mtllib=mtl_name, material=stem)
        kd = mesh.diffuse_color or (1.0, 1.0, 1.0)
        mtl_lines = [f"newmtl {stem}", f"Kd {kd[0]!r} {kd[1]!r} {kd[2]!r}"]
        if mesh.texture is not None:
            tex_name = f"{stem}.ppm"
            mtl_lines.append(f"map_Kd {tex_name}")
            (path.parent / tex_name).write_bytes(write_ppm(mesh.texture))
        (path.parent / mtl_name).write_text("\n".join(mtl_lines) + "\n")
    else:
        obj_text = write_obj(mesh)
    path.write_text(obj_text)
    return path


# ---------------------------------------------------------------------------
# Pose files.


@dataclass(frozen=True)
class PoseRecord:
    """One pose-file line: the frame index it belongs to, the pose, and the
    vertical field of view the frame was rendered with."""

    index: int
    pose: CameraPose
    vfov_deg: float


@dataclass(frozen=True)
class PoseFile:
    """Parsed pose file. Record order is preserved exactly; frame indices
    are unique and strictly increasing (0..n-1 for internally generated
    files; external reconstructions may register a subset of frames)."""

    records: tuple[PoseRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self):
        return len(self.records)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(r.index for r in self.records)

    def to_pose_set(self) -> PoseSet:
        return PoseSet(tuple(r.pose for r in self.records))

    @classmethod
    def from_pose_set(cls, poses: PoseSet, vfov_deg: float, indices=None) -> "PoseFile":
        if indices is None:
            indices = range(len(poses))
        return cls(
            tuple(
                PoseRecord(index=int(i), pose=p, vfov_deg=float(vfov_deg))
                for i, p in zip(indices, poses)
            )
        )


def read_pose_file(data) -> PoseFile:
    """Parse a TWINPOSE pose file.

    Errors on version mismatch, header/record count mismatch, quaternions
    off unit norm by more than 1e-6, or non-increasing frame indices.
    Quaternions are renormalized after the gate.
    """
    text = data.decode("utf-8", errors="replace") if isinstance(data, (bytes, bytearray)) else data
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty pose file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != POSE_FORMAT_MAGIC:
        raise ParseError(f"bad pose file header {lines[0]!r}")
    try:
        version, count = int(header[1]), int(header[2])
    except ValueError:
        raise ParseError(f"bad pose file header {lines[0]!r}") from None
    if version != POSE_FORMAT_VERSION:
        raise ParseError(f"unsupported pose format version {version}")
    if count < 1:
        raise ParseError("pose file must contain at least one record")
    body = lines[1:]
    if len(body) != count:
        raise ParseError(f"header promises {count} records, file has {len(body)}")

    records = []
    prev_index = -1
    for lineno, line in enumerate(body, start=1):
        parts = line.split()
        if len(parts) != 10:
            raise ParseError(f"record {lineno}: expected 10 fields, got {len(parts)}")
        try:
            idx = int(parts[0])
            nums = [float(x) for x in parts[1:]]
        except ValueError:
            raise ParseError(f"record {lineno}: non-numeric field") from None
        if idx < 0 or idx <= prev_index:
            raise ParseError(f"record {lineno}: frame indices must be strictly increasing")
        prev_index = idx
        q = np.array(nums[3:7], dtype=np.float64)
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > 1e-6:
            raise ParseError(f"record {lineno}: quaternion norm {norm} is not unit")
        records.append(
            PoseRecord(
                index=idx,
                pose=CameraPose(
                    position=np.array(nums[0:3], dtype=np.float64),
                    rotation=q / norm,
                    roll_deg=nums[7],
                ),
                vfov_deg=nums[8],
            )
        )
    return PoseFile(tuple(records))


def write_pose_file(poses: PoseFile) -> bytes:
    """Serialize a PoseFile. Floats use shortest round-trip precision, so a
    read/write cycle is numerically exact."""
    lines = [f"{POSE_FORMAT_MAGIC} {POSE_FORMAT_VERSION} {len(poses.records)}"]
    for rec in poses.records:
        p = rec.pose.position
        q = rec.pose.rotation
        fields = [str(rec.index)] + [
            repr(float(x)) for x in (*p, *q, rec.pose.roll_deg, rec.vfov_deg)
        ]
        lines.append(" ".join(fields))
    return ("\n".join(lines) + "\n").encode("ascii")
