"""
Binary and PLY serialisation of point clouds.

AOPC layout (little-endian): magic ``AOPC``, version u16, point count u32,
attribute bitmask u16, then float32 arrays in bitmask order: positions,
normals, curvature, link id (u32), surface id (u32 triangle + 2 x f32
barycentric), scores.
"""

import struct
from pathlib import Path

import numpy as np

from core.errors import DatasetError
from core.geometry import PointCloud

MAGIC = b"AOPC"
VERSION = 1
_HEADER = struct.Struct("<4sHIH")

HAS_NORMALS = 1 << 0
HAS_CURVATURE = 1 << 1
HAS_LINK_ID = 1 << 2
HAS_SURFACE_ID = 1 << 3
HAS_SCORES = 1 << 4
CAMERA_FRAME = 1 << 15


def encode_cloud(cloud: PointCloud) -> bytes:
    mask = 0
    chunks: list[bytes] = [cloud.points.astype("<f4").tobytes()]
    if cloud.normals is not None:
        mask |= HAS_NORMALS
        chunks.append(cloud.normals.astype("<f4").tobytes())
    if cloud.curvature is not None:
        mask |= HAS_CURVATURE
        chunks.append(cloud.curvature.astype("<f4").tobytes())
    if cloud.link_id is not None:
        mask |= HAS_LINK_ID
        chunks.append(cloud.link_id.astype("<u4").tobytes())
    if cloud.triangle_id is not None and cloud.barycentric is not None:
        mask |= HAS_SURFACE_ID
        chunks.append(cloud.triangle_id.astype("<u4").tobytes())
        chunks.append(cloud.barycentric.astype("<f4").tobytes())
    if cloud.scores is not None:
        mask |= HAS_SCORES
        chunks.append(cloud.scores.astype("<f4").tobytes())
    if cloud.frame == "camera":
        mask |= CAMERA_FRAME
    header = _HEADER.pack(MAGIC, VERSION, len(cloud), mask)
    return header + b"".join(chunks)


def decode_cloud(data: bytes) -> PointCloud:
    if len(data) < _HEADER.size:
        raise DatasetError("truncated AOPC header")
    magic, version, count, mask = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DatasetError(f"bad AOPC magic {magic!r}")
    if version != VERSION:
        raise DatasetError(f"unsupported AOPC version {version}")

    offset = _HEADER.size

    def take(dtype: str, width: int) -> np.ndarray:
        nonlocal offset
        size = np.dtype(dtype).itemsize * count * width
        if offset + size > len(data):
            raise DatasetError("truncated AOPC payload")
        array = np.frombuffer(data, dtype=dtype, count=count * width, offset=offset)
        offset += size
        return array.reshape(count, width) if width > 1 else array

    points = take("<f4", 3).astype(np.float64)
    normals = curvature = link_id = triangle_id = barycentric = scores = None
    if mask & HAS_NORMALS:
        normals = take("<f4", 3).astype(np.float64)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    if mask & HAS_CURVATURE:
        curvature = np.clip(take("<f4", 1).astype(np.float64), 0.0, 1.0)
    if mask & HAS_LINK_ID:
        link_id = take("<u4", 1).astype(np.int64)
    if mask & HAS_SURFACE_ID:
        triangle_id = take("<u4", 1).astype(np.int64)
        barycentric = take("<f4", 2).astype(np.float64)
    if mask & HAS_SCORES:
        scores = take("<f4", 1).astype(np.float64)

    return PointCloud(
        points=points,
        normals=normals,
        curvature=curvature,
        link_id=link_id,
        triangle_id=triangle_id,
        barycentric=barycentric,
        scores=scores,
        frame="camera" if mask & CAMERA_FRAME else "world",
    )


def save_cloud(path: Path, cloud: PointCloud) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_bytes(encode_cloud(cloud))


def load_cloud(path: Path) -> PointCloud:
    return decode_cloud(path.read_bytes())


def heat_colors(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB bytes on a blue-to-red ramp."""
    heat = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    red = 255.0 * heat
    green = 255.0 * (1.0 - np.abs(2.0 * heat - 1.0))
    blue = 255.0 * (1.0 - heat)
    return np.round(np.stack([red, green, blue], axis=1)).astype(np.uint8)


def write_ply(path: Path, cloud: PointCloud, heat: np.ndarray | None = None) -> None:
    """Write an ASCII PLY; ``heat`` (one value per point) becomes vertex colour."""
    properties = ["property float x", "property float y", "property float z"]
    columns = [cloud.points]
    if cloud.normals is not None:
        properties += ["property float nx", "property float ny", "property float nz"]
        columns.append(cloud.normals)
    colors = None
    if heat is not None:
        properties += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
        colors = heat_colors(heat)

    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        *properties,
        "end_header",
    ]
    floats = np.hstack(columns) if columns else np.zeros((len(cloud), 0))
    for i in range(len(cloud)):
        row = " ".join(f"{v:.6f}" for v in floats[i])
        if colors is not None:
            row += " " + " ".join(str(int(c)) for c in colors[i])
        lines.append(row)

    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_text("\n".join(lines) + "\n", encoding="utf-8")
