import struct
from pathlib import Path

import numpy as np
import pytest

from core.cloud_io import (
    decode_cloud,
    encode_cloud,
    heat_colors,
    load_cloud,
    save_cloud,
    write_ply,
)
from core.errors import DatasetError
from core.geometry import PointCloud


@pytest.fixture
def full_cloud() -> PointCloud:
    return PointCloud(
        points=[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]],
        normals=[[0, 0, 1.0], [1.0, 0, 0]],
        curvature=[0.0, 0.25],
        link_id=[2, 3],
        triangle_id=[7, 11],
        barycentric=[[0.25, 0.5], [0.0, 1.0]],
        scores=[0.5, 1.0],
        frame="camera",
    )


def test_saved_cloud_loads_with_every_attribute(tmp_path: Path, full_cloud):
    # Arrange
    path = tmp_path / "clouds" / "view.aopc"

    # Act
    save_cloud(path, full_cloud)
    loaded = load_cloud(path)

    # Assert
    assert loaded.frame == "camera"
    np.testing.assert_allclose(loaded.points, full_cloud.points, atol=1e-6)
    assert loaded.link_id is not None and loaded.link_id.tolist() == [2, 3]
    assert loaded.triangle_id is not None and loaded.triangle_id.tolist() == [7, 11]
    assert loaded.scores is not None and loaded.scores.tolist() == [0.5, 1.0]


def test_header_declares_present_attributes(full_cloud):
    magic, version, count, mask = struct.unpack_from("<4sHIH", encode_cloud(full_cloud))

    assert (magic, version, count) == (b"AOPC", 1, 2)
    assert mask & 0b11111 == 0b11111


def test_bare_cloud_has_no_attributes():
    loaded = decode_cloud(encode_cloud(PointCloud(points=[[1, 2, 3]])))

    assert loaded.normals is None and loaded.curvature is None
    assert loaded.frame == "world"


@pytest.mark.parametrize(
    "data",
    [
        pytest.param(b"AOP", id="short-header"),
        pytest.param(b"XXXX" + b"\x00" * 8, id="bad-magic"),
        pytest.param(struct.pack("<4sHIH", b"AOPC", 9, 0, 0), id="bad-version"),
        pytest.param(struct.pack("<4sHIH", b"AOPC", 1, 4, 0), id="truncated"),
    ],
)
def test_malformed_cloud_is_rejected(data: bytes):
    with pytest.raises(DatasetError):
        decode_cloud(data)


def test_heat_colors_ramp_from_blue_to_red():
    colors = heat_colors(np.array([0.0, 0.5, 1.0, 2.0]))

    assert colors.tolist() == [[0, 0, 255], [128, 255, 128], [255, 0, 0], [255, 0, 0]]


def test_write_ply_adds_colour_columns(tmp_path: Path, full_cloud):
    # Arrange
    path = tmp_path / "heat.ply"

    # Act
    write_ply(path, full_cloud, heat=np.array([0.0, 1.0]))

    # Assert
    lines = path.read_text().splitlines()
    assert lines[2] == "element vertex 2"
    assert "property uchar red" in lines
    assert lines[-1].endswith("255 0 0")
    assert len(lines[-1].split()) == 9
