"""
Dataset manifest: one record per (instance, joint state, viewpoint).

Paths inside a manifest are relative to the directory holding it. A record's
files are named after its id, so a rerun can tell finished work apart from
work still to do.
"""

import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from core import __version__
from core.articulated import ArticulatedObject, JointState, load_object
from core.cloud_io import load_cloud
from core.config import ToolkitConfig
from core.errors import DatasetError
from core.geometry import PointCloud
from core.heatmap import HeatmapLabels, load_heatmap
from core.render import Camera, CameraRecord, CorrespondenceSet, load_correspondences
from core.sampler import Grasp, read_grasps

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class CorrespondenceRef(BaseModel):
    """Matched points between this record's view (A) and a partner view (B)."""

    model_config = ConfigDict(extra="forbid")

    partner_id: str
    path: str
    count: int = Field(ge=0)


class ManifestRecord(BaseModel):
    """
    One rendered view of one joint state of one instance.

    Attributes:
        id: ``<instance>/s<state>/v<view>``, unique within the manifest.
        instance_id: Recipe id the object came from.
        kind: Procedural kind, or None for hand-authored objects.
        split: Train or held-out test instance.
        object_path: Object document of the instance.
        joint: Target joint the grasps were labeled against.
        state_id: 0 for the closed state, then the open states in order.
        joint_state: Joint values of the state.
        view_id: Viewpoint index within the state.
        camera: Camera the cloud was rendered from.
        cloud_path: AOPC point cloud in world coordinates.
        grasps_path: Labeled grasps as JSON lines.
        heatmap_path: AOHM heatmap, set by densification.
        correspondences: Links to partner views of the same state.
        status: ``ok`` when every file was written, else ``failed``.
        error: Failure description for failed records.
        candidates: Number of labeled candidates.
        successes: Number of successful candidates.
    """

    model_config = ConfigDict(extra="forbid")

    id: str
    instance_id: str
    kind: str | None = None
    split: Literal["train", "test"] = "train"
    object_path: str
    joint: str
    state_id: int = Field(ge=0)
    joint_state: dict[str, float]
    view_id: int = Field(ge=0)
    camera: CameraRecord
    cloud_path: str | None = None
    grasps_path: str | None = None
    heatmap_path: str | None = None
    correspondences: list[CorrespondenceRef] = []
    status: Literal["ok", "failed"] = "ok"
    error: str | None = None
    candidates: int = 0
    successes: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def closed(self) -> bool:
        return self.state_id == 0


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    toolkit_version: str = __version__
    config: ToolkitConfig
    records: list[ManifestRecord] = []

    def record(self, record_id: str) -> ManifestRecord:
        for record in self.records:
            if record.id == record_id:
                return record
        raise DatasetError(f"no record {record_id!r} in manifest")

    def ok_records(self, split: str | None = None) -> list[ManifestRecord]:
        return [
            r for r in self.records if r.ok and (split is None or r.split == split)
        ]


def record_id(instance_id: str, state_id: int, view_id: int) -> str:
    return f"{instance_id}/s{state_id}/v{view_id}"


def record_stem(record_id: str) -> str:
    return record_id.replace("/", "_")


def _referenced_paths(record: ManifestRecord) -> list[str]:
    paths = [record.object_path]
    paths += [p for p in (record.cloud_path, record.grasps_path) if p is not None]
    if record.heatmap_path is not None:
        paths.append(record.heatmap_path)
    paths += [ref.path for ref in record.correspondences]
    return paths


def validate_manifest(manifest: DatasetManifest, base: Path) -> None:
    """Raise DatasetError on duplicate ids or missing files of ok records."""
    seen: set[str] = set()
    for record in manifest.records:
        if record.id in seen:
            raise DatasetError(f"duplicate record id {record.id!r}")
        seen.add(record.id)
        if not record.ok:
            continue
        for relative in _referenced_paths(record):
            if not (base / relative).is_file():
                raise DatasetError(
                    f"record {record.id!r} references missing {relative}"
                )


def serialize_manifest(manifest: DatasetManifest) -> str:
    return manifest.model_dump_json(indent=2) + "\n"


def save_manifest(directory: Path, manifest: DatasetManifest) -> Path:
    """Write the manifest unless the file already holds the same text."""
    path = directory / MANIFEST_NAME
    text = serialize_manifest(manifest)
    if path.is_file() and path.read_text(encoding="utf-8") == text:
        return path
    directory.mkdir(parents=True, exist_ok=True)
    _ = path.write_text(text, encoding="utf-8")
    return path


def manifest_path(location: Path) -> Path:
    return location / MANIFEST_NAME if location.is_dir() else location


def load_manifest(location: Path, check_files: bool = True) -> DatasetManifest:
    path = manifest_path(location)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    manifest = DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))
    if check_files:
        validate_manifest(manifest, path.parent)
    return manifest


class RecordFiles:
    """Lazy access to the files of one record."""

    def __init__(self, base: Path, record: ManifestRecord):
        self.base = base
        self.record = record

    def _path(self, relative: str | None, what: str) -> Path:
        if relative is None:
            raise DatasetError(f"record {self.record.id!r} has no {what}")
        return self.base / relative

    def object(self) -> ArticulatedObject:
        return load_object(self.base / self.record.object_path)

    def state(self) -> JointState:
        return JointState(self.record.joint_state)

    def camera(self) -> Camera:
        return self.record.camera.to_camera()

    def cloud(self) -> PointCloud:
        return load_cloud(self._path(self.record.cloud_path, "cloud"))

    def grasps(self) -> list[Grasp]:
        return read_grasps(self._path(self.record.grasps_path, "grasps"))

    def heatmap(self) -> HeatmapLabels:
        return load_heatmap(self._path(self.record.heatmap_path, "heatmap"))

    def correspondences(self) -> list[tuple[str, CorrespondenceSet]]:
        state_id = self.record.state_id
        return [
            (ref.partner_id, load_correspondences(self.base / ref.path, state_id))
            for ref in self.record.correspondences
        ]
