"""Turn every record's labeled grasps into a dense heatmap file."""

import logging
from pathlib import Path

import numpy as np
from tqdm import tqdm

from core.config import HeatmapConfig
from core.heatmap import (
    HeatmapLabels,
    SparseLabels,
    densify,
    save_heatmap,
)
from pipeline.manifest import (
    DatasetManifest,
    ManifestRecord,
    RecordFiles,
    load_manifest,
    manifest_path,
    record_stem,
    save_manifest,
)

logger = logging.getLogger(__name__)


def densify_record(files: RecordFiles, cfg: HeatmapConfig) -> HeatmapLabels:
    """
    Heatmap of one record: successes are positives, failures negatives.

    A record without labels gets an all-zero heatmap.
    """
    cloud = files.cloud()
    labels = SparseLabels.from_grasps(files.grasps())
    if len(labels) == 0:
        logger.warning("record %s has no labels; writing zeros", files.record.id)
        return HeatmapLabels(values=np.zeros(len(cloud)))
    return densify(cloud, labels, cfg)


def densify_manifest(location: Path) -> DatasetManifest:
    path = manifest_path(location)
    base = path.parent
    manifest = load_manifest(path)
    cfg = manifest.config.heatmap

    records: list[ManifestRecord] = []
    for record in tqdm(manifest.records, desc="densify", disable=None):
        if not record.ok:
            records.append(record)
            continue
        heatmap = densify_record(RecordFiles(base, record), cfg)
        heatmap_path = f"heatmaps/{record_stem(record.id)}.aohm"
        save_heatmap(base / heatmap_path, heatmap)
        records.append(record.model_copy(update={"heatmap_path": heatmap_path}))

    updated = manifest.model_copy(update={"records": records})
    save_manifest(base, updated)
    logger.info("densified %d record(s)", len(updated.ok_records()))
    return updated
