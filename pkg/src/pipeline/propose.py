"""Proposal command: score a cloud with a checkpoint and emit top-k grasps."""

import logging
from dataclasses import dataclass
from pathlib import Path

from core.checkpoint import load_checkpoint
from core.cloud_io import load_cloud, write_ply
from core.config import EncoderConfig, GeometryConfig
from core.geometry import PointCloud, estimate_normals_curvature
from core.network import predict_scores
from core.propose import (
    GraspProposal,
    propose_grasps,
    read_orientation_table,
    write_proposals,
)
from core.render import Camera, read_sidecar
from core.training import network_input

logger = logging.getLogger(__name__)

PROPOSALS_NAME = "proposals.jsonl"
HEAT_PLY_NAME = "scores.ply"


@dataclass(frozen=True)
class ProposalOutput:
    proposals: list[GraspProposal]
    proposals_path: Path
    ply_path: Path


def with_surface_attributes(
    cloud: PointCloud, camera: Camera | None, geometry: GeometryConfig
) -> PointCloud:
    """Estimate normals and curvature when the cloud lacks them."""
    if cloud.normals is not None and cloud.curvature is not None:
        return cloud
    viewpoint = camera.position if camera is not None else [0.0, 0.0, 0.0]
    cloud, _ = estimate_normals_curvature(
        cloud, min(geometry.curvature_neighbors, max(len(cloud), 3)), viewpoint
    )
    return cloud


def propose_from_files(
    checkpoint: Path,
    cloud_path: Path,
    out_dir: Path,
    k: int = 10,
    table_path: Path | None = None,
    expected: EncoderConfig | None = None,
    nms_radius: float | None = None,
    geometry: GeometryConfig | None = None,
) -> ProposalOutput:
    """
    Score ``cloud_path`` and write proposals plus a heat-coloured PLY.

    The camera comes from the cloud's JSON sidecar when one exists.
    """
    net, _ = load_checkpoint(checkpoint, expected)
    sidecar = read_sidecar(cloud_path)
    camera = sidecar.camera.to_camera() if sidecar is not None else None
    cloud = with_surface_attributes(
        load_cloud(cloud_path), camera, geometry or GeometryConfig()
    )
    scores = predict_scores(network_input(cloud, net.cfg, camera), net)

    table = read_orientation_table(table_path) if table_path is not None else None
    proposals = propose_grasps(cloud, scores, k, table, nms_radius)
    if table is None:
        logger.info("no orientation table; using geometric orientations")

    proposals_path = out_dir / PROPOSALS_NAME
    ply_path = out_dir / HEAT_PLY_NAME
    write_proposals(proposals_path, proposals)
    write_ply(ply_path, cloud, heat=scores)
    return ProposalOutput(
        proposals=proposals, proposals_path=proposals_path, ply_path=ply_path
    )
