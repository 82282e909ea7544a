"""
Example demonstrating how sparse grasp labels become a dense heatmap.

This example shows how to:
1. Label grasp candidates on a rendered drawer
2. Densify the successful and failed contact points into per-point scores
3. Export the heatmap as a heat-coloured PLY for a point cloud viewer
"""

import numpy as np

from core.articulated import JointState
from core.cloud_io import write_ply
from core.config import DatasetConfig, ToolkitConfig
from core.heatmap import SparseLabels, densify, densify_bruteforce
from core.paths import root
from core.procedural import generate_procedural
from core.render import object_center, render_partial_cloud, sample_viewpoints
from pipeline.gen_dataset import label_candidates


def main():
    """Densify the labels of one drawer view and write a PLY."""
    config = ToolkitConfig(dataset=DatasetConfig(candidates_per_cloud=120))
    drawer = generate_procedural("drawer", None, 3)
    state = JointState.closed(drawer)
    camera = sample_viewpoints(
        config.render.viewpoints, 1, 0, object_center(drawer, state), config.render
    )[0]
    cloud = render_partial_cloud(drawer, state, camera, config.render.max_points)
    grasps = label_candidates(
        drawer, state, cloud, drawer.target_joint().name, config, 5
    )

    labels = SparseLabels.from_grasps(grasps)
    heatmap = densify(cloud, labels, config.heatmap)
    reference = densify_bruteforce(cloud, labels, config.heatmap)

    print("Heatmap Densification Example")
    print("=" * 80)
    print(f"{len(labels.positives)} positive and "
          f"{len(labels) - len(labels.positives)} negative labels")
    print(f"Points with heat > 0.5: {int((heatmap.values > 0.5).sum())}/{len(cloud)}")
    print(f"Max deviation from brute force: "
          f"{np.abs(heatmap.values - reference.values).max():.2e}")

    out_dir = root() / "runs" / "samples"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ply(out_dir / "drawer_heatmap.ply", cloud, heat=heatmap.values)
    print(f"Wrote {out_dir / 'drawer_heatmap.ply'}")


if __name__ == "__main__":
    main()
