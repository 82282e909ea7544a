"""
Example demonstrating grasp proposals on a hand-authored object.

This example shows how to:
1. Load an articulated object from its JSON document
2. Score a rendered view with an untrained network and with the ground-truth
   heatmap
3. Propose the top-10 grasps with geometric orientations and execute them
"""

from core.articulated import load_object, sample_states
from core.config import DatasetConfig, ToolkitConfig
from core.episode import run_episode
from core.heatmap import SparseLabels, densify
from core.network import init_network, predict_scores
from core.paths import data_dir
from core.propose import propose_grasps
from core.render import object_center, render_partial_cloud, sample_viewpoints
from core.training import network_input
from pipeline.gen_dataset import label_candidates


def main():
    """Compare untrained and ground-truth scores on the latch cabinet."""
    config = ToolkitConfig(dataset=DatasetConfig(candidates_per_cloud=120))
    cabinet = load_object(data_dir() / "objects" / "latch_cabinet.json")
    joint_name = cabinet.target_joint().name
    state = sample_states(cabinet, 1, 3)[1]
    camera = sample_viewpoints(
        config.render.viewpoints, 1, 2, object_center(cabinet, state), config.render
    )[0]
    cloud = render_partial_cloud(cabinet, state, camera, config.render.max_points)

    net = init_network(config.encoder, 0)
    untrained = predict_scores(network_input(cloud, config.encoder, camera), net)
    grasps = label_candidates(cabinet, state, cloud, joint_name, config, 9)
    oracle = densify(cloud, SparseLabels.from_grasps(grasps), config.heatmap).values

    print("Proposal Example")
    print("=" * 80)
    for name, scores in (("untrained", untrained), ("ground truth", oracle)):
        proposals = propose_grasps(cloud, scores, config.evaluation.top_k)
        successes = sum(
            run_episode(
                cabinet, state, p.grasp, config.gripper, config.episode, joint_name
            ).success
            for p in proposals
        )
        print(f"{name}: {successes}/{len(proposals)} successful top-k grasps "
              f"(orientation source: {proposals[0].source})")
        print("-" * 80)


if __name__ == "__main__":
    main()
