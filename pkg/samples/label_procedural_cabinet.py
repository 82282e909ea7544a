"""
Example demonstrating how a labeled grasp dataset record is produced.

This example shows how to:
1. Generate a procedural cabinet and sample a closed and an open state
2. Render a partial point cloud from a random viewpoint
3. Sample grasp candidates and label each one with a simulated episode
"""

from collections import Counter

from core.articulated import sample_states
from core.config import DatasetConfig, ToolkitConfig
from core.procedural import generate_procedural
from core.render import object_center, render_partial_cloud, sample_viewpoints
from pipeline.gen_dataset import label_candidates


def main():
    """Label candidates on a closed and an open cabinet door."""
    config = ToolkitConfig(dataset=DatasetConfig(candidates_per_cloud=80))
    cabinet = generate_procedural("cabinet_door", {"hinge_side": "right"}, 1)
    joint_name = cabinet.target_joint().name

    print("Labeling Example")
    print("=" * 80)
    print(f"Object: {cabinet.name}, joint: {joint_name}\n")

    for state_id, state in enumerate(sample_states(cabinet, 1, 7)):
        camera = sample_viewpoints(
            config.render.viewpoints,
            1,
            state_id,
            target=object_center(cabinet, state),
            render=config.render,
        )[0]
        cloud = render_partial_cloud(
            cabinet, state, camera, max_points=config.render.max_points
        )
        grasps = label_candidates(cabinet, state, cloud, joint_name, config, 11)
        outcomes = Counter(g.failure_reason or g.label for g in grasps)

        yaw, pitch, distance = camera.angles()
        print(f"State {state_id}: {state.as_dict()}")
        print(f"  camera yaw {yaw:.1f} deg, pitch {pitch:.1f} deg, {distance:.2f} m")
        print(f"  {len(cloud)} points, {len(grasps)} candidates")
        for outcome, count in sorted(outcomes.items()):
            print(f"    {outcome}: {count}")
        print("-" * 80)


if __name__ == "__main__":
    main()
