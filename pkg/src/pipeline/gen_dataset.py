"""
Dataset generation: render, sample and label every (instance, state, view).

Work is split into one job per joint state. Jobs are independent and seeded
from the config alone, so the output does not depend on the worker count.
Only the parent process writes the manifest.
"""

import asyncio
import csv
import io
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict
from tqdm import tqdm
from tqdm.asyncio import tqdm_asyncio

from core.articulated import (
    ArticulatedObject,
    JointState,
    load_object,
    posed_joint,
    sample_states,
    serialize_object,
)
from core.cloud_io import save_cloud
from core.config import InstanceRecipe, ToolkitConfig
from core.dependencies import worker_count
from core.episode import run_episode
from core.errors import AOGraspError, DatasetError
from core.geometry import PointCloud
from core.procedural import coerce_params, generate_procedural, random_params
from core.render import (
    CameraRecord,
    ViewSidecar,
    extract_correspondences,
    object_center,
    render_partial_cloud,
    sample_viewpoints,
    save_correspondences,
    write_sidecar,
)
from core.sampler import Grasp, compose_candidates, read_grasps, write_grasps
from core.seeding import derive_seed
from pipeline.manifest import (
    CorrespondenceRef,
    DatasetManifest,
    ManifestRecord,
    load_manifest,
    manifest_path,
    record_id,
    record_stem,
    save_manifest,
)

logger = logging.getLogger(__name__)

FAILURE_SUMMARY_NAME = "failure_reasons.csv"

# Sub-streams of an instance seed.
_STATES_STREAM = 1
_VIEWS_STREAM = 2
_JOB_STREAM = 3
_PARAMS_STREAM = 4


class StateJob(BaseModel):
    """Everything a worker needs to produce the records of one joint state."""

    model_config = ConfigDict(extra="forbid")

    out_dir: str
    instance: InstanceRecipe
    object_path: str
    joint: str
    state_id: int
    joint_state: dict[str, float]
    cameras: list[CameraRecord]
    seed: int
    config: ToolkitConfig

    @property
    def record_ids(self) -> list[str]:
        return [
            record_id(self.instance.id, self.state_id, view)
            for view in range(len(self.cameras))
        ]


def instance_seed(config: ToolkitConfig, index: int, recipe: InstanceRecipe) -> int:
    return derive_seed(config.dataset.seed, recipe.seed, index)


def build_instance(
    recipe: InstanceRecipe, seed: int, config_dir: Path
) -> ArticulatedObject:
    """The object of one recipe: procedural, or loaded from its document."""
    if recipe.object_path is not None:
        return load_object(config_dir / recipe.object_path)
    assert recipe.kind is not None
    drawn = random_params(recipe.kind, derive_seed(seed, _PARAMS_STREAM))
    params = coerce_params({**drawn.model_dump(), **recipe.params})
    obj = generate_procedural(recipe.kind, params, rng_seed=seed)
    return ArticulatedObject(name=recipe.id, links=obj.links, joints=obj.joints)


def label_candidates(
    obj: ArticulatedObject,
    state: JointState,
    cloud: PointCloud,
    joint_name: str,
    config: ToolkitConfig,
    rng_seed: int,
) -> list[Grasp]:
    """Sample candidates on ``cloud`` and label each with one episode."""
    assert cloud.link_id is not None
    actionable = np.isin(cloud.link_id, obj.actionable_link_ids())
    joint = posed_joint(obj, state, joint_name)
    candidates = compose_candidates(
        cloud,
        joint,
        config.dataset.candidates_per_cloud,
        config.sampling,
        rng_seed,
        actionable,
    )
    labeled = []
    for grasp in candidates:
        result = run_episode(
            obj, state, grasp, config.gripper, config.episode, joint_name
        )
        labeled.append(
            grasp.labeled(result.label, result.failure_reason, result.displacement)
        )
    return labeled


def run_state_job(job: StateJob) -> list[ManifestRecord]:
    """Render, label and write every view of one state; failures become records."""
    out = Path(job.out_dir)
    config = job.config
    obj = load_object(out / job.object_path)
    state = JointState(job.joint_state)
    records: list[ManifestRecord] = []
    clouds: dict[int, PointCloud] = {}

    for view_id, camera_record in enumerate(job.cameras):
        rid = record_id(job.instance.id, job.state_id, view_id)
        stem = record_stem(rid)
        record = ManifestRecord(
            id=rid,
            instance_id=job.instance.id,
            kind=job.instance.kind,
            split=job.instance.split,
            object_path=job.object_path,
            joint=job.joint,
            state_id=job.state_id,
            joint_state=job.joint_state,
            view_id=view_id,
            camera=camera_record,
        )
        try:
            cloud = render_partial_cloud(
                obj,
                state,
                camera_record.to_camera(),
                max_points=config.render.max_points,
                k_nbrs=config.geometry.curvature_neighbors,
                depth_noise_std=config.render.depth_noise_std,
                rng_seed=derive_seed(job.seed, view_id, 0),
            )
            grasps = label_candidates(
                obj, state, cloud, job.joint, config, derive_seed(job.seed, view_id, 1)
            )
            cloud_path = f"clouds/{stem}.aopc"
            grasps_path = f"grasps/{stem}.jsonl"
            save_cloud(out / cloud_path, cloud)
            write_sidecar(
                out / cloud_path,
                ViewSidecar(
                    camera=camera_record,
                    joint_state=job.joint_state,
                    state_id=job.state_id,
                    view_id=view_id,
                ),
            )
            write_grasps(out / grasps_path, grasps)
        except AOGraspError as exc:
            logger.warning("record %s failed: %s", rid, exc)
            records.append(
                record.model_copy(
                    update={"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
                )
            )
            continue
        clouds[view_id] = cloud
        records.append(
            record.model_copy(
                update={
                    "cloud_path": cloud_path,
                    "grasps_path": grasps_path,
                    "candidates": len(grasps),
                    "successes": sum(g.label == "success" for g in grasps),
                }
            )
        )

    return _link_partners(job, records, clouds, out)


def _link_partners(
    job: StateJob,
    records: list[ManifestRecord],
    clouds: dict[int, PointCloud],
    out: Path,
) -> list[ManifestRecord]:
    """Pair each rendered view with the next rendered view of the same state."""
    views = sorted(clouds)
    if len(views) < 2:
        return records
    partners = list(zip(views, views[1:], strict=False))
    if len(views) > 2:
        partners.append((views[-1], views[0]))
    linked = {record.view_id: record for record in records}
    epsilon = job.config.render.correspondence_epsilon
    for view_a, view_b in partners:
        record_a, record_b = linked[view_a], linked[view_b]
        pairs = extract_correspondences(
            clouds[view_a], clouds[view_b], epsilon, job.state_id
        )
        path = f"correspondences/{record_stem(record_a.id)}__v{view_b}.aocr"
        save_correspondences(out / path, pairs)
        ref = CorrespondenceRef(partner_id=record_b.id, path=path, count=len(pairs))
        linked[view_a] = record_a.model_copy(
            update={"correspondences": [*record_a.correspondences, ref]}
        )
    return [linked[record.view_id] for record in records]


def _write_if_changed(path: Path, text: str) -> None:
    if path.is_file() and path.read_text(encoding="utf-8") == text:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    _ = path.write_text(text, encoding="utf-8")


def plan_jobs(
    config: ToolkitConfig, out_dir: Path, config_dir: Path
) -> list[StateJob]:
    """Build every instance, write its object document and list its state jobs."""
    ids = [recipe.id for recipe in config.dataset.instances]
    if len(set(ids)) != len(ids):
        raise DatasetError("instance ids must be unique")
    jobs = []
    for index, recipe in enumerate(config.dataset.instances):
        seed = instance_seed(config, index, recipe)
        obj = build_instance(recipe, seed, config_dir)
        object_path = f"objects/{recipe.id}.json"
        _write_if_changed(out_dir / object_path, serialize_object(obj))
        joint = obj.target_joint(recipe.joint).name
        states = sample_states(
            obj, config.dataset.open_states, derive_seed(seed, _STATES_STREAM)
        )
        for state_id, state in enumerate(states):
            cameras = sample_viewpoints(
                config.render.viewpoints,
                config.dataset.views_per_state,
                derive_seed(seed, _VIEWS_STREAM, state_id),
                target=object_center(obj, state),
                render=config.render,
            )
            jobs.append(
                StateJob(
                    out_dir=str(out_dir),
                    instance=recipe,
                    object_path=object_path,
                    joint=joint,
                    state_id=state_id,
                    joint_state=state.as_dict(),
                    cameras=[CameraRecord.from_camera(c) for c in cameras],
                    seed=derive_seed(seed, _JOB_STREAM, state_id),
                    config=config,
                )
            )
    return jobs


async def run_jobs(jobs: list[StateJob], workers: int) -> list[list[ManifestRecord]]:
    """Run state jobs, in parallel processes when ``workers`` > 1, in job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [run_state_job(job) for job in tqdm(jobs, desc="states", disable=None)]
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, run_state_job, job) for job in jobs]
        return await tqdm_asyncio.gather(*futures, desc="states", disable=None)


def _completed(
    manifest: DatasetManifest | None, out_dir: Path
) -> dict[str, ManifestRecord]:
    if manifest is None:
        return {}
    done = {}
    for record in manifest.records:
        files = [record.cloud_path, record.grasps_path]
        files += [ref.path for ref in record.correspondences]
        if record.ok and all(f is not None and (out_dir / f).is_file() for f in files):
            done[record.id] = record
    return done


def write_failure_summary(out_dir: Path, manifest: DatasetManifest) -> Path:
    """Counts of episode outcomes per instance, including successes."""
    counts: Counter[tuple[str, str]] = Counter()
    for record in manifest.ok_records():
        assert record.grasps_path is not None
        for grasp in read_grasps(out_dir / record.grasps_path):
            reason = grasp.failure_reason or grasp.label
            counts[(record.instance_id, reason)] += 1
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["instance_id", "outcome", "count"])
    for (instance, reason), count in sorted(counts.items()):
        writer.writerow([instance, reason, count])
    path = out_dir / FAILURE_SUMMARY_NAME
    _write_if_changed(path, buffer.getvalue())
    return path


async def generate_dataset(
    config: ToolkitConfig,
    out_dir: Path,
    config_dir: Path,
    workers: int | None = None,
) -> DatasetManifest:
    """
    Generate or resume the dataset under ``out_dir``.

    Records already completed in an existing manifest are kept and their
    states are not recomputed. Raises DatasetError when every record fails.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    existing = None
    if manifest_path(out_dir).is_file():
        existing = load_manifest(out_dir, check_files=False)
        if existing.config != config:
            logger.warning("config differs from the existing manifest; regenerating")
            existing = None
    completed = _completed(existing, out_dir)

    jobs = plan_jobs(config, out_dir, config_dir)
    pending = [job for job in jobs if not all(i in completed for i in job.record_ids)]
    logger.info("%d state job(s), %d pending", len(jobs), len(pending))

    results = await run_jobs(pending, workers or worker_count(config))
    fresh = {record.id: record for batch in results for record in batch}
    records = []
    for job in jobs:
        for rid in job.record_ids:
            records.append(completed.get(rid) or fresh[rid])

    manifest = DatasetManifest(config=config, records=records)
    save_manifest(out_dir, manifest)
    if manifest.records and not manifest.ok_records():
        raise DatasetError("every dataset record failed")
    write_failure_summary(out_dir, manifest)
    failed = len(manifest.records) - len(manifest.ok_records())
    logger.info("%d record(s), %d failed", len(manifest.records), failed)
    return manifest
