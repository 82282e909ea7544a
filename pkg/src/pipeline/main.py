"""
Command-line driver: ``aograsp <command> ...``.

Every command exits 0 on success. On a toolkit, validation or file error it
writes ``{"error": <class>, "message": <text>}`` to stderr and exits 1.
"""

import argparse
import asyncio
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

from pydantic import ValidationError

from core.checkpoint import load_checkpoint
from core.config import ToolkitConfig, load_config
from core.dependencies import default_config, settings
from core.errors import AOGraspError
from core.log import configure_logging
from eval.eval import (
    ModelScorer,
    OracleScorer,
    RandomScorer,
    ScoreFunction,
    run_evaluation,
)
from pipeline.densify import densify_manifest
from pipeline.gen_dataset import generate_dataset
from pipeline.manifest import load_manifest
from pipeline.propose import propose_from_files
from pipeline.train import train_from_manifest
from report_generation.main import manifest_stats, render_manifest_stats

logger = logging.getLogger(__name__)


def cmd_gen_dataset(args: argparse.Namespace) -> None:
    config = load_config(args.config)
    manifest = asyncio.run(
        generate_dataset(config, args.out, args.config.parent, args.workers)
    )
    ok = len(manifest.ok_records())
    print(f"{ok}/{len(manifest.records)} record(s) ok in {args.out}")


def cmd_densify(args: argparse.Namespace) -> None:
    manifest = densify_manifest(args.manifest)
    densified = sum(r.heatmap_path is not None for r in manifest.records)
    print(f"densified {densified} record(s)")


def cmd_train(args: argparse.Namespace) -> None:
    config = load_config(args.config) if args.config is not None else None
    args.out.mkdir(parents=True, exist_ok=True)
    outcome = train_from_manifest(
        args.manifest,
        args.out,
        config=config,
        no_pretrain=args.no_pretrain,
        sparse_labels=args.sparse_labels,
    )
    print(outcome.checkpoint)


def _config_or_default(path: Path | None) -> ToolkitConfig:
    return load_config(path) if path is not None else default_config()


def cmd_propose(args: argparse.Namespace) -> None:
    config = _config_or_default(args.config)
    args.out.mkdir(parents=True, exist_ok=True)
    output = propose_from_files(
        args.checkpoint,
        args.cloud,
        args.out,
        k=args.k,
        table_path=args.table,
        expected=config.encoder if args.config is not None else None,
        nms_radius=args.nms_radius,
        geometry=config.geometry,
    )
    print(output.proposals_path)


def _scorer(args: argparse.Namespace) -> ScoreFunction:
    config = load_manifest(args.manifest, check_files=False).config
    if args.random_scores:
        return RandomScorer(seed=config.evaluation.seed)
    if args.oracle:
        return OracleScorer(config=config)
    if args.checkpoint is None:
        raise AOGraspError("evaluate needs --checkpoint, --random-scores or --oracle")
    net, _ = load_checkpoint(args.checkpoint, config.encoder)
    return ModelScorer(net=net)


def cmd_evaluate(args: argparse.Namespace) -> None:
    report = asyncio.run(
        run_evaluation(
            scorer=_scorer(args),
            manifest_location=args.manifest,
            output_data_path=args.out,
            split=None if args.split == "all" else args.split,
            k=args.k,
            workers=args.workers,
        )
    )
    print(
        f"{report.scorer}: top-{report.k} success rate "
        f"{report.overall.mean:.3f} (closed {report.closed.mean:.3f}, "
        f"open {report.open.mean:.3f}) over {report.overall.count} cloud(s)"
    )


def cmd_inspect(args: argparse.Namespace) -> None:
    manifest = load_manifest(args.manifest, check_files=not args.no_check)
    print(render_manifest_stats(manifest_stats(manifest)), end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aograsp",
        description="Actionable-grasp datasets, scorer training and grasp proposals",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-dataset", help="Render, sample and label grasps")
    gen.add_argument("config", type=Path, help="TOML or JSON toolkit config")
    gen.add_argument("--out", type=Path, required=True, help="Dataset directory")
    gen.add_argument("--workers", type=int, help="Worker processes")
    gen.set_defaults(handler=cmd_gen_dataset)

    densify = commands.add_parser("densify", help="Write dense heatmaps per record")
    densify.add_argument("manifest", type=Path)
    densify.set_defaults(handler=cmd_densify)

    train = commands.add_parser("train", help="Pretrain and train the point scorer")
    train.add_argument("manifest", type=Path)
    train.add_argument("--out", type=Path, required=True, help="Checkpoint directory")
    train.add_argument("--config", type=Path, help="Override the manifest's config")
    train.add_argument(
        "--no-pretrain", action="store_true", help="Skip Siamese pretraining"
    )
    train.add_argument(
        "--sparse-labels",
        action="store_true",
        help="Regress onto successful contact points only (implies --no-pretrain)",
    )
    train.set_defaults(handler=cmd_train)

    propose = commands.add_parser("propose", help="Emit top-k grasps for a cloud")
    propose.add_argument("checkpoint", type=Path)
    propose.add_argument("cloud", type=Path, help="AOPC point cloud")
    propose.add_argument("--table", type=Path, help="Orientation table (JSONL)")
    propose.add_argument("-k", type=int, default=10)
    propose.add_argument("--out", type=Path, default=Path("."))
    propose.add_argument("--nms-radius", type=float)
    propose.add_argument(
        "--config", type=Path, help="Config the checkpoint must match"
    )
    propose.set_defaults(handler=cmd_propose)

    evaluate = commands.add_parser(
        "evaluate", help="Execute top-k proposals in the episode simulator"
    )
    evaluate.add_argument("manifest", type=Path)
    scorer = evaluate.add_mutually_exclusive_group()
    scorer.add_argument("--checkpoint", type=Path)
    scorer.add_argument(
        "--random-scores", action="store_true", help="Uniform random baseline"
    )
    scorer.add_argument(
        "--oracle", action="store_true", help="Score with ground-truth heatmaps"
    )
    evaluate.add_argument("-k", type=int)
    evaluate.add_argument(
        "--split", default="test", help="train, test or all (default: test)"
    )
    evaluate.add_argument("--out", type=Path, help="Report directory")
    evaluate.add_argument("--workers", type=int)
    evaluate.set_defaults(handler=cmd_evaluate)

    inspect = commands.add_parser("inspect", help="Print manifest statistics")
    inspect.add_argument("manifest", type=Path)
    inspect.add_argument(
        "--no-check", action="store_true", help="Do not require referenced files"
    )
    inspect.set_defaults(handler=cmd_inspect)
    return parser


def report_error(exc: BaseException) -> None:
    """Machine-readable error line on stderr."""
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace], None] = args.handler
    try:
        configure_logging(settings().log_level)
        handler(args)
    except (AOGraspError, ValidationError, OSError) as exc:
        logger.debug("command %s failed", args.command, exc_info=True)
        report_error(exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
