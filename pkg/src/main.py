"""
Main entry point for GaitForge
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from config.config import Config, load_run_config
from src.autograd.tensor import deterministic
from src.data.dataset_io import FORMATS, load_dataset, save_dataset
from src.data.silhouette import dumb_patch_fraction
from src.data.synth import synth_corpus
from src.evaluation.retrieval import evaluate, extract_embeddings, shuffled_eval
from src.models.backbone import SWIN_DEFAULT_BLOCKS, BackboneConfig, Family, build_backbone, plan_shapes
from src.models.gradcheck_suite import CASES, run_gradcheck_suite
from src.models.profiler import count_flops, count_params
from src.models.recognizer import build_recognizer, recognizer_from_checkpoint
from src.models.warm_start import warm_start_from
from src.reporting.report_generator import ReportGenerator
from src.training.trainer import train
from src.utils.exceptions import DatasetError, GaitForgeException
from src.utils.logger import get_logger, setup_logger, setup_training_log


def build_parser() -> argparse.ArgumentParser:
    """Command-line surface of ``gaitforge``"""
    parser = argparse.ArgumentParser(prog="gaitforge", description="Deep gait recognition toolkit")
    parser.add_argument("--env-file", type=Path, default=None, help="Optional .env file")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="Train a recognizer from a run configuration")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)

    p = commands.add_parser("eval", help="Rank-k / mAP of a checkpoint on a gallery and probe set")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--gallery", type=Path, required=True)
    p.add_argument("--probe", type=Path, required=True)
    p.add_argument("--exclude-identical-view", action="store_true")

    p = commands.add_parser("ablate-shuffle", help="Accuracy drop when probe frames are shuffled")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--gallery-per-subject", type=int, default=1)
    p.add_argument("--exclude-identical-view", action="store_true")
    p.add_argument("--seed", type=int, default=None)

    p = commands.add_parser("inspect", help="Stage shapes, parameter and FLOP counts of a model")
    p.add_argument("--family", choices=[f.value for f in Family], default=Family.DEEPGAIT_2D.value)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--blocks", type=int, nargs=4, default=None, metavar="B")
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--classes", type=int, default=0, help="Also build the head for this many classes")
    p.add_argument("--config", type=Path, default=None, help="Take the backbone from a run configuration")

    p = commands.add_parser("synth", help="Generate a synthetic walker corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--subjects", type=int, default=40)
    p.add_argument("--sequences", type=int, default=8)
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--motion-only", action="store_true")
    p.add_argument("--raw", action="store_true", help="Keep 64x64 frames instead of aligning to 64x44")
    p.add_argument("--format", choices=FORMATS, default="gsq")

    p = commands.add_parser("patches", help="Fraction of dumb patches in a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--patch", type=int, action="append", required=True)

    p = commands.add_parser("gradcheck", help="Run the built-in gradient verification suite")
    p.add_argument("--case", action="append", choices=list(CASES), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-coordinates", type=int, default=12)
    return parser


def _seed(args: argparse.Namespace, config: Config, fallback: Optional[int] = None) -> int:
    if getattr(args, 'seed', None) is not None:
        return args.seed
    return fallback if fallback is not None else config['GAITFORGE_SEED']


def cmd_train(args: argparse.Namespace, config: Config, reports: ReportGenerator) -> int:
    logger = get_logger(__name__)
    run = load_run_config(args.config)
    seed = _seed(args, config, run.seed)
    dataset = load_dataset(args.data)
    if len(dataset) == 0:
        raise DatasetError(f"No sequences under {args.data}")

    model = build_recognizer(run.backbone, len(dataset.subject_ids), np.random.default_rng([seed, 1]))
    if run.warm_start:
        warm_start_from(model, Path(run.warm_start))
    checkpoint_every = run.checkpoint_every
    if checkpoint_every is None:
        checkpoint_every = config['GAITFORGE_CHECKPOINT_EVERY']
    setup_training_log(args.out / "train.log")
    result = train(
        model, dataset, run.batch, run.optimizer, run.schedule, run.loss, run.total_steps,
        np.random.default_rng([seed, 2]),
        out_dir=args.out,
        checkpoint_every=checkpoint_every,
        augment=run.augment,
        run_meta={'run': run.to_dict(), 'seed': seed},
        progress=config['GAITFORGE_PROGRESS'],
    )
    logger.info(f"Training finished: {len(result.records)} steps, final checkpoint {result.final_checkpoint}")
    return 0


def cmd_eval(args: argparse.Namespace, config: Config, reports: ReportGenerator) -> int:
    model = recognizer_from_checkpoint(args.ckpt)
    batch = config['GAITFORGE_EVAL_BATCH']
    gallery = extract_embeddings(model, load_dataset(args.gallery).sequences, batch)
    probe = extract_embeddings(model, load_dataset(args.probe).sequences, batch)
    # one directory serving as both sides holds every query in the gallery too
    same_source = args.gallery.resolve() == args.probe.resolve()
    report = evaluate(
        gallery, probe,
        exclude_identical_view=args.exclude_identical_view,
        exclude_self=same_source,
    )
    text = reports.generate_eval_report(report, args.ckpt)
    reports.save_report(text, config.get_report_file_path('eval'))
    print(text)
    return 0


def cmd_ablate_shuffle(args: argparse.Namespace, config: Config, reports: ReportGenerator) -> int:
    model = recognizer_from_checkpoint(args.ckpt)
    ablation = shuffled_eval(
        model, load_dataset(args.data), np.random.default_rng(_seed(args, config)),
        gallery_per_subject=args.gallery_per_subject,
        exclude_identical_view=args.exclude_identical_view,
    )
    text = reports.generate_ablation_report(ablation, args.ckpt)
    reports.save_report(text, config.get_report_file_path('ablation'))
    print(text)
    return 0


def cmd_inspect(args: argparse.Namespace, config: Config, reports: ReportGenerator) -> int:
    if args.config is not None:
        backbone_config = load_run_config(args.config).backbone
    else:
        kwargs = {'family': args.family, 'base_channels': args.channels}
        if args.blocks is not None:
            kwargs['block_counts'] = tuple(args.blocks)
        elif Family(args.family).is_swin:
            kwargs['block_counts'] = SWIN_DEFAULT_BLOCKS
        backbone_config = BackboneConfig(**kwargs)

    shapes = plan_shapes(backbone_config, args.frames)
    rng = np.random.default_rng(config['GAITFORGE_SEED'])
    if args.classes > 0:
        model = build_recognizer(backbone_config, args.classes, rng)
        with_head = count_params(model, include_head=True)
    else:
        model = build_backbone(backbone_config, rng)
        with_head = None
    text = reports.generate_inspect_report(
        backbone_config, shapes, count_params(model), with_head, count_flops(model)
    )
    reports.save_report(text, config.get_report_file_path('inspect'))
    print(text)
    return 0


def cmd_synth(args: argparse.Namespace, config: Config, reports: ReportGenerator) -> int:
    dataset = synth_corpus(
        subjects=args.subjects,
        sequences=args.sequences,
        views=args.views,
        frames=args.frames,
        seed=_seed(args, config),
        motion_only=args.motion_only,
        normalize=not args.raw,
    )
    save_dataset(dataset, args.out, args.format)
    print(f"Wrote {len(dataset)} sequences for {len(dataset.subject_ids)} subjects to {args.out}")
    return 0


def cmd_patches(args: argparse.Namespace, config: Config, reports: ReportGenerator) -> int:
    dataset = load_dataset(args.data)
    if len(dataset) == 0:
        raise DatasetError(f"No sequences under {args.data}")
    fractions = {size: dumb_patch_fraction(dataset, size) for size in args.patch}
    text = reports.generate_patch_report(fractions, sum(len(seq) for seq in dataset))
    reports.save_report(text, config.get_report_file_path('patches'))
    print(text)
    return 0


def cmd_gradcheck(args: argparse.Namespace, config: Config, reports: ReportGenerator) -> int:
    results = run_gradcheck_suite(_seed(args, config), args.case, args.max_coordinates)
    text = reports.generate_gradcheck_report(results)
    reports.save_report(text, config.get_report_file_path('gradcheck'))
    print(text)
    return 0 if all(result.passed for result in results.values()) else 1


COMMANDS: Dict[str, Callable[[argparse.Namespace, Config, ReportGenerator], int]] = {
    'train': cmd_train,
    'eval': cmd_eval,
    'ablate-shuffle': cmd_ablate_shuffle,
    'inspect': cmd_inspect,
    'synth': cmd_synth,
    'patches': cmd_patches,
    'gradcheck': cmd_gradcheck,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main execution function

    Args:
        argv: Command-line arguments (defaults to sys.argv[1:])

    Returns:
        Exit code (0 for success, 1 for failure)
    """
    args = build_parser().parse_args(argv)
    logger = None

    try:
        config = Config(args.env_file)
        logger = setup_logger(log_level=config['GAITFORGE_LOG_LEVEL'], log_file=config.get_log_file_path())
        logger.info(f"gaitforge {args.command}")
        with deterministic(config['GAITFORGE_DETERMINISTIC']):
            return COMMANDS[args.command](args, config, ReportGenerator())

    except GaitForgeException as e:
        error_msg = f"GaitForge error: {str(e)}"
        if logger:
            logger.error(error_msg)
        else:
            print(f"ERROR: {error_msg}", file=sys.stderr)
        return 1

    except Exception as e:
        error_msg = f"Unexpected error: {str(e)}"
        if logger:
            logger.error(error_msg, exc_info=True)
        else:
            print(f"ERROR: {error_msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
