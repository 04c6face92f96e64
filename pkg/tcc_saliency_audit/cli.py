"""
Command-line entry point: tcc-audit <subcommand> [options]

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

import argparse
import os
import sys
from typing import List, Optional

from . import __version__
from .campaigns import Campaign, build_report, model_spec_for
from .config import Config, get_config, reset_config
from .data_io import Dataset, kfold_split, load_dataset, save_dataset, synth_generate
from .errors import AuditError, ConfigurationError, InputError, exit_code_for
from .heatmap import render_heatmap, render_temporal_strip
from .interventions import read_masks
from .logger import LoggerManager, get_logger
from .replay import replay
from .results import EXPORT_FORMATS, ResultsStore, export_results

logger = get_logger(__name__)


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's exit 2"""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigurationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tcc-audit", description="Saliency faithfulness audits for temporal colour constancy")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON config file (sections: model, train, synth, campaign, logging, output)")
    parser.add_argument("--seed", type=int, help="Overrides train, campaign and synth seeds")
    parser.add_argument("--out-dir", help="Results directory")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING ...")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Generate a synthetic planted-evidence dataset")
    synth.add_argument("--data", help="Output dataset directory (default: <out-dir>/data)")
    synth.add_argument("--num-sequences", type=int)
    synth.add_argument("--num-frames", type=int)
    synth.add_argument("--mode", choices=["GLOBAL", "SPATIAL_PATCH", "KEY_FRAME"])

    train = commands.add_parser("train", help="Train one configuration on one fold")
    train.add_argument("spec", help="Model label: B, A-S, C-ST, CA-ST ...")
    train.add_argument("--fold", type=int, default=0)
    train.add_argument("--noncontextual", action="store_true", help="Train the non-contextual ablation")
    train.add_argument("--data", help="Dataset directory (default: <out-dir>/data)")

    for name, text in (("wp1", "Run the WP1 campaign (learned vs frozen uniform)"),
                       ("wp2", "Run the WP2 campaign (transplanted contextual saliency)")):
        campaign = commands.add_parser(name, help=text)
        campaign.add_argument("--data", help="Dataset directory (default: <out-dir>/data)")
        campaign.add_argument("--specs", help="Comma-separated model labels")
        campaign.add_argument("--folds", type=int)
        campaign.add_argument("--alpha", type=float)
        campaign.add_argument("--paired", action="store_true", default=None)
        campaign.add_argument("--no-train", action="store_true", help="Fail instead of training missing runs")

    replay_cmd = commands.add_parser("replay", help="Replay the published summaries through the verdict pipeline")
    replay_cmd.add_argument("--alpha", type=float, default=0.05)
    replay_cmd.add_argument("--json", action="store_true", help="Print JSON instead of the text table")

    report = commands.add_parser("report", help="Summary report from persisted verdicts")
    report.add_argument("--json", action="store_true", help="Print JSON instead of the text table")

    heatmap = commands.add_parser("heatmap", help="Render the saliency captured for one run and sequence")
    heatmap.add_argument("run_id")
    heatmap.add_argument("sequence_id")
    heatmap.add_argument("--frame", type=int, default=None, help="Frame index (default: all frames)")
    heatmap.add_argument("--data", help="Dataset directory (default: <out-dir>/data)")
    heatmap.add_argument("--output", help="Output directory (default: <out-dir>/heatmaps/<run_id>)")

    export = commands.add_parser("export", help="Export run records")
    export.add_argument("output")
    export.add_argument("--runs", help="Comma-separated run ids (default: every run)")
    export.add_argument("--format", choices=EXPORT_FORMATS, default="JSON", type=str.upper)
    return parser


def _apply_overrides(config: Config, args: argparse.Namespace) -> None:
    if args.seed is not None:
        config.train.seed = args.seed
        config.campaign.seed = args.seed
    if args.out_dir:
        config.output.out_dir = args.out_dir
        config.output.data_dir = os.path.join(args.out_dir, "data")
    if args.log_level:
        config.logging.level = args.log_level.upper()
    for key in ("folds", "alpha", "paired"):
        value = getattr(args, key, None)
        if value is not None and args.command in ("wp1", "wp2"):
            setattr(config.campaign, key, value)
    if getattr(args, "specs", None):
        config.campaign.specs = [s.strip() for s in args.specs.split(",") if s.strip()]
    if getattr(args, "no_train", False):
        config.campaign.train_missing = False


def _load_data(config: Config, path: Optional[str]) -> Dataset:
    dataset = load_dataset(path or config.output.data_dir)
    if not dataset.report.ok:
        logger.warning(f"Rejected sequences: {dataset.report.summary()}")
    if len(dataset) == 0:
        raise InputError("dataset has no valid sequences")
    return dataset


def _campaign(config: Config, args: argparse.Namespace) -> Campaign:
    dataset = _load_data(config, args.data)
    store = ResultsStore(config.output.out_dir)
    return Campaign(config.campaign, config.model, config.train, dataset, store)


def cmd_synth(config: Config, args: argparse.Namespace) -> int:
    synth = config.synth
    if args.num_sequences is not None:
        synth.num_sequences = args.num_sequences
    if args.num_frames is not None:
        synth.num_frames = args.num_frames
    if args.mode:
        synth.evidence_mode = args.mode
    dataset = synth_generate(synth, config.train.seed)
    dataset = dataset.with_manifest(kfold_split(dataset.manifest, config.campaign.folds, config.campaign.seed))
    root = args.data or config.output.data_dir
    save_dataset(dataset, root)
    print(f"{len(dataset)} sequences written to {root}")
    return 0


def cmd_train(config: Config, args: argparse.Namespace) -> int:
    campaign = _campaign(config, args)
    spec = model_spec_for(args.spec, config.model)
    if args.noncontextual:
        spec = spec.noncontextual()
    _, record = campaign.trained(spec, args.fold)
    print(f"{record.run_id}: test MAE {record.mae:.3f} deg on fold {args.fold}")
    return 0


def cmd_wp1(config: Config, args: argparse.Namespace) -> int:
    result = _campaign(config, args).run_wp1()
    print(result.report.to_text(), end="")
    return 0


def cmd_wp2(config: Config, args: argparse.Namespace) -> int:
    result = _campaign(config, args).run_wp2()
    print(result.report.to_text(), end="")
    return 0


def cmd_replay(config: Config, args: argparse.Namespace) -> int:
    outcome = replay(args.alpha)
    print(outcome.report.to_json() if args.json else outcome.report.to_text(), end="")
    return 0


def cmd_report(config: Config, args: argparse.Namespace) -> int:
    report = build_report(ResultsStore(config.output.out_dir))
    print(report.to_json() if args.json else report.to_text(), end="")
    return 0


def cmd_heatmap(config: Config, args: argparse.Namespace) -> int:
    store = ResultsStore(config.output.out_dir)
    record = store.load_run(args.run_id)
    masks = read_masks(store.masks_dir(record.run_id), args.sequence_id)
    sequence = _load_data(config, args.data)[args.sequence_id]
    out_dir = args.output or os.path.join(config.output.out_dir, "heatmaps", record.run_id)
    written = []
    if masks.spatial:
        indices = range(len(masks.spatial)) if args.frame is None else [args.frame]
        for index in indices:
            if not 0 <= index < len(masks.spatial):
                raise InputError(f"frame {index} out of range [0, {len(masks.spatial)})")
            path = os.path.join(out_dir, f"{args.sequence_id}_frame{index:03d}.png")
            render_heatmap(sequence.frames[index], masks.spatial[index], path)
            written.append(path)
    if masks.temporal is not None:
        path = os.path.join(out_dir, f"{args.sequence_id}_temporal.png")
        render_temporal_strip(masks.temporal.weights, path)
        written.append(path)
    for path in written:
        print(path)
    return 0


def cmd_export(config: Config, args: argparse.Namespace) -> int:
    store = ResultsStore(config.output.out_dir)
    run_ids = [r.strip() for r in args.runs.split(",")] if args.runs else store.list_runs()
    export_results(store, run_ids, args.format, args.output)
    print(f"{len(run_ids)} runs exported to {args.output}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "wp1": cmd_wp1,
    "wp2": cmd_wp2,
    "replay": cmd_replay,
    "report": cmd_report,
    "heatmap": cmd_heatmap,
    "export": cmd_export,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        reset_config()
        config = get_config(args.config)
        _apply_overrides(config, args)
        LoggerManager.setup(config.logging, force=True)
        return COMMANDS[args.command](config, args)
    except AuditError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
