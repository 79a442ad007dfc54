# cxr_report_trainer/core/launcher.py
import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from cxr_report_trainer.config_manager import load_settings
from cxr_report_trainer.core.config import PipelineConfig, config
from cxr_report_trainer.core.data_logger import iter_jsonl
from cxr_report_trainer.core.errors import EXIT_OK, EXIT_USAGE, PipelineError, exit_code_for
from cxr_report_trainer.core.logging_config import setup_logging
from cxr_report_trainer.corpus.vocabulary import load_finding_vocabulary
from cxr_report_trainer.metrics.clinical import FindingLabelSet
from cxr_report_trainer.metrics.report import format_table, write_eval_report
from cxr_report_trainer.pipeline import runner, stages

# flag dest -> PipelineConfig field
CONFIG_FLAGS = {
    "corpus_dir": "corpus_dir",
    "output_dir": "output_dir",
    "seed": "global_seed",
    "token_dim": "token_dim",
    "embedding_width": "embedding_width",
    "max_positions": "max_positions",
    "samples_per_report": "samples_per_report",
    "full_report_probability": "full_report_probability",
    "ce_average": "ce_average",
    "bleu_max_n": "bleu_max_n",
    "generator": "generator",
    "labeler": "labeler",
    "projection_params": "projection_params_path",
    "log_level": "log_level",
    "workers": "workers",
    "use_priors": "use_priors",
    "findings_headers": "findings_headers",
    "indication_headers": "indication_headers",
}


class UsageExitParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=config.SETTINGS_PATH, help="JSON config file")
    common.add_argument("--corpus-dir", dest="corpus_dir")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--token-dim", dest="token_dim", type=int)
    common.add_argument("--embedding-width", dest="embedding_width", type=int)
    common.add_argument("--max-positions", dest="max_positions", type=int)
    common.add_argument("--full-report-probability", dest="full_report_probability", type=float)
    common.add_argument("--ce-average", dest="ce_average", choices=["micro", "macro"])
    common.add_argument("--bleu-max-n", dest="bleu_max_n", type=int)
    common.add_argument("--generator")
    common.add_argument("--labeler")
    common.add_argument("--projection-params", dest="projection_params")
    common.add_argument("--log-level", dest="log_level")
    common.add_argument("--workers", type=int)
    common.add_argument(
        "--no-priors", dest="use_priors", action="store_false", default=None,
        help="zero every prior scan (single-scan baseline)",
    )
    common.add_argument(
        "--findings-header", dest="findings_headers", action="append", help="repeatable; replaces the defaults"
    )
    common.add_argument(
        "--indication-header", dest="indication_headers", action="append", help="repeatable; replaces the defaults"
    )

    parser = UsageExitParser(
        prog="cxr-report-trainer",
        description="Controllable longitudinal chest X-ray report generation: data pipeline and evaluation.",
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=UsageExitParser)

    synth = commands.add_parser("synth", parents=[common], help="write a synthetic corpus")
    synth.add_argument("--patients", type=int, help="number of synthetic patients")

    for name in ("ingest", "pair", "partition", "fuse", "generate"):
        commands.add_parser(name, parents=[common], help=f"run the {name} stage")

    sample = commands.add_parser("sample", parents=[common], help="run the sample stage")
    sample.add_argument("--samples-per-report", dest="samples_per_report", type=int)

    evaluate = commands.add_parser("evaluate", parents=[common], help="score generated reports")
    evaluate.add_argument("--generated", help="JSON Lines of {id, text}; defaults to the run output")
    evaluate.add_argument("--references", help="JSON Lines of {id, text}; defaults to the run output")
    evaluate.add_argument("--gt-labels", dest="gt_labels", help="JSON Lines of {id, labels}")
    evaluate.add_argument("--pred-labels", dest="pred_labels", help="JSON Lines of {id, labels}")

    run = commands.add_parser("run", parents=[common], help="run every stage")
    run.add_argument("--samples-per-report", dest="samples_per_report", type=int)
    run.add_argument("--synthesize", action="store_true", help="write a synthetic corpus first")
    run.add_argument("--seeds", help="comma-separated global seeds; one run per seed")
    return parser


def settings_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {field: getattr(args, flag, None) for flag, field in CONFIG_FLAGS.items()}
    return load_settings(args.config, overrides)


def parse_seeds(value: str) -> List[int]:
    try:
        return [int(s) for s in value.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds must be comma-separated integers, got '{value}'")


def _load_labels(path: Optional[str], cfg: PipelineConfig) -> Optional[Dict[str, FindingLabelSet]]:
    if not path:
        return None
    vocabulary = load_finding_vocabulary(cfg.labeler_vocab_path)
    return {str(r["id"]): FindingLabelSet(r["labels"], vocabulary) for r in iter_jsonl(path)}


def _run_stage(command: str, args: argparse.Namespace, cfg: PipelineConfig) -> Any:
    os.makedirs(cfg.output_dir, exist_ok=True)
    vocabulary = stages.region_vocabulary(cfg)

    if command == "ingest":
        reports, counts = stages.ingest(cfg, vocabulary)
        stages.write_reports(cfg, reports)
        return counts
    if command == "pair":
        pairs, counts = stages.pair(cfg, stages.load_tokens(cfg, vocabulary))
        stages.write_pairs(cfg, pairs)
        return counts
    if command == "partition":
        reports, unpaired = stages.paired_reports(stages.load_reports(cfg, vocabulary), stages.load_pairs(cfg))
        partitions, counts = stages.partition(reports)
        stages.write_partitions(cfg, partitions)
        return dict(counts, unpaired_reports=unpaired)
    if command == "sample":
        pairs = stages.load_pairs(cfg)
        reports, _ = stages.paired_reports(stages.load_reports(cfg, vocabulary), pairs)
        samples, instances, counts = stages.sample(
            cfg, reports, stages.load_partitions(cfg), pairs, vocabulary
        )
        stages.write_samples(cfg, samples, instances)
        return counts
    if command == "fuse":
        joints, counts = stages.fuse(
            cfg, stages.load_instances(cfg), stages.load_tokens(cfg, vocabulary), vocabulary
        )
        stages.write_joint(cfg, joints)
        return counts
    if command == "generate":
        reports, _ = stages.paired_reports(stages.load_reports(cfg, vocabulary), stages.load_pairs(cfg))
        generated, counts = stages.generate(
            cfg, stages.load_instances(cfg), stages.load_joint(cfg, vocabulary), reports
        )
        stages.write_generated(cfg, generated)
        return counts
    if command == "evaluate":
        generated = list(iter_jsonl(args.generated or stages.output_path(cfg, stages.GENERATED_OUT)))
        references = {
            str(r["id"]): r["text"]
            for r in iter_jsonl(args.references or stages.output_path(cfg, stages.REFERENCES_OUT))
        }
        reports, counts = stages.evaluate(
            cfg, generated, references,
            _load_labels(args.gt_labels, cfg), _load_labels(args.pred_labels, cfg),
        )
        write_eval_report(stages.output_path(cfg, stages.EVAL_OUT), reports)
        print(format_table(reports))
        return counts
    raise ValueError(f"Unknown stage '{command}'")


def dispatch(args: argparse.Namespace) -> int:
    cfg = settings_from_args(args)
    log_file = os.path.join(cfg.output_dir, config.LOG_FILE_NAME)
    setup_logging(cfg.log_level, log_file)

    if args.command == "synth":
        if args.patients is not None:
            cfg.synthetic = dict(cfg.synthetic, patient_count=args.patients)
        sidecar = runner.synthesize(cfg)
        logging.info(f"Partial-report instances expected: {sidecar['partial_eval_count']}")
        return EXIT_OK

    if args.command == "run":
        if args.synthesize:
            runner.synthesize(cfg)
        if args.seeds:
            manifest = runner.run_seeds(cfg, parse_seeds(args.seeds))
            print(json.dumps(manifest["mean_scores"], indent=2, sort_keys=True))
        else:
            manifest = runner.run_pipeline(cfg)
            print("\n".join(manifest["table"]))
        return EXIT_OK

    counts = _run_stage(args.command, args, cfg)
    logging.info(f"{args.command}: {json.dumps(counts, sort_keys=True)}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return dispatch(args)
    except argparse.ArgumentTypeError as e:
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: {e}\n")
    except PipelineError as e:
        logging.error(str(e))
        return exit_code_for(e)
    except Exception as e:
        logging.exception(f"Unexpected failure: {e}")
        return exit_code_for(e)
