"""Command line entry point."""
import argparse
import logging
from pathlib import Path
import sys
from typing import List, Optional

from sdgraph import pipeline
from sdgraph.config import COMMANDS, DEFAULT_CONFIG_PATH, LOG_FORMAT, LOG_LEVEL
from sdgraph.errors import EXIT_INPUT_ERROR, EXIT_INVARIANT_VIOLATION, EXIT_OK, InputError, InvariantViolation, SdgError
from sdgraph.pipeline import RunConfig

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, default=DEFAULT_CONFIG_PATH, help='JSON run configuration')
    common.add_argument('--seed', type=int, help='Random seed for structure search')
    common.add_argument('--workers', type=int, help='Parallel workers for per-image stages')
    common.add_argument('--out', type=Path, help='Output directory')
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], type=str.upper)

    parser = argparse.ArgumentParser(prog='sdgraph', description='Scene description graph reasoning')
    commands = parser.add_subparsers(dest='command', required=True)

    kb = commands.add_parser('kb-build', parents=[common], help=COMMANDS['kb-build'])
    kb.add_argument('annotations', type=Path)
    kb.add_argument('--constituents', type=Path, help='Constituent phrases to normalize and rank')

    bn = commands.add_parser('bn-learn', parents=[common], help=COMMANDS['bn-learn'])
    bn.add_argument('annotations', type=Path)
    bn.add_argument('detections', type=Path, help='Scene detections of the training images')
    bn.add_argument('--plot', action='store_true', help='Save the BIC trajectory plot')

    infer = commands.add_parser('infer', parents=[common], help=COMMANDS['infer'])
    infer.add_argument('detections', type=Path)
    infer.add_argument('--kb', type=Path, required=True)
    infer.add_argument('--bn', type=Path, required=True)
    infer.add_argument('--dot', action='store_true', help='Also write one DOT file per image')

    retrieve = commands.add_parser('retrieve', parents=[common], help=COMMANDS['retrieve'])
    retrieve.add_argument('results', type=Path)
    retrieve.add_argument('queries', type=Path)
    retrieve.add_argument('--plot', action='store_true', help='Save the recall bar chart')

    evaluate = commands.add_parser('eval', parents=[common], help=COMMANDS['eval'])
    evaluate.add_argument('results', type=Path)
    evaluate.add_argument('gold', type=Path)

    export = commands.add_parser('export-dot', parents=[common], help=COMMANDS['export-dot'])
    export.add_argument('source', type=Path, help='results.jsonl or kb.json')
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    return config.with_overrides(
        seed=args.seed, workers=args.workers, output_dir=args.out, log_level=args.log_level
    )


def dispatch(args: argparse.Namespace, config: RunConfig) -> None:
    if args.command == 'kb-build':
        pipeline.cmd_kb_build(args.annotations, config, args.constituents)
    elif args.command == 'bn-learn':
        pipeline.cmd_bn_learn(args.annotations, args.detections, config, args.plot)
    elif args.command == 'infer':
        pipeline.cmd_infer(args.detections, args.kb, args.bn, config, args.dot)
    elif args.command == 'retrieve':
        pipeline.cmd_retrieve(args.results, args.queries, config, args.plot)
    elif args.command == 'eval':
        pipeline.cmd_eval(args.results, args.gold, config)
    elif args.command == 'export-dot':
        pipeline.cmd_export_dot(args.source, config)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format=LOG_FORMAT, level=args.log_level or LOG_LEVEL)
    try:
        config = load_config(args)
        logging.getLogger().setLevel(config.log_level)
        dispatch(args, config)
    except InputError as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT_ERROR
    except InvariantViolation as e:
        logger.error(f"Invariant violated: {e}", exc_info=True)
        return EXIT_INVARIANT_VIOLATION
    except SdgError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_INPUT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
