#!/usr/bin/env python3
import argparse
import logging
import sys

from src.runner import run
from src.utils.config import LOG_LEVELS, SUBCOMMANDS, load_config

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger('stablefield')


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        prog='stablefield',
        description='Synthesize harmonizable stable random fields and verify their regularity.')
    parser.add_argument('subcommand', choices=list(SUBCOMMANDS) + ['all'],
                        help="Work to run; 'all' runs the subcommands listed under 'scans'")
    parser.add_argument('--config', default=None,
                        help='Run configuration (default: $STABLEFIELD_CONFIG or stablefield.yml)')
    parser.add_argument('--workers', type=int, default=None, help='Worker threads (overrides the config)')
    parser.add_argument('--log-level', choices=LOG_LEVELS, default=None,
                        help='Logging level (overrides logging.level)')
    return parser.parse_args(argv)


def main(argv=None):
    """Main entry point for stablefield."""
    args = parse_args(argv)
    logging.basicConfig(level=args.log_level or logging.INFO, format=LOG_FORMAT)

    try:
        config = load_config(args.config)
        logging.getLogger().setLevel(args.log_level or config['logging']['level'])
        if args.workers is not None and args.workers < 1:
            raise ValueError("--workers must be at least 1")

        logger.info("Starting stablefield %s", args.subcommand)
        subcommands = None if args.subcommand == 'all' else [args.subcommand]
        status = run(config, subcommands, args.workers)

    except (ValueError, KeyError, ImportError) as e:
        logger.error("Error running stablefield: %s", str(e))
        sys.exit(1)
    except (OSError, IOError) as e:
        logger.error("File system error: %s", str(e))
        sys.exit(1)
    except Exception as e:  # anything else still exits 1 with a log line
        logger.error("Unexpected error running stablefield: %s", str(e))
        sys.exit(1)

    if status:
        logger.error("stablefield finished with failures; see manifest.yml")
        sys.exit(status)
    logger.info("stablefield completed successfully")


if __name__ == "__main__":
    main()
