#!/usr/bin/env python3
"""Run polymer-lab experiments.

Usage:
    polymer_lab.py (twopoint | ratio | pinning-demo | surface-tension | tilt | massgap | wulff) --config FILE [options]
    polymer_lab.py effwalk (dp | alili-doney | ladder | decomp | rho | local-limit | bands | vwalk) --config FILE [options]
    polymer_lab.py verify [--level LEVEL] [-v]
    polymer_lab.py list
    polymer_lab.py -h | --help

Options:
    --config FILE   Experiment configuration (JSON or YAML).
    --out DIR       Output directory, overriding the config's `output`.
    --threads N     Worker processes for grid points [default: 1].
    --cache DIR     Enumeration cache root (env POLYMER_LAB_CACHE sets the default).
    --no-cache      Neither read nor write the enumeration cache.
    --plot          Save a figure next to the CSV (ratio, pinning-demo, wulff).
    --level LEVEL   Verification level, fast or full [default: fast].
    -v              Debug logging.

Exit status is 0 when every check passed, 1 when a check failed and 2 for
usage or configuration errors.
"""
import logging
import sys

from docopt import DocoptExit, docopt

try:
    from src.cache_db import CACHE_ROOT
    from src.configutil import load_config
    from src.errors import ConfigValidationError, ConstantsError, PolymerLabError
    from src.experiments import EXPERIMENTS, run
except ImportError:
    from cache_db import CACHE_ROOT
    from configutil import load_config
    from errors import ConfigValidationError, ConstantsError, PolymerLabError
    from experiments import EXPERIMENTS, run


logger = logging.getLogger(__name__)

SUBCOMMANDS = ["twopoint", "ratio", "pinning-demo", "surface-tension", "tilt", "massgap", "wulff"]
EFFWALK = ["dp", "alili-doney", "ladder", "decomp", "rho", "local-limit", "bands", "vwalk"]

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def experiment_name(args) -> str:
    if args["effwalk"]:
        return "effwalk-" + next(name for name in EFFWALK if args[name])
    return next(name for name in SUBCOMMANDS if args[name])


def run_experiment(args) -> int:
    name = experiment_name(args)
    cfg = load_config(args["--config"])
    if cfg.experiment != name:
        raise ConfigValidationError(f"config describes '{cfg.experiment}', not '{name}'", "experiment")
    threads = int(args["--threads"])
    cache_dir = None if args["--no-cache"] else (args["--cache"] or cfg.cache_dir or str(CACHE_ROOT))
    manifest = run(cfg, out=args["--out"], cache_dir=cache_dir, threads=threads, plot=args["--plot"])
    for c in manifest.checks:
        print(f"> {c['name']:<32} | {'pass' if c['passed'] else 'FAIL'} | {c['detail']}")
    print(f"{manifest.n_rows} rows -> {', '.join(manifest.payloads)}")
    return EXIT_OK if manifest.passed else EXIT_FAILED


def run_verify(args) -> int:
    try:
        from src.verify import display, verify_suite
    except ImportError:
        from verify import display, verify_suite
    report = verify_suite(args["--level"])
    display(report)
    return EXIT_OK if report.passed.all() else EXIT_FAILED


def main(argv=None) -> int:
    try:
        args = docopt(__doc__, argv=argv)
    except DocoptExit as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args["-v"] else logging.INFO,
        format="%(levelname)s : %(asctime)s : %(message)s",
    )
    if args["list"]:
        print("\n".join(sorted(EXPERIMENTS)))
        return EXIT_OK
    try:
        if args["verify"]:
            return run_verify(args)
        return run_experiment(args)
    except (ConfigValidationError, ConstantsError, ValueError, OSError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except PolymerLabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
