import os
import sys
import argparse
from pathlib import Path
import logging

# Set up basic logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

# Add the parent directory to the path so we can import the package
sys.path.insert(0, str(Path(__file__).parent.parent))

from facetflow.errors import FacetFlowError
from facetflow.scenario import EXIT_ERROR, MODES, Scenario, default_out_dir, load_scenario, run


def check_dependencies() -> bool:
    """Quick check for required packages"""
    logging.info("Checking dependencies...")
    missing_packages = []
    for package in ['numpy', 'scipy']:
        try:
            __import__(package)
            logging.info(f"Found: {package}")
        except ImportError:
            logging.info(f"Missing: {package}")
            missing_packages.append(package)
    try:
        __import__('google.adk')
        logging.info("Found: google-adk (agent tools enabled)")
    except ImportError:
        logging.info("google-adk not installed; the agent surface is disabled")
    if missing_packages:
        logging.info(f"Missing packages: {', '.join(missing_packages)}")
        logging.info("Run: pip install -r requirements.txt")
        return False
    return True


def main(argv=None):
    """Main entry point"""
    parser = argparse.ArgumentParser(description="Facet flow scenario runner")
    parser.add_argument("mode", choices=MODES, help="What to run")
    parser.add_argument("--scenario", help="JSON scenario file (optional for selftest)")
    parser.add_argument("--out", default=None,
                        help="Output directory (default: $FACETFLOW_OUT or ./facetflow_out)")
    parser.add_argument("--seed", type=int, default=None,
                        help="Seed for the randomized property checks")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    args = parser.parse_args(argv)
    if args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    if not check_dependencies():
        return EXIT_ERROR

    try:
        if args.scenario:
            scenario = load_scenario(args.scenario, mode=args.mode)
        elif args.mode == "selftest":
            scenario = Scenario(mode="selftest")
        else:
            parser.error(f"--scenario is required for {args.mode}")
    except FacetFlowError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR
    if args.seed is not None:
        scenario.seed = args.seed

    out_dir = args.out or scenario.outputs.get("dir") or str(default_out_dir())
    logging.info(f"Running {scenario.mode} into {os.path.abspath(out_dir)}")
    return run(scenario, out_dir)


if __name__ == "__main__":
    sys.exit(main())
