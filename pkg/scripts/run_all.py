"""Run every bundled experiment config and print a one-line summary per experiment.

    python scripts/run_all.py [--out reports] [--only name ...]
"""
import argparse
import sys

from isonorm.lab.cli import run_experiment
from isonorm.lab.config import builtin_config_path
from isonorm.lab.experiments import REGISTRY


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="reports")
    p.add_argument("--only", nargs="*", default=None)
    args = p.parse_args()
    worst = 0
    for name in args.only or sorted(REGISTRY):
        code, _ = run_experiment(builtin_config_path(name), out_dir=args.out)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
