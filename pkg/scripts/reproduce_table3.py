"""Whittle vs the reliable-start-first priority policy on the merged irreducible example.

Thin wrapper over ``rmab-mfp reproduce --table 3``; extra arguments are passed through,
e.g. ``python scripts/reproduce_table3.py --n 100 --reps 50 --out results/table3``.
"""
import sys

from rmab_mfp.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", "--table", "3", *sys.argv[1:]]))
