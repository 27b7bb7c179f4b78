"""Run the default configuration through the CLI.

Usage: python3 scripts/run_suite.py [--out DIR] [--jobs N]
"""
import sys
from pathlib import Path

from knlab.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.toml"

if __name__ == "__main__":
    sys.exit(main(["run", str(CONFIG), *sys.argv[1:]]))
