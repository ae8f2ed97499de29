"""
Main entry point for the paraflat planner.
"""

import sys

from paraflat.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
