"""
Main Application Script
=======================

Command-line launcher for trimmed-likelihood estimation runs.
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from trimmed_likelihood.cli import main


if __name__ == "__main__":
    sys.exit(main())
