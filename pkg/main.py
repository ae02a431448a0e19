#!/usr/bin/env python3
"""
Main entry point for the ISIB toolkit
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.cli.app import run


def main():
    """Main entry point for console script"""
    sys.exit(run())


if __name__ == "__main__":
    main()
