#!/usr/bin/env python3
"""
Command-line launcher

Usage:
    python mosaic.py <subcommand> [options]
    python mosaic.py --help
"""

import sys

from app.cli import main


if __name__ == "__main__":
    sys.exit(main())
