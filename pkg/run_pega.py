#!/usr/bin/env python3
"""
Entry point for the pega command line (keygen, encrypt, solve, bench, stats).
"""

import sys

from pega.cli import main

if __name__ == "__main__":
    sys.exit(main())
