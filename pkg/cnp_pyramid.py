#!/usr/bin/env python3
"""
Convolutional Neural Pyramid Toolkit Entry Point

Run `python cnp_pyramid.py --help` for the list of subcommands.
"""

import sys

from cnp.main import main

if __name__ == '__main__':
    sys.exit(main())
