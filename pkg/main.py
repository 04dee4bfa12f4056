"""
Command-line launcher for ScoreAG; equivalent to ``python -m scoreag``.
"""

import sys

from scoreag.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
