import sys

from scoreag.cli.main import main

sys.exit(main())
