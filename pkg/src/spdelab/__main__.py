import sys

from .cli_harness.cli import main

sys.exit(main())
