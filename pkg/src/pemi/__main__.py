"""Allow ``python -m pemi``."""

import sys

from pemi.ui.cli import main

sys.exit(main())
