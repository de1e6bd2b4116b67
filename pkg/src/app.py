"""Script entry point for the PEMI command-line tool: ``python src/app.py <command>``."""

import sys
from pathlib import Path

# Add src directory to path for imports when running as script
if Path(__file__).parent.name == "src":
    sys.path.insert(0, str(Path(__file__).parent))

from pemi.ui.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
