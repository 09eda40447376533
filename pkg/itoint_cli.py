#!/usr/bin/env python3
"""
Run Itô integral verification experiments.

    python itoint_cli.py run --config config/experiment_config.yaml
    python itoint_cli.py list-integrands
    python itoint_cli.py dump-paths --count 3
"""

import sys
from pathlib import Path

# Add the itoint package to the path
sys.path.append(str(Path(__file__).parent))

from itoint.cli import main

if __name__ == "__main__":
    sys.exit(main())
