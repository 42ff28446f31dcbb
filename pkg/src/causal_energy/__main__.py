"""Allow ``python -m causal_energy``."""

import sys

from .cli import main

sys.exit(main())
