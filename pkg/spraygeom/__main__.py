"""Allow ``python -m spraygeom``."""

import sys

from .cli import main

sys.exit(main())
