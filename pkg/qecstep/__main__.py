import sys

from qecstep.cli import main

sys.exit(main())
