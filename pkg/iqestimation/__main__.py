import sys

from iqestimation.cli import main

sys.exit(main())
