import sys

from delivery_planner.cli import main

sys.exit(main())
