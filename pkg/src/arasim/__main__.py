import sys

from arasim.cli import main

sys.exit(main())
