import sys

from cdekit.cli import main

sys.exit(main())
