import sys

from depfix.cli import main

sys.exit(main())
