import sys

from dcrdt.cli import main

sys.exit(main())
