import sys

from netlspi.cli import main

sys.exit(main())
