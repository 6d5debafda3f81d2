import sys

from mie.cli.app import main

sys.exit(main())
