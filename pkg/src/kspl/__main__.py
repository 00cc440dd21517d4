import sys

from kspl.cli import main

sys.exit(main())
