import sys

from esdmix.cli import main

sys.exit(main())
